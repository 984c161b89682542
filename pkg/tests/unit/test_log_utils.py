"""
日志工具单元测试
"""

import inspect
from unittest.mock import Mock, patch

import numpy as np
import pytest

from app.utils.log_utils import _build_log_message, log_call


class TestLogUtils:
    """日志工具测试类"""

    def test_build_log_message_with_common_keys(self):
        """测试构建包含常见键的日志消息"""
        mock_func = Mock()
        mock_func.__name__ = "test_function"

        mock_bound = Mock()
        mock_bound.arguments = {
            "path": "/data/ratings.tsv",
            "split": "test",
            "seed": 2021,
        }

        result = _build_log_message(mock_func, mock_bound)

        assert "path=/data/ratings.tsv" in result
        assert "split=test" in result
        assert "seed=2021" in result

    def test_build_log_message_without_common_keys(self):
        """测试构建不包含常见键的日志消息"""
        mock_func = Mock()
        mock_func.__name__ = "test_function"

        mock_bound = Mock()
        mock_bound.arguments = {
            "param1": "value1",
            "param2": "value2"
        }

        result = _build_log_message(mock_func, mock_bound)

        # 应该包含第一个参数
        assert "param1=value1" in result
        assert "param2" not in result

    def test_build_log_message_large_object(self):
        """数组等大对象只记录类型名"""
        mock_func = Mock()
        mock_bound = Mock()
        mock_bound.arguments = {"model": np.zeros((1000, 64))}

        result = _build_log_message(mock_func, mock_bound)

        assert result == "model=<ndarray>"

    def test_build_log_message_empty_arguments(self):
        """测试空参数的日志消息"""
        mock_func = Mock()
        mock_bound = Mock()
        mock_bound.arguments = {}

        assert _build_log_message(mock_func, mock_bound) == ""

    def test_build_log_message_with_self(self):
        """首个参数为 self 时不记录"""
        mock_func = Mock()
        mock_bound = Mock()
        mock_bound.arguments = {"self": Mock(), "param1": "value1"}

        result = _build_log_message(mock_func, mock_bound)

        assert "self=" not in result

    @patch('app.utils.log_utils.get_logger')
    def test_log_call_sync_function(self, mock_get_logger):
        """测试同步函数的日志装饰器"""
        mock_logger = Mock()
        mock_get_logger.return_value = mock_logger

        @log_call
        def test_function(path, epoch):
            return f"{path}:{epoch}"

        result = test_function("runs/a", 3)

        assert result == "runs/a:3"
        mock_logger.info.assert_called_once()
        log_call_args = mock_logger.info.call_args[0]
        assert "enter %s(%s)" == log_call_args[0]
        assert "test_function" in log_call_args[1]
        assert "path=runs/a" in log_call_args[2]
        assert "epoch=3" in log_call_args[2]

    @patch('app.utils.log_utils.get_logger')
    def test_log_call_function_with_exception(self, mock_get_logger):
        """测试函数异常的日志装饰器"""
        mock_logger = Mock()
        mock_get_logger.return_value = mock_logger

        @log_call
        def test_function_with_error():
            raise ValueError("测试异常")

        with pytest.raises(ValueError, match="测试异常"):
            test_function_with_error()

        mock_logger.error.assert_called_once()
        error_call_args = mock_logger.error.call_args[0]
        assert "error in %s: %s" == error_call_args[0]
        assert "test_function_with_error" in error_call_args[1]
        assert "测试异常" in str(error_call_args[2])

    @patch('app.utils.log_utils.get_logger')
    def test_log_call_function_with_no_parameters(self, mock_get_logger):
        """测试无参数函数的日志装饰器"""
        mock_logger = Mock()
        mock_get_logger.return_value = mock_logger

        @log_call
        def test_function():
            return "no_params"

        assert test_function() == "no_params"
        log_call_args = mock_logger.info.call_args[0]
        assert log_call_args[2] == ""

    @patch('app.utils.log_utils.get_logger')
    def test_log_call_preserves_function_metadata(self, mock_get_logger):
        """测试日志装饰器保留函数元数据"""
        mock_get_logger.return_value = Mock()

        @log_call
        def test_function(param1, param2):
            """测试函数文档"""
            return param1 + param2

        assert test_function.__name__ == "test_function"
        assert test_function.__doc__ == "测试函数文档"
        sig = inspect.signature(test_function)
        assert list(sig.parameters) == ["param1", "param2"]

    @patch('app.utils.log_utils.get_logger')
    def test_log_call_with_unbindable_arguments(self, mock_get_logger):
        """参数无法绑定时仍调用原函数（由原函数抛出 TypeError）"""
        mock_logger = Mock()
        mock_get_logger.return_value = mock_logger

        @log_call
        def test_function(param1):
            return param1

        with pytest.raises(TypeError):
            test_function("a", "b")

        log_call_args = mock_logger.info.call_args[0]
        assert log_call_args[2] == ""
