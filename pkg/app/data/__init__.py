"""
数据集包
Dataset package
"""
