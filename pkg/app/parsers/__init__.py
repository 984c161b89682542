"""
评分日志解析包
Rating log parsers
"""
