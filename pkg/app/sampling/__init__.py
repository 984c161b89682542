"""
集合采样包
Set sampling package
"""
