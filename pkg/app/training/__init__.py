"""
训练包
Training package
"""
