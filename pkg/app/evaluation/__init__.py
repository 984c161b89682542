"""
评估包
Evaluation package
"""
