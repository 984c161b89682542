"""
目标函数与梯度包
Objectives and gradients package
"""
