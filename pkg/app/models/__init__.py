"""
嵌入模型包
Embedding model package
"""
