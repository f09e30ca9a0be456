"""
矩阵权多线性调和分析数值库
"""
