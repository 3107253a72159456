"""
Morse functions, gradient flow and the geometric complex.
"""
