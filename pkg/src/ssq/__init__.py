"""
Ssq module initialization.
"""
