"""
Stats module initialization.
"""
