"""
Switch module initialization.
"""
