"""
Arrivals module initialization.
"""
