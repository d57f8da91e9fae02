"""
Harness module initialization.
"""
