"""
Test package for the heavy-traffic toolkit.
"""
