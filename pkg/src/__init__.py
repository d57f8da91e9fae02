"""
Heavy-traffic queueing toolkit initialization.
"""
