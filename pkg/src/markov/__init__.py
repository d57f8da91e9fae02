"""
Markov module initialization.
"""
