"""
Utilities package initialization
"""