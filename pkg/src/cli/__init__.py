"""
Command-line package initialization
"""
