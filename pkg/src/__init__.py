"""
Field Status Sampling Toolkit
Remote estimation of a sampled random field: error laws, simulation and rate optimization
"""

__version__ = "1.0.0"
__author__ = "Field Status Team"
