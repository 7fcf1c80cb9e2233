"""
voltctl - decentralized volt/VAR control simulator

Runs gradient-projection reactive power control on radial distribution
feeders under synchronous, asynchronous and time-varying conditions, and
compares the tracked optimum against an exact box-QP oracle.
"""

__version__ = "0.1.0"
__author__ = "Developer"
