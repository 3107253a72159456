"""
Hodge theory on discretized manifolds: spectral packages, Hodge decomposition and lattice volumes.
"""
