"""
Witten deformation laboratory: deformed Hodge Laplacians, branch continuation, Morse complexes and torsion.
"""

__version__ = "0.1.0"
