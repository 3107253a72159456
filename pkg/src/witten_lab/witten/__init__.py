"""
Witten deformation of cochain complexes, eigenvalue branch tracking and gap detection.
"""
