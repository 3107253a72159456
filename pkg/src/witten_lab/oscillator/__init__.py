"""
Exact harmonic-oscillator models and the placement of model forms on meshes.
"""
