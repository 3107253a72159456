"""
Torsion of finite complexes and comparison maps between the Witten and Morse complexes.
"""
