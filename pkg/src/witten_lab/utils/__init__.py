"""
Artifact export helpers.
"""
