"""
Cell complexes, inner products, shared linear algebra and experiment orchestration.
"""
