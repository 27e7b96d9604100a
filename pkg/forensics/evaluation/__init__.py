"""
Open-set metrics, evaluation protocols, ablations and report rendering.
"""
