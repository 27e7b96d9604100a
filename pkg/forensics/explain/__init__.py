"""
Class activation maps and 2D embedding projections.
"""
