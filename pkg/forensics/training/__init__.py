"""
Two-stage training: contrastive representation learning with weight
averaging, then a classifier on the frozen encoder.
"""
