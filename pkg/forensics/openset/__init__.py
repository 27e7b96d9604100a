"""
Class-wise rejection thresholds and open-set classification.
"""
