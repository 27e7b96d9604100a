"""Encoder/heads, weight averaging, checkpoints and Stage-1 losses"""
