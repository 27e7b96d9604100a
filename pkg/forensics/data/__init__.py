"""Data types, benchmark generation, ingestion and protocol splits"""
