"""
Open-set facial forgery detection - algorithm package
"""
