"""
Forgery Detection Tool - command-line components
"""
