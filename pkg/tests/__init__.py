"""
Test package for stochrk.
"""
