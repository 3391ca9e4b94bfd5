"""
Test package for the billiard lab.
"""
