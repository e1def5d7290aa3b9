"""
Tests package for detector-tuning
"""
