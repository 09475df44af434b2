"""
Test suite for the speech recognition toolkit
"""
