"""Utility functions module."""