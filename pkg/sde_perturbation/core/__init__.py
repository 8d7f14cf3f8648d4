"""Core functionality module."""