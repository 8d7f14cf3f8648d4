"""Configuration management module."""