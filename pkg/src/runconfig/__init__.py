"""
Run configuration: key=value parsing, interactive configure and CSV output
"""
