"""
Composition experiment front end
"""
