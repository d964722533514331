"""
Analysis agents: lemma auditing and query-to-target sweeps
"""
