"""
Query Ledger
Counts component-oracle queries both in the per-line convention of the
algorithm listings and as raw oracle evaluations
"""

from dataclasses import dataclass, asdict
from typing import Dict

# Each stochastic gradient pair costs four component queries:
# two inner Jacobians and two outer gradients.
QUERIES_PER_PAIR = 4


def epoch_cost(D: int, K: int, A: int, b: int) -> int:
    """Queries charged by one epoch: D + K(A + 4b)"""
    if min(D, K, A, b) < 0:
        raise ValueError("epoch_cost arguments must be nonnegative")
    return D + K * (A + QUERIES_PER_PAIR * b)


def corollary_epoch_cost(D: int, K: int, A: int) -> int:
    """Epoch cost as counted in the convex corollary: D + KA"""
    return D + K * A


@dataclass
class QueryLedger:
    """Running query totals for a single run"""

    paper_queries: int = 0
    paper_queries_corollary: int = 0
    raw_inner_values: int = 0
    raw_inner_jacobians: int = 0
    raw_outer_values: int = 0
    raw_outer_gradients: int = 0
    evaluation_queries: int = 0

    def charge_paper(self, queries: int, corollary: int = 0):
        self.paper_queries += queries
        self.paper_queries_corollary += corollary

    def charge_raw(self, inner_values: int = 0, inner_jacobians: int = 0,
                   outer_values: int = 0, outer_gradients: int = 0):
        self.raw_inner_values += inner_values
        self.raw_inner_jacobians += inner_jacobians
        self.raw_outer_values += outer_values
        self.raw_outer_gradients += outer_gradients

    def charge_evaluation(self, queries: int):
        """Trace-only oracle calls; never part of the headline counts"""
        self.evaluation_queries += queries

    @property
    def raw_queries(self) -> int:
        return (self.raw_inner_values + self.raw_inner_jacobians
                + self.raw_outer_values + self.raw_outer_gradients)

    def merge(self, other: "QueryLedger") -> "QueryLedger":
        """Additive merge of two ledgers (e.g. parallel repetitions)"""
        merged = QueryLedger()
        for key, value in asdict(self).items():
            setattr(merged, key, value + getattr(other, key))
        return merged

    def snapshot(self) -> Dict[str, int]:
        data = asdict(self)
        data["raw_queries"] = self.raw_queries
        return data
