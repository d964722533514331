#!/usr/bin/env python3
"""
Sweep Analyzer Agent
Measures counted queries to reach a target across algorithms and
(n, epsilon, b) grids
"""

import itertools
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import psutil

from composition.analysis import complexity_convex, complexity_nonconvex
from composition.exceptions import DivergenceError, ScheduleError
from composition.ledger import QueryLedger, epoch_cost
from composition.problem import ProblemSpec
from composition.schedule import derive_schedule
from composition.solver import run_algorithm

logger = logging.getLogger(__name__)

THREADS_ENV = "COMP_OPT_THREADS"
SWEEP_COLUMNS = ("algorithm", "n", "epsilon", "b", "repetitions", "median_queries",
                 "censored", "budget", "metric", "complexity_order")


@dataclass(frozen=True)
class SweepCell:
    algorithm: str
    n: int
    epsilon: float
    b: int


def worker_count() -> int:
    """Threads for the sweep: COMP_OPT_THREADS if set (0 means sequential),
    otherwise the physical core count"""
    configured = os.environ.get(THREADS_ENV)
    if configured is not None and configured.strip():
        try:
            return max(0, int(configured))
        except ValueError:
            logger.warning(f"ignoring non-integer {THREADS_ENV}={configured!r}")
    return psutil.cpu_count(logical=False) or 1


class SweepAnalyzer:
    """Runs every cell of the sweep grid and summarises queries-to-target"""

    def __init__(self, base_spec: ProblemSpec, algorithms: Sequence[str],
                 n_values: Optional[Sequence[int]] = None,
                 epsilons: Sequence[float] = (1e-4,),
                 batch_sizes: Sequence[int] = (1,),
                 repetitions: int = 5, master_seed: int = 0, mode: str = "auto",
                 c_A: float = 1.0, c_D: float = 1.0, c_T: float = 1.0,
                 overrides: Optional[Dict[str, Any]] = None,
                 threads: Optional[int] = None):
        self.base_spec = base_spec
        self.algorithms = list(algorithms)
        self.n_values = list(n_values) if n_values else [base_spec.n]
        if base_spec.kind == "lcq_reference" and self.n_values != [2]:
            logger.warning("the reference instance has n=2; ignoring sweep.n")
            self.n_values = [2]
        self.epsilons = list(epsilons)
        self.batch_sizes = list(batch_sizes)
        self.repetitions = repetitions
        self.master_seed = master_seed
        self.mode = mode
        self.hidden = {"c_A": c_A, "c_D": c_D, "c_T": c_T}
        self.overrides = dict(overrides or {})
        self.threads = worker_count() if threads is None else threads
        self.sweep_results = {
            "problem": base_spec.to_text(),
            "cells": [],
            "censored_cells": 0,
            "skipped": [],
        }

    def cells(self) -> List[SweepCell]:
        """Grid cells in deterministic order; the single-pair algorithm only takes b=1"""
        if not self.algorithms or not self.epsilons or not self.batch_sizes:
            raise ScheduleError("sweep grid is empty")
        grid = []
        for algorithm, n, epsilon, b in itertools.product(
                self.algorithms, self.n_values, self.epsilons, self.batch_sizes):
            if algorithm == "scscg" and b != 1:
                self.sweep_results["skipped"].append(
                    {"algorithm": algorithm, "n": n, "epsilon": epsilon, "b": b})
                continue
            grid.append(SweepCell(algorithm, n, epsilon, b))
        if not grid:
            raise ScheduleError("sweep grid is empty")
        return grid

    def run_cell(self, cell: SweepCell) -> Tuple[Dict[str, Any], QueryLedger]:
        """Median over repetitions of the queries spent when the target is first met,
        with the ledgers of the completed repetitions merged"""
        problem = replace(self.base_spec, n=cell.n).build()
        schedule = derive_schedule(problem, cell.epsilon, b=cell.b, mode=self.mode,
                                   overrides=self.overrides, **self.hidden)
        convex = schedule.mode == "convex" and problem.x_star is not None
        metric = "dist_sq_opt" if convex else "grad_norm_sq"
        budget = schedule.S * epoch_cost(schedule.D, schedule.K, schedule.A, schedule.b)

        queries, censored = [], 0
        spent = QueryLedger()
        for rep in range(self.repetitions):
            try:
                _, trace = run_algorithm(cell.algorithm, problem, schedule,
                                         seed=self.master_seed + rep)
                spent = spent.merge(trace.ledger)
                reached = trace.queries_to_target(metric, cell.epsilon)
            except DivergenceError as e:
                logger.warning(f"{cell} repetition {rep} diverged: {e}")
                reached = None
            if reached is None:
                censored += 1
                reached = budget
            queries.append(reached)

        c = problem.constants
        if schedule.mode == "convex":
            order = complexity_convex(cell.n, c.mu, cell.epsilon, c.L_f, cell.b)
        else:
            order = complexity_nonconvex(cell.n, cell.epsilon, cell.b)
        logger.debug(f"{cell}: median {np.median(queries)} queries, {censored} censored")
        row = {
            "algorithm": cell.algorithm, "n": cell.n, "epsilon": cell.epsilon, "b": cell.b,
            "repetitions": self.repetitions, "median_queries": float(np.median(queries)),
            "censored": censored, "budget": budget, "metric": metric,
            "complexity_order": order,
        }
        return row, spent

    def run_full_sweep(self) -> Dict[str, Any]:
        """Run every cell, in parallel when threads allow, merged in grid order"""
        grid = self.cells()
        logger.info(f"Sweeping {len(grid)} cells x {self.repetitions} repetitions "
                    f"on {self.threads or 'no'} worker threads")
        if self.threads > 1 and len(grid) > 1:
            with ThreadPoolExecutor(max_workers=min(self.threads, len(grid))) as pool:
                outcomes = list(pool.map(self.run_cell, grid))
        else:
            outcomes = [self.run_cell(cell) for cell in grid]

        results = [row for row, _ in outcomes]
        total = QueryLedger()
        for _, spent in outcomes:
            total = total.merge(spent)

        self.sweep_results["cells"] = results
        self.sweep_results["censored_cells"] = sum(1 for r in results if r["censored"])
        self.sweep_results["ledger"] = total.snapshot()
        self.sweep_results["summary"] = {
            "total_cells": len(results),
            "censored_cells": self.sweep_results["censored_cells"],
            "skipped_cells": len(self.sweep_results["skipped"]),
            "total_queries": total.paper_queries,
            "total_raw_queries": total.raw_queries,
        }
        return self.sweep_results


def main():
    """Main entry point"""
    analyzer = SweepAnalyzer(ProblemSpec(kind="lcq", n=10, dim_x=3, dim_w=3, seed=7),
                             algorithms=["scscg_minibatch"], batch_sizes=[1, 2, 4],
                             repetitions=3)
    results = analyzer.run_full_sweep()

    print(json.dumps(results, indent=2))

    return 0


if __name__ == "__main__":
    sys.exit(main())
