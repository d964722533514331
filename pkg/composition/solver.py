"""
SC-SCSG Solver
Epoch loop with a subsampled anchor, variance-reduced inner steps and
uniform output selection; single-pair, mini-batch and full-anchor variants
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from composition.estimator import EpochAnchor, build_anchor, estimate_inner, minibatch_gradient
from composition.exceptions import DivergenceError, ScheduleError
from composition.ledger import QueryLedger
from composition.problem import CompositionProblem, composite_value, full_gradient
from composition.sampling import (
    ROLE_A, ROLE_OUTPUT, ROLE_PAIR, ReservoirSampler, StreamManager,
)
from composition.schedule import Schedule, validate_schedule

logger = logging.getLogger(__name__)

ALGORITHMS = ("scscg", "scscg_minibatch", "full_anchor")
DIVERGENCE_NORM = 1e12
TRACE_COLUMNS = ("s", "f_value", "grad_norm_sq", "dist_sq_opt",
                 "paper_queries", "paper_queries_corollary", "raw_queries")


@dataclass
class TraceRecord:
    s: int
    f_value: float
    grad_norm_sq: float
    dist_sq_opt: Optional[float]
    paper_queries: int
    paper_queries_corollary: int
    raw_queries: int
    k: Optional[int] = None

    def as_row(self) -> Dict[str, Any]:
        return {column: getattr(self, column) for column in TRACE_COLUMNS}


@dataclass
class RunTrace:
    algorithm: str
    schedule: Schedule
    ledger: QueryLedger
    initial: Optional[TraceRecord] = None
    epochs: List[TraceRecord] = field(default_factory=list)
    iterations: List[TraceRecord] = field(default_factory=list)
    output_index: Optional[Tuple[int, int]] = None

    def rows(self, include_iterations: bool = False) -> List[Dict[str, Any]]:
        records = list(self.epochs)
        if include_iterations:
            records = sorted(self.epochs + self.iterations,
                             key=lambda r: (r.s, -1 if r.k is None else r.k))
        return [r.as_row() for r in records]

    def gap_series(self) -> List[float]:
        """||x~_s - x*||^2 for s = 0..S"""
        records = [self.initial] + self.epochs
        if any(r.dist_sq_opt is None for r in records):
            raise ValueError("distance to the optimum is unknown for this problem")
        return [r.dist_sq_opt for r in records]

    def min_grad_norm_sq(self) -> float:
        return min(r.grad_norm_sq for r in [self.initial] + self.epochs)

    def queries_to_target(self, metric: str, target: float) -> Optional[int]:
        """Counted queries at the first epoch whose metric is <= target"""
        for record in self.epochs:
            value = getattr(record, metric)
            if value is not None and value <= target:
                return record.paper_queries
        return None


@dataclass
class SolverState:
    x: np.ndarray
    schedule: Schedule
    streams: StreamManager
    reservoir: ReservoirSampler
    epoch: int = 0
    step: int = 0
    anchor: Optional[EpochAnchor] = None


def _evaluate(problem: CompositionProblem, x: np.ndarray, s: int, ledger: QueryLedger,
              k: Optional[int] = None) -> TraceRecord:
    grad = full_gradient(problem, x, ledger)
    dist = None
    if problem.x_star is not None:
        dist = float(np.sum((x - problem.x_star) ** 2))
    return TraceRecord(
        s=s, f_value=composite_value(problem, x, ledger),
        grad_norm_sq=float(grad @ grad), dist_sq_opt=dist,
        paper_queries=ledger.paper_queries,
        paper_queries_corollary=ledger.paper_queries_corollary,
        raw_queries=ledger.raw_queries, k=k,
    )


def _check_finite(x: np.ndarray, epoch: int, step: int):
    norm = float(np.linalg.norm(x))
    if not np.isfinite(norm) or norm > DIVERGENCE_NORM:
        raise DivergenceError(epoch, step, norm)


def _run(problem: CompositionProblem, schedule: Schedule, seed: int,
         x0: Optional[np.ndarray], verbose: bool,
         algorithm: str) -> Tuple[np.ndarray, RunTrace]:
    validate_schedule(schedule, problem.n)
    streams = StreamManager(seed)
    ledger = QueryLedger()
    x_tilde = problem.check_x(np.zeros(problem.dim_x) if x0 is None else x0).copy()
    trace = RunTrace(algorithm, schedule, ledger)
    trace.initial = _evaluate(problem, x_tilde, 0, ledger)
    state = SolverState(x_tilde, schedule, streams,
                        ReservoirSampler(streams.stream(ROLE_OUTPUT)))

    for s in range(schedule.S):
        state.epoch = s
        state.anchor = build_anchor(problem, x_tilde, schedule.D, streams, ledger, epoch=s,
                                    mode=schedule.sampling_mode,
                                    full_cover=schedule.full_cover)
        for k in range(schedule.K):
            state.step = k
            state.reservoir.offer(state.x, (s, k))
            inner = estimate_inner(problem, state.x, state.anchor, schedule.A,
                                   streams.fresh(ROLE_A, s, k), ledger,
                                   mode=schedule.sampling_mode,
                                   full_cover=schedule.full_cover)
            direction = minibatch_gradient(problem, state.x, inner, state.anchor, schedule.b,
                                           streams.fresh(ROLE_PAIR, s, k), ledger,
                                           enumerate_pairs=schedule.enumerate_pairs)
            state.x = state.x - schedule.eta * direction
            _check_finite(state.x, s, k)
            if verbose:
                trace.iterations.append(_evaluate(problem, state.x, s, ledger, k=k))
        x_tilde = state.x
        record = _evaluate(problem, x_tilde, s + 1, ledger)
        trace.epochs.append(record)
        logger.debug(f"{algorithm} epoch {s + 1}/{schedule.S}: f={record.f_value:.6g} "
                     f"|grad|^2={record.grad_norm_sq:.3g} queries={record.paper_queries}")

    trace.output_index = state.reservoir.tag
    logger.info(f"{algorithm} finished {schedule.S} epochs, {ledger.paper_queries} queries, "
                f"output from (s, k) = {trace.output_index}")
    return state.reservoir.item, trace


def run_scscg(problem: CompositionProblem, schedule: Schedule, seed: int,
              x0: Optional[np.ndarray] = None,
              verbose: bool = False) -> Tuple[np.ndarray, RunTrace]:
    """Single-pair algorithm: one (i, j) per inner step"""
    if schedule.b != 1:
        raise ScheduleError(f"run_scscg uses one pair per step; got b={schedule.b}, "
                            "use run_scscg_minibatch")
    return _run(problem, schedule, seed, x0, verbose, "scscg")


def run_scscg_minibatch(problem: CompositionProblem, schedule: Schedule, seed: int,
                        x0: Optional[np.ndarray] = None,
                        verbose: bool = False) -> Tuple[np.ndarray, RunTrace]:
    """b pairs per inner step sharing one inner estimate"""
    return _run(problem, schedule, seed, x0, verbose, "scscg_minibatch")


def run_full_anchor(problem: CompositionProblem, schedule: Schedule, seed: int,
                    x0: Optional[np.ndarray] = None,
                    verbose: bool = False) -> Tuple[np.ndarray, RunTrace]:
    """Exact anchor every epoch: D1 = D2 = [n]"""
    exact = replace(schedule, D=problem.n, full_cover=True,
                    provenance={**schedule.provenance, "D": "full_anchor"},
                    warnings=list(schedule.warnings))
    return _run(problem, exact, seed, x0, verbose, "full_anchor")


def run_algorithm(name: str, problem: CompositionProblem, schedule: Schedule, seed: int,
                  x0: Optional[np.ndarray] = None,
                  verbose: bool = False) -> Tuple[np.ndarray, RunTrace]:
    runners = {
        "scscg": run_scscg,
        "scscg_minibatch": run_scscg_minibatch,
        "full_anchor": run_full_anchor,
    }
    if name not in runners:
        raise ScheduleError(f"unknown algorithm '{name}', expected one of {ALGORITHMS}")
    return runners[name](problem, schedule, seed, x0=x0, verbose=verbose)
