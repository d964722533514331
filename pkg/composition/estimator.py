"""
Composition Estimators
Epoch anchor, variance-reduced inner estimate and the composite gradient
estimator (single pair and mini-batch)
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from composition.exceptions import ScheduleError
from composition.ledger import QUERIES_PER_PAIR, QueryLedger
from composition.problem import CompositionProblem
from composition.sampling import (
    ROLE_D1, ROLE_D2, IndexBatch, IndexStream, SamplingMode, StreamManager, draw_batch,
)

logger = logging.getLogger(__name__)


@dataclass
class EpochAnchor:
    """Snapshot x~ with the cached subsampled inner value and anchor gradient"""

    x_tilde: np.ndarray
    d1: IndexBatch
    d2: IndexBatch
    g_anchor: np.ndarray
    grad_anchor: np.ndarray
    epoch: int = 0


@dataclass
class InnerEstimate:
    """G^_k = G_A(x_k) - G_A(x~) + G_D1(x~)"""

    value: np.ndarray
    a_batch: IndexBatch
    at_x: np.ndarray


def anchor_from_batches(problem: CompositionProblem, x_tilde: np.ndarray,
                        d1: IndexBatch, d2: IndexBatch,
                        ledger: Optional[QueryLedger] = None, epoch: int = 0) -> EpochAnchor:
    """Anchor for given batches: G_D1(x~) and (dG_D1(x~))^T grad F_D2(G_D1(x~))"""
    x_tilde = problem.check_x(x_tilde)
    g_anchor = problem.inner_values(d1.indices, x_tilde).mean(axis=0)
    jac = problem.inner_jacobians(d1.indices, x_tilde).mean(axis=0)
    grad_outer = problem.outer_gradients(d2.indices, g_anchor).mean(axis=0)
    if ledger is not None:
        ledger.charge_paper(len(d1), corollary=len(d1))
        ledger.charge_raw(inner_values=len(d1), inner_jacobians=len(d1),
                          outer_gradients=len(d2))
    return EpochAnchor(x_tilde.copy(), d1, d2, g_anchor, jac.T @ grad_outer, epoch)


def build_anchor(problem: CompositionProblem, x_tilde: np.ndarray, D: int,
                 streams: StreamManager, ledger: Optional[QueryLedger] = None,
                 epoch: int = 0, mode: SamplingMode = SamplingMode.WITH_REPLACEMENT,
                 full_cover: bool = True) -> EpochAnchor:
    """Draw D1 and D2 from their own per-epoch streams and build the anchor"""
    d1 = draw_batch(problem.n, D, mode, streams.stream(ROLE_D1, epoch), full_cover)
    d2 = draw_batch(problem.n, D, mode, streams.stream(ROLE_D2, epoch), full_cover)
    return anchor_from_batches(problem, x_tilde, d1, d2, ledger, epoch)


def inner_from_batch(problem: CompositionProblem, x_k: np.ndarray, anchor: EpochAnchor,
                     a_batch: IndexBatch,
                     ledger: Optional[QueryLedger] = None) -> InnerEstimate:
    x_k = problem.check_x(x_k)
    at_x = problem.inner_values(a_batch.indices, x_k).mean(axis=0)
    at_tilde = problem.inner_values(a_batch.indices, anchor.x_tilde).mean(axis=0)
    if ledger is not None:
        ledger.charge_paper(len(a_batch), corollary=len(a_batch))
        ledger.charge_raw(inner_values=2 * len(a_batch))
    return InnerEstimate(at_x - at_tilde + anchor.g_anchor, a_batch, x_k)


def estimate_inner(problem: CompositionProblem, x_k: np.ndarray, anchor: EpochAnchor,
                   A: int, stream: IndexStream, ledger: Optional[QueryLedger] = None,
                   mode: SamplingMode = SamplingMode.WITH_REPLACEMENT,
                   full_cover: bool = True) -> InnerEstimate:
    """Fresh A-batch each call"""
    a_batch = draw_batch(problem.n, A, mode, stream, full_cover)
    return inner_from_batch(problem, x_k, anchor, a_batch, ledger)


def pair_gradient(problem: CompositionProblem, x_k: np.ndarray, inner_est: InnerEstimate,
                  anchor: EpochAnchor, i_idx: np.ndarray, j_idx: np.ndarray,
                  ledger: Optional[QueryLedger] = None) -> np.ndarray:
    """Mean of the estimator over the given (i, j) pairs, all sharing one G^_k"""
    i_idx = np.asarray(i_idx, dtype=int)
    j_idx = np.asarray(j_idx, dtype=int)
    current = np.einsum("bmn,bm->bn",
                        problem.inner_jacobians(j_idx, x_k),
                        problem.outer_gradients(i_idx, inner_est.value))
    reference = np.einsum("bmn,bm->bn",
                          problem.inner_jacobians(j_idx, anchor.x_tilde),
                          problem.outer_gradients(i_idx, anchor.g_anchor))
    if ledger is not None:
        pairs = len(i_idx)
        ledger.charge_paper(QUERIES_PER_PAIR * pairs)
        ledger.charge_raw(inner_jacobians=2 * pairs, outer_gradients=2 * pairs)
    return (current - reference).mean(axis=0) + anchor.grad_anchor


def estimate_gradient(problem: CompositionProblem, x_k: np.ndarray,
                      inner_est: InnerEstimate, anchor: EpochAnchor, i_k: int, j_k: int,
                      ledger: Optional[QueryLedger] = None) -> np.ndarray:
    """(dG_j(x_k))^T grad F_i(G^_k) - (dG_j(x~))^T grad F_i(G_D1(x~)) + anchor gradient"""
    return pair_gradient(problem, x_k, inner_est, anchor, [i_k], [j_k], ledger)


def draw_pairs(n: int, b: int, stream: IndexStream):
    """b independent (i, j) pairs; with b=1 this is one i draw then one j draw"""
    i_idx = np.empty(b, dtype=int)
    j_idx = np.empty(b, dtype=int)
    for t in range(b):
        i_idx[t] = stream.integers(n, 1)[0]
        j_idx[t] = stream.integers(n, 1)[0]
    return i_idx, j_idx


def all_pairs(n: int):
    """Every (i, j) in [n]^2 exactly once"""
    return np.repeat(np.arange(n), n), np.tile(np.arange(n), n)


def minibatch_gradient(problem: CompositionProblem, x_k: np.ndarray,
                       inner_est: InnerEstimate, anchor: EpochAnchor, b: int,
                       stream: IndexStream, ledger: Optional[QueryLedger] = None,
                       enumerate_pairs: bool = False) -> np.ndarray:
    """Lambda = (1/b) sum_t of the estimator over b pairs"""
    if b < 1:
        raise ScheduleError(f"mini-batch size must be >= 1, got {b}")
    if enumerate_pairs:
        if b != problem.n ** 2:
            raise ScheduleError(f"enumerate_pairs needs b = n^2 = {problem.n ** 2}, got {b}")
        i_idx, j_idx = all_pairs(problem.n)
    else:
        i_idx, j_idx = draw_pairs(problem.n, b, stream)
    return pair_gradient(problem, x_k, inner_est, anchor, i_idx, j_idx, ledger)


def conditional_gradient_mean(problem: CompositionProblem, x_k: np.ndarray,
                              inner_est: InnerEstimate, anchor: EpochAnchor) -> np.ndarray:
    """Exact expectation of the estimator over uniform (i, j), conditioned on G^_k"""
    everyone = np.arange(problem.n)
    jac_k = problem.inner_jacobians(everyone, x_k).mean(axis=0)
    jac_tilde = problem.inner_jacobians(everyone, anchor.x_tilde).mean(axis=0)
    grad_k = problem.outer_gradients(everyone, inner_est.value).mean(axis=0)
    grad_tilde = problem.outer_gradients(everyone, anchor.g_anchor).mean(axis=0)
    return jac_k.T @ grad_k - jac_tilde.T @ grad_tilde + anchor.grad_anchor
