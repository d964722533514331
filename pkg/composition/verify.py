"""
Verification Oracles
Exact enumeration, Monte Carlo and finite-difference checks of the subset
variance identities, the estimator variance bounds and the gradient oracles
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from composition.analysis import anchor_variance, displacement_variance, indicator
from composition.exceptions import InputError
from composition.problem import (
    CompositionProblem, ProblemConstants, composite_value, estimate_constants, full_gradient,
)
from composition.sampling import SamplingMode

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 10 ** 6
MONTE_CARLO_SAMPLES = 10 ** 4
PASS = "pass"
FAIL = "fail"
INFO = "info"
# Slack for comparing an exactly enumerated expectation with its bound.
EXACT_RTOL = 1e-9
EXACT_ATOL = 1e-12


@dataclass
class VarianceReport:
    name: str
    empirical: float
    bound: float
    exact: Optional[float] = None
    samples: int = 0
    sigma: float = 0.0
    monte_carlo: bool = False
    suppressed: bool = False
    details: Dict[str, float] = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        if self.suppressed:
            return INFO
        if self.exact is not None:
            ok = self.exact <= self.bound * (1.0 + EXACT_RTOL) + EXACT_ATOL
        else:
            ok = self.empirical <= self.bound + 3.0 * self.sigma
        return PASS if ok else FAIL

    @property
    def passed(self) -> bool:
        return self.verdict != FAIL


def _batch_outcomes(n: int, size: int, mode: SamplingMode,
                    full_cover: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Every distinct batch with its probability

    With replacement, ordered tuples collapse to multisets weighted by their
    multinomial counts, so the expectation is exact with far fewer outcomes.
    """
    mode = SamplingMode(mode)
    if mode == SamplingMode.COVER or (full_cover and size >= n):
        return np.arange(n)[None, :], np.ones(1)
    if mode == SamplingMode.WITHOUT_REPLACEMENT:
        if size > n:
            raise InputError(f"cannot draw {size} distinct indices from {n}")
        batches = np.array(list(itertools.combinations(range(n), size)), dtype=int)
        return batches, np.full(len(batches), 1.0 / len(batches))
    batches = np.array(list(itertools.combinations_with_replacement(range(n), size)), dtype=int)
    weights = np.empty(len(batches))
    log_total = size * math.log(n)
    for row, batch in enumerate(batches):
        counts = np.bincount(batch, minlength=n)
        log_ways = math.lgamma(size + 1) - sum(math.lgamma(c + 1) for c in counts)
        weights[row] = math.exp(log_ways - log_total)
    return batches, weights


def _outcome_count(n: int, size: int, mode: SamplingMode, full_cover: bool = True) -> int:
    mode = SamplingMode(mode)
    if mode == SamplingMode.COVER or (full_cover and size >= n):
        return 1
    if mode == SamplingMode.WITHOUT_REPLACEMENT:
        return math.comb(n, size)
    return math.comb(n + size - 1, size)


def _draw(rng: np.random.Generator, n: int, size: int, mode: SamplingMode,
          full_cover: bool = True) -> np.ndarray:
    mode = SamplingMode(mode)
    if mode == SamplingMode.COVER or (full_cover and size >= n):
        return np.arange(n)
    if mode == SamplingMode.WITHOUT_REPLACEMENT:
        return rng.choice(n, size=size, replace=False)
    return rng.integers(0, n, size=size)


def _as_rows(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v[:, None] if v.ndim == 1 else v


def subset_variance_exact(v, A: int, mode: SamplingMode = SamplingMode.WITHOUT_REPLACEMENT,
                          samples: int = MONTE_CARLO_SAMPLES, seed: int = 0) -> VarianceReport:
    """E||mean of an A-batch of centred vectors||^2 against the subset-mean identity

    Without replacement the expectation equals (n-A)/(A(n-1)) (1/n) sum ||v_i||^2
    and is bounded by I(A<n)/A (1/n) sum ||v_i||^2; with replacement it equals
    (1/(An)) sum ||v_i||^2.
    """
    mode = SamplingMode(mode)
    if A < 1:
        raise InputError(f"A must be >= 1, got {A}")
    v = _as_rows(v)
    n = len(v)
    centred = v - v.mean(axis=0)
    if not np.all(np.isfinite(centred)) or np.abs(centred.sum(axis=0)).max() > 1e-10 * (
            1.0 + np.abs(v).max()):
        raise InputError("vectors do not sum to zero after centring")
    spread = float(np.sum(centred ** 2)) / n

    if mode == SamplingMode.WITH_REPLACEMENT:
        formula = spread / A
        bound = spread / A
        count = n ** A
    else:
        if A > n:
            raise InputError(f"cannot draw {A} distinct indices from {n}")
        formula = 0.0 if n == 1 else (n - A) / (A * (n - 1)) * spread
        bound = indicator(A < n) / A * spread
        count = math.comb(n, A)
        mode = SamplingMode.WITHOUT_REPLACEMENT

    details = {"formula": formula, "spread": spread}
    if count <= ENUMERATION_LIMIT:
        value = _enumerate_subset_means(centred, A, mode)
        return VarianceReport("subset_mean", value, bound, exact=value, samples=count,
                              details=details)

    logger.warning(f"{count} subsets exceed the enumeration limit; using Monte Carlo")
    rng = np.random.default_rng(seed)
    draws = np.array([
        np.sum(centred[_draw(rng, n, A, mode, full_cover=False)].mean(axis=0) ** 2)
        for _ in range(samples)
    ])
    return VarianceReport("subset_mean", float(draws.mean()), bound, samples=samples,
                          sigma=float(draws.std(ddof=1) / math.sqrt(samples)),
                          monte_carlo=True, details=details)


def _enumerate_subset_means(centred: np.ndarray, A: int, mode: SamplingMode) -> float:
    n = len(centred)
    if mode == SamplingMode.WITHOUT_REPLACEMENT:
        source = itertools.combinations(range(n), A)
    else:
        source = itertools.product(range(n), repeat=A)
    total, count = 0.0, 0
    while True:
        chunk = list(itertools.islice(source, 65536))
        if not chunk:
            break
        idx = np.array(chunk, dtype=int)
        total += float(np.sum(centred[idx].mean(axis=1) ** 2))
        count += len(idx)
    return total / count


def _as_matrices(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        return w[:, None, None]
    if w.ndim == 2:
        return w[:, :, None]
    return w


def double_subset_variance(w, v, D: int, full_cover: bool = True,
                           samples: int = MONTE_CARLO_SAMPLES, seed: int = 0) -> VarianceReport:
    """E||(w_D1 mean)^T (v_D2 mean) - w_bar^T v_bar||^2 for independent with-replacement
    D-batches, against I(D^2<n^2)/D^2 (1/n^2) sum_ij ||w_i^T v_j - w_bar^T v_bar||^2

    details carries the exact first/second order decomposition
    (s1 + s2)/D + s3/D^2 of the left side.
    """
    if D < 1:
        raise InputError(f"D must be >= 1, got {D}")
    w = _as_matrices(w)
    v = _as_rows(v)
    n = len(w)
    if len(v) != n or w.shape[1] != v.shape[1]:
        raise InputError(f"shape mismatch between w{w.shape} and v{v.shape}")
    w_bar, v_bar = w.mean(axis=0), v.mean(axis=0)
    target = w_bar.T @ v_bar
    products = np.einsum("ipq,jp->ijq", w, v)
    rhs_spread = float(np.mean(np.sum((products - target) ** 2, axis=2)))
    bound = indicator(D * D < n * n) / D ** 2 * rhs_spread
    dw, dv = w - w_bar, v - v_bar
    details = {
        "first_order_w": float(np.mean(np.sum(np.einsum("ipq,p->iq", dw, v_bar) ** 2, axis=1))),
        "first_order_v": float(np.mean(np.sum(np.einsum("pq,jp->jq", w_bar, dv) ** 2, axis=1))),
        "second_order": float(np.mean(np.sum(np.einsum("ipq,jp->ijq", dw, dv) ** 2, axis=2))),
        "rhs_spread": rhs_spread,
    }

    mode = SamplingMode.WITH_REPLACEMENT
    count = _outcome_count(n, D, mode, full_cover) ** 2
    if count <= ENUMERATION_LIMIT:
        batches, weights = _batch_outcomes(n, D, mode, full_cover)
        w_means = w[batches].mean(axis=1)
        v_means = v[batches].mean(axis=1)
        estimates = np.einsum("apq,bp->abq", w_means, v_means)
        errors = np.sum((estimates - target) ** 2, axis=2)
        value = float(weights @ errors @ weights)
        return VarianceReport("double_subset", value, bound, exact=value, samples=count,
                              details=details)

    logger.warning(f"{count} batch pairs exceed the enumeration limit; using Monte Carlo")
    rng = np.random.default_rng(seed)
    draws = np.empty(samples)
    for t in range(samples):
        d1 = _draw(rng, n, D, mode, full_cover)
        d2 = _draw(rng, n, D, mode, full_cover)
        estimate = w[d1].mean(axis=0).T @ v[d2].mean(axis=0)
        draws[t] = np.sum((estimate - target) ** 2)
    return VarianceReport("double_subset", float(draws.mean()), bound, samples=samples,
                          sigma=float(draws.std(ddof=1) / math.sqrt(samples)),
                          monte_carlo=True, details=details)


def estimator_bounds(constants: ProblemConstants, n: int, A: int, D: int, b: int,
                     displacement: float) -> Dict[str, float]:
    """Right-hand sides of the four estimator variance bounds at ||x_k - x~||^2"""
    c = constants
    V = displacement_variance(A, D, n, c)
    V1 = anchor_variance(D, n, c)
    by_anchor = indicator(D < n) * c.H1 / D
    return {
        "inner": (4.0 * (indicator(A < n) / A + indicator(D < n) / D) * c.B_G ** 2 * displacement
                  + 2.0 * by_anchor),
        "conditional_mean": (4.0 * V * displacement
                             + 16.0 * c.B_G ** 2 * c.L_F ** 2 * by_anchor
                             + 4.0 * indicator(D * D < n * n) * c.H2 / D ** 2),
        "estimator": 5.0 * (c.L_f ** 2 + V) * displacement + V1,
        "minibatch": 5.0 * (c.L_f ** 2 / b + V) * displacement + V1,
    }


def minibatch_key(b: int) -> str:
    return f"minibatch_b{b}"


class _EstimatorMoments:
    """Weighted first and second moments of the estimator errors, one
    mini-batch entry per batch size"""

    def __init__(self, batch_sizes: Sequence[int]):
        self.batch_sizes = list(batch_sizes)
        self.names = ("inner", "conditional_mean", "estimator",
                      *(minibatch_key(b) for b in self.batch_sizes))
        self.weight = 0.0
        self.sums = dict.fromkeys(self.names, 0.0)
        self.squares = dict.fromkeys(self.names, 0.0)

    def add(self, weights: np.ndarray, inner: float, conditional: np.ndarray,
            pair_variance: float):
        """One (A, D1) outcome paired with every D2 outcome in `conditional`"""
        values = {
            "inner": np.full(len(weights), inner),
            "conditional_mean": conditional,
            "estimator": conditional + pair_variance,
        }
        for b in self.batch_sizes:
            values[minibatch_key(b)] = conditional + pair_variance / b
        self.weight += float(weights.sum())
        for name in self.names:
            self.sums[name] += float(weights @ values[name])
            self.squares[name] += float(weights @ values[name] ** 2)

    def means(self) -> Dict[str, float]:
        return {name: self.sums[name] / self.weight for name in self.names}

    def sigmas(self, samples: int) -> Dict[str, float]:
        """Standard error of each mean from `samples` equally weighted draws"""
        out = {}
        for name, mean in self.means().items():
            var = max(self.squares[name] / self.weight - mean ** 2, 0.0)
            out[name] = math.sqrt(var / max(samples - 1, 1))
        return out


def estimator_bias_enumeration(problem: CompositionProblem, x_k, x_tilde, A_cfg: int,
                               D_cfg: int, b: Union[int, Sequence[int]] = 4,
                               mode: SamplingMode = SamplingMode.WITH_REPLACEMENT,
                               full_cover: bool = True,
                               constants: Optional[ProblemConstants] = None,
                               samples: int = MONTE_CARLO_SAMPLES,
                               seed: int = 0) -> Dict[str, VarianceReport]:
    """Expected squared errors of the inner estimate, the pair-conditional mean, the
    single-pair estimator and the b-pair mean, each against its variance bound

    The expectation over (i, j) is taken exactly given the batches, conditioning
    on the inner estimate. Batches are enumerated as weighted multisets when
    their joint count fits the enumeration limit, otherwise resampled.

    `b` may list several mini-batch sizes; the first is reported as
    "minibatch" and each one also as "minibatch_b<b>".
    """
    constants = constants or problem.constants
    batch_sizes = [b] if isinstance(b, int) else list(dict.fromkeys(b))
    if not batch_sizes or min(batch_sizes) < 1:
        raise InputError(f"mini-batch sizes must be >= 1, got {b!r}")
    mode = SamplingMode(mode)
    x_k = problem.check_x(x_k)
    x_tilde = problem.check_x(x_tilde)
    n = problem.n
    everyone = np.arange(n)

    values_k = problem.inner_values(everyone, x_k)
    values_t = problem.inner_values(everyone, x_tilde)
    jac_k = problem.inner_jacobians(everyone, x_k)
    jac_t = problem.inner_jacobians(everyone, x_tilde)
    g_full = values_k.mean(axis=0)
    jac_k_bar, jac_t_bar = jac_k.mean(axis=0), jac_t.mean(axis=0)
    grad_true = full_gradient(problem, x_k)
    shift = values_k - values_t

    def moments_for(a_idx, d1_idx, d2_batches):
        """(inner error, conditional errors over each d2 batch, pair variance)"""
        g_anchor = values_t[d1_idx].mean(axis=0)
        jac_anchor = jac_t[d1_idx].mean(axis=0)
        outer_anchor = problem.outer_gradients(everyone, g_anchor)
        g_hat = shift[a_idx].mean(axis=0) + g_anchor
        outer_hat = problem.outer_gradients(everyone, g_hat)
        pairs = (np.einsum("jmn,im->ijn", jac_k, outer_hat)
                 - np.einsum("jmn,im->ijn", jac_t, outer_anchor))
        pair_mean = jac_k_bar.T @ outer_hat.mean(axis=0) - jac_t_bar.T @ outer_anchor.mean(axis=0)
        pair_variance = float(np.mean(np.sum((pairs - pair_mean) ** 2, axis=2)))
        inner = float(np.sum((g_hat - g_full) ** 2))
        grad_anchors = outer_anchor[d2_batches].mean(axis=1) @ jac_anchor
        conditional = np.sum((pair_mean + grad_anchors - grad_true) ** 2, axis=1)
        return inner, conditional, pair_variance

    moments = _EstimatorMoments(batch_sizes)
    count = (_outcome_count(n, A_cfg, mode, full_cover)
             * _outcome_count(n, D_cfg, mode, full_cover) ** 2)
    monte_carlo = count > ENUMERATION_LIMIT
    if not monte_carlo:
        a_batches, a_weights = _batch_outcomes(n, A_cfg, mode, full_cover)
        d_batches, d_weights = _batch_outcomes(n, D_cfg, mode, full_cover)
        for d1_idx, d1_weight in zip(d_batches, d_weights):
            for a_idx, a_weight in zip(a_batches, a_weights):
                inner, conditional, pair_variance = moments_for(a_idx, d1_idx, d_batches)
                moments.add(d1_weight * a_weight * d_weights, inner, conditional, pair_variance)
        used = count
    else:
        logger.warning(f"{count} batch outcomes exceed the enumeration limit; using Monte Carlo")
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            d1_idx = _draw(rng, n, D_cfg, mode, full_cover)
            d2_idx = _draw(rng, n, D_cfg, mode, full_cover)
            a_idx = _draw(rng, n, A_cfg, mode, full_cover)
            inner, conditional, pair_variance = moments_for(a_idx, d1_idx, d2_idx[None, :])
            moments.add(np.ones(1), inner, conditional, pair_variance)
        used = samples

    displacement = float(np.sum((x_k - x_tilde) ** 2))
    bounds = {}
    for size in batch_sizes:
        per_size = estimator_bounds(constants, n, A_cfg, D_cfg, size, displacement)
        bounds.update(per_size)
        bounds[minibatch_key(size)] = per_size["minibatch"]
    suppressed = bool(constants.estimated_names)
    means = moments.means()
    sigmas = moments.sigmas(used) if monte_carlo else {name: 0.0 for name in means}
    means["minibatch"] = means[minibatch_key(batch_sizes[0])]
    sigmas["minibatch"] = sigmas[minibatch_key(batch_sizes[0])]
    bounds["minibatch"] = bounds[minibatch_key(batch_sizes[0])]
    sizes = {minibatch_key(size): size for size in batch_sizes}
    sizes["minibatch"] = batch_sizes[0]
    reports = {}
    for name, value in means.items():
        size = sizes.get(name, 1)
        reports[name] = VarianceReport(
            name, value, bounds[name], exact=None if monte_carlo else value, samples=used,
            sigma=sigmas[name], monte_carlo=monte_carlo, suppressed=suppressed,
            details={"A": A_cfg, "D": D_cfg, "b": size, "displacement": displacement},
        )
    return reports


def conditional_bias(problem: CompositionProblem, x_k, x_tilde, a_idx, d1_idx,
                     d2_idx) -> np.ndarray:
    """E_{i,j}[estimator] - grad f(x_k) for fixed batches"""
    everyone = np.arange(problem.n)
    values_t = problem.inner_values(d1_idx, x_tilde)
    g_anchor = values_t.mean(axis=0)
    jac_anchor = problem.inner_jacobians(d1_idx, x_tilde).mean(axis=0)
    grad_anchor = jac_anchor.T @ problem.outer_gradients(d2_idx, g_anchor).mean(axis=0)
    g_hat = (problem.inner_values(a_idx, x_k).mean(axis=0)
             - problem.inner_values(a_idx, x_tilde).mean(axis=0) + g_anchor)
    jac_k_bar = problem.inner_jacobians(everyone, x_k).mean(axis=0)
    jac_t_bar = problem.inner_jacobians(everyone, x_tilde).mean(axis=0)
    mean = (jac_k_bar.T @ problem.outer_gradients(everyone, g_hat).mean(axis=0)
            - jac_t_bar.T @ problem.outer_gradients(everyone, g_anchor).mean(axis=0)
            + grad_anchor)
    return mean - full_gradient(problem, x_k)


def default_step(x: np.ndarray) -> float:
    return 1e-5 * (1.0 + float(np.linalg.norm(x)))


def finite_diff_gradient(problem: CompositionProblem, x, step: Optional[float] = None) -> np.ndarray:
    """Central differences of the exact objective"""
    x = problem.check_x(x)
    step = default_step(x) if step is None else step
    if step <= 0:
        raise InputError(f"step must be positive, got {step}")
    grad = np.empty(problem.dim_x)
    for d in range(problem.dim_x):
        e = np.zeros(problem.dim_x)
        e[d] = step
        grad[d] = (composite_value(problem, x + e) - composite_value(problem, x - e)) / (2 * step)
    return grad


def finite_diff_jacobian(problem: CompositionProblem, j: int, x,
                         step: Optional[float] = None) -> np.ndarray:
    x = problem.check_x(x)
    step = default_step(x) if step is None else step
    columns = []
    for d in range(problem.dim_x):
        e = np.zeros(problem.dim_x)
        e[d] = step
        columns.append((problem.inner_value(j, x + e) - problem.inner_value(j, x - e)) / (2 * step))
    return np.stack(columns, axis=1)


def finite_diff_outer(problem: CompositionProblem, i: int, w,
                      step: Optional[float] = None) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    step = default_step(w) if step is None else step
    grad = np.empty(problem.dim_w)
    for d in range(problem.dim_w):
        e = np.zeros(problem.dim_w)
        e[d] = step
        grad[d] = (problem.outer_value(i, w + e) - problem.outer_value(i, w - e)) / (2 * step)
    return grad


def relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    return float(np.linalg.norm(approx - exact) / max(1.0, np.linalg.norm(exact)))


def oracle_consistency(problem: CompositionProblem, points: int = 100,
                       seed: int = 0) -> Dict[str, float]:
    """Worst finite-difference disagreement of each oracle pair over random points"""
    rng = np.random.default_rng(seed)
    R = problem.region
    worst = {"inner_jacobian": 0.0, "outer_gradient": 0.0, "full_gradient": 0.0}
    for _ in range(points):
        x = rng.uniform(-R, R, problem.dim_x)
        j, i = int(rng.integers(problem.n)), int(rng.integers(problem.n))
        w = problem.inner_value(j, x)
        worst["inner_jacobian"] = max(worst["inner_jacobian"], relative_error(
            finite_diff_jacobian(problem, j, x), problem.inner_jacobian(j, x)))
        worst["outer_gradient"] = max(worst["outer_gradient"], relative_error(
            finite_diff_outer(problem, i, w), problem.outer_gradient(i, w)))
        worst["full_gradient"] = max(worst["full_gradient"], relative_error(
            finite_diff_gradient(problem, x), full_gradient(problem, x)))
    return worst


def empirical_constant_violations(problem: CompositionProblem, points: int = 100,
                                  seed: int = 0) -> List[str]:
    """Names of exact-flagged constants exceeded at random points of the region"""
    sampled = estimate_constants(problem, samples=points, seed=seed)
    violations = []
    for name in ("B_G", "L_G", "B_F", "L_F", "L_f", "H1", "H2"):
        if not problem.constants.is_exact(name):
            continue
        exact = getattr(problem.constants, name)
        if getattr(sampled, name) > exact * (1.0 + 1e-9) + 1e-12:
            violations.append(name)
    if problem.constants.is_exact("mu") and sampled.mu < problem.constants.mu * (1 - 1e-9) - 1e-12:
        violations.append("mu")
    return violations
