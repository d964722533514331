"""
Composition Problems
Oracle interface for f(x) = (1/n) sum_i F_i((1/n) sum_j G_j(x)) and the
built-in desk-scale instances with known ground truth
"""

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from composition.exceptions import ConfigurationError
from composition.ledger import QueryLedger

logger = logging.getLogger(__name__)

CONSTANT_NAMES = ("mu", "B_G", "L_G", "B_F", "L_F", "L_f", "H1", "H2")
EXACT = "exact"
ESTIMATED = "estimated"

# Largest vertex set enumerated when bounding H1/H2/B_F over the sample region.
MAX_VERTICES = 4096
DEFAULT_REGION = 10.0


@dataclass
class ProblemConstants:
    """Assumption constants; each one is flagged exact or estimated"""

    mu: float = 0.0
    B_G: float = 0.0
    L_G: float = 0.0
    B_F: float = 0.0
    L_F: float = 0.0
    L_f: float = 0.0
    H1: float = 0.0
    H2: float = 0.0
    flags: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name in CONSTANT_NAMES:
            value = getattr(self, name)
            if value < 0 or not np.isfinite(value):
                raise ConfigurationError(f"constant {name} must be finite and >= 0, got {value}")
            self.flags.setdefault(name, ESTIMATED)

    def is_exact(self, name: str) -> bool:
        return self.flags.get(name) == EXACT

    @property
    def estimated_names(self) -> List[str]:
        return [name for name in CONSTANT_NAMES if not self.is_exact(name)]

    def with_values(self, **values) -> "ProblemConstants":
        """Copy with some constants overridden; overrides keep their flag"""
        return replace(self, flags=dict(self.flags), **values)

    def as_dict(self) -> Dict[str, float]:
        return {name: float(getattr(self, name)) for name in CONSTANT_NAMES}


@dataclass(frozen=True)
class ProblemSpec:
    """Flat description that regenerates a built-in instance bit for bit"""

    kind: str
    n: int
    dim_x: int = 1
    dim_w: int = 1
    seed: int = 0
    beta: float = 0.0
    lam: float = 0.0
    region: float = DEFAULT_REGION

    def to_text(self) -> str:
        return (f"kind={self.kind} n={self.n} dim_x={self.dim_x} dim_w={self.dim_w} "
                f"seed={self.seed} beta={self.beta!r} lambda={self.lam!r} "
                f"region={self.region!r}")

    @classmethod
    def from_text(cls, text: str) -> "ProblemSpec":
        fields = {}
        for token in text.split():
            if "=" not in token:
                raise ConfigurationError(f"malformed problem token '{token}'")
            key, value = token.split("=", 1)
            fields[key] = value
        try:
            return cls(
                kind=fields["kind"],
                n=int(fields["n"]),
                dim_x=int(fields.get("dim_x", 1)),
                dim_w=int(fields.get("dim_w", 1)),
                seed=int(fields.get("seed", 0)),
                beta=float(fields.get("beta", 0.0)),
                lam=float(fields.get("lambda", 0.0)),
                region=float(fields.get("region", DEFAULT_REGION)),
            )
        except (KeyError, ValueError) as e:
            raise ConfigurationError(f"cannot parse problem spec '{text}': {e}")

    def build(self) -> "CompositionProblem":
        if self.kind == "lcq":
            return make_lcq(self.n, self.dim_x, self.dim_w, self.seed, region=self.region)
        if self.kind == "lcq_reference":
            return make_lcq_reference(region=self.region)
        if self.kind == "mean_variance":
            return make_mean_variance(self.n, self.dim_x, self.lam, self.seed,
                                      region=self.region)
        if self.kind == "nonconvex":
            return make_nonconvex_synthetic(self.n, self.dim_x, self.dim_w, self.beta,
                                            self.seed, region=self.region)
        raise ConfigurationError(f"unknown problem kind '{self.kind}'")


class CompositionProblem:
    """Oracle bundle for G_j, dG_j, F_i, grad F_i

    Indices are zero-based. Batched oracles take an index array and return
    stacked results; subclasses override them with vectorised versions.
    """

    kind = "custom"

    def __init__(self, n: int, dim_x: int, dim_w: int,
                 constants: Optional[ProblemConstants] = None,
                 x_star: Optional[np.ndarray] = None,
                 f_star: Optional[float] = None,
                 region: float = DEFAULT_REGION,
                 spec: Optional[ProblemSpec] = None):
        if min(n, dim_x, dim_w) < 1:
            raise ConfigurationError(
                f"n, dim_x and dim_w must be positive (got {n}, {dim_x}, {dim_w})"
            )
        self.n = int(n)
        self.dim_x = int(dim_x)
        self.dim_w = int(dim_w)
        self.constants = constants if constants is not None else ProblemConstants()
        self.x_star = None if x_star is None else np.asarray(x_star, dtype=float)
        self.f_star = f_star
        self.region = float(region)
        self.spec = spec

    # single-component oracles

    def inner_value(self, j: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def inner_jacobian(self, j: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def outer_value(self, i: int, w: np.ndarray) -> float:
        raise NotImplementedError

    def outer_gradient(self, i: int, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # batched oracles

    def inner_values(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.stack([self.inner_value(int(j), x) for j in idx])

    def inner_jacobians(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.stack([self.inner_jacobian(int(j), x) for j in idx])

    def outer_values(self, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.array([self.outer_value(int(i), w) for i in idx])

    def outer_gradients(self, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.stack([self.outer_gradient(int(i), w) for i in idx])

    # region helpers used when bounding constants

    def inner_range(self) -> Tuple[np.ndarray, np.ndarray]:
        """Coordinate-wise hull of every G_j(x) over the box |x|_inf <= region"""
        raise NotImplementedError

    def jacobian_vertex_points(self) -> List[np.ndarray]:
        """Points x whose Jacobians span every Jacobian the instance can produce"""
        return [np.zeros(self.dim_x)]

    # validation

    def check_x(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim_x,):
            raise ConfigurationError(
                f"expected a vector of dimension {self.dim_x}, got shape {x.shape}"
            )
        return x

    def check_indices(self, idx: Iterable[int]) -> np.ndarray:
        idx = np.asarray(idx, dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise ConfigurationError(f"index out of range for n={self.n}: {idx}")
        return idx

    def describe(self) -> str:
        if self.spec is not None:
            return self.spec.to_text()
        return f"kind={self.kind} n={self.n} dim_x={self.dim_x} dim_w={self.dim_w}"


def full_inner(problem: CompositionProblem, x: np.ndarray,
               ledger: Optional[QueryLedger] = None) -> np.ndarray:
    """G(x) = (1/n) sum_j G_j(x)"""
    x = problem.check_x(x)
    if ledger is not None:
        ledger.charge_raw(inner_values=problem.n)
    return problem.inner_values(np.arange(problem.n), x).mean(axis=0)


def full_gradient(problem: CompositionProblem, x: np.ndarray,
                  ledger: Optional[QueryLedger] = None) -> np.ndarray:
    """Exact composite gradient (dG(x))^T grad F(G(x)); evaluation use only"""
    x = problem.check_x(x)
    everyone = np.arange(problem.n)
    g = problem.inner_values(everyone, x).mean(axis=0)
    jac = problem.inner_jacobians(everyone, x).mean(axis=0)
    grad_outer = problem.outer_gradients(everyone, g).mean(axis=0)
    if ledger is not None:
        ledger.charge_evaluation(3 * problem.n)
    return jac.T @ grad_outer


def composite_value(problem: CompositionProblem, x: np.ndarray,
                    ledger: Optional[QueryLedger] = None) -> float:
    """Exact objective value f(x)"""
    x = problem.check_x(x)
    everyone = np.arange(problem.n)
    g = problem.inner_values(everyone, x).mean(axis=0)
    if ledger is not None:
        ledger.charge_evaluation(2 * problem.n)
    return float(problem.outer_values(everyone, g).mean())


def inner_variance(problem: CompositionProblem, x: np.ndarray) -> float:
    """(1/n) sum_j ||G(x) - G_j(x)||^2"""
    values = problem.inner_values(np.arange(problem.n), x)
    return float(np.mean(np.sum((values - values.mean(axis=0)) ** 2, axis=1)))


def pair_gradient_variance(problem: CompositionProblem, x: np.ndarray,
                           y: np.ndarray) -> float:
    """(1/n^2) sum_ij ||(dG(x))^T grad F(y) - (dG_j(x))^T grad F_i(y)||^2"""
    everyone = np.arange(problem.n)
    jac = problem.inner_jacobians(everyone, x)
    grads = problem.outer_gradients(everyone, y)
    pairs = np.einsum("jmn,im->jin", jac, grads)
    mean = jac.mean(axis=0).T @ grads.mean(axis=0)
    return float(np.mean(np.sum((pairs - mean) ** 2, axis=2)))


def _box_vertices(lo: np.ndarray, hi: np.ndarray) -> Optional[List[np.ndarray]]:
    if 2 ** len(lo) > MAX_VERTICES:
        return None
    return [np.where(np.array(bits, dtype=bool), hi, lo)
            for bits in itertools.product((0, 1), repeat=len(lo))]


def outer_box(problem: CompositionProblem) -> Tuple[np.ndarray, np.ndarray]:
    """Box holding every inner estimate: the component hull widened threefold"""
    lo, hi = problem.inner_range()
    mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    return mid - 3.0 * half, mid + 3.0 * half


def region_bounds(problem: CompositionProblem) -> Dict[str, Optional[float]]:
    """Exact maxima of H1, H2 and B_F over the sample region by vertex enumeration

    All three quantities are convex in the enumerated variables for the
    built-in instances (affine inner differences, affine outer gradients), so
    the maximum over a box sits at one of its vertices. Returns None for a
    quantity whose vertex set is too large.
    """
    R = problem.region
    x_vertices = _box_vertices(-R * np.ones(problem.dim_x), R * np.ones(problem.dim_x))
    y_lo, y_hi = outer_box(problem)
    y_vertices = _box_vertices(y_lo, y_hi)
    jac_points = problem.jacobian_vertex_points()

    H1 = None
    if x_vertices is not None:
        H1 = max(inner_variance(problem, v) for v in x_vertices)

    H2 = B_F = None
    if y_vertices is not None and len(y_vertices) * len(jac_points) <= MAX_VERTICES:
        H2 = max(pair_gradient_variance(problem, x, y)
                 for x in jac_points for y in y_vertices)
        everyone = np.arange(problem.n)
        B_F = max(float(np.max(np.linalg.norm(problem.outer_gradients(everyone, y), axis=1)))
                  for y in y_vertices)
    return {"H1": H1, "H2": H2, "B_F": B_F}


class QuadraticCompositionProblem(CompositionProblem):
    """G_j(x) = A_j x + b_j + beta * P sin(x),  F_i(w) = (scale/2) ||w - c_i||^2

    P is the rectangular identity lifting R^N into R^M. beta = 0 gives the
    strongly convex linear-quadratic family.
    """

    def __init__(self, A: np.ndarray, b: np.ndarray, c: np.ndarray,
                 scale: float = 1.0, beta: float = 0.0,
                 region: float = DEFAULT_REGION, spec: Optional[ProblemSpec] = None,
                 kind: Optional[str] = None):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        c = np.asarray(c, dtype=float)
        if A.ndim != 3 or b.shape != A.shape[:2] or c.shape != A.shape[:2]:
            raise ConfigurationError(
                f"inconsistent shapes A{A.shape}, b{b.shape}, c{c.shape}"
            )
        if beta < 0 or scale <= 0:
            raise ConfigurationError("beta must be >= 0 and scale > 0")
        n, M, N = A.shape
        super().__init__(n, N, M, region=region, spec=spec)
        self.kind = kind or ("lcq" if beta == 0 else "nonconvex")
        self.A, self.b, self.c = A, b, c
        self.scale = float(scale)
        self.beta = float(beta)
        self.lift = np.eye(M, N)
        self.A_bar = A.mean(axis=0)
        self.b_bar = b.mean(axis=0)
        self.c_bar = c.mean(axis=0)
        self.constants = self._exact_constants()
        if self.beta == 0:
            self._solve_optimum()

    @classmethod
    def from_arrays(cls, A, b, c, scale: float = 1.0, beta: float = 0.0,
                    region: float = DEFAULT_REGION) -> "QuadraticCompositionProblem":
        return cls(A, b, c, scale=scale, beta=beta, region=region)

    def _sine_term(self, x: np.ndarray) -> np.ndarray:
        return self.beta * (self.lift @ np.sin(x))

    def inner_value(self, j: int, x: np.ndarray) -> np.ndarray:
        value = self.A[j] @ x + self.b[j]
        if self.beta:
            value = value + self._sine_term(x)
        return value

    def inner_jacobian(self, j: int, x: np.ndarray) -> np.ndarray:
        if self.beta:
            return self.A[j] + self.beta * self.lift * np.cos(x)[None, :]
        return self.A[j]

    def outer_value(self, i: int, w: np.ndarray) -> float:
        diff = w - self.c[i]
        return 0.5 * self.scale * float(diff @ diff)

    def outer_gradient(self, i: int, w: np.ndarray) -> np.ndarray:
        return self.scale * (w - self.c[i])

    def inner_values(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        values = np.einsum("kmn,n->km", self.A[idx], x) + self.b[idx]
        if self.beta:
            values = values + self._sine_term(x)[None, :]
        return values

    def inner_jacobians(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        jac = self.A[idx]
        if self.beta:
            jac = jac + (self.beta * self.lift * np.cos(x)[None, :])[None, :, :]
        return jac

    def outer_values(self, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
        diff = w[None, :] - self.c[idx]
        return 0.5 * self.scale * np.sum(diff * diff, axis=1)

    def outer_gradients(self, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
        return self.scale * (w[None, :] - self.c[idx])

    def inner_range(self) -> Tuple[np.ndarray, np.ndarray]:
        reach = self.region * np.abs(self.A).sum(axis=2)
        if self.beta:
            reach = reach + self.beta * self.lift.sum(axis=1)[None, :]
        return (self.b - reach).min(axis=0), (self.b + reach).max(axis=0)

    def jacobian_vertex_points(self) -> List[np.ndarray]:
        if not self.beta:
            return [np.zeros(self.dim_x)]
        # cos(x) takes every sign pattern on {0, pi}^N
        points = _box_vertices(np.zeros(self.dim_x), np.pi * np.ones(self.dim_x))
        return points if points is not None else [np.zeros(self.dim_x)]

    def _exact_constants(self) -> ProblemConstants:
        s, beta = self.scale, self.beta
        jac_norms = np.linalg.norm(self.A, ord=2, axis=(1, 2))
        a_bar_norm = float(np.linalg.norm(self.A_bar, ord=2))
        bounds = region_bounds(self)
        B_G = float(jac_norms.max()) + beta
        B_F = bounds["B_F"]
        if B_F is None:
            lo, hi = outer_box(self)
            far = np.maximum(np.abs(lo[None, :] - self.c), np.abs(hi[None, :] - self.c))
            B_F = s * float(np.max(np.linalg.norm(far, axis=1)))
        if beta:
            L_f = s * B_G * (a_bar_norm + beta) + beta * B_F
            mu = 0.0
        else:
            cross = np.einsum("jmn,mk->jnk", self.A, self.A_bar)
            L_f = s * float(np.linalg.norm(cross, ord=2, axis=(1, 2)).max())
            mu = 0.0
            if self.dim_w >= self.dim_x:
                mu = s * float(np.linalg.eigvalsh(self.A_bar.T @ self.A_bar).min())
                mu = max(mu, 0.0)
        H1, H2 = bounds["H1"], bounds["H2"]
        flags = {name: EXACT for name in CONSTANT_NAMES}
        if H1 is None or H2 is None:
            sampled = estimate_constants(self, samples=1000, seed=0)
            if H1 is None:
                H1, flags["H1"] = sampled.H1, ESTIMATED
            if H2 is None:
                H2, flags["H2"] = sampled.H2, ESTIMATED
        return ProblemConstants(mu=mu, B_G=B_G, L_G=beta, B_F=float(B_F), L_F=s,
                                L_f=float(L_f), H1=float(H1), H2=float(H2), flags=flags)

    def _solve_optimum(self):
        rhs = self.c_bar - self.b_bar
        x_star, *_ = np.linalg.lstsq(self.A_bar, rhs, rcond=None)
        self.x_star = x_star
        self.f_star = composite_value(self, x_star)


def _draw_quadratic_arrays(n: int, N: int, M: int,
                           rng: np.random.Generator) -> Tuple[np.ndarray, ...]:
    A = np.eye(M, N)[None, :, :] + 0.1 * rng.standard_normal((n, M, N))
    b = 0.5 * rng.standard_normal((n, M))
    c = rng.standard_normal((n, M))
    return A, b, c


def _well_posed(A: np.ndarray) -> bool:
    n, M, N = A.shape
    if M < N:
        return True
    A_bar = A.mean(axis=0)
    eig = np.linalg.eigvalsh(A_bar.T @ A_bar)
    return eig.min() > 1e-10 * max(eig.max(), 1.0)


def _draw_until_well_posed(n: int, N: int, M: int, seed: int) -> Tuple[np.ndarray, ...]:
    attempt = seed
    while True:
        A, b, c = _draw_quadratic_arrays(n, N, M, np.random.default_rng(attempt))
        if _well_posed(A):
            return A, b, c
        logger.warning(f"singular mean Jacobian for seed {attempt}; retrying with {attempt + 1}")
        attempt += 1


def make_lcq(n: int, N: int, M: int, seed: int,
             region: float = DEFAULT_REGION) -> QuadraticCompositionProblem:
    """Random linear-quadratic instance G_j(x) = A_j x + b_j, F_i(w) = ||w - c_i||^2 / 2

    Strongly convex whenever M >= N; with M < N the instance is merely convex,
    mu is reported as 0 and x* is the minimum-norm minimiser.
    """
    if min(n, N, M) < 1:
        raise ConfigurationError("make_lcq needs n, N, M >= 1")
    A, b, c = _draw_until_well_posed(n, N, M, seed)
    spec = ProblemSpec("lcq", n, N, M, seed, region=region)
    return QuadraticCompositionProblem(A, b, c, region=region, spec=spec, kind="lcq")


def make_lcq_reference(region: float = DEFAULT_REGION) -> QuadraticCompositionProblem:
    """n=2, G_1(x)=x, G_2(x)=3x, F_1(w)=w^2, F_2(w)=(w-2)^2; f(x)=4x^2-4x+2"""
    A = np.array([[[1.0]], [[3.0]]])
    b = np.zeros((2, 1))
    c = np.array([[0.0], [2.0]])
    spec = ProblemSpec("lcq_reference", 2, 1, 1, 0, region=region)
    return QuadraticCompositionProblem(A, b, c, scale=2.0, region=region, spec=spec,
                                       kind="lcq_reference")


def make_nonconvex_synthetic(n: int, N: int, M: int, beta: float, seed: int,
                             region: float = DEFAULT_REGION) -> QuadraticCompositionProblem:
    """LCQ arrays for the same seed plus the sine perturbation beta * P sin(x)"""
    if beta < 0:
        raise ConfigurationError(f"beta must be >= 0, got {beta}")
    if min(n, N, M) < 1:
        raise ConfigurationError("make_nonconvex_synthetic needs n, N, M >= 1")
    A, b, c = _draw_until_well_posed(n, N, M, seed)
    spec = ProblemSpec("nonconvex", n, N, M, seed, beta=beta, region=region)
    return QuadraticCompositionProblem(A, b, c, beta=beta, region=region, spec=spec,
                                       kind="nonconvex" if beta else "lcq")


class MeanVarianceProblem(CompositionProblem):
    """Mean plus lambda times variance of the linear loss h(x; a, b) = <a, x> - b

    G_j(x) = (x, h(x; a_j, b_j)) in R^{N+1};
    F_i(u, v) = h(u; a_i, b_i) + lambda * (h(u; a_i, b_i) - v)^2.
    """

    kind = "mean_variance"

    def __init__(self, a: np.ndarray, b: np.ndarray, lam: float,
                 region: float = DEFAULT_REGION, spec: Optional[ProblemSpec] = None):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if lam < 0:
            raise ConfigurationError(f"lambda must be >= 0, got {lam}")
        n, N = a.shape
        super().__init__(n, N, N + 1, region=region, spec=spec)
        self.a, self.b, self.lam = a, b, float(lam)
        self._jac = np.concatenate(
            [np.broadcast_to(np.eye(N), (n, N, N)), a[:, None, :]], axis=1
        )
        self.constants = self._exact_constants()
        self._solve_optimum()

    def loss(self, i: int, x: np.ndarray) -> float:
        return float(self.a[i] @ x - self.b[i])

    def inner_value(self, j: int, x: np.ndarray) -> np.ndarray:
        return np.append(x, self.loss(j, x))

    def inner_jacobian(self, j: int, x: np.ndarray) -> np.ndarray:
        return self._jac[j]

    def outer_value(self, i: int, w: np.ndarray) -> float:
        h = self.loss(i, w[:-1])
        return h + self.lam * (h - w[-1]) ** 2

    def outer_gradient(self, i: int, w: np.ndarray) -> np.ndarray:
        r = self.loss(i, w[:-1]) - w[-1]
        return np.append(self.a[i] * (1.0 + 2.0 * self.lam * r), -2.0 * self.lam * r)

    def inner_values(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        h = self.a[idx] @ x - self.b[idx]
        return np.concatenate([np.broadcast_to(x, (len(idx), self.dim_x)), h[:, None]], axis=1)

    def inner_jacobians(self, idx: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self._jac[idx]

    def outer_values(self, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
        h = self.a[idx] @ w[:-1] - self.b[idx]
        return h + self.lam * (h - w[-1]) ** 2

    def outer_gradients(self, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
        r = self.a[idx] @ w[:-1] - self.b[idx] - w[-1]
        return np.concatenate(
            [self.a[idx] * (1.0 + 2.0 * self.lam * r)[:, None], (-2.0 * self.lam * r)[:, None]],
            axis=1,
        )

    def inner_range(self) -> Tuple[np.ndarray, np.ndarray]:
        R = self.region
        reach = R * np.abs(self.a).sum(axis=1)
        lo = np.append(-R * np.ones(self.dim_x), (-self.b - reach).min())
        hi = np.append(R * np.ones(self.dim_x), (-self.b + reach).max())
        return lo, hi

    def direct_objective(self, x: np.ndarray) -> float:
        """Mean plus lambda times population variance, computed directly"""
        losses = self.a @ x - self.b
        return float(losses.mean() + self.lam * losses.var())

    def _exact_constants(self) -> ProblemConstants:
        lam = self.lam
        a_bar = self.a.mean(axis=0)
        B_G = float(np.sqrt(1.0 + np.max(np.sum(self.a ** 2, axis=1))))
        L_F = 2.0 * lam * float(np.max(np.sum(self.a ** 2, axis=1) + 1.0))
        spread = np.linalg.norm(self.a[:, None, :] - self.a[None, :, :], axis=2)
        centred = np.linalg.norm(self.a - a_bar, axis=1)
        L_f = 2.0 * lam * float(np.max(spread * centred[:, None]))
        cov = np.cov(self.a, rowvar=False, bias=True).reshape(self.dim_x, self.dim_x)
        mu = 2.0 * lam * max(float(np.linalg.eigvalsh(cov).min()), 0.0)
        bounds = region_bounds(self)
        flags = {name: EXACT for name in CONSTANT_NAMES}
        sampled = None
        for name in ("H1", "H2", "B_F"):
            if bounds[name] is None:
                sampled = sampled or estimate_constants(self, samples=1000, seed=0)
                bounds[name] = getattr(sampled, name)
                flags[name] = ESTIMATED
        return ProblemConstants(mu=mu, B_G=B_G, L_G=0.0, B_F=float(bounds["B_F"]), L_F=L_F,
                                L_f=L_f, H1=float(bounds["H1"]), H2=float(bounds["H2"]),
                                flags=flags)

    def _solve_optimum(self):
        if self.constants.mu <= 0:
            return
        a_bar = self.a.mean(axis=0)
        cov = np.cov(self.a, rowvar=False, bias=True).reshape(self.dim_x, self.dim_x)
        cross = ((self.a - a_bar) * (self.b - self.b.mean())[:, None]).mean(axis=0)
        self.x_star = np.linalg.solve(cov, cross - a_bar / (2.0 * self.lam))
        self.f_star = self.direct_objective(self.x_star)


def make_mean_variance(n: int, N: int, lam: float, seed: int,
                       region: float = DEFAULT_REGION) -> MeanVarianceProblem:
    if n < 1 or N < 1:
        raise ConfigurationError("make_mean_variance needs n, N >= 1")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, N))
    b = rng.standard_normal(n)
    spec = ProblemSpec("mean_variance", n, N, N + 1, seed, lam=lam, region=region)
    return MeanVarianceProblem(a, b, lam, region=region, spec=spec)


def estimate_constants(problem: CompositionProblem, samples: int = 1000,
                       seed: int = 0) -> ProblemConstants:
    """Empirical maxima of the assumption constants over random points in the region

    Every value is flagged estimated.
    """
    rng = np.random.default_rng(seed)
    R = problem.region
    everyone = np.arange(problem.n)
    best = {name: 0.0 for name in CONSTANT_NAMES}
    mu = np.inf
    for _ in range(samples):
        x = rng.uniform(-R, R, problem.dim_x)
        y = rng.uniform(-R, R, problem.dim_x)
        step = np.linalg.norm(x - y)
        j, i = rng.integers(problem.n), rng.integers(problem.n)
        gx = full_inner(problem, x)
        gy = full_inner(problem, y)
        jx, jy = problem.inner_jacobian(j, x), problem.inner_jacobian(j, y)
        best["B_G"] = max(best["B_G"], float(np.linalg.norm(jx, ord=2)))
        best["B_F"] = max(best["B_F"], float(np.linalg.norm(problem.outer_gradient(i, gx))))
        best["H1"] = max(best["H1"], inner_variance(problem, x))
        best["H2"] = max(best["H2"], pair_gradient_variance(problem, x, gx))
        if step > 0:
            best["L_G"] = max(best["L_G"], float(np.linalg.norm(jx - jy, ord=2)) / step)
            w_step = np.linalg.norm(gx - gy)
            if w_step > 0:
                diff = problem.outer_gradient(i, gx) - problem.outer_gradient(i, gy)
                best["L_F"] = max(best["L_F"], float(np.linalg.norm(diff)) / w_step)
            pair_x = jx.T @ problem.outer_gradient(i, gx)
            pair_y = jy.T @ problem.outer_gradient(i, gy)
            best["L_f"] = max(best["L_f"], float(np.linalg.norm(pair_x - pair_y)) / step)
            curvature = (full_gradient(problem, x) - full_gradient(problem, y)) @ (x - y)
            mu = min(mu, float(curvature) / step ** 2)
    best["mu"] = max(mu, 0.0) if np.isfinite(mu) else 0.0
    logger.info(f"estimated constants from {samples} samples: {best}")
    return ProblemConstants(**best, flags={name: ESTIMATED for name in CONSTANT_NAMES})
