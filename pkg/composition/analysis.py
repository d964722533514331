"""
Rate Analysis
Theorem-side formulas: convex contraction rates, the non-convex Lyapunov
sequence and the resulting bounds, for checking runs against theory
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from composition.exceptions import ScheduleError
from composition.problem import ProblemConstants

logger = logging.getLogger(__name__)


def indicator(condition: bool) -> float:
    return 1.0 if condition else 0.0


def displacement_variance(A: int, D: int, n: int, constants: ProblemConstants) -> float:
    """B_G^4 L_F^2 (4 I(A<n)/A + 4 I(D<n)/D); called V (convex) or W (non-convex)"""
    c = constants
    return c.B_G ** 4 * c.L_F ** 2 * (4.0 * indicator(A < n) / A + 4.0 * indicator(D < n) / D)


def anchor_variance(D: int, n: int, constants: ProblemConstants) -> float:
    """20 B_G^2 L_F^2 I(D<n) H1/D + 5 I(D^2<n^2) H2/D^2; called V1 or W1"""
    c = constants
    return (20.0 * c.B_G ** 2 * c.L_F ** 2 * indicator(D < n) * c.H1 / D
            + 5.0 * indicator(D * D < n * n) * c.H2 / D ** 2)


@dataclass
class ConvexRates:
    V: float
    V1: float
    V2: float
    rho1: float
    rho2: float
    rho3: float
    rho: float
    K: int

    @property
    def valid(self) -> bool:
        return self.rho1 > 0 and self.rho < 1


def convex_rates(schedule, constants: ProblemConstants, n: int) -> ConvexRates:
    """V, V1, rho1..rho3 and rho = (1/K + rho2)/rho1 for a convex schedule

    The per-pair smoothness enters as L_f^2/b so mini-batch schedules use the
    reduced variance.
    """
    if schedule.mode != "convex":
        raise ScheduleError(f"convex_rates needs a convex schedule, got mode '{schedule.mode}'")
    c = constants
    eta, h, K = schedule.eta, schedule.h, schedule.K
    V = displacement_variance(schedule.A, schedule.D, n, c)
    V1 = anchor_variance(schedule.D, n, c)
    V2 = 0.8 * V1
    pair = c.L_f ** 2 / schedule.b
    rho1 = (2.0 * c.mu - h - 4.0 * V / h - (12.0 * pair + 10.0 * V) * eta) * eta
    rho2 = 2.0 * (2.0 * V / h + 5.0 * (pair + V) * eta) * eta
    rho3 = eta * V2 / h + 2.0 * eta ** 2 * V1
    if rho1 > 0 and K > 0:
        rho = (1.0 / K + rho2) / rho1
    else:
        rho = math.inf
    rates = ConvexRates(V, V1, V2, rho1, rho2, rho3, rho, K)
    if not rates.valid:
        logger.warning(f"convex rates invalid for this schedule: rho1={rho1:.4g}, rho={rho:.4g}")
    return rates


def convex_bound(rates: ConvexRates, gap0: float, S: int) -> float:
    """rho^S gap0 + (rho3/rho1)(1 - rho^S)/(1 - rho)"""
    if not rates.valid:
        return math.inf
    contraction = rates.rho ** S
    return contraction * gap0 + (rates.rho3 / rates.rho1) * (1.0 - contraction) / (1.0 - rates.rho)


def full_anchor_rate(mu: float, L_f: float, eta: float, K: int) -> float:
    """Expected per-epoch contraction of ||x~ - x*||^2 with an exact anchor"""
    margin = mu - 2.0 * L_f ** 2 * eta
    if margin <= 0 or eta <= 0 or K <= 0:
        return math.inf
    return 1.0 / (2.0 * margin * eta * K) + L_f ** 2 * eta / margin


@dataclass
class NonconvexSequence:
    W: float
    W1: float
    W2: float
    Y: float
    U: float
    C: float
    c: List[float] = field(default_factory=list)
    u0: float = 0.0
    J0: float = 0.0

    @property
    def valid(self) -> bool:
        return self.u0 > 0

    @property
    def c0(self) -> float:
        return self.c[0]

    def closed_form_c0(self) -> float:
        """U (Y^K - 1)/(Y - 1), from the geometric progression"""
        K = len(self.c) - 1
        if self.Y == 1.0:
            return self.U * K
        try:
            return self.U * (self.Y ** K - 1.0) / (self.Y - 1.0)
        except OverflowError:
            return math.inf


def nonconvex_sequence(schedule, constants: ProblemConstants, n: int) -> NonconvexSequence:
    """Backward recursion c_k = c_{k+1} Y + U from c_K = 0; c[k] holds c_k"""
    if schedule.mode != "nonconvex":
        raise ScheduleError(
            f"nonconvex_sequence needs a non-convex schedule, got mode '{schedule.mode}'"
        )
    c = constants
    eta, h, K = schedule.eta, schedule.h, schedule.K
    W = displacement_variance(schedule.A, schedule.D, n, c)
    W1 = anchor_variance(schedule.D, n, c)
    W2 = 0.8 * W1
    pair = c.L_f ** 2 / schedule.b
    Y = 1.0 + (2.0 / h + 4.0 * h * W) * eta + 10.0 * (pair + W) * eta ** 2
    U = 2.0 * W * eta + 5.0 * (pair + W) * c.L_f * eta ** 2
    coeffs = [0.0] * (K + 1)
    for k in range(K - 1, -1, -1):
        coeffs[k] = coeffs[k + 1] * Y + U
    c1 = coeffs[1] if K >= 1 else 0.0
    u0 = (0.5 - h * c1) * eta - (c.L_f + 2.0 * c1) * eta ** 2
    J0 = 0.0
    if W1 > 0:
        J0 = (0.5 + h * c1) * W2 * eta + (c.L_f + 2.0 * c1) * W1 * eta ** 2
    C = U / (Y - 1.0) if Y != 1.0 else math.inf
    sequence = NonconvexSequence(W, W1, W2, Y, U, C, coeffs, u0, J0)
    if not sequence.valid:
        logger.warning(f"non-convex sequence invalid for this schedule: u0={u0:.4g}")
    return sequence


def theorem_bound_nonconvex(sequence: NonconvexSequence, f0_gap: float, K: int, S: int) -> float:
    """(f(x0) - f*)/(u0 K S) + J0/u0, bounding E||grad f(x^)||^2"""
    if sequence.u0 <= 0:
        raise ScheduleError(f"bound needs u0 > 0, got {sequence.u0}")
    if K * S <= 0:
        raise ScheduleError("bound needs K*S > 0")
    return f0_gap / (sequence.u0 * K * S) + sequence.J0 / sequence.u0


def complexity_convex(n: int, mu: float, eps: float, L_f: float, b: int = 1) -> float:
    """Order of the convex query complexity, constants dropped"""
    return ((min(n, 1.0 / (eps * mu ** 2)) + L_f ** 2 / (b * mu ** 2) * min(n, 1.0 / mu ** 2))
            * math.log(1.0 / eps))


def complexity_nonconvex(n: int, eps: float, b: int = 1) -> float:
    """Order of the non-convex query complexity, constants dropped"""
    return b ** -0.2 * min(eps ** -1.8, n ** 0.8 / eps)


def recursion_satisfaction(gaps_by_seed: Sequence[Sequence[float]], rates: ConvexRates,
                           floor: float = 1e-20) -> float:
    """Fraction of epochs whose seed-averaged gaps satisfy
    rho1 g_{s+1} <= (1/K + rho2) g_s + rho3

    Epochs whose averaged gap is already below `floor` are skipped; 1.0 when
    nothing is left to check.
    """
    gaps = np.asarray(gaps_by_seed, dtype=float).mean(axis=0)
    checked = satisfied = 0
    for s in range(len(gaps) - 1):
        if gaps[s] < floor:
            continue
        checked += 1
        lhs = rates.rho1 * gaps[s + 1]
        rhs = (1.0 / rates.K + rates.rho2) * gaps[s] + rates.rho3
        if lhs <= rhs:
            satisfied += 1
    return satisfied / checked if checked else 1.0
