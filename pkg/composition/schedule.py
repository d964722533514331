"""
Schedules
Derives the algorithm tunables (A, D, K, S, b, eta, h) from the convex and
non-convex corollaries, and validates user overrides
"""

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional

import numpy as np

from composition.analysis import convex_rates
from composition.exceptions import ScheduleError
from composition.problem import CompositionProblem, ProblemConstants
from composition.sampling import SamplingMode

logger = logging.getLogger(__name__)

MODES = ("convex", "nonconvex")
COROLLARY = "corollary"
OVERRIDE = "override"
DEFAULTED = "default"

# eta = mu / (135 L_f^2); the stricter 3/53 variant is not used.
CONVEX_STEP_CONSTANT = 1.0 / 135.0
CONVEX_INNER_CONSTANT = 540.0
CONVEX_A_CONSTANT = 128.0


@dataclass
class Schedule:
    mode: str
    A: int
    D: int
    K: int
    S: int
    b: int = 1
    eta: float = 0.0
    h: float = 1.0
    epsilon: float = 1e-4
    c_A: float = 1.0
    c_D: float = 1.0
    c_T: float = 1.0
    x0_gap: Optional[float] = None
    sampling_mode: SamplingMode = SamplingMode.WITH_REPLACEMENT
    full_cover: bool = True
    enumerate_pairs: bool = False
    provenance: Dict[str, str] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    @property
    def T(self) -> int:
        return self.S * self.K

    def warn(self, message: str):
        logger.warning(message)
        self.warnings.append(message)

    def effective(self) -> Dict[str, Any]:
        """Every tunable with its value, for trace headers"""
        skip = {"provenance", "warnings"}
        values = {}
        for f in fields(self):
            if f.name in skip:
                continue
            value = getattr(self, f.name)
            values[f.name] = value.value if isinstance(value, SamplingMode) else value
        return values


def _ceil(value: float) -> int:
    return max(1, int(math.ceil(value)))


def _capped(value: float, n: int, name: str, provenance: Dict[str, str]) -> int:
    """min{n, ceil(value)}, noting which branch of the min bound"""
    size = _ceil(value)
    if size >= n:
        provenance[name] = f"{COROLLARY}:n"
        return n
    provenance[name] = f"{COROLLARY}:formula"
    return size


def _warn_estimated(schedule: Schedule, constants: ProblemConstants, used: List[str]):
    estimated = [name for name in used if not constants.is_exact(name)]
    if estimated:
        schedule.warn(f"schedule derived from estimated constants: {', '.join(estimated)}")


def convex_schedule(constants: ProblemConstants, n: int, epsilon: float, b: int = 1,
                    x0_gap: Optional[float] = None) -> Schedule:
    """h = mu, eta = b mu/(135 L_f^2), K = ceil(540 L_f^2/(b mu^2)) and the A, D, S rules"""
    c = constants
    if c.mu <= 0:
        raise ScheduleError("convex schedule needs mu > 0; use the non-convex schedule")
    if c.L_f <= 0:
        raise ScheduleError("convex schedule needs L_f > 0")
    if epsilon <= 0:
        raise ScheduleError(f"epsilon must be positive, got {epsilon}")
    if b < 1:
        raise ScheduleError(f"mini-batch size must be >= 1, got {b}")

    provenance: Dict[str, str] = {"h": COROLLARY, "eta": COROLLARY, "K": COROLLARY,
                                  "b": OVERRIDE if b != 1 else DEFAULTED}
    strength = c.B_G ** 4 * c.L_F ** 2
    A = _capped(CONVEX_A_CONSTANT * strength / c.mu ** 2, n, "A", provenance)
    D = _capped(5.0 * (16.0 * strength * c.H1 + 4.0 * c.H2) / (4.0 * epsilon * c.mu ** 2),
                n, "D", provenance)
    if D < A:
        D = A
        provenance["D"] = f"{COROLLARY}:raised-to-A"
    schedule = Schedule(
        mode="convex", A=A, D=D,
        K=_ceil(CONVEX_INNER_CONSTANT * c.L_f ** 2 / (b * c.mu ** 2)),
        S=1, b=b, eta=b * c.mu * CONVEX_STEP_CONSTANT / c.L_f ** 2, h=c.mu,
        epsilon=epsilon, provenance=provenance,
    )
    _warn_estimated(schedule, c, ["mu", "B_G", "L_F", "L_f", "H1", "H2"])

    if x0_gap is None:
        schedule.warn("x0_gap unknown; using 1.0 for the epoch count")
        x0_gap = 1.0
        provenance["x0_gap"] = DEFAULTED
    else:
        provenance["x0_gap"] = OVERRIDE
    if x0_gap <= 0:
        raise ScheduleError(f"x0_gap must be positive, got {x0_gap}")
    schedule.x0_gap = x0_gap

    rates = convex_rates(schedule, c, n)
    if not rates.valid:
        raise ScheduleError(
            f"corollary schedule does not contract (rho1={rates.rho1:.4g}, rho={rates.rho:.4g}); "
            f"reduce b={b}"
        )
    schedule.S = _ceil(math.log(2.0 * x0_gap / epsilon) / math.log(1.0 / rates.rho))
    provenance["S"] = COROLLARY
    logger.info(f"convex schedule: A={A} D={D} K={schedule.K} S={schedule.S} "
                f"eta={schedule.eta:.4g} rho={rates.rho:.4g}")
    return schedule


def nonconvex_schedule(constants: ProblemConstants, n: int, epsilon: float, b: int = 1,
                       c_A: float = 1.0, c_D: float = 1.0, c_T: float = 1.0) -> Schedule:
    """eta = b^(3/5) min{n^(-2/5), eps^(2/5)}, h = sqrt(b/eta) and the O(.) sizes with
    their hidden constants exposed as c_A, c_D, c_T"""
    if not 0 < epsilon < 1:
        raise ScheduleError(f"epsilon must lie in (0, 1), got {epsilon}")
    if n < 1 or b < 1:
        raise ScheduleError("nonconvex schedule needs n >= 1 and b >= 1")
    if min(c_A, c_D, c_T) <= 0:
        raise ScheduleError("c_A, c_D and c_T must be positive")

    provenance: Dict[str, str] = {"h": COROLLARY, "K": COROLLARY, "S": COROLLARY,
                                  "b": OVERRIDE if b != 1 else DEFAULTED}
    by_n, by_eps = n ** -0.4, epsilon ** 0.4
    eta = b ** 0.6 * min(by_n, by_eps)
    provenance["eta"] = f"{COROLLARY}:{'n' if by_n <= by_eps else 'epsilon'}"
    A = _capped(c_A * b / eta, n, "A", provenance)
    D = _capped(c_D / epsilon, n, "D", provenance)
    K = _ceil(math.sqrt(b) / eta ** 1.5)
    T = _ceil(c_T / (epsilon * eta))
    schedule = Schedule(
        mode="nonconvex", A=A, D=D, K=K, S=_ceil(T / K), b=b, eta=eta,
        h=math.sqrt(b / eta), epsilon=epsilon, c_A=c_A, c_D=c_D, c_T=c_T,
        provenance=provenance,
    )
    _warn_estimated(schedule, constants, ["B_G", "L_F", "L_f", "H1", "H2"])
    logger.info(f"non-convex schedule: A={A} D={D} K={K} S={schedule.S} eta={eta:.4g}")
    return schedule


def apply_overrides(schedule: Schedule, overrides: Dict[str, Any]) -> Schedule:
    """Set user-supplied fields and mark them as overrides"""
    names = {f.name for f in fields(schedule)} - {"provenance", "warnings"}
    for key, value in overrides.items():
        if key not in names:
            raise ScheduleError(f"unknown schedule field '{key}'")
        if key == "sampling_mode":
            value = SamplingMode(value)
        setattr(schedule, key, value)
        schedule.provenance[key] = OVERRIDE
    return schedule


def validate_schedule(schedule: Schedule, n: int) -> Schedule:
    """Reject schedules the solver cannot run; zero step is accepted with a warning"""
    if schedule.mode not in MODES:
        raise ScheduleError(f"unknown schedule mode '{schedule.mode}'")
    for name in ("A", "D", "b"):
        value = getattr(schedule, name)
        if not isinstance(value, int) or value < 1:
            raise ScheduleError(f"{name} must be a positive integer, got {value!r}")
    for name in ("K", "S"):
        value = getattr(schedule, name)
        if not isinstance(value, int) or value < 0:
            raise ScheduleError(f"{name} must be a nonnegative integer, got {value!r}")
    if schedule.K * schedule.S == 0:
        raise ScheduleError("K*S must be positive")
    if schedule.eta < 0 or not math.isfinite(schedule.eta):
        raise ScheduleError(f"eta must be finite and >= 0, got {schedule.eta}")
    if schedule.eta == 0:
        schedule.warn("eta = 0: iterates will not move")
    if schedule.h <= 0:
        raise ScheduleError(f"h must be positive, got {schedule.h}")
    if schedule.epsilon <= 0:
        raise ScheduleError(f"epsilon must be positive, got {schedule.epsilon}")
    bounded = (schedule.full_cover
               or schedule.sampling_mode != SamplingMode.WITH_REPLACEMENT)
    if bounded:
        for name in ("A", "D"):
            if getattr(schedule, name) > n:
                raise ScheduleError(f"{name}={getattr(schedule, name)} exceeds n={n}")
    if schedule.enumerate_pairs and schedule.b != n * n:
        raise ScheduleError(f"enumerate_pairs needs b = n^2 = {n * n}, got {schedule.b}")
    return schedule


def derive_schedule(problem: CompositionProblem, epsilon: float, b: int = 1,
                    mode: str = "auto", x0: Optional[np.ndarray] = None,
                    c_A: float = 1.0, c_D: float = 1.0, c_T: float = 1.0,
                    x0_gap: Optional[float] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> Schedule:
    """Corollary schedule for a problem, with overrides applied and validated

    mode "auto" picks the convex family when mu > 0. Without an explicit
    x0_gap the convex epoch count uses ||x0 - x*||^2 when the optimum is known.
    """
    constants = problem.constants
    if mode == "auto":
        mode = "convex" if constants.mu > 0 else "nonconvex"
    if mode == "convex":
        if x0_gap is None and problem.x_star is not None:
            start = np.zeros(problem.dim_x) if x0 is None else problem.check_x(x0)
            gap = float(np.sum((start - problem.x_star) ** 2))
            x0_gap = gap if gap > 0 else None
        schedule = convex_schedule(constants, problem.n, epsilon, b=b, x0_gap=x0_gap)
    elif mode == "nonconvex":
        schedule = nonconvex_schedule(constants, problem.n, epsilon, b=b,
                                      c_A=c_A, c_D=c_D, c_T=c_T)
    else:
        raise ScheduleError(f"unknown schedule mode '{mode}'")
    if overrides:
        apply_overrides(schedule, overrides)
    return validate_schedule(schedule, problem.n)
