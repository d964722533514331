"""
Composition Optimisation Toolkit
Stochastically controlled stochastic gradient for two-level finite-sum
composition problems, with query accounting and verification oracles
"""

from composition.analysis import (
    ConvexRates, NonconvexSequence, complexity_convex, complexity_nonconvex, convex_bound,
    convex_rates, full_anchor_rate, nonconvex_sequence, recursion_satisfaction,
    theorem_bound_nonconvex,
)
from composition.estimator import (
    EpochAnchor, InnerEstimate, anchor_from_batches, build_anchor, estimate_gradient,
    estimate_inner, inner_from_batch, minibatch_gradient,
)
from composition.exceptions import (
    CompositionError, ConfigurationError, DivergenceError, InputError, SamplingError,
    ScheduleError,
)
from composition.ledger import QueryLedger, corollary_epoch_cost, epoch_cost
from composition.problem import (
    CompositionProblem, MeanVarianceProblem, ProblemConstants, ProblemSpec,
    QuadraticCompositionProblem, composite_value, estimate_constants, full_gradient, full_inner,
    make_lcq, make_lcq_reference, make_mean_variance, make_nonconvex_synthetic,
)
from composition.sampling import (
    IndexBatch, ReservoirSampler, SamplingMode, StreamManager, draw_batch, sample,
)
from composition.schedule import Schedule, convex_schedule, nonconvex_schedule, validate_schedule
from composition.solver import RunTrace, run_full_anchor, run_scscg, run_scscg_minibatch
from composition.verify import (
    VarianceReport, double_subset_variance, estimator_bias_enumeration, finite_diff_gradient,
    subset_variance_exact,
)

__version__ = "1.0.0"
