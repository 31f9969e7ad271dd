"""Natural-gradient descent driven by pluggable metric engines.

Each iteration solves ``H v = -g / learning_rate`` where ``g`` is the cost
gradient and ``H`` is the local Hessian produced by the configured metric
engine at the current iterate (re-evaluated every iteration, with the
negative gradient passed as the direction hint for direction-dependent
metrics).  ``H`` is spectrum-shifted to a damping floor before
factorization, and an optional Armijo backtracking line search scales the
step.  Non-descent directions fall back to a plain gradient step for that
iteration rather than raising.

``optimize`` never lets numerical failures escape: they terminate the run
with ``status = "numeric_failure"`` on the returned :class:`Trace`.
Termination statuses are checked in the order numeric_failure,
converged_grad, converged_cost, max_iters.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import NatgradError, NumericError
from .families import Family
from .metric import MetricEngine, LocalHessian, resolve_metric_engine, spd_project
from .numdiff import central_hessian
from .similarity import Similarity

__all__ = [
    "LineSearchConfig",
    "OptimizerConfig",
    "StepRecord",
    "Trace",
    "Objective",
    "make_objective",
    "natural_gradient_step",
    "newton_step",
    "backtracking_line_search",
    "optimize",
]

TRACE_CSV_HEADER = "iter,cost,grad_norm,step_norm,damping,time_s"
ALPHA_FLOOR = 1e-8


@dataclass(frozen=True)
class LineSearchConfig:
    """Armijo backtracking: accept the largest ``alpha`` in the shrink
    sequence with ``cost(theta + alpha v) <= cost(theta) + c1 alpha g.v``."""

    c1: float = 1e-4
    shrink: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.c1 < 1.0:
            raise ValueError(f"c1 must be in (0, 1), got {self.c1}")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError(f"shrink must be in (0, 1), got {self.shrink}")


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings for :func:`optimize`.

    ``learning_rate`` is the trust-region weight: the unscaled step is
    ``-(1/learning_rate) H^-1 g``.  ``line_search=None`` disables
    backtracking (full steps).  ``damping=None`` uses the scale-aware
    default floor.
    """

    learning_rate: float = 1.0
    max_iters: int = 100
    grad_tol: float = 1e-8
    cost_tol: float = 1e-14
    line_search: Optional[LineSearchConfig] = field(default_factory=LineSearchConfig)
    metric: str = "fisher"
    damping: Optional[float] = None

    def __post_init__(self):
        if not self.learning_rate > 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.grad_tol > 0.0:
            raise ValueError(f"grad_tol must be positive, got {self.grad_tol}")
        if not self.cost_tol > 0.0:
            raise ValueError(f"cost_tol must be positive, got {self.cost_tol}")
        if self.damping is not None and not self.damping > 0.0:
            raise ValueError(f"damping must be positive, got {self.damping}")


@dataclass(frozen=True)
class StepRecord:
    """One optimizer iteration: state when entering it, step taken from it.

    ``damping`` is the diagonal shift added to the metric this iteration
    and ``fallback`` marks plain-gradient rescue steps; terminal records
    have ``step_norm == 0``.
    """

    iter: int
    cost: float
    grad_norm: float
    step_norm: float
    damping: float
    time_s: float
    fallback: bool = False


@dataclass(frozen=True)
class Trace:
    """Full optimization history plus the termination status."""

    records: tuple[StepRecord, ...]
    status: str

    def __post_init__(self):
        valid = ("converged_grad", "converged_cost", "max_iters", "numeric_failure")
        if self.status not in valid:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def final_cost(self) -> float:
        return self.records[-1].cost if self.records else float("nan")

    @property
    def iterations(self) -> int:
        return self.records[-1].iter if self.records else 0

    def csv_text(self) -> str:
        out = io.StringIO()
        out.write(TRACE_CSV_HEADER + "\n")
        for r in self.records:
            out.write(
                f"{r.iter},{r.cost!r},{r.grad_norm!r},{r.step_norm!r},{r.damping!r},{r.time_s!r}\n"
            )
        return out.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.csv_text())


@dataclass(frozen=True)
class Objective:
    """A differentiable scalar cost: ``value(theta)`` and ``gradient(theta)``."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]


def make_objective(family: Family, sim: Similarity, target) -> Objective:
    """Cost ``theta -> sim(theta, target)`` over one family."""
    return Objective(
        value=lambda theta: sim.evaluate(family, theta, target),
        gradient=lambda theta: sim.grad_theta(family, theta, target),
    )


def _solve_step(hessian: LocalHessian, grad: np.ndarray, learning_rate: float, damping) -> tuple[np.ndarray, float]:
    """Solve ``H v = -g / learning_rate`` after projecting H to the SPD cone."""
    projected = spd_project(hessian, damping)
    try:
        factor = scipy.linalg.cho_factor(projected.matrix, lower=True)
        v = scipy.linalg.cho_solve(factor, -grad / learning_rate)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"metric factorization failed after damping: {exc}") from exc
    if not np.all(np.isfinite(v)):
        raise NumericError("metric solve produced non-finite step")
    return v, projected.regularization_added


def natural_gradient_step(
    objective: Objective,
    metric_engine: MetricEngine,
    theta,
    learning_rate: float = 1.0,
    damping: Optional[float] = None,
) -> tuple[np.ndarray, dict]:
    """Single preconditioned step ``theta - (1/lr) H^-1 g``.

    Returns the new point and a record dict with the gradient norm, step
    norm, and damping added.
    """
    theta = np.asarray(theta, dtype=float)
    g = np.asarray(objective.gradient(theta), dtype=float)
    H = metric_engine(theta, -g)
    v, added = _solve_step(H, g, learning_rate, damping)
    return theta + v, {
        "grad_norm": float(np.linalg.norm(g)),
        "step_norm": float(np.linalg.norm(v)),
        "damping": added,
    }


def newton_step(
    objective: Objective,
    theta,
    learning_rate: float = 1.0,
    damping: Optional[float] = None,
) -> tuple[np.ndarray, dict]:
    """Newton step using the full finite-difference Hessian of the cost.

    The Hessian is SPD-projected like any other metric, so this is the
    curvature every well-formed metric approaches near a minimum.
    """
    theta = np.asarray(theta, dtype=float)
    H = LocalHessian(central_hessian(objective.value, theta), provenance="finite_difference")
    g = np.asarray(objective.gradient(theta), dtype=float)
    v, added = _solve_step(H, g, learning_rate, damping)
    return theta + v, {
        "grad_norm": float(np.linalg.norm(g)),
        "step_norm": float(np.linalg.norm(v)),
        "damping": added,
    }


def backtracking_line_search(
    value: Callable[[np.ndarray], float],
    theta: np.ndarray,
    direction: np.ndarray,
    grad: np.ndarray,
    cost0: float,
    config: LineSearchConfig,
) -> tuple[float, str]:
    """Armijo backtracking from ``alpha = 1``.

    Returns ``(alpha, flag)`` where flag is empty on success,
    ``"non_descent"`` if the direction was not a descent direction (alpha
    is the floor), or ``"floor"`` if shrinking hit the floor without
    satisfying the Armijo condition.  Candidate points where the cost is
    undefined count as +inf.
    """
    slope = float(grad @ direction)
    if slope >= 0.0:
        return ALPHA_FLOOR, "non_descent"
    alpha = 1.0
    while alpha >= ALPHA_FLOOR:
        try:
            candidate = value(theta + alpha * direction)
        except NatgradError:
            candidate = float("inf")
        if np.isfinite(candidate) and candidate <= cost0 + config.c1 * alpha * slope:
            return alpha, ""
        alpha *= config.shrink
    return ALPHA_FLOOR, "floor"


def optimize(
    family: Family,
    sim: Similarity,
    theta0,
    target,
    config: OptimizerConfig,
    engine: Optional[MetricEngine] = None,
) -> Trace:
    """Run natural-gradient descent; never raises past the returned Trace.

    Configuration errors (unknown metric, invalid starting point) do raise,
    since no meaningful Trace exists yet; anything numeric after that is
    captured in ``Trace.status``.  ``engine`` overrides the metric named in
    the config (used by benchmarks that build bespoke engines).
    """
    if engine is None:
        engine = resolve_metric_engine(config.metric, family)
    objective = make_objective(family, sim, target)
    theta = family.check_point(theta0)
    records: list[StepRecord] = []
    start = time.perf_counter()

    def rec(it, cost, gn, step, damp, fallback=False):
        records.append(
            StepRecord(it, float(cost), float(gn), float(step), float(damp),
                       time.perf_counter() - start, fallback)
        )

    prev_cost = None
    status = "max_iters"
    for it in range(config.max_iters + 1):
        try:
            cost = float(objective.value(theta))
            g = np.asarray(objective.gradient(theta), dtype=float)
        except NatgradError:
            status = "numeric_failure"
            break
        gn = float(np.linalg.norm(g))
        if not (np.isfinite(cost) and np.all(np.isfinite(g))):
            rec(it, cost, gn, 0.0, 0.0)
            status = "numeric_failure"
            break
        if gn < config.grad_tol:
            rec(it, cost, gn, 0.0, 0.0)
            status = "converged_grad"
            break
        if prev_cost is not None and abs(prev_cost - cost) < config.cost_tol:
            rec(it, cost, gn, 0.0, 0.0)
            status = "converged_cost"
            break
        if it == config.max_iters:
            rec(it, cost, gn, 0.0, 0.0)
            status = "max_iters"
            break

        try:
            H = engine(theta, -g)
            v, added = _solve_step(H, g, config.learning_rate, config.damping)
        except NatgradError:
            rec(it, cost, gn, 0.0, 0.0)
            status = "numeric_failure"
            break

        fallback = False
        if float(g @ v) >= 0.0:
            # The projected metric failed to produce descent; take one plain
            # gradient step instead and keep going.
            v = -g / config.learning_rate
            fallback = True

        if config.line_search is not None:
            alpha, flag = backtracking_line_search(
                objective.value, theta, v, g, cost, config.line_search
            )
            if flag:
                try:
                    candidate_cost = objective.value(theta + alpha * v)
                except NatgradError:
                    candidate_cost = float("inf")
                if not np.isfinite(candidate_cost) or candidate_cost > cost:
                    # No acceptable progress along this direction; stay put and
                    # let the cost-change test terminate on the next pass.
                    rec(it, cost, gn, 0.0, added, fallback)
                    prev_cost = cost
                    continue
            step = alpha * v
        else:
            step = v

        theta = theta + step
        rec(it, cost, gn, float(np.linalg.norm(step)), added, fallback)
        prev_cost = cost

    return Trace(records=tuple(records), status=status)
