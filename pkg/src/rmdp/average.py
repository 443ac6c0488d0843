"""Average-reward (gain) solvers for sa-rectangular RMDPs.

Three iterative schemes estimate the optimal worst-case gain:

* ``limit-discount``: normalized discount-optimal values along an increasing
  discount schedule, each solved exactly by strategy iteration;
* ``horizon``: undiscounted Bellman sweeps, reported as ``v_t / t``;
* ``discount-schedule``: one Bellman sweep per step of the normalized
  operator ``(1 - g_t) r + g_t v`` along the same kind of schedule.
"""

from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Policy, RmdpInstance, as_policy
from .robust_dp import NonConvergenceError, _adversarial, strategy_iteration

log = logging.getLogger(__name__)

ALGORITHMS = ("limit-discount", "horizon", "discount-schedule")


class ReferenceNotStationary(RuntimeError):
    """The reference gain run did not settle within its stationarity window."""


@dataclass(frozen=True)
class PowerWeights:
    """Weights ``w_t = (t + 1) ** exponent``."""

    exponent: float = 1.0

    def __call__(self, t: int) -> float:
        return float(t + 1) ** self.exponent


@dataclass(frozen=True)
class ScheduleConfig:
    """Discount schedule ``g_t = w_t / w_{t+1}`` derived from increasing weights."""

    weights: PowerWeights = field(default_factory=PowerWeights)

    def gammas(self, num_iters: int) -> np.ndarray:
        w = np.array([self.weights(t) for t in range(num_iters + 1)], dtype=float)
        if np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise ValueError("schedule weights must be positive and strictly increasing")
        g = w[:-1] / w[1:]
        if np.any(np.diff(g) <= 0):
            raise ValueError("schedule discount factors must strictly increase")
        return g


@dataclass(frozen=True, eq=False)
class AvgSolveTrace:
    """Per-iteration record of an average-reward solver.

    Row ``t - 1`` of each array belongs to iteration ``t``. ``values`` holds the
    raw iterates; ``iterates`` their normalization into gain units.
    """

    algorithm: str
    gammas: np.ndarray
    values: np.ndarray
    iterates: np.ndarray
    estimates: np.ndarray
    policies: np.ndarray
    num_actions: int

    @property
    def num_iters(self) -> int:
        return self.estimates.size

    @property
    def final_gain(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def final_estimate(self) -> float:
        return float(self.estimates[-1])

    @property
    def final_policy(self) -> Policy:
        return Policy.deterministic(self.policies[-1], self.num_actions)

    def errors(self, reference: float) -> np.ndarray:
        return np.abs(reference - self.estimates)

    def prefix(self, num_iters: int) -> "AvgSolveTrace":
        n = num_iters
        return AvgSolveTrace(
            self.algorithm,
            self.gammas[:n],
            self.values[:n],
            self.iterates[:n],
            self.estimates[:n],
            self.policies[:n],
            self.num_actions,
        )

    def to_csv(self, reference: float | None = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["algorithm", "iteration", "gamma_t", "estimate", "error_vs_reference"])
        errs = self.errors(reference) if reference is not None else [None] * self.num_iters
        for t in range(self.num_iters):
            err = "" if errs[t] is None else repr(float(errs[t]))
            writer.writerow([self.algorithm, t + 1, repr(float(self.gammas[t])), repr(float(self.estimates[t])), err])
        return buf.getvalue()


def _finish(algorithm, instance, gammas, values, iterates, policies) -> AvgSolveTrace:
    estimates = iterates @ instance.initial_distribution
    for arr in (gammas, values, iterates, estimates, policies):
        arr.setflags(write=False)
    return AvgSolveTrace(algorithm, gammas, values, iterates, estimates, policies, instance.num_actions)


def algo1_limit_discounted(
    instance: RmdpInstance,
    num_iters: int,
    inner_tol: float | None = None,
    schedule: ScheduleConfig | None = None,
) -> AvgSolveTrace:
    """Normalized discount-optimal values ``(1 - g_t) v*_{g_t}``.

    Each discounted problem is solved by strategy iteration warm-started at
    the previous policy and worst-case kernel. Unless ``inner_tol`` is given,
    the inner tolerance is ``min(1e-8, (1 - g_t) 1e-4)``.
    """
    if num_iters < 1:
        raise ValueError("num_iters must be at least 1")
    gammas = (schedule or ScheduleConfig()).gammas(num_iters)
    S = instance.num_states
    values = np.empty((num_iters, S))
    policies = np.empty((num_iters, S), dtype=np.int64)
    policy = kernel = None
    for t, g in enumerate(gammas):
        tol = min(1e-8, (1 - g) * 1e-4) if inner_tol is None else inner_tol
        try:
            report = strategy_iteration(instance, g, start=policy, start_kernel=kernel, tol=tol)
        except NonConvergenceError as exc:
            raise NonConvergenceError(f"limit-discount iteration {t + 1} (gamma={g!r}): {exc}") from exc
        if not report.converged and report.residual > 100 * tol:
            raise NonConvergenceError(
                f"limit-discount iteration {t + 1} (gamma={g!r}): residual {report.residual:.3e}"
            )
        policy, kernel = report.policy, report.worst_kernel
        values[t] = report.value
        policies[t] = report.policy.actions
    iterates = (1 - gammas)[:, None] * values
    return _finish("limit-discount", instance, gammas, values, iterates, policies)


def _sweep(instance: RmdpInstance, reward_scale: float, gamma: float, v: np.ndarray):
    q, _ = instance.oracle.solve(reward_scale * instance.rewards + gamma * v[None, None, :])
    return q.max(axis=1), np.argmax(q, axis=1)


def algo2_increasing_horizon(instance: RmdpInstance, num_iters: int) -> AvgSolveTrace:
    """Undiscounted robust Bellman sweeps from zero; the estimate at ``t`` is ``v_t / t``."""
    if num_iters < 1:
        raise ValueError("num_iters must be at least 1")
    S = instance.num_states
    values = np.empty((num_iters, S))
    policies = np.empty((num_iters, S), dtype=np.int64)
    v = np.zeros(S)
    for t in range(num_iters):
        v, policies[t] = _sweep(instance, 1.0, 1.0, v)
        values[t] = v
    horizons = np.arange(1, num_iters + 1, dtype=float)
    iterates = values / horizons[:, None]
    return _finish("horizon", instance, np.ones(num_iters), values, iterates, policies)


def algo3_increasing_discount(
    instance: RmdpInstance, schedule: ScheduleConfig | None = None, num_iters: int = 1000
) -> AvgSolveTrace:
    """Sweeps of the normalized operator ``max_a min_p p @ ((1 - g_t) r + g_t v)``."""
    if num_iters < 1:
        raise ValueError("num_iters must be at least 1")
    gammas = (schedule or ScheduleConfig()).gammas(num_iters)
    S = instance.num_states
    values = np.empty((num_iters, S))
    policies = np.empty((num_iters, S), dtype=np.int64)
    v = np.zeros(S)
    for t, g in enumerate(gammas):
        v, policies[t] = _sweep(instance, 1.0 - g, g, v)
        values[t] = v
    return _finish("discount-schedule", instance, gammas, values, values.copy(), policies)


def run_algorithm(instance: RmdpInstance, algorithm: str, num_iters: int, schedule: ScheduleConfig | None = None):
    if algorithm == "limit-discount":
        return algo1_limit_discounted(instance, num_iters, schedule=schedule)
    if algorithm == "horizon":
        return algo2_increasing_horizon(instance, num_iters)
    if algorithm == "discount-schedule":
        return algo3_increasing_discount(instance, schedule, num_iters)
    raise ValueError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}")


def extract_average_policy(trace: AvgSolveTrace) -> Policy:
    """Policy recorded at the last iteration of a trace."""
    return trace.final_policy


def check_stationary(trace: AvgSolveTrace, window: int = 50, tol: float = 1e-5, statewise: bool = False) -> float:
    """Spread of the last ``window`` iterates; raises ``ReferenceNotStationary`` above ``tol``.

    By default the spread is taken over the reported estimates ``p0 @ g_t``.
    With ``statewise=True`` it is the largest per-state spread instead, which
    is stricter on instances whose transient states converge slowly.
    """
    if not 1 <= window <= trace.num_iters:
        raise ValueError(f"window must lie in [1, {trace.num_iters}], got {window}")
    tail = trace.iterates[-window:] if statewise else trace.estimates[-window:, None]
    spread = float(np.max(tail.max(axis=0) - tail.min(axis=0)))
    if spread > tol:
        raise ReferenceNotStationary(
            f"reference iterates still move by {spread:.3e} over the last {window} iterations (limit {tol:.0e})"
        )
    return spread


def reference_gain(
    instance: RmdpInstance, num_iters: int = 5000, window: int = 50, tol: float = 1e-5, statewise: bool = False
) -> tuple[float, AvgSolveTrace]:
    """``p0 @ g`` from a long limit-discount run, after a stationarity check."""
    trace = algo1_limit_discounted(instance, num_iters)
    check_stationary(trace, window, tol, statewise)
    return trace.final_estimate, trace


@dataclass(frozen=True, eq=False)
class WorstCaseGain:
    """Worst-case gain estimate of a fixed policy with its discount probes."""

    estimate: float
    gammas: np.ndarray
    probes: np.ndarray
    cauchy: bool


def default_probes() -> np.ndarray:
    return 1.0 - 2.0 ** -np.arange(4, 21, dtype=float)


def worst_case_gain(instance: RmdpInstance, policy, gammas: Sequence[float] | None = None) -> WorstCaseGain:
    """Last probe of ``(1 - g) p0 @ v^{pi,U}_g`` along discounts increasing to 1.

    Flags (and warns about) probe sequences whose successive gaps grow.
    """
    policy = as_policy(policy, instance.num_actions)
    gammas = default_probes() if gammas is None else np.asarray(gammas, dtype=float)
    if np.any(np.diff(gammas) <= 0) or gammas[0] <= 0 or gammas[-1] >= 1:
        raise ValueError("probe discounts must increase strictly inside (0, 1)")
    probes = np.empty(gammas.size)
    kernel = None
    for i, g in enumerate(gammas):
        v, kernel, _, _ = _adversarial(instance, policy, g, kernel, 1e-10, 500, 1_000_000)
        probes[i] = (1 - g) * float(instance.initial_distribution @ v)
    gaps = np.abs(np.diff(probes))
    cauchy = bool(np.all(gaps[1:] <= gaps[:-1] + 1e-12)) if gaps.size > 1 else True
    if not cauchy:
        warnings.warn("worst-case gain probes are not contracting; the estimate may be unreliable", RuntimeWarning)
    probes.setflags(write=False)
    return WorstCaseGain(float(probes[-1]), gammas, probes, cauchy)
