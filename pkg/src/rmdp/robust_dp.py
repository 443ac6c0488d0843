"""Robust Bellman operator and discounted solvers for sa-rectangular RMDPs."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .core import Policy, RmdpInstance, as_policy, evaluate_discounted

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps


class NonConvergenceError(RuntimeError):
    """A solver exhausted its iteration budget above tolerance."""


@dataclass(frozen=True, eq=False)
class SolveReport:
    value: np.ndarray
    policy: Policy
    worst_kernel: np.ndarray
    iterations: int
    residual: float
    gamma: float
    converged: bool = True
    evaluations: int = 0

    def to_json(self) -> dict:
        return {
            "gamma": self.gamma,
            "value": self.value.tolist(),
            "policy": self.policy.actions.tolist(),
            "worst_kernel": self.worst_kernel.tolist(),
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def _targets(instance: RmdpInstance, gamma: float, v: np.ndarray) -> np.ndarray:
    return instance.rewards + gamma * np.asarray(v, dtype=float)[None, None, :]


def robust_q(instance: RmdpInstance, gamma: float, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Worst-case action values ``(S, A)`` at ``v`` and the minimizing kernel."""
    return instance.oracle.solve(_targets(instance, gamma, v))


def bellman_apply(instance: RmdpInstance, gamma: float, v) -> tuple[np.ndarray, Policy, np.ndarray]:
    """One application of the robust Bellman operator.

    ``gamma = 1`` is allowed for undiscounted sweeps. Ties between actions go
    to the lowest index.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    q, kernel = robust_q(instance, gamma, v)
    greedy = np.argmax(q, axis=1)
    return q.max(axis=1), Policy.deterministic(greedy, instance.num_actions), kernel


def _tolerance(tol: float, v: np.ndarray) -> float:
    # near gamma = 1 values are large and rounding alone exceeds tol
    return max(tol, 64 * EPS * float(np.max(np.abs(v), initial=1.0)))


def policy_bellman(instance: RmdpInstance, policy: Policy, gamma: float, v: np.ndarray):
    """Robust Bellman operator for a fixed policy: returns ``(T^pi v, q, kernel)``."""
    q, kernel = robust_q(instance, gamma, v)
    return np.einsum("sa,sa->s", policy.probs, q), q, kernel


def adversarial_policy_iteration(
    instance: RmdpInstance,
    policy,
    gamma: float,
    start_kernel: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iters: int = 500,
    vi_max_iters: int = 1_000_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Worst-case value of a fixed policy and a worst-case stationary kernel.

    The adversary alternates exact evaluation with greedy kernel improvement,
    keeping its current choice on pairs where it is still optimal. If
    successive kernels stop moving while the residual is above ``tol``,
    value iteration on the policy operator finishes the job.
    """
    policy = as_policy(policy, instance.num_actions)
    value, kernel, _, _ = _adversarial(instance, policy, gamma, start_kernel, tol, max_iters, vi_max_iters)
    return value, kernel


def _adversarial(instance, policy, gamma, start_kernel, tol, max_iters, vi_max_iters):
    # returns (value, kernel, evaluations, robust q at value) so callers skip a repeat oracle call
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    kernel = np.array(instance.nominal_kernel if start_kernel is None else start_kernel, dtype=float)
    for it in range(1, max_iters + 1):
        v = evaluate_discounted(instance, policy, kernel, gamma)
        w = _targets(instance, gamma, v)
        q, candidate = instance.oracle.solve(w)
        current = np.einsum("sat,sat->sa", kernel, w)
        keep = current <= q + 4 * EPS * np.maximum(np.abs(q), 1.0)
        candidate[keep] = kernel[keep]
        residual = float(np.max(np.abs(np.einsum("sa,sa->s", policy.probs, q) - v)))
        if residual <= _tolerance(tol, v):
            # the argmin at the converged value pins continuous sets more tightly
            return v, candidate, it, q
        if np.max(np.abs(candidate - kernel)) < 1e-13:
            log.debug("adversary stalled at residual %.3e; switching to value iteration", residual)
            return _policy_value_iteration(instance, policy, gamma, v, tol, vi_max_iters, it)
        kernel = candidate
    raise NonConvergenceError(f"adversarial policy iteration exceeded {max_iters} iterations")


def _policy_value_iteration(instance, policy, gamma, v, tol, max_iters, offset):
    for it in range(max_iters):
        tv, _, kernel = policy_bellman(instance, policy, gamma, v)
        step = float(np.max(np.abs(tv - v)))
        v = tv
        if step <= _tolerance(tol, v) * (1 - gamma) / max(gamma, EPS):
            break
    else:
        raise NonConvergenceError("value iteration on the policy operator did not converge")
    _, q, kernel = policy_bellman(instance, policy, gamma, v)
    return v, kernel, offset + it + 1, q


def strategy_iteration(
    instance: RmdpInstance,
    gamma: float,
    start=None,
    start_kernel: np.ndarray | None = None,
    tol: float = 1e-10,
    max_rounds: int = 1000,
) -> SolveReport:
    """Two-player strategy iteration.

    Each round evaluates the current policy against its worst case, then
    switches each state to a strictly better action if one exists. Stops
    when the policy repeats.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    S, A = instance.num_states, instance.num_actions
    actions = np.zeros(S, dtype=np.int64) if start is None else np.array(as_policy(start, A).actions, dtype=np.int64)
    kernel = start_kernel
    seen: set[bytes] = set()
    evaluations = 0
    converged = True
    rounds = 0
    idx = np.arange(S)
    while True:
        rounds += 1
        policy = Policy.deterministic(actions, A)
        v, kernel, n_eval, q = _adversarial(instance, policy, gamma, kernel, tol, 500, 1_000_000)
        evaluations += n_eval
        seen.add(actions.tobytes())
        best = q.max(axis=1)
        slack = _tolerance(tol, v) * 1e-2
        improve = q[idx, actions] < best - slack
        if not improve.any():
            break
        new = actions.copy()
        new[improve] = np.argmax(q[improve], axis=1)
        if new.tobytes() in seen or rounds >= max_rounds:
            log.warning("strategy iteration cycled or hit max_rounds; keeping the current policy")
            converged = False
            break
        actions = new
    policy = Policy.deterministic(actions, A)
    residual = float(np.max(np.abs(best - v)))
    return SolveReport(v, policy, kernel, rounds, residual, gamma, converged, evaluations)


def robust_value_iteration(
    instance: RmdpInstance, gamma: float, tol: float = 1e-10, max_iters: int = 1_000_000
) -> SolveReport:
    """Iterate the robust Bellman operator from zero to an ``tol``-accurate fixed point."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    threshold = tol * (1 - gamma) / (2 * gamma) if gamma > 0 else np.inf
    v = np.zeros(instance.num_states)
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        tv, _, _ = bellman_apply(instance, gamma, v)
        step = float(np.max(np.abs(tv - v)))
        v = tv
        if step <= threshold:
            converged = True
            break
    tv, greedy, kernel = bellman_apply(instance, gamma, v)
    residual = float(np.max(np.abs(tv - v)))
    return SolveReport(v, greedy, kernel, it, residual, gamma, converged)
