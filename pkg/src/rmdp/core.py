"""Instances, policies and exact evaluation of fixed (policy, kernel) pairs.

Kernels are dense arrays of shape ``(S, A, S)`` where ``kernel[s, a]`` is the
distribution over next states after playing ``a`` in ``s``. Rewards share that
shape and are collected on the transition ``(s, a, s')``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import uncertainty as unc

ROW_SUM_TOL = 1e-12
# Entries at or below this are structural zeros for the reachability graph.
STRUCTURAL_ZERO = 1e-14


def _check_distribution(probs: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(probs)):
        raise ValueError(f"{what}: non-finite probabilities")
    if np.any(probs < 0):
        raise ValueError(f"{what}: negative probabilities")
    total = probs.sum(axis=-1)
    if np.any(np.abs(total - 1.0) > ROW_SUM_TOL):
        worst = float(np.max(np.abs(total - 1.0)))
        raise ValueError(f"{what}: rows must sum to 1 (off by {worst:.3e})")


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector with an explicit support mask.

    Coordinates outside ``support_mask`` must carry exactly zero mass. When no
    mask is given, the support is every coordinate with positive probability.
    """

    probs: np.ndarray
    support_mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 1:
            raise ValueError("Distribution needs a 1-D probability vector")
        _check_distribution(probs, "Distribution")
        if self.support_mask is None:
            mask = probs > 0
        else:
            mask = np.array(self.support_mask, dtype=bool)
            if mask.shape != probs.shape:
                raise ValueError("support_mask must match probs in length")
            if np.any(probs[~mask] != 0):
                raise ValueError("Distribution puts mass outside its support mask")
        probs.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "support_mask", mask)

    def __len__(self) -> int:
        return self.probs.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)


@dataclass(frozen=True, eq=False)
class Policy:
    """Stationary policy stored as a row-stochastic ``(S, A)`` matrix.

    Deterministic policies also keep their action vector; use
    :meth:`deterministic` or :meth:`randomized` to build one.
    """

    probs: np.ndarray
    actions: np.ndarray | None = None

    @classmethod
    def deterministic(cls, actions: Sequence[int], num_actions: int) -> "Policy":
        acts = np.asarray(actions, dtype=np.int64)
        if acts.ndim != 1:
            raise ValueError("actions must be a 1-D sequence")
        if np.any(acts < 0) or np.any(acts >= num_actions):
            raise ValueError(f"actions must lie in [0, {num_actions})")
        probs = np.zeros((acts.size, num_actions))
        probs[np.arange(acts.size), acts] = 1.0
        acts = acts.copy()
        acts.setflags(write=False)
        probs.setflags(write=False)
        return cls(probs, acts)

    @classmethod
    def randomized(cls, probs: Sequence[Sequence[float]]) -> "Policy":
        mat = np.array(probs, dtype=float)
        if mat.ndim != 2:
            raise ValueError("randomized policy needs an (S, A) matrix")
        _check_distribution(mat, "Policy")
        mat.setflags(write=False)
        return cls(mat, None)

    @property
    def kind(self) -> str:
        return "deterministic" if self.actions is not None else "randomized"

    @property
    def num_states(self) -> int:
        return self.probs.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Policy):
            return NotImplemented
        return self.probs.shape == other.probs.shape and bool(np.array_equal(self.probs, other.probs))

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())

    def __repr__(self) -> str:
        if self.actions is not None:
            return f"Policy(actions={self.actions.tolist()})"
        return f"Policy(probs={self.probs.tolist()})"


def as_policy(policy: Policy | Sequence[int], num_actions: int) -> Policy:
    if isinstance(policy, Policy):
        return policy
    return Policy.deterministic(policy, num_actions)


@dataclass(frozen=True, eq=False)
class RmdpInstance:
    """A finite sa-rectangular robust MDP.

    ``uncertainty`` is an ``S x A`` nested tuple of descriptors from
    :mod:`rmdp.uncertainty`; ``None`` means every pair is a singleton.
    """

    rewards: np.ndarray
    nominal_kernel: np.ndarray
    initial_distribution: np.ndarray
    uncertainty: tuple[tuple[Any, ...], ...] | None = None
    name: str = "instance"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        kernel = np.array(self.nominal_kernel, dtype=float)
        if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[2]:
            raise ValueError("nominal_kernel must have shape (S, A, S)")
        S, A, _ = kernel.shape
        if S < 1 or A < 1:
            raise ValueError("need at least one state and one action")
        _check_distribution(kernel, "nominal_kernel")
        rewards = np.array(self.rewards, dtype=float)
        if rewards.shape == (S, A):
            rewards = np.repeat(rewards[:, :, None], S, axis=2)
        if rewards.shape != (S, A, S):
            raise ValueError(f"rewards must have shape {(S, A, S)} or {(S, A)}")
        if not np.all(np.isfinite(rewards)):
            raise ValueError("rewards must be finite")
        p0 = np.array(self.initial_distribution, dtype=float)
        if p0.shape != (S,):
            raise ValueError(f"initial_distribution must have length {S}")
        _check_distribution(p0, "initial_distribution")

        if self.uncertainty is None:
            descs = tuple(tuple(unc.Singleton() for _ in range(A)) for _ in range(S))
        else:
            descs = tuple(tuple(row) for row in self.uncertainty)
            if len(descs) != S or any(len(row) != A for row in descs):
                raise ValueError("uncertainty must be an S x A table of descriptors")
        for s in range(S):
            for a in range(A):
                try:
                    descs[s][a].validate(kernel[s, a])
                except ValueError as exc:
                    raise ValueError(f"uncertainty at (s={s}, a={a}): {exc}") from exc

        for arr in (kernel, rewards, p0):
            arr.setflags(write=False)
        object.__setattr__(self, "nominal_kernel", kernel)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "initial_distribution", p0)
        object.__setattr__(self, "uncertainty", descs)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def num_states(self) -> int:
        return self.nominal_kernel.shape[0]

    @property
    def num_actions(self) -> int:
        return self.nominal_kernel.shape[1]

    @cached_property
    def oracle(self) -> unc.BatchOracle:
        """Vectorized worst-case solver over every (s, a) pair."""
        return unc.BatchOracle(self.uncertainty, self.nominal_kernel)

    def with_uncertainty(self, uncertainty, name: str | None = None) -> "RmdpInstance":
        return RmdpInstance(
            self.rewards,
            self.nominal_kernel,
            self.initial_distribution,
            uncertainty,
            name or self.name,
            self.metadata,
        )

    # serialization -------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "rewards": self.rewards.tolist(),
            "nominal_kernel": self.nominal_kernel.tolist(),
            "initial_distribution": self.initial_distribution.tolist(),
            "uncertainty": [[d.to_json() for d in row] for row in self.uncertainty],
            "name": self.name,
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RmdpInstance":
        for key in ("num_states", "num_actions", "rewards", "nominal_kernel", "initial_distribution"):
            if key not in doc:
                raise ValueError(f"instance document is missing '{key}'")
        kernel = np.asarray(doc["nominal_kernel"], dtype=float)
        S, A = int(doc["num_states"]), int(doc["num_actions"])
        if kernel.shape != (S, A, S):
            raise ValueError(f"nominal_kernel shape {kernel.shape} does not match num_states/num_actions")
        spec = doc.get("uncertainty", {"kind": "singleton"})
        if isinstance(spec, dict):
            descs = [
                [unc.apply_support_mask(unc.descriptor_from_json(spec, kernel[s, a]), kernel[s, a]) for a in range(A)]
                for s in range(S)
            ]
        else:
            descs = [[unc.descriptor_from_json(spec[s][a], kernel[s, a]) for a in range(A)] for s in range(S)]
        return cls(
            doc["rewards"],
            kernel,
            doc["initial_distribution"],
            descs,
            doc.get("name", "instance"),
            doc.get("metadata", {}),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "RmdpInstance":
        return cls.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# evaluation of a fixed pair


def _kernel_array(instance: RmdpInstance, kernel) -> np.ndarray:
    if kernel is None:
        return instance.nominal_kernel
    arr = np.asarray(kernel, dtype=float)
    if arr.shape != instance.nominal_kernel.shape:
        raise ValueError(f"kernel must have shape {instance.nominal_kernel.shape}")
    return arr


def policy_chain(instance: RmdpInstance, policy, kernel=None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(P_pi, r_pi)``: the induced state chain and expected one-step rewards."""
    pol = as_policy(policy, instance.num_actions)
    P = _kernel_array(instance, kernel)
    if pol.actions is not None:
        idx = np.arange(instance.num_states)
        rows = P[idx, pol.actions]
        return rows, np.einsum("st,st->s", rows, instance.rewards[idx, pol.actions])
    P_pi = np.einsum("sa,sat->st", pol.probs, P)
    r_pi = np.einsum("sa,sat,sat->s", pol.probs, P, instance.rewards)
    return P_pi, r_pi


def evaluate_discounted(instance: RmdpInstance, policy, kernel=None, gamma: float = 0.9) -> np.ndarray:
    """Discounted value of ``policy`` under a fixed ``kernel`` (nominal if None)."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    P_pi, r_pi = policy_chain(instance, policy, kernel)
    return np.linalg.solve(np.eye(instance.num_states) - gamma * P_pi, r_pi)


def chain_gain(P: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Long-run average reward ``P* r`` of a Markov chain, by class decomposition.

    Closed strongly connected components are the recurrent classes; each gets
    the stationary average of ``r``, and transient states mix those through
    their absorption probabilities.
    """
    S = P.shape[0]
    graph = (P > STRUCTURAL_ZERO).astype(np.int8)
    n_comp, labels = connected_components(graph, directed=True, connection="strong")
    gain = np.zeros(S)
    recurrent = np.zeros(S, dtype=bool)
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.ones(S, dtype=bool)
        outside[members] = False
        if graph[np.ix_(members, outside)].any():
            continue
        recurrent[members] = True
        sub = P[np.ix_(members, members)]
        sub = sub / sub.sum(axis=1, keepdims=True)
        n = members.size
        # mu (P - I) = 0 with one balance equation swapped for normalization
        system = (sub - np.eye(n)).T
        system[-1, :] = 1.0
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        mu = np.linalg.solve(system, rhs)
        gain[members] = mu @ r[members]
    transient = ~recurrent
    if transient.any():
        T = np.flatnonzero(transient)
        R = np.flatnonzero(recurrent)
        lhs = np.eye(T.size) - P[np.ix_(T, T)]
        gain[T] = np.linalg.solve(lhs, P[np.ix_(T, R)] @ gain[R])
    return gain


def evaluate_average(instance: RmdpInstance, policy, kernel=None) -> np.ndarray:
    """Per-state gain of ``policy`` under a fixed ``kernel`` (nominal if None)."""
    P_pi, r_pi = policy_chain(instance, policy, kernel)
    return chain_gain(P_pi, r_pi)


def discounted_return(instance: RmdpInstance, policy, kernel=None, gamma: float = 0.9) -> float:
    return float(instance.initial_distribution @ evaluate_discounted(instance, policy, kernel, gamma))


def average_return(instance: RmdpInstance, policy, kernel=None) -> float:
    return float(instance.initial_distribution @ evaluate_average(instance, policy, kernel))
