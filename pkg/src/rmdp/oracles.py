"""Brute-force reference computations for the test suite.

Nothing in the solver stack imports this module. The code here is
deliberately slow and avoids the closed forms it is used to check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from . import uncertainty as unc
from .core import Policy, RmdpInstance, average_return


@dataclass(frozen=True)
class OracleBudget:
    grid_step: float = 1e-3
    window: int = 4
    max_enumeration: int = 200_000
    trajectory_length: int = 1_000_000
    tolerance: float = 1e-9

    def __post_init__(self) -> None:
        if min(self.grid_step, self.window, self.max_enumeration, self.trajectory_length, self.tolerance) <= 0:
            raise ValueError("oracle budget entries must be positive")


# ---------------------------------------------------------------------------
# inner minimization


def _member(descriptor, nominal: np.ndarray, pts: np.ndarray, tol: float) -> np.ndarray:
    ok = np.all(pts >= -tol, axis=1) & (np.abs(pts.sum(axis=1) - 1.0) <= tol)
    if isinstance(descriptor, unc.Box):
        ok &= np.all(pts >= descriptor.low - tol, axis=1) & np.all(pts <= descriptor.up + tol, axis=1)
    elif isinstance(descriptor, unc.Ell2):
        ok &= np.sqrt(((pts - nominal) ** 2).sum(axis=1)) <= descriptor.alpha + tol
        if descriptor.support is not None:
            ok &= np.all(np.abs(pts[:, ~descriptor.support]) <= tol, axis=1)
    elif isinstance(descriptor, unc.Polytope):
        lhs = np.vstack([descriptor.vertices.T, np.ones(len(descriptor.vertices))])
        for i in np.flatnonzero(ok):
            ok[i] = nnls(lhs, np.append(pts[i], 1.0))[1] <= tol
    else:
        raise TypeError(f"no lattice membership for {type(descriptor).__name__}")
    return ok


def _zero_sum_lattice(n: int, K: int) -> np.ndarray:
    axis = np.arange(-K, K + 1)
    head = np.stack(np.meshgrid(*([axis] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
    last = -head.sum(axis=1)
    keep = np.abs(last) <= K
    return np.hstack([head[keep], last[keep, None]]).astype(float)


def _retract(descriptor, nominal: np.ndarray, pts: np.ndarray, tol: float, steps: int = 30) -> np.ndarray:
    # pull each point towards the nominal until feasible, by bisection on membership alone
    lo = np.zeros(len(pts))
    hi = np.ones(len(pts))
    inside = _member(descriptor, nominal, pts, tol)
    lo[inside] = 1.0
    todo = ~inside
    d = pts[todo] - nominal
    a, b = lo[todo], hi[todo]
    for _ in range(steps):
        mid = (a + b) / 2
        ok = _member(descriptor, nominal, nominal + mid[:, None] * d, tol)
        a = np.where(ok, mid, a)
        b = np.where(ok, b, mid)
    out = pts.copy()
    out[todo] = nominal + a[:, None] * d
    return out


def simplex_grid_min(descriptor, nominal, v, step: float = 1e-3, budget: OracleBudget = OracleBudget()) -> float:
    """Smallest ``p @ v`` over lattice points of the feasible set.

    A window of lattice moves around the nominal (always feasible) is
    searched at a coarse spacing and re-centred on the best point until it
    stops improving; the spacing is then halved down to ``step``, followed by
    a local refinement pass to ``step / 64`` around the incumbent. On curved
    sets, infeasible lattice points are first pulled back onto the boundary
    along the ray from the nominal. Every
    reported value belongs to a feasible point, so the result never
    undercuts the true minimum.
    """
    nominal = np.asarray(nominal, dtype=float)
    v = np.asarray(v, dtype=float)
    if isinstance(descriptor, unc.Singleton):
        return float(nominal @ v)
    if isinstance(descriptor, (unc.AlphaBeta, unc.Piecewise)):
        return _parametric_grid_min(descriptor, v, step)
    if isinstance(descriptor, unc.Box):
        free = descriptor.up > 0
        extent = float(np.max(descriptor.up - descriptor.low))
    elif isinstance(descriptor, unc.Ell2):
        free = np.ones(nominal.size, bool) if descriptor.support is None else descriptor.support
        extent = descriptor.alpha
    elif isinstance(descriptor, unc.Polytope):
        free = np.any(descriptor.vertices > 0, axis=0)
        extent = float(np.max(np.abs(descriptor.vertices - nominal)))
    else:
        raise TypeError(f"unsupported descriptor {type(descriptor).__name__}")
    idx = np.flatnonzero(free)
    if idx.size <= 1 or extent == 0:
        return float(nominal @ v)
    # lattice moves alone stall against a curved boundary
    curved = isinstance(descriptor, unc.Ell2)
    # retraction makes every move land on the boundary, so a narrow window suffices
    K = min(budget.window, 2) if curved else budget.window
    moves = _zero_sum_lattice(idx.size, K)
    h = extent / K
    center = nominal.copy()
    best = float(center @ v)
    while True:
        # move at this spacing until the window holds nothing better
        for _ in range(100):
            pts = np.repeat(center[None], len(moves), axis=0)
            pts[:, idx] += h * moves
            if curved:
                pts = _retract(descriptor, nominal, pts, budget.tolerance * 1e-3)
            ok = _member(descriptor, nominal, pts, budget.tolerance * 1e-3)
            vals = np.where(ok, pts @ v, np.inf)
            i = int(np.argmin(vals))
            if not vals[i] < best:
                break
            best, center = float(vals[i]), pts[i]
        if h <= step / 64:
            return best
        h /= 2


def _parametric_grid_min(descriptor, v: np.ndarray, step: float) -> float:
    alphas = np.linspace(0.0, 1.0, int(math.ceil(1.0 / step)) + 1)
    best = np.inf
    for frac in np.linspace(0.0, 1.0, 11):
        betas = frac * np.asarray(descriptor.boundary(alphas))
        vals = (1 - alphas) * v[descriptor.stay] + betas * v[descriptor.bad] + (alphas - betas) * v[descriptor.good]
        best = min(best, float(vals.min()))
    return best


def box_vertices(low, up, tol: float = 1e-12) -> np.ndarray:
    """All vertices of ``{low <= p <= up, sum(p) = 1}`` by exhaustive enumeration."""
    low = np.asarray(low, dtype=float)
    up = np.asarray(up, dtype=float)
    n = low.size
    out = []
    for free in range(n):
        others = [i for i in range(n) if i != free]
        for bits in itertools.product((0, 1), repeat=n - 1):
            p = np.empty(n)
            for i, b in zip(others, bits):
                p[i] = up[i] if b else low[i]
            p[free] = 1.0 - p[others].sum()
            if low[free] - tol <= p[free] <= up[free] + tol:
                out.append(p)
    return np.unique(np.round(np.array(out), 15), axis=0)


def vertex_enumeration_min(descriptor, nominal, v) -> float:
    """Exact minimum for polyhedral sets by checking every vertex."""
    v = np.asarray(v, dtype=float)
    if isinstance(descriptor, unc.Box):
        verts = box_vertices(descriptor.low, descriptor.up)
    elif isinstance(descriptor, unc.Polytope):
        verts = descriptor.vertices
    elif isinstance(descriptor, unc.Singleton):
        verts = np.asarray(nominal, dtype=float)[None]
    else:
        raise TypeError(f"{type(descriptor).__name__} is not polyhedral")
    return float(min(float(p @ v) for p in verts))


# ---------------------------------------------------------------------------
# policy evaluation


def discounted_power_series(instance: RmdpInstance, policy: Policy, kernel, gamma: float, tol: float = 1e-10):
    """Truncated ``sum_t gamma^t P^t r`` with enough terms for ``tol``."""
    P = np.asarray(kernel, dtype=float)
    S = instance.num_states
    P_pi = np.zeros((S, S))
    r_pi = np.zeros(S)
    for s in range(S):
        for a in range(instance.num_actions):
            w = policy.probs[s, a]
            P_pi[s] += w * P[s, a]
            r_pi[s] += w * float(P[s, a] @ instance.rewards[s, a])
    horizon = math.ceil(math.log(tol) / math.log(gamma)) if gamma > 0 else 1
    total = np.zeros(S)
    term = r_pi.copy()
    for _ in range(horizon + 1):
        total += term
        term = gamma * (P_pi @ term)
    return total


def trajectory_average(instance: RmdpInstance, policy: Policy, kernel, horizon: int, seed: int = 0) -> float:
    """Empirical average reward of one simulated trajectory from the initial distribution."""
    if horizon < 1:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(seed)
    P = np.asarray(kernel, dtype=float)
    cum_kernel = np.cumsum(P, axis=2)
    cum_policy = np.cumsum(policy.probs, axis=1)
    u = rng.random((horizon, 2))
    S = instance.num_states
    s = min(int(np.searchsorted(np.cumsum(instance.initial_distribution), rng.random(), side="right")), S - 1)
    total = 0.0
    rewards = instance.rewards
    for t in range(horizon):
        a = min(int(np.searchsorted(cum_policy[s], u[t, 0], side="right")), instance.num_actions - 1)
        nxt = min(int(np.searchsorted(cum_kernel[s, a], u[t, 1], side="right")), S - 1)
        total += rewards[s, a, nxt]
        s = nxt
    return total / horizon


# ---------------------------------------------------------------------------
# exhaustive average-optimal solve for tiny polytope instances


@dataclass(frozen=True)
class ExhaustiveResult:
    gain: float
    policy: tuple[int, ...]
    policy_values: dict


def _pair_vertices(instance: RmdpInstance, s: int, a: int) -> np.ndarray:
    desc = instance.uncertainty[s][a]
    if isinstance(desc, unc.Polytope):
        return desc.vertices
    if isinstance(desc, unc.Singleton):
        return instance.nominal_kernel[s, a][None]
    raise TypeError("exhaustive oracle needs polytope or singleton pairs")


def exhaustive_avg_optimal(instance: RmdpInstance, max_pairs: int = 8) -> ExhaustiveResult:
    """Max over deterministic policies of the min over vertex kernels of the average return.

    Ties between policies go to the first in lexicographic order.
    """
    S, A = instance.num_states, instance.num_actions
    if S * A > max_pairs:
        raise ValueError(f"exhaustive oracle limited to S*A <= {max_pairs}")
    values = {}
    best_gain, best_policy = -np.inf, None
    for actions in itertools.product(range(A), repeat=S):
        policy = Policy.deterministic(actions, A)
        choices = [_pair_vertices(instance, s, actions[s]) for s in range(S)]
        worst = np.inf
        for picks in itertools.product(*(range(len(c)) for c in choices)):
            kernel = np.array(instance.nominal_kernel)
            for s, i in enumerate(picks):
                kernel[s, actions[s]] = choices[s][i]
            worst = min(worst, average_return(instance, policy, kernel))
        values[actions] = worst
        if worst > best_gain:
            best_gain, best_policy = worst, actions
    return ExhaustiveResult(float(best_gain), best_policy, values)
