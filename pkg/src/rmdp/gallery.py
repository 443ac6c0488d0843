"""Benchmark instances, counterexamples and their analytic companions.

Instance ids accepted by :func:`build` and :func:`parse_id`:

========================  ===============================================
``fig2_alpha_beta``       one action; leaving probability ``a`` split as
                          ``(1 - a, b, a - b)`` with ``b <= a (1 - a)``
``no_blackwell_d1d2``     same chain, two actions with interpolated
                          boundaries on even and odd reciprocal nodes
``big_match``             four-state game, adversary parameter ``p``
``smex_no_avg_opt``       three-state game without average-optimal policy
``srect_no_blackwell``    three-state s-rectangular game
``machine``               machine replacement, ``S >= 3``
``forest``                forest management, ``S >= 2``
``healthcare``            treatment planning, ``S >= 2``
``garnet``                random sparse instance ``(S, A, N_b, seed)``
``single_state``          one absorbing state with a constant reward
``polytope_toy``          bundled small instances with vertex sets
========================  ===============================================

The three s-rectangular games are built at a fixed adversary parameter
``p``; their worst cases are explored through the evaluators below, not
through the sa-rectangular solvers.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import uncertainty as unc
from .core import Policy, RmdpInstance, average_return, discounted_return, evaluate_average

# ---------------------------------------------------------------------------
# shared three-state layout: 0 = start, 1 = losing sink (reward -1), 2 = neutral sink


def _leaking_chain(descriptors: list) -> RmdpInstance:
    A = len(descriptors)
    rewards = np.zeros((3, A, 3))
    rewards[1] = -1.0
    kernel = np.zeros((3, A, 3))
    kernel[0, :, 0] = 1.0
    kernel[1, :, 1] = 1.0
    kernel[2, :, 2] = 1.0
    table = [descriptors, [unc.Singleton()] * A, [unc.Singleton()] * A]
    return RmdpInstance(rewards, kernel, [1.0, 0.0, 0.0], table)


def fig2_alpha_beta() -> RmdpInstance:
    inst = _leaking_chain([unc.AlphaBeta()])
    return RmdpInstance(
        inst.rewards, inst.nominal_kernel, inst.initial_distribution, inst.uncertainty, "fig2_alpha_beta"
    )


def no_blackwell_d1d2(k_trunc: int = 64) -> RmdpInstance:
    inst = _leaking_chain([unc.Piecewise(parity="even", k_trunc=k_trunc), unc.Piecewise(parity="odd", k_trunc=k_trunc)])
    return RmdpInstance(
        inst.rewards,
        inst.nominal_kernel,
        inst.initial_distribution,
        inst.uncertainty,
        "no_blackwell_d1d2",
        {"k_trunc": k_trunc},
    )


def fig2_worst_alpha(gamma: float) -> float:
    """Leaving probability chosen by the adversary at discount ``gamma``."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    u = math.sqrt(1.0 - gamma)
    return u / (1.0 + u)


def fig2_gamma_for_alpha(alpha: float) -> float:
    """Inverse of :func:`fig2_worst_alpha` on ``(0, 1/2]``."""
    if not 0.0 < alpha <= 0.5:
        raise ValueError("alpha must lie in (0, 1/2]")
    return 1.0 - (alpha / (1.0 - alpha)) ** 2


def fig2_normalized_value(gamma: float) -> float:
    """Worst-case ``(1 - gamma) R_gamma`` of the fig2 instance."""
    u = math.sqrt(1.0 - gamma)
    return -((1.0 - u) ** 2) / gamma


def fig2_fixed_point_value(gamma: float, alpha: float, beta: float) -> float:
    """Discounted value of the start state under the kernel ``(1 - a, b, a - b)``."""
    return -gamma * beta / ((1.0 - gamma) * (1.0 - gamma + gamma * alpha))


def quadratic_boundary(alpha):
    alpha = np.asarray(alpha, dtype=float)
    return alpha * (1.0 - alpha)


def no_blackwell_action_values(gamma: float, k_trunc: int = 64) -> tuple[float, float]:
    """Worst-case discounted returns of the two actions of ``no_blackwell_d1d2``.

    The ratio of the boundary to ``1 - gamma + gamma a`` is maximized at a
    node because it is monotone on each affine piece.
    """
    out = []
    for parity in ("even", "odd"):
        desc = unc.Piecewise(parity=parity, k_trunc=k_trunc)
        nodes = desc.nodes
        ratio = gamma * desc.boundary(nodes) / (1.0 - gamma + gamma * nodes)
        out.append(-float(np.max(ratio)) / (1.0 - gamma))
    return out[0], out[1]


def no_blackwell_flip_points(k_max: int, k_trunc: int = 64) -> list[tuple[float, float, str, str, float, float]]:
    """Discounts where the optimal action of ``no_blackwell_d1d2`` switches.

    For each ``k`` returns ``(gamma_k, gamma_prime_k, winner_k, winner_prime_k,
    margin_k, margin_prime_k)`` where the worst-case leaving probability is
    ``1/(2k+1)`` at ``gamma_k`` and ``1/(2k+2)`` at ``gamma_prime_k``.
    Margins are ``R(a1) - R(a2)``.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if 2 * k_max + 2 > 2 * k_trunc:
        raise ValueError("k_max exceeds the boundary truncation")
    rows = []
    for k in range(1, k_max + 1):
        g = fig2_gamma_for_alpha(1.0 / (2 * k + 1))
        g_prime = fig2_gamma_for_alpha(1.0 / (2 * k + 2))
        m = np.subtract(*no_blackwell_action_values(g, k_trunc))
        m_prime = np.subtract(*no_blackwell_action_values(g_prime, k_trunc))
        rows.append((g, g_prime, _winner(m), _winner(m_prime), float(m), float(m_prime)))
    return rows


def _winner(margin: float) -> str:
    if abs(margin) < 1e-13:
        return "tie"
    return "a1" if margin > 0 else "a2"


# ---------------------------------------------------------------------------
# Big Match: 0 = play, 1 = play after a zero payoff, 2 = losing sink, 3 = winning sink
# action 0 (T) ends the game: win w.p. p, lose w.p. 1 - p
# action 1 (B) continues: payoff 1 w.p. 1 - p, payoff 0 w.p. p


def big_match(p: float = 0.5) -> RmdpInstance:
    _check_unit(p, "p")
    kernel = np.zeros((4, 2, 4))
    rewards = np.zeros((4, 2, 4))
    for s in (0, 1):
        kernel[s, 0, 2], kernel[s, 0, 3] = 1 - p, p
        rewards[s, 0, 3] = 1.0
        kernel[s, 1, 0], kernel[s, 1, 1] = 1 - p, p
        rewards[s, 1, 0] = 1.0
    kernel[2, :, 2] = 1.0
    kernel[3, :, 3] = 1.0
    rewards[3] = 1.0
    return RmdpInstance(rewards, kernel, [1.0, 0.0, 0.0, 0.0], name="big_match", metadata={"p": p, "s_rectangular": True})


def _stationary_mix(x: float, num_states: int) -> Policy:
    probs = np.tile([x, 1.0 - x], (num_states, 1))
    return Policy.randomized(probs)


def _evaluate(instance: RmdpInstance, policy: Policy, criterion) -> float:
    if criterion == "average":
        return average_return(instance, policy)
    return discounted_return(instance, policy, gamma=float(criterion))


def big_match_eval(x: float, p: float, criterion="average") -> float:
    """Value from the start state when the top action is played w.p. ``x``.

    ``criterion`` is ``"average"`` or a discount factor.
    """
    _check_unit(x, "x")
    return _evaluate(big_match(p), _stationary_mix(x, 4), criterion)


def markovian_pistar_average(p: float) -> float:
    """Average return of: mix both actions evenly once, then always continue."""
    inst = big_match(p)
    gain = evaluate_average(inst, Policy.deterministic([1, 1, 1, 1], 2))
    first = 0.5 * inst.nominal_kernel[0, 0] + 0.5 * inst.nominal_kernel[0, 1]
    return float(first @ gain)


def stationary_duality_gap(grid_step: float = 0.01) -> tuple[float, float]:
    """``(max_x min_p, min_p max_x)`` of the Big Match average value on a grid."""
    grid = _grid(grid_step)
    table = np.array([[big_match_eval(x, p) for p in grid] for x in grid])
    return float(table.min(axis=1).max()), float(table.max(axis=0).min())


# ---------------------------------------------------------------------------
# game without an average-optimal policy: 0 = play, 1 = losing sink, 2 = winning sink
# action 0 ends the game (win w.p. p); action 1 repeats w.p. p, else wins


def smex_no_avg_opt(p: float = 0.5) -> RmdpInstance:
    _check_unit(p, "p")
    kernel = np.zeros((3, 2, 3))
    rewards = np.zeros((3, 2, 3))
    kernel[0, 0, 1], kernel[0, 0, 2] = 1 - p, p
    kernel[0, 1, 0], kernel[0, 1, 2] = p, 1 - p
    rewards[0, :, 2] = 1.0
    kernel[1, :, 1] = 1.0
    kernel[2, :, 2] = 1.0
    rewards[2] = 1.0
    return RmdpInstance(rewards, kernel, [1.0, 0.0, 0.0], name="smex_no_avg_opt", metadata={"p": p, "s_rectangular": True})


def smex_eval(x: float, p: float, criterion="average") -> float:
    _check_unit(x, "x")
    return _evaluate(smex_no_avg_opt(p), _stationary_mix(x, 3), criterion)


def smex_worst_case(x: float, grid_step: float = 0.01) -> float:
    return min(smex_eval(x, p) for p in _grid(grid_step))


# ---------------------------------------------------------------------------
# s-rectangular discount-sensitivity game: 0 = play, 1 = winning sink, 2 = losing sink
# action 0 wins w.p. p; action 1 pays 1 now w.p. p, otherwise moves to the winning sink


def srect_no_blackwell(p: float = 0.5) -> RmdpInstance:
    _check_unit(p, "p")
    kernel = np.zeros((3, 2, 3))
    rewards = np.zeros((3, 2, 3))
    kernel[0, 0, 1], kernel[0, 0, 2] = p, 1 - p
    rewards[0, 0, 1] = 1.0
    kernel[0, 1, 2], kernel[0, 1, 1] = p, 1 - p
    rewards[0, 1, 2] = 1.0
    kernel[1, :, 1] = 1.0
    rewards[1] = 1.0
    kernel[2, :, 2] = 1.0
    return RmdpInstance(rewards, kernel, [1.0, 0.0, 0.0], name="srect_no_blackwell", metadata={"p": p, "s_rectangular": True})


def srect_return(x: float, p: float, gamma: float) -> float:
    """Closed-form discounted return when action 0 is played w.p. ``x``."""
    tail = gamma / (1.0 - gamma)
    return x * p * (1.0 + tail) + (1.0 - x) * (p + (1.0 - p) * tail)


def srect_eval(x: float, p: float, gamma: float) -> float:
    _check_unit(x, "x")
    return _evaluate(srect_no_blackwell(p), _stationary_mix(x, 3), gamma)


def srect_grid_maxmin(gamma: float, grid_step: float = 1e-3) -> tuple[float, float]:
    """``(argmax_x, max_x min_p)`` of :func:`srect_return` over a square grid."""
    grid = _grid(grid_step)
    table = srect_return(grid[:, None], grid[None, :], gamma)
    worst = table.min(axis=1)
    best = int(np.argmax(worst))
    return float(grid[best]), float(worst[best])


def srect_no_blackwell_xstar(gamma: float) -> float:
    """Unique max-min probability of action 0 at discount ``gamma >= 1/2``."""
    if not 0.5 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [1/2, 1]")
    return 1.0 - 1.0 / (2.0 * gamma)


# ---------------------------------------------------------------------------
# benchmark families


def _normalize(rewards: np.ndarray) -> np.ndarray:
    lo, hi = rewards.min(), rewards.max()
    if hi == lo:
        return np.zeros_like(rewards)
    return (rewards - lo) / (hi - lo)


def _finish_benchmark(name, rewards, kernel, normalized, metadata) -> RmdpInstance:
    S = kernel.shape[0]
    if normalized:
        rewards = _normalize(rewards)
    meta = {"normalized": normalized, **metadata}
    return RmdpInstance(rewards, kernel, np.full(S, 1.0 / S), name=name, metadata=meta)


def forest(num_states: int = 20, fire_prob: float = 0.1, normalized: bool = False) -> RmdpInstance:
    """Forest management: action 0 waits (the stand ages), action 1 cuts."""
    S = num_states
    if S < 2:
        raise ValueError("forest needs at least 2 states")
    kernel = np.zeros((S, 2, S))
    for s in range(S):
        kernel[s, 0, min(s + 1, S - 1)] += 1 - fire_prob
        kernel[s, 0, 0] += fire_prob
    kernel[:, 1, 0] = 1.0
    sa = np.zeros((S, 2))
    sa[S - 1, 0] = 4.0
    sa[1:, 1] = 1.0
    sa[S - 1, 1] = 2.0
    rewards = np.repeat(sa[:, :, None], S, axis=2)
    return _finish_benchmark(f"forest:{S}", rewards, kernel, normalized, {"fire_prob": fire_prob})


def machine(num_states: int = 20, normalized: bool = False) -> RmdpInstance:
    """Machine replacement: action 0 waits, action 1 repairs.

    States ``0 .. S-3`` are operative (higher is worse); ``S-2`` and ``S-1``
    are a short and a long repair. Costs become negative rewards.
    """
    S = num_states
    if S < 3:
        raise ValueError("machine needs at least 3 states")
    worst, short, long_ = S - 3, S - 2, S - 1
    kernel = np.zeros((S, 2, S))
    for s in range(worst):
        kernel[s, 0, s] = 0.2
        kernel[s, 0, s + 1] = 0.8
    kernel[worst, 0, worst] = 1.0
    kernel[: worst + 1, 1, short] = 0.6
    kernel[: worst + 1, 1, long_] = 0.4
    kernel[short, :, 0] = 0.6
    kernel[short, :, short] = 0.4
    kernel[long_, :, 0] = 0.2
    kernel[long_, :, long_] = 0.8
    cost = np.zeros(S)
    cost[worst], cost[short], cost[long_] = 20.0, 2.0, 10.0
    rewards = np.broadcast_to(-cost[:, None, None], (S, 2, S)).copy()
    return _finish_benchmark(f"machine:{S}", rewards, kernel, normalized, {})


HEALTHCARE_DRUGS = {
    # (recover, stay, worsen), reward per period
    "low": ((0.1, 0.3, 0.6), 10.0),
    "medium": ((0.3, 0.5, 0.2), 8.0),
    "high": ((0.6, 0.4, 0.0), 6.0),
}


def healthcare(num_states: int = 20, normalized: bool = False) -> RmdpInstance:
    """Treatment planning over health levels ``0 .. S-2`` (0 healthiest) and a mortality sink ``S-1``.

    Actions are drug intensities low, medium, high.
    """
    S = num_states
    if S < 2:
        raise ValueError("healthcare needs at least 2 states")
    dead = S - 1
    kernel = np.zeros((S, 3, S))
    rewards = np.zeros((S, 3, S))
    for a, ((recover, stay, worsen), reward) in enumerate(HEALTHCARE_DRUGS.values()):
        for s in range(dead):
            kernel[s, a, max(s - 1, 0)] += recover
            kernel[s, a, s] += stay
            kernel[s, a, s + 1] += worsen
            rewards[s, a, :] = reward
    kernel[dead, :, dead] = 1.0
    return _finish_benchmark(f"healthcare:{S}", rewards, kernel, normalized, {})


def garnet(num_states: int = 20, num_actions: int = 5, branching: int = 10, seed: int = 0) -> RmdpInstance:
    """Random instance with ``branching`` successors per pair and uniform rewards in ``[0, 1]``."""
    S, A = num_states, num_actions
    if not 1 <= branching <= S:
        raise ValueError("branching must lie in [1, num_states]")
    rng = np.random.default_rng(seed)
    kernel = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            succ = rng.choice(S, size=branching, replace=False)
            weights = rng.exponential(1.0, size=branching)
            kernel[s, a, succ] = weights / weights.sum()
    sa = rng.uniform(0.0, 1.0, size=(S, A))
    rewards = np.repeat(sa[:, :, None], S, axis=2)
    return RmdpInstance(
        rewards,
        kernel,
        np.full(S, 1.0 / S),
        name=f"garnet:{S}:{A}:{branching}:{seed}",
        metadata={"seed": seed, "branching": branching},
    )


def single_state(reward: float = 1.0) -> RmdpInstance:
    return RmdpInstance([[[reward]]], [[[1.0]]], [1.0], name=f"single_state:{reward!r}")


# ---------------------------------------------------------------------------
# bundled polytope toys (S <= 3, A = 2, at most 3 vertices per pair)

POLYTOPE_TOYS: list[dict] = [
    {
        # two states, every pair a segment
        "rewards": [[0.49, 0.89], [0.93, 0.36]],
        "vertices": [
            [[[0.34, 0.66], [0.56, 0.44]], [[0.63, 0.37], [0.9, 0.1]]],
            [[[0.01, 0.99], [0.08, 0.92]], [[0.5, 0.5], [0.11, 0.89]]],
        ],
    },
    {
        # three states, unichain under every vertex choice
        "rewards": [[0.24, 0.08], [0.45, 0.01], [0.02, 0.72]],
        "vertices": [
            [[[0.7, 0.0, 0.3], [0.79, 0.16, 0.05]], [[0.38, 0.11, 0.51], [0.38, 0.54, 0.08]]],
            [[[0.85, 0.0, 0.15], [0.02, 0.01, 0.97]], [[0.28, 0.19, 0.53], [0.02, 0.3, 0.68]]],
            [[[0.09, 0.64, 0.27], [0.11, 0.39, 0.5]], [[0.22, 0.08, 0.7], [0.62, 0.32, 0.06]]],
        ],
    },
    {
        # three states with an absorbing trap; state 1 has a triangle for action 1
        "rewards": [[0.2, 0.9], [0.5, 1.0], [0.1, 0.1]],
        "vertices": [
            [[[0.5, 0.5, 0.0], [0.8, 0.2, 0.0]], [[0.0, 0.5, 0.5], [0.0, 0.9, 0.1]]],
            [[[0.6, 0.4, 0.0], [0.3, 0.7, 0.0]], [[0.1, 0.1, 0.8], [0.4, 0.3, 0.3], [0.2, 0.6, 0.2]]],
            [[[0.0, 0.0, 1.0]], [[0.0, 0.0, 1.0]]],
        ],
    },
]


def polytope_toy(index: int) -> RmdpInstance:
    spec = POLYTOPE_TOYS[index]
    vertices = [[np.asarray(v, dtype=float) for v in row] for row in spec["vertices"]]
    kernel = np.array([[v.mean(axis=0) for v in row] for row in vertices])
    table = [[unc.Polytope(v) if len(v) > 1 else unc.Singleton() for v in row] for row in vertices]
    S = kernel.shape[0]
    return RmdpInstance(spec["rewards"], kernel, np.full(S, 1.0 / S), table, f"polytope_toy:{index}")


# ---------------------------------------------------------------------------
# id handling


_BUILDERS: dict[str, Callable[..., RmdpInstance]] = {
    "fig2_alpha_beta": fig2_alpha_beta,
    "no_blackwell_d1d2": no_blackwell_d1d2,
    "big_match": big_match,
    "smex_no_avg_opt": smex_no_avg_opt,
    "srect_no_blackwell": srect_no_blackwell,
    "machine": machine,
    "forest": forest,
    "healthcare": healthcare,
    "garnet": garnet,
    "single_state": single_state,
    "polytope_toy": polytope_toy,
}

_ALIASES = {
    "fig2": "fig2_alpha_beta",
    "no_blackwell": "no_blackwell_d1d2",
    "no-blackwell": "no_blackwell_d1d2",
    "big-match": "big_match",
    "smex": "smex_no_avg_opt",
    "srect": "srect_no_blackwell",
    "srect-no-blackwell": "srect_no_blackwell",
}

BENCHMARKS = ("machine", "forest", "healthcare", "garnet")


def build(name: str, *args, normalized: bool | None = None, **kwargs) -> RmdpInstance:
    """Construct a gallery instance by name with positional or keyword parameters."""
    key = _ALIASES.get(name, name)
    if key not in _BUILDERS:
        raise ValueError(f"unknown gallery id {name!r}")
    if normalized is not None:
        if key not in ("machine", "forest", "healthcare"):
            raise ValueError(f"{key} has no normalized variant")
        kwargs["normalized"] = normalized
    return _BUILDERS[key](*args, **kwargs)


def parse_id(text: str, normalized: bool | None = None) -> RmdpInstance:
    """Build from ``name[:arg[:arg...]]``, e.g. ``machine:20`` or ``garnet:20:5:10:3``."""
    name, *raw = text.split(":")
    args: list = []
    for item in raw:
        try:
            args.append(int(item))
        except ValueError:
            try:
                args.append(float(item))
            except ValueError:
                raise ValueError(f"bad parameter {item!r} in gallery id {text!r}") from None
    return build(name, *args, normalized=normalized)


def with_uncertainty(instance: RmdpInstance, kind: str, radius: float = 0.05, exact_fallback: bool = False) -> RmdpInstance:
    """Attach the same box or ell2 set to every pair, masked to the nominal supports."""
    table = unc.uniform_descriptors(kind, radius, instance.nominal_kernel, exact_fallback)
    return instance.with_uncertainty(table, f"{instance.name}/{kind}")


# ---------------------------------------------------------------------------


def _grid(step: float) -> np.ndarray:
    n = int(round(1.0 / step))
    if n < 1 or abs(n * step - 1.0) > 1e-9:
        raise ValueError("grid step must divide 1")
    return np.linspace(0.0, 1.0, n + 1)


def _check_unit(x: float, what: str) -> None:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"{what} must lie in [0, 1]")

