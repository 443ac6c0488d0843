import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_instance
from rmdp import gallery
from rmdp.core import Policy, RmdpInstance, evaluate_discounted
from rmdp.robust_dp import (
    NonConvergenceError,
    _policy_value_iteration,
    adversarial_policy_iteration,
    bellman_apply,
    policy_bellman,
    robust_value_iteration,
    strategy_iteration,
)

KINDS = [("box", 0.1), ("ell2", 0.05)]


def _operator_instance(seed, kind):
    return random_instance(np.random.default_rng(seed), 5, 3, uncertainty=kind, sparse=True)


@pytest.mark.parametrize("kind", KINDS)
@given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(0.0, 0.999))
def test_contraction(kind, seed, gamma):
    inst = _operator_instance(seed % 7, kind)
    gen = np.random.default_rng(seed)
    v, w = gen.normal(size=(2, 5)) * 10
    tv, _, _ = bellman_apply(inst, gamma, v)
    tw, _, _ = bellman_apply(inst, gamma, w)
    assert np.max(np.abs(tv - tw)) <= gamma * np.max(np.abs(v - w)) + 1e-10


@pytest.mark.parametrize("kind", KINDS)
@given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(0.0, 1.0))
def test_monotonicity(kind, seed, gamma):
    inst = _operator_instance(seed % 7, kind)
    gen = np.random.default_rng(seed)
    v = gen.normal(size=5)
    w = v + gen.uniform(0, 1, size=5)
    tv, _, _ = bellman_apply(inst, gamma, v)
    tw, _, _ = bellman_apply(inst, gamma, w)
    assert np.all(tv <= tw + 1e-12)


@pytest.mark.parametrize("kind", KINDS)
@given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(0.0, 1.0), shift=st.floats(-50, 50))
def test_shift(kind, seed, gamma, shift):
    inst = _operator_instance(seed % 7, kind)
    v = np.random.default_rng(seed).normal(size=5)
    tv, _, _ = bellman_apply(inst, gamma, v)
    ts, _, _ = bellman_apply(inst, gamma, v + shift)
    assert np.max(np.abs(ts - tv - gamma * shift)) <= 1e-12 * max(1.0, abs(shift))


def test_singleton_reduces_to_classical_update(rng):
    inst = random_instance(rng, 3, 2)
    v = rng.normal(size=3)
    tv, greedy, _ = bellman_apply(inst, 0.9, v)
    q = np.einsum("sat,sat->sa", inst.nominal_kernel, inst.rewards + 0.9 * v)
    assert np.allclose(tv, q.max(axis=1), atol=1e-14)
    assert greedy.actions.tolist() == np.argmax(q, axis=1).tolist()


def test_zero_vector_gives_worst_one_step_reward(rng):
    inst = random_instance(rng, 4, 2, uncertainty=("box", 0.1))
    tv, _, _ = bellman_apply(inst, 0.7, np.zeros(4))
    expected = [
        max(inst.uncertainty[s][a].inner_min(inst.nominal_kernel[s, a], inst.rewards[s, a])[0] for a in range(2))
        for s in range(4)
    ]
    assert np.allclose(tv, expected, atol=1e-14)


def test_greedy_ties_go_to_lowest_index():
    inst = RmdpInstance(np.ones((2, 3, 2)), np.full((2, 3, 2), 0.5), [0.5, 0.5])
    _, greedy, _ = bellman_apply(inst, 0.5, np.zeros(2))
    assert greedy.actions.tolist() == [0, 0]


def test_fig2_bellman_attains_alpha_star():
    inst = gallery.fig2_alpha_beta()
    gamma = 0.75
    v = np.zeros(3)
    v[1] = -1 / (1 - gamma)
    # value at the start state does not affect the stay coordinate's optimal alpha only through v[0]
    v[0] = gallery.fig2_fixed_point_value(gamma, 1 / 3, 2 / 9)
    _, _, kernel = bellman_apply(inst, gamma, v)
    assert inst.uncertainty[0][0].alpha_of(kernel[0, 0]) == pytest.approx(1 / 3, abs=1e-9)


def test_value_iteration_single_state():
    report = robust_value_iteration(gallery.single_state(1.0), 0.5)
    assert report.value[0] == pytest.approx(2.0, abs=1e-10)
    assert report.converged


def test_value_iteration_budget_exhaustion_is_reported(rng):
    inst = random_instance(rng, 4, 2, uncertainty=("box", 0.1))
    report = robust_value_iteration(inst, 0.99, max_iters=3)
    assert not report.converged and report.iterations == 3


@pytest.mark.parametrize("gamma", [0.5, 0.9, 0.99])
@pytest.mark.parametrize(
    "name",
    [
        "fig2_alpha_beta",
        "no_blackwell_d1d2",
        "big_match",
        "smex_no_avg_opt",
        "srect_no_blackwell",
        "machine:10/box",
        "machine:10/ell2",
        "forest:8/box",
        "forest:8/ell2",
        "healthcare:6/box",
        "healthcare:6/ell2",
        "garnet:8:3:4:0/box",
        "garnet:8:3:4:0/ell2",
        "polytope_toy:1",
        "polytope_toy:2",
    ],
)
def test_value_iteration_agrees_with_strategy_iteration(name, gamma):
    ident, _, kind = name.partition("/")
    inst = gallery.parse_id(ident)
    if kind:
        inst = gallery.with_uncertainty(inst, kind, 0.05, exact_fallback=True)
    vi = robust_value_iteration(inst, gamma, tol=1e-10)
    si = strategy_iteration(inst, gamma, tol=1e-10)
    p0 = inst.initial_distribution
    assert abs(p0 @ vi.value - p0 @ si.value) <= 1e-8
    assert si.residual <= 1e-9 * max(1.0, np.max(np.abs(si.value)))


def test_strategy_iteration_from_optimum_stops_after_one_round():
    inst = gallery.with_uncertainty(gallery.machine(10), "box", 0.05)
    first = strategy_iteration(inst, 0.9)
    again = strategy_iteration(inst, 0.9, start=first.policy)
    assert again.iterations == 1
    assert again.policy == first.policy


def test_strategy_iteration_machine_matches_value_iteration():
    inst = gallery.with_uncertainty(gallery.machine(10), "box", 0.05)
    si = strategy_iteration(inst, 0.9)
    vi = robust_value_iteration(inst, 0.9)
    assert np.max(np.abs(si.value - vi.value)) <= 1e-8


def test_strategy_iteration_worst_kernel_is_feasible():
    inst = gallery.with_uncertainty(gallery.garnet(8, 3, 4, 1), "ell2", 0.05, exact_fallback=True)
    report = strategy_iteration(inst, 0.95)
    for s in range(8):
        for a in range(3):
            assert inst.uncertainty[s][a].contains(report.worst_kernel[s, a], inst.nominal_kernel[s, a], 1e-9)


def test_warm_start_needs_no_more_rounds_than_cold_start():
    inst = gallery.with_uncertainty(gallery.machine(10), "box", 0.05)
    warm_rounds = cold_rounds = 0
    policy = kernel = None
    for t in range(21):
        gamma = (t + 1) / (t + 2)
        warm = strategy_iteration(inst, gamma, start=policy, start_kernel=kernel)
        cold = strategy_iteration(inst, gamma)
        assert np.max(np.abs(warm.value - cold.value)) <= 1e-8 * max(1.0, np.max(np.abs(cold.value)))
        warm_rounds += warm.iterations
        cold_rounds += cold.iterations
        policy, kernel = warm.policy, warm.worst_kernel
    assert warm_rounds <= cold_rounds


def test_adversarial_fig2_example():
    inst = gallery.fig2_alpha_beta()
    v, kernel = adversarial_policy_iteration(inst, [0, 0, 0], 0.75)
    assert (1 - 0.75) * v[0] == pytest.approx(-1 / 3, abs=1e-10)
    assert inst.uncertainty[0][0].alpha_of(kernel[0, 0]) == pytest.approx(1 / 3, abs=1e-9)


def test_adversarial_singleton_equals_evaluation(rng):
    inst = random_instance(rng, 4, 2)
    policy = Policy.deterministic([0, 1, 1, 0], 2)
    v, _ = adversarial_policy_iteration(inst, policy, 0.9)
    assert np.array_equal(v, evaluate_discounted(inst, policy, gamma=0.9))


def test_adversarial_residual_and_dominance(rng):
    for kind in KINDS:
        inst = random_instance(rng, 4, 2, uncertainty=kind)
        policy = Policy.randomized(rng.dirichlet(np.ones(2), size=4))
        v, kernel = adversarial_policy_iteration(inst, policy, 0.9)
        tv, _, _ = policy_bellman(inst, policy, 0.9, v)
        assert np.max(np.abs(tv - v)) <= 1e-10 * max(1.0, np.max(np.abs(v)))
        assert np.all(v <= evaluate_discounted(inst, policy, gamma=0.9) + 1e-10)
        # dominance over sampled feasible kernels: mix the nominal with the worst case
        for _ in range(10):
            lam = rng.uniform(0, 1, size=(4, 2, 1))
            sample = lam * kernel + (1 - lam) * inst.nominal_kernel
            assert np.all(v <= evaluate_discounted(inst, policy, sample, gamma=0.9) + 1e-10)


def test_adversary_budget_exhaustion_raises():
    with pytest.raises(NonConvergenceError):
        adversarial_policy_iteration(gallery.fig2_alpha_beta(), [0, 0, 0], 0.9, max_iters=1)


def test_value_iteration_fallback_reaches_same_fixed_point():
    inst = gallery.fig2_alpha_beta()
    policy = Policy.deterministic([0, 0, 0], 1)
    v, kernel, _, _ = _policy_value_iteration(inst, policy, 0.9, np.zeros(3), 1e-10, 1_000_000, 0)
    assert (1 - 0.9) * v[0] == pytest.approx(gallery.fig2_normalized_value(0.9), abs=1e-10)
    assert inst.uncertainty[0][0].alpha_of(kernel[0, 0]) == pytest.approx(gallery.fig2_worst_alpha(0.9), abs=1e-6)


def test_solve_report_json(rng):
    inst = random_instance(rng, 3, 2, uncertainty=("box", 0.1))
    report = strategy_iteration(inst, 0.8)
    doc = json.loads(report.dumps())
    assert doc["policy"] == report.policy.actions.tolist()
    assert len(doc["worst_kernel"]) == 3 and math.isclose(doc["gamma"], 0.8)


def test_gamma_validation():
    inst = gallery.single_state()
    with pytest.raises(ValueError):
        bellman_apply(inst, 1.5, np.zeros(1))
    with pytest.raises(ValueError):
        strategy_iteration(inst, 1.0)
    with pytest.raises(ValueError):
        robust_value_iteration(inst, -0.1)
