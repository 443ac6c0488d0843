"""Acceptance criteria 1-8, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (lines are printed even
under output capture) or ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from rmdp import gallery
from rmdp import uncertainty as unc
from rmdp.average import (
    algo1_limit_discounted,
    algo2_increasing_horizon,
    algo3_increasing_discount,
    extract_average_policy,
    reference_gain,
)
from rmdp.core import Policy, evaluate_average, policy_chain
from rmdp.harness import ExperimentConfig, run_experiment
from rmdp.oracles import exhaustive_avg_optimal, simplex_grid_min, vertex_enumeration_min
from rmdp.robust_dp import adversarial_policy_iteration, bellman_apply, robust_value_iteration, strategy_iteration

sys.path.insert(0, str(Path(__file__).parent))
from helpers import random_instance  # noqa: E402


def _report(number, title, failures, elapsed, budget, emit=print):
    if elapsed > budget:
        failures.append(f"runtime {elapsed:.1f}s over {budget:.0f}s")
    status = "PASS" if not failures else "FAIL"
    detail = f"{elapsed:.2f}s" if not failures else "; ".join(failures[:5])
    emit(f"{status} criterion {number}: {title} ({detail})")
    return not failures


@pytest.fixture
def report(capsys):
    def emit(line):
        with capsys.disabled():
            print("\n" + line)

    def run(*args):
        assert _report(*args, emit=emit), "see FAIL line above"

    return run


def criterion_1():
    failures = []
    start = time.perf_counter()
    inst = gallery.fig2_alpha_beta()
    for gamma in (0.5, 0.75, 0.9, 0.99):
        value, kernel = adversarial_policy_iteration(inst, [0, 0, 0], gamma, tol=1e-13)
        u = math.sqrt(1 - gamma)
        expected_value = -(1 - 2 * u + (1 - gamma)) / gamma
        expected_alpha = (u - (1 - gamma)) / gamma
        got_value = (1 - gamma) * value[0]
        got_alpha = inst.uncertainty[0][0].alpha_of(kernel[0, 0])
        if abs(got_value - expected_value) > 1e-8:
            failures.append(f"gamma={gamma}: value {got_value!r} vs {expected_value!r}")
        if abs(got_alpha - expected_alpha) > 1e-6:
            failures.append(f"gamma={gamma}: alpha {got_alpha!r} vs {expected_alpha!r}")
    return failures, time.perf_counter() - start


def criterion_2():
    failures = []
    start = time.perf_counter()
    inst = gallery.no_blackwell_d1d2()
    for k, (g, gp, w, wp, m, mp) in enumerate(gallery.no_blackwell_flip_points(4), start=1):
        if (w, wp) != ("a1", "a2"):
            failures.append(f"k={k}: winners {w}/{wp}")
        if min(abs(m), abs(mp)) <= 1e-12:
            failures.append(f"k={k}: margins {m:.2e}/{mp:.2e}")
        # margins recomputed from the solver on the instance itself
        for gamma, sign in ((g, 1), (gp, -1)):
            v1, _ = adversarial_policy_iteration(inst, [0, 0, 0], gamma, tol=1e-13)
            v2, _ = adversarial_policy_iteration(inst, [1, 0, 0], gamma, tol=1e-13)
            if sign * (v1[0] - v2[0]) * (1 - gamma) <= 1e-12:
                failures.append(f"k={k}: solver disagrees at gamma={gamma!r}")
    return failures, time.perf_counter() - start


def criterion_3():
    failures = []
    start = time.perf_counter()
    grid = np.linspace(0.0, 1.0, 101)
    worst = max(abs(gallery.markovian_pistar_average(p) - 0.5) for p in grid)
    if worst > 1e-12:
        failures.append(f"markovian value off by {worst:.2e}")
    maxmin, minmax = gallery.stationary_duality_gap(0.01)
    if abs(maxmin) > 1e-9:
        failures.append(f"max-min {maxmin!r}")
    if abs(minmax - 0.5) > 1e-9:
        failures.append(f"min-max {minmax!r}")
    return failures, time.perf_counter() - start


def criterion_4():
    failures = []
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    kinds = ("box", "polytope", "ell2")
    worst = dict.fromkeys(kinds, 0.0)
    for case in range(200):
        kind = kinds[case % 3]
        S = int(rng.integers(2, 7))
        nominal = rng.dirichlet(np.ones(S))
        v = rng.normal(size=S)
        if kind == "box":
            desc = unc.Box.from_theta(nominal, rng.uniform(0.01, 0.3), rng.uniform(0.01, 0.3))
        elif kind == "polytope":
            desc = unc.Polytope(np.vstack([rng.dirichlet(np.ones(S), size=3), nominal]))
        else:
            desc = unc.Ell2(rng.uniform(0.01, 0.2), exact_fallback=True)
        value, p = unc.inner_min(desc, nominal, v)
        if not desc.contains(p, nominal):
            failures.append(f"case {case}: {kind} argmin infeasible")
        if kind == "ell2":
            oracle = simplex_grid_min(desc, nominal, v, 1e-3)
            gap = oracle - value
            if gap < -1e-9 or gap > 2e-3:
                failures.append(f"case {case}: ell2 grid gap {gap:.2e}")
        else:
            gap = abs(vertex_enumeration_min(desc, nominal, v) - value)
            if gap > 1e-10:
                failures.append(f"case {case}: {kind} vertex gap {gap:.2e}")
        worst[kind] = max(worst[kind], abs(gap))
    return failures, time.perf_counter() - start


def criterion_5():
    failures = []
    start = time.perf_counter()
    for index in range(len(gallery.POLYTOPE_TOYS)):
        inst = gallery.polytope_toy(index)
        best = exhaustive_avg_optimal(inst)
        for trace in (algo1_limit_discounted(inst, 2000), algo3_increasing_discount(inst, num_iters=2000)):
            if abs(trace.final_estimate - best.gain) > 1e-3:
                failures.append(f"toy {index} {trace.algorithm}: gain {trace.final_estimate:.6f} vs {best.gain:.6f}")
            policy = tuple(extract_average_policy(trace).actions.tolist())
            if policy != best.policy:
                failures.append(f"toy {index} {trace.algorithm}: policy {policy} vs {best.policy}")
    return failures, time.perf_counter() - start


def criterion_6():
    failures = []
    start = time.perf_counter()
    for name in ("machine", "forest", "healthcare"):
        for kind in ("box", "ell2"):
            inst = gallery.with_uncertainty(gallery.build(name, 20, normalized=True), kind, 0.05, exact_fallback=True)
            try:
                ref, ref_trace = reference_gain(inst, 5000, 50, 1e-5)
            except RuntimeError as exc:
                failures.append(f"{name}/{kind}: {exc}")
                continue
            traces = (
                ref_trace.prefix(1000),
                algo2_increasing_horizon(inst, 1000),
                algo3_increasing_discount(inst, num_iters=1000),
            )
            for trace in traces:
                err = trace.errors(ref)
                if err[-1] > 1e-2:
                    failures.append(f"{name}/{kind}/{trace.algorithm}: error {err[-1]:.2e}")
                if err[-1] > err[9] / 10:
                    failures.append(f"{name}/{kind}/{trace.algorithm}: trend {err[9]:.2e} -> {err[-1]:.2e}")
    return failures, time.perf_counter() - start


def criterion_7():
    failures = []
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    kinds = ("box", "ell2")
    for trial in range(100):
        kind = kinds[trial % 2]
        inst = random_instance(rng, int(rng.integers(2, 6)), 2, uncertainty=(kind, 0.1))
        gamma = float(rng.uniform(0.1, 0.99))
        v, w = rng.normal(size=(2, inst.num_states)) * 5
        tv = bellman_apply(inst, gamma, v)[0]
        tw = bellman_apply(inst, gamma, w)[0]
        if np.max(np.abs(tv - tw)) > gamma * np.max(np.abs(v - w)) + 1e-12:
            failures.append(f"trial {trial}: contraction")
        upper = v + np.abs(rng.normal(size=v.size))
        if np.any(bellman_apply(inst, gamma, upper)[0] < tv - 1e-12):
            failures.append(f"trial {trial}: monotonicity")
        c = float(rng.normal() * 10)
        if np.max(np.abs(bellman_apply(inst, gamma, v + c)[0] - (tv + gamma * c))) > 1e-12 * max(1, abs(c)):
            failures.append(f"trial {trial}: shift")
        _, policy, kernel = bellman_apply(inst, gamma, v)
        for s in range(inst.num_states):
            for a in range(inst.num_actions):
                if not inst.uncertainty[s][a].contains(kernel[s, a], inst.nominal_kernel[s, a]):
                    failures.append(f"trial {trial}: infeasible argmin at ({s}, {a})")
        P, _ = policy_chain(inst, policy, kernel)
        g = evaluate_average(inst, policy, kernel)
        if np.max(np.abs(P @ g - g)) > 1e-10:
            failures.append(f"trial {trial}: harmonicity")
    for trial in range(100):
        S = int(rng.integers(2, 7))
        nominal = rng.dirichlet(np.ones(S))
        v = rng.normal(size=S)
        shift = float(rng.uniform(-10, 10))
        descs = (
            unc.Singleton(),
            unc.Box.from_theta(nominal, rng.uniform(0.01, 0.3), rng.uniform(0.01, 0.3)),
            unc.Ell2(rng.uniform(0.01, 0.2), exact_fallback=True),
            unc.Polytope(np.vstack([rng.dirichlet(np.ones(S), size=3), nominal])),
        )
        for desc in descs:
            base, _ = unc.inner_min(desc, nominal, v)
            moved, _ = unc.inner_min(desc, nominal, v + shift)
            if abs(moved - base - shift) > 1e-9 * max(1.0, abs(shift)):
                failures.append(f"trial {trial}: {desc.kind} translation")
        e3 = np.array([1.0, 0.0, 0.0])
        w = rng.normal(size=3)
        for desc in (unc.AlphaBeta(), unc.Piecewise(parity="even"), unc.Piecewise(parity="odd")):
            base, _ = desc.inner_min(e3, w)
            moved, p = desc.inner_min(e3, w + shift)
            if abs(moved - base - shift) > 1e-12 * max(1.0, abs(shift)):
                failures.append(f"trial {trial}: parametric translation")
    for trial in range(20):
        inst = random_instance(rng, 4, 3, uncertainty=(("box", "ell2")[trial % 2], 0.1))
        for gamma in (0.5, 0.9, 0.99):
            vi = robust_value_iteration(inst, gamma, tol=1e-10).value
            si = strategy_iteration(inst, gamma, tol=1e-10).value
            if np.max(np.abs(vi - si)) > 1e-8:
                failures.append(f"instance {trial} gamma {gamma}: VI vs SI {np.max(np.abs(vi - si)):.2e}")
    return failures, time.perf_counter() - start


def criterion_8(workdir):
    failures = []
    start = time.perf_counter()
    blobs = []
    for run in ("first", "second"):
        config = ExperimentConfig(
            instance="garnet",
            uncertainty="box",
            num_states=20,
            num_actions=5,
            branching=10,
            T=200,
            T_ref=5000,
            num_seeds=3,
            output=str(Path(workdir) / run / "garnet.csv"),
        )
        result = run_experiment(config)
        blobs.append((result.csv_path.read_bytes(), result.summary_path.read_bytes()))
    if blobs[0] != blobs[1]:
        failures.append("CSV bytes differ between runs")
    return failures, time.perf_counter() - start


CRITERIA = {
    1: ("alpha-beta chain closed form", criterion_1, 1),
    2: ("no-Blackwell oscillation", criterion_2, 1),
    3: ("Big Match numbers", criterion_3, 10),
    4: ("inner-min oracle equivalence", criterion_4, 30),
    5: ("exhaustive average optimality", criterion_5, 60),
    6: ("benchmark convergence rerun", criterion_6, 600),
    7: ("property suites", criterion_7, 60),
    8: ("determinism", criterion_8, 600),
}


def _check(number, report, *args):
    title, fn, budget = CRITERIA[number]
    failures, elapsed = fn(*args)
    report(number, title, failures, elapsed, budget)


def test_criterion_1_alpha_beta_closed_form(report):
    _check(1, report)


def test_criterion_2_no_blackwell_oscillation(report):
    _check(2, report)


def test_criterion_3_big_match(report):
    _check(3, report)


def test_criterion_4_oracle_equivalence(report):
    _check(4, report)


def test_criterion_5_exhaustive_average_optimality(report):
    _check(5, report)


def test_criterion_6_benchmark_rerun(report):
    _check(6, report)


def test_criterion_7_property_suites(report):
    _check(7, report)


def test_criterion_8_determinism(report, tmp_path):
    _check(8, report, tmp_path)


if __name__ == "__main__":
    import tempfile

    results = []
    for number, (title, fn, budget) in CRITERIA.items():
        if number == 8:
            with tempfile.TemporaryDirectory() as tmp:
                failures, elapsed = fn(tmp)
        else:
            failures, elapsed = fn()
        results.append(_report(number, title, failures, elapsed, budget))
    sys.exit(0 if all(results) else 1)
