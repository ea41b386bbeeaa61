import math

import numpy as np
import pytest

from stlcert.certifier import ClassKappaInf
from stlcert.dynamics import Box, ClosedLoopSystem, integrate, sample_disturbance
from stlcert.models import single_integrator_example
from stlcert.spec_lang import ConjunctiveClause, PredicateDef, parse_spec, robustness
from stlcert.validation import (
    TrialStats,
    adversarial_check,
    gronwall_check,
    run_trials,
)


def disc_pred():
    return PredicateDef(
        "disc", lambda x: 1.0 - float(x @ x), lambda x: -2.0 * np.asarray(x, dtype=float)
    )


def decay_system(box=None):
    return ClosedLoopSystem(
        n=2,
        domain=box if box is not None else Box([-5.0, -5.0], [5.0, 5.0]),
        f_cl=lambda x: -x,
    )


# ---------------------------------------------------------------------------
# run_trials


def test_zero_disturbance_trials_equal_nominal():
    bundle = single_integrator_example()
    spec = bundle.spec()
    nominal = integrate(bundle.system, bundle.x0, 2.0, 1e-3)
    rho_nom = robustness(spec, nominal, 0.0)
    stats = run_trials(bundle.system, spec, bundle.x0, 0.0, 10, dt=1e-3, seed=4)
    assert stats.num_trials == 10
    assert stats.num_violations == 0
    assert all(r == rho_nom for r in stats.robustness_values)
    assert stats.min_robustness == rho_nom


def test_trials_deterministic_across_thread_counts():
    bundle = single_integrator_example()
    spec = bundle.spec()
    kw = dict(distribution="uniform-ball", dt=5e-3, seed=21)
    one = run_trials(bundle.system, spec, bundle.x0, 0.05, 16, threads=1, **kw)
    four = run_trials(bundle.system, spec, bundle.x0, 0.05, 16, threads=4, **kw)
    assert one.robustness_values == four.robustness_values
    assert one.to_csv() == four.to_csv()


def test_trials_region_sampler_is_seeded():
    bundle = single_integrator_example()
    spec = bundle.spec()
    region = Box([-0.05, -0.05], [0.05, 0.05])
    a = run_trials(bundle.system, spec, region, 0.01, 8, dt=5e-3, seed=3)
    b = run_trials(bundle.system, spec, region, 0.01, 8, dt=5e-3, seed=3)
    assert a.robustness_values == b.robustness_values
    c = run_trials(bundle.system, spec, region, 0.01, 8, dt=5e-3, seed=30)
    assert a.robustness_values != c.robustness_values


def test_constant_per_run_repeats_first_draw():
    bundle = single_integrator_example()
    spec = bundle.spec()
    stats = run_trials(
        bundle.system, spec, bundle.x0, 0.05, 1, dt=5e-3, seed=11, constant_per_run=True
    )
    # reproduce trial 0 by hand: tile the first per-step draw
    dist = sample_disturbance(2, 0.05, 2.0, 5e-3, "uniform-ball", seed=11)
    const = np.tile(dist.samples[0], (dist.num_steps, 1))
    from stlcert.dynamics import DisturbanceSignal

    traj = integrate(
        bundle.system,
        bundle.x0,
        2.0,
        5e-3,
        DisturbanceSignal(dt=5e-3, samples=const, bound=0.05),
    )
    assert stats.robustness_values[0] == robustness(spec, traj, 0.0)


def test_trials_count_violations_and_near_boundary():
    # unsatisfiable: h = -0.25 everywhere
    neg = PredicateDef("neg", lambda x: -0.25)
    sys2 = decay_system()
    spec = parse_spec("F[0,1](neg)", {"neg": neg})
    stats = run_trials(sys2, spec, np.zeros(2), 0.0, 5, dt=1e-2, seed=0, near_tol=0.5)
    assert stats.num_violations == 5
    assert stats.near_boundary == 5  # |rho| = 0.25 < 0.5
    assert stats.min_robustness == pytest.approx(-0.25)


def test_trials_horizon_validation():
    bundle = single_integrator_example()
    spec = bundle.spec()
    with pytest.raises(ValueError, match="shorter"):
        run_trials(bundle.system, spec, bundle.x0, 0.0, 1, dt=1e-2, horizon_T=1.0)
    with pytest.raises(ValueError, match="num_trials"):
        run_trials(bundle.system, spec, bundle.x0, 0.0, 0, dt=1e-2)


def test_trials_fairness_flag_on_domain_exit():
    # drift pushes the state out of a tight box before the window ends
    tight = ClosedLoopSystem(
        n=2, domain=Box([-0.5, -0.5], [0.5, 0.5]), f_cl=lambda x: np.array([1.0, 0.0])
    )
    always_true = PredicateDef("ok", lambda x: 1.0)
    spec = parse_spec("G[0,2](ok)", {"ok": always_true})
    stats = run_trials(tight, spec, np.zeros(2), 0.0, 3, dt=1e-2, seed=0)
    assert stats.fairness_violations == 3
    assert all(r == -math.inf for r in stats.robustness_values)


def test_trial_stats_invariants_enforced():
    with pytest.raises(ValueError):
        TrialStats(
            num_trials=2,
            num_violations=0,
            robustness_values=[1.0],
            min_robustness=1.0,
            seed=0,
            delta_used=0.0,
            fairness_violations=0,
            near_boundary=0,
            near_boundary_tol=0.0,
            exited_early=[False],
            trial_seeds=[0],
        )


def test_falsification_at_clearly_excessive_bound():
    # the bundled goal-reach example is falsifiable at delta = 0.3 when the
    # direction is held for the whole run
    bundle = single_integrator_example()
    spec = bundle.spec()
    stats = run_trials(
        bundle.system,
        spec,
        bundle.x0,
        0.3,
        60,
        distribution="fixed-magnitude",
        dt=5e-3,
        seed=123,
        constant_per_run=True,
    )
    assert stats.num_violations > 0
    assert stats.min_robustness < 0


# ---------------------------------------------------------------------------
# adversarial_check


def test_adversarial_zero_delta_reduces_to_invariance_check():
    res = adversarial_check(
        decay_system(), ConjunctiveClause((disc_pred(),)), 0.0, [1.0, 0.0], T=2.0, dt=1e-3
    )
    assert res.passed
    assert res.min_h_per_predicate["disc"] >= -res.tol


def test_adversarial_at_certified_bound_holds_boundary():
    # x' = -x with alpha(r) = r certifies delta = 1.0; the worst push leaves
    # the boundary an equilibrium
    res = adversarial_check(
        decay_system(), ConjunctiveClause((disc_pred(),)), 1.0, [1.0, 0.0], T=5.0, dt=1e-3
    )
    assert res.passed
    assert res.min_h_per_predicate["disc"] >= -res.tol


def test_adversarial_beyond_bound_fails():
    res = adversarial_check(
        decay_system(), ConjunctiveClause((disc_pred(),)), 1.5, [1.0, 0.0], T=5.0, dt=1e-3
    )
    assert not res.passed
    assert res.min_h_per_predicate["disc"] < -res.tol


def test_adversarial_requires_feasible_start():
    with pytest.raises(ValueError, match="does not satisfy"):
        adversarial_check(
            decay_system(), ConjunctiveClause((disc_pred(),)), 0.5, [2.0, 0.0], T=1.0, dt=1e-2
        )


def test_adversarial_respects_alpha_map():
    # with a larger gain the certified bound grows; the run is still safe at it
    clause = ConjunctiveClause((disc_pred(),))
    res = adversarial_check(
        decay_system(),
        clause,
        1.0,
        [0.5, 0.0],
        T=2.0,
        dt=1e-3,
        alpha_map={"disc": ClassKappaInf("linear", 2.0)},
    )
    assert res.passed


def test_adversarial_reports_vanishing_gradient():
    flat = PredicateDef("flat", lambda x: 1.0, lambda x: np.zeros(2))
    with pytest.raises(RuntimeError, match="vanish"):
        adversarial_check(
            decay_system(), ConjunctiveClause((flat,)), 0.5, [0.1, 0.0], T=0.5, dt=1e-2
        )


# ---------------------------------------------------------------------------
# gronwall_check


def test_gronwall_zero_delta_trivially_true():
    assert gronwall_check(decay_system(), [1.0, 0.0], 0.0, 3, T=1.0, dt=1e-2, L=1.0)


def test_gronwall_decay_system_with_true_constant():
    assert gronwall_check(
        decay_system(), [1.0, 0.5], 0.4, 10, T=2.0, dt=1e-3, L=1.0, seed=5
    )


def test_gronwall_understated_constant_detected():
    # x' = 2x with L asserted as 0.2: the aligned constant-disturbance trial
    # exceeds the envelope
    grow = ClosedLoopSystem(n=1, domain=Box([-100.0], [100.0]), f_cl=lambda x: 2.0 * x)
    assert gronwall_check(grow, [1.0], 0.1, 3, T=1.8, dt=1e-3, L=2.0, seed=2)
    assert not gronwall_check(grow, [1.0], 0.1, 3, T=1.8, dt=1e-3, L=0.2, seed=2)
