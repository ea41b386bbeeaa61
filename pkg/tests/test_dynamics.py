import math

import numpy as np
import pytest

from stlcert.dynamics import (
    Box,
    ClosedLoopSystem,
    DisturbanceSignal,
    IntegrationError,
    Trajectory,
    constant_disturbance,
    draw_disturbance,
    estimate_lipschitz,
    integrate,
    sample_disturbance,
    signal_seminorm,
)

BIG = Box([-50.0, -50.0], [50.0, 50.0])


def make_system(f, n=2, box=None):
    return ClosedLoopSystem(n=n, domain=box if box is not None else BIG, f_cl=f)


def decay(x):
    return -x


# ---------------------------------------------------------------------------
# integrate


def test_zero_field_is_constant():
    sys2 = make_system(lambda x: np.zeros(2))
    traj = integrate(sys2, [1.0, 1.0], T=1.0, dt=0.1)
    assert len(traj.states) == 11
    assert np.all(traj.states == 1.0)
    assert traj.exited_domain_at is None


def test_linear_decay_matches_analytic_solution():
    sys1 = make_system(decay, n=1, box=Box([-5.0], [5.0]))
    traj = integrate(sys1, [1.0], T=1.0, dt=0.001)
    assert traj.states[-1, 0] == pytest.approx(math.exp(-1.0), abs=1e-9)


def test_constant_disturbance_integrates_linearly():
    sys2 = make_system(lambda x: np.zeros(2))
    dist = constant_disturbance([0.5, 0.0], steps=200, dt=0.01)
    traj = integrate(sys2, [0.0, 0.0], T=2.0, dt=0.01, disturbance=dist)
    assert traj.states[-1] == pytest.approx([1.0, 0.0], abs=1e-12)


def test_rk4_order_of_convergence():
    sys1 = make_system(decay, n=1, box=Box([-5.0], [5.0]))

    def err(dt):
        traj = integrate(sys1, [1.0], T=1.0, dt=dt)
        return abs(traj.states[-1, 0] - math.exp(-1.0))

    ratio = err(0.05) / err(0.025)
    assert 8.0 <= ratio <= 32.0


def test_x0_outside_domain_rejected():
    sys2 = make_system(decay, box=Box([-1.0, -1.0], [1.0, 1.0]))
    with pytest.raises(ValueError, match="outside"):
        integrate(sys2, [2.0, 0.0], T=1.0, dt=0.1)


def test_nonfinite_state_reports_step():
    sys1 = make_system(lambda x: x * x * 1e5, n=1, box=Box([-1e300], [1e300]))
    with np.errstate(over="ignore"), pytest.raises(IntegrationError) as err:
        integrate(sys1, [1.0], T=2.0, dt=0.1)
    assert err.value.step >= 1


def test_domain_exit_recorded_then_truncated_at_inflation():
    # constant rightward flow from near the edge of [-1,1]^2
    sys2 = make_system(lambda x: np.array([1.0, 0.0]), box=Box([-1.0, -1.0], [1.0, 1.0]))
    traj = integrate(sys2, [0.9, 0.0], T=5.0, dt=0.01)
    # left the declared box at x1 > 1 (t ~ 0.1), kept going to 1.1 (inflated edge)
    assert traj.exited_domain_at is not None
    exit_state = traj.states[traj.exited_domain_at]
    assert exit_state[0] > 1.0
    assert np.all(traj.states[: traj.exited_domain_at, 0] <= 1.0 + 1e-12)
    assert len(traj.states) < 501  # truncated before the full horizon
    assert traj.states[-1, 0] == pytest.approx(1.1, abs=0.02)
    assert not traj.covers(5.0)


def test_disturbance_grid_mismatch_rejected():
    sys2 = make_system(decay)
    dist = sample_disturbance(2, 0.1, T=1.0, dt=0.01, seed=0)
    with pytest.raises(ValueError, match="dt"):
        integrate(sys2, [0.0, 0.0], T=1.0, dt=0.02, disturbance=dist)
    short = sample_disturbance(2, 0.1, T=0.5, dt=0.01, seed=0)
    with pytest.raises(ValueError, match="cover"):
        integrate(sys2, [0.0, 0.0], T=1.0, dt=0.01, disturbance=short)


# ---------------------------------------------------------------------------
# disturbance sampling


def test_zero_bound_gives_zero_samples():
    dist = sample_disturbance(3, 0.0, T=1.0, dt=0.1, seed=5)
    assert np.all(dist.samples == 0.0)


def test_fixed_magnitude_norms_exact():
    dist = sample_disturbance(4, 0.89, T=1.0, dt=0.01, distribution="fixed-magnitude", seed=1)
    norms = np.linalg.norm(dist.samples, axis=1)
    assert np.all(np.abs(norms - 0.89) <= 1e-12)


def test_uniform_ball_mean_magnitude():
    # E|d| = delta * n / (n + 1) for the uniform ball; n = 2 gives 2/3
    rng = np.random.default_rng(123)
    samples = draw_disturbance(rng, 2, 1.0, 100_000, "uniform-ball")
    mean = np.linalg.norm(samples, axis=1).mean()
    assert mean == pytest.approx(2.0 / 3.0, abs=0.01)


def test_truncated_gaussian_respects_bound():
    dist = sample_disturbance(3, 0.2, T=2.0, dt=0.01, distribution="truncated-gaussian", seed=9)
    assert np.linalg.norm(dist.samples, axis=1).max() <= 0.2


def test_all_distributions_respect_bound_exactly():
    for distribution in ("uniform-ball", "truncated-gaussian", "fixed-magnitude"):
        dist = sample_disturbance(2, 0.5, T=1.0, dt=0.01, distribution=distribution, seed=3)
        assert np.linalg.norm(dist.samples, axis=1).max() <= 0.5 * (1 + 1e-12)


def test_unknown_distribution_rejected():
    with pytest.raises(ValueError, match="unknown distribution"):
        sample_disturbance(2, 0.1, T=1.0, dt=0.1, distribution="cauchy", seed=0)


def test_disturbance_sampling_is_deterministic():
    a = sample_disturbance(3, 0.3, T=1.0, dt=0.01, seed=42)
    b = sample_disturbance(3, 0.3, T=1.0, dt=0.01, seed=42)
    assert np.array_equal(a.samples, b.samples)
    c = sample_disturbance(3, 0.3, T=1.0, dt=0.01, seed=43)
    assert not np.array_equal(a.samples, c.samples)


def test_integration_is_deterministic():
    sys2 = make_system(decay)
    dist = sample_disturbance(2, 0.2, T=1.0, dt=0.01, seed=7)
    t1 = integrate(sys2, [1.0, -1.0], T=1.0, dt=0.01, disturbance=dist)
    t2 = integrate(sys2, [1.0, -1.0], T=1.0, dt=0.01, disturbance=dist)
    assert np.array_equal(t1.states, t2.states)


def test_disturbance_construction_checks_bound():
    with pytest.raises(ValueError, match="exceeds bound"):
        DisturbanceSignal(dt=0.1, samples=np.array([[1.0, 0.0]]), bound=0.5)


# ---------------------------------------------------------------------------
# Lipschitz estimation


def test_lipschitz_linear_decay():
    sys2 = make_system(decay, box=Box([-1.0, -1.0], [1.0, 1.0]))
    est = estimate_lipschitz(sys2, sys2.domain, num_pairs=2000, seed=0)
    assert 1.0 <= est <= 1.15


def test_lipschitz_constant_field_is_zero():
    sys2 = make_system(lambda x: np.array([0.7, -0.3]), box=Box([-1.0, -1.0], [1.0, 1.0]))
    assert estimate_lipschitz(sys2, sys2.domain, num_pairs=1500, seed=1) == 0.0


def test_lipschitz_diagonal_field():
    sys2 = make_system(
        lambda x: np.array([-2.0 * x[0], -3.0 * x[1]]), box=Box([-1.0, -1.0], [1.0, 1.0])
    )
    est = estimate_lipschitz(sys2, sys2.domain, num_pairs=4000, seed=2)
    assert 3.0 <= est <= 3.35


def test_lipschitz_rejects_small_sample_and_degenerate_box():
    sys2 = make_system(decay)
    with pytest.raises(ValueError, match="1000"):
        estimate_lipschitz(sys2, BIG, num_pairs=10, seed=0)
    with pytest.raises(ValueError, match="degenerate"):
        estimate_lipschitz(sys2, Box([0.0, -1.0], [0.0, 1.0]), num_pairs=2000, seed=0)


# ---------------------------------------------------------------------------
# seminorm


def test_seminorm_identical_trajectories():
    sys2 = make_system(decay)
    t1 = integrate(sys2, [1.0, 0.0], T=1.0, dt=0.01)
    assert signal_seminorm(t1, t1, 0.0, 1.0) == 0.0


def test_seminorm_ramp_windows():
    ts = np.arange(0.0, 2.0 + 0.005, 0.01)
    zeros = Trajectory(dt=0.01, t0=0.0, states=np.zeros((len(ts), 2)))
    ramp = Trajectory(dt=0.01, t0=0.0, states=np.stack([ts, np.zeros_like(ts)], axis=1))
    assert signal_seminorm(zeros, ramp, 0.0, 2.0) == pytest.approx(2.0)
    assert signal_seminorm(zeros, ramp, 0.0, 1.0) == pytest.approx(1.0)


def test_seminorm_grid_mismatch_and_coverage():
    a = Trajectory(dt=0.01, t0=0.0, states=np.zeros((101, 2)))
    b = Trajectory(dt=0.02, t0=0.0, states=np.zeros((51, 2)))
    with pytest.raises(ValueError, match="grid"):
        signal_seminorm(a, b, 0.0, 1.0)
    c = Trajectory(dt=0.01, t0=0.0, states=np.zeros((11, 2)))
    with pytest.raises(ValueError, match="cover"):
        signal_seminorm(a, c, 0.0, 1.0)


# ---------------------------------------------------------------------------
# deviation growth bound


def test_deviation_envelope_randomized_linear_systems():
    # |phi(t) - phi_d(t)| <= delta * t * exp(L t) for a valid Lipschitz L
    rng = np.random.default_rng(77)
    for trial in range(20):
        A = rng.uniform(-1.0, 1.0, size=(2, 2))
        L = float(np.linalg.norm(A, 2))
        sysA = make_system(lambda x, A=A: A @ x)
        x0 = rng.uniform(-1.0, 1.0, size=2)
        delta = float(rng.uniform(0.0, 0.5))
        dist = sample_disturbance(2, delta, T=1.5, dt=0.005, seed=trial)
        nominal = integrate(sysA, x0, T=1.5, dt=0.005)
        perturbed = integrate(sysA, x0, T=1.5, dt=0.005, disturbance=dist)
        times = nominal.times
        deviation = np.linalg.norm(nominal.states - perturbed.states, axis=1)
        envelope = delta * times * np.exp(L * times) + 1e-6
        assert np.all(deviation <= envelope)


def test_trajectory_csv_format():
    traj = Trajectory(dt=0.5, t0=0.0, states=np.array([[1.0, 2.0], [3.0, 4.0]]))
    lines = traj.to_csv().strip().split("\n")
    assert lines[0] == "t,x1,x2"
    assert lines[1] == "0,1,2"
    assert lines[2] == "0.5,3,4"
