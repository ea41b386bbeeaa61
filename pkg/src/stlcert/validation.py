"""Randomized and adversarial validation of certified disturbance bounds."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .certifier import GRAD_ZERO_TOL, ClassKappaInf, gradient, margin_e
from .dynamics import (
    Box,
    ClosedLoopSystem,
    DisturbanceSignal,
    Trajectory,
    constant_disturbance,
    integrate,
    sample_disturbance,
)
from .spec_lang import ConjunctiveClause, SpecNode, horizon, predicates_of, robustness


@dataclass
class TrialStats:
    """Aggregate of a randomized-trial batch.

    A violation is strictly rho < 0; `near_boundary` separately counts trials
    with |rho| below the grid tolerance so borderline outcomes are visible
    without blurring the raw violation count.
    """

    num_trials: int
    num_violations: int
    robustness_values: list[float]
    min_robustness: float
    seed: int
    delta_used: float
    fairness_violations: int
    near_boundary: int
    near_boundary_tol: float
    exited_early: list[bool] = field(default_factory=list)
    trial_seeds: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(self.robustness_values) != self.num_trials:
            raise ValueError("one robustness value per trial required")
        if self.num_violations != sum(1 for r in self.robustness_values if r < 0):
            raise ValueError("num_violations inconsistent with robustness_values")

    def to_csv(self) -> str:
        lines = ["trial,seed,rho,exited_early"]
        for i, (rho, ex) in enumerate(zip(self.robustness_values, self.exited_early)):
            lines.append(f"{i},{self.trial_seeds[i]},{rho:.17g},{int(ex)}")
        return "\n".join(lines) + "\n"

    def summary_dict(self) -> dict:
        return {
            "num_trials": self.num_trials,
            "num_violations": self.num_violations,
            "min_robustness": self.min_robustness,
            "fairness_violations": self.fairness_violations,
            "near_boundary": self.near_boundary,
            "near_boundary_tol": self.near_boundary_tol,
            "seed": self.seed,
            "delta_used": self.delta_used,
        }


def _worker_count(threads: Optional[int]) -> int:
    if threads is not None:
        return max(1, int(threads))
    return max(1, int(os.environ.get("STLCERT_THREADS", "1")))


def run_trials(
    system: ClosedLoopSystem,
    spec: SpecNode,
    x0_source: Union[np.ndarray, Box],
    delta: float,
    num_trials: int,
    distribution: str = "uniform-ball",
    dt: float = 1e-3,
    seed: int = 0,
    constant_per_run: bool = False,
    horizon_T: Optional[float] = None,
    threads: Optional[int] = None,
    near_tol: Optional[float] = None,
) -> TrialStats:
    """Integrate `num_trials` disturbed runs and monitor each one.

    Trial i draws its start (fixed vector, or uniform in a box from a stream
    decorrelated from the disturbance stream) and its disturbance with seed
    `seed + i`, so results are bit-identical for any thread count.  A run that
    cannot cover the monitoring horizon scores -inf and counts as a fairness
    violation.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if num_trials < 1:
        raise ValueError("num_trials must be at least 1")
    T = horizon(spec)
    if horizon_T is not None:
        if horizon_T < T:
            raise ValueError(
                f"configured horizon {horizon_T:g} is shorter than the "
                f"specification horizon {T:g}"
            )
        T = horizon_T
    tol = dt if near_tol is None else near_tol
    fixed_x0 = None if isinstance(x0_source, Box) else np.asarray(x0_source, dtype=float)

    def task(i: int) -> tuple[float, bool]:
        trial_seed = seed + i
        if fixed_x0 is not None:
            x0 = fixed_x0
        else:
            rng_x0 = np.random.default_rng([trial_seed, 1])
            x0 = rng_x0.uniform(x0_source.lower, x0_source.upper)
        dist = sample_disturbance(system.n, delta, T, dt, distribution, seed=trial_seed)
        if constant_per_run:
            dist = DisturbanceSignal(
                dt=dt, samples=np.tile(dist.samples[0], (dist.num_steps, 1)), bound=delta
            )
        traj = integrate(system, x0, T, dt, dist)
        exited = traj.exited_domain_at is not None
        if not traj.covers(T):
            return -math.inf, True
        return robustness(spec, traj, 0.0), exited

    workers = _worker_count(threads)
    if workers == 1:
        results = [task(i) for i in range(num_trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(task, range(num_trials)))
    rhos = [r for r, _ in results]
    exited = [e for _, e in results]
    return TrialStats(
        num_trials=num_trials,
        num_violations=sum(1 for r in rhos if r < 0),
        robustness_values=rhos,
        min_robustness=min(rhos),
        seed=seed,
        delta_used=delta,
        fairness_violations=sum(1 for e in exited if e),
        near_boundary=sum(1 for r in rhos if abs(r) < tol),
        near_boundary_tol=tol,
        exited_early=exited,
        trial_seeds=[seed + i for i in range(num_trials)],
    )


@dataclass
class AdversarialResult:
    min_h_per_predicate: dict[str, float]
    passed: bool
    tol: float
    trajectory: Trajectory


def adversarial_integrate(
    system: ClosedLoopSystem,
    clause: ConjunctiveClause,
    delta: float,
    x0,
    T: float,
    dt: float,
    alpha_map: Optional[dict[str, ClassKappaInf]] = None,
    require_feasible_start: bool = True,
) -> AdversarialResult:
    """Integrate under the worst-aligned state-feedback disturbance.

    At each step the member predicate with the smallest absorbable-disturbance
    margin is re-selected and pushed against along its descent direction at
    full magnitude delta.  Pass iff every member margin stays above -tol with
    tol = 10 * dt * (max field norm seen + delta).
    """
    preds = predicates_of(clause)
    if not preds and delta > 0:
        raise ValueError("clause has no predicates to stress")
    default = ClassKappaInf("linear", 1.0)
    alphas = {
        p: (alpha_map or {}).get(str(p), (alpha_map or {}).get(p.name, default))
        for p in preds
    }
    x = np.asarray(x0, dtype=float)
    if require_feasible_start and not clause.holds(x):
        raise ValueError("x0 does not satisfy the clause")
    steps = int(math.floor(T / dt + 1e-9))
    states = np.empty((steps + 1, system.n))
    states[0] = x
    min_h = {str(p): p.evaluate(x) for p in preds}
    f_max = float(np.linalg.norm(system.field(x)))
    f = system.f_cl
    for k in range(steps):
        if delta == 0.0 or not preds:
            d = np.zeros(system.n)
        else:
            binding = min(preds, key=lambda p: margin_e(x, p, alphas[p], system))
            g = gradient(binding, x)
            ng = float(np.linalg.norm(g))
            if ng < GRAD_ZERO_TOL:
                raise RuntimeError(
                    f"gradient of binding predicate {binding} vanished at step {k}"
                )
            d = -delta * g / ng
        k1 = f(x) + d
        k2 = f(x + (0.5 * dt) * k1) + d
        k3 = f(x + (0.5 * dt) * k2) + d
        k4 = f(x + dt * k3) + d
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise RuntimeError(f"non-finite state in adversarial run at step {k + 1}")
        states[k + 1] = x
        f_max = max(f_max, float(np.linalg.norm(system.field(x))))
        for p in preds:
            key = str(p)
            min_h[key] = min(min_h[key], p.evaluate(x))
    tol = 10.0 * dt * (f_max + delta)
    passed = all(v >= -tol for v in min_h.values())
    return AdversarialResult(
        min_h_per_predicate=min_h,
        passed=passed,
        tol=tol,
        trajectory=Trajectory(dt=dt, t0=0.0, states=states),
    )


def adversarial_check(
    system: ClosedLoopSystem,
    clause: ConjunctiveClause,
    delta: float,
    x0,
    T: float,
    dt: float,
    alpha_map: Optional[dict[str, ClassKappaInf]] = None,
) -> AdversarialResult:
    """Worst-case stress of an invariance certificate from a feasible start."""
    return adversarial_integrate(system, clause, delta, x0, T, dt, alpha_map)


def gronwall_check(
    system: ClosedLoopSystem,
    x0,
    delta: float,
    num_trials: int,
    T: float,
    dt: float,
    L: float,
    seed: int = 0,
    tol: float = 1e-6,
    distribution: str = "uniform-ball",
) -> bool:
    """Check the deviation envelope delta * t * exp(L*t) over sampled runs.

    Trial 0 uses a constant disturbance aligned with the initial flow (the
    profile that stresses the envelope hardest for expanding systems); the
    remaining trials are seeded random draws.  True iff every deviation sample
    stays within the envelope plus `tol`.
    """
    x0 = np.asarray(x0, dtype=float)
    nominal = integrate(system, x0, T, dt)
    times = nominal.times
    with np.errstate(over="ignore"):  # large L makes the envelope overflow to inf
        envelope = delta * times * np.exp(L * times) + tol
    f0 = system.field(x0)
    nf0 = float(np.linalg.norm(f0))
    if nf0 > 1e-12:
        aligned = f0 / nf0
    else:
        aligned = np.zeros(system.n)
        aligned[0] = 1.0
    steps = len(nominal.states) - 1
    for i in range(num_trials):
        if i == 0:
            dist = constant_disturbance(delta * aligned, steps, dt, bound=delta)
        else:
            dist = sample_disturbance(system.n, delta, T, dt, distribution, seed=seed + i)
        perturbed = integrate(system, x0, T, dt, dist)
        m = min(len(nominal.states), len(perturbed.states))
        deviation = np.linalg.norm(nominal.states[:m] - perturbed.states[:m], axis=1)
        if np.any(deviation > envelope[:m]):
            return False
    return True
