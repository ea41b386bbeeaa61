"""Closed-loop vector fields, fixed-step integration, bounded disturbances,
and sampled Lipschitz-constant estimation.

Integration is classical 4th-order Runge-Kutta on a uniform grid so that
nominal and perturbed runs share sample times; disturbances are held
piecewise-constant over each step and enter every stage evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

DOMAIN_INFLATION = 0.10  # per-axis inflation before integration hard-stops


class IntegrationError(RuntimeError):
    """Non-finite state encountered; carries the step index."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with per-axis lower/upper bounds."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if np.any(hi < lo):
            raise ValueError("box upper bound below lower bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def inflate(self, fraction: float) -> "Box":
        center = 0.5 * (self.lower + self.upper)
        half = 0.5 * (self.upper - self.lower)
        return Box(center - half * (1.0 + fraction), center + half * (1.0 + fraction))

    def clip(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)


@dataclass(frozen=True)
class ClosedLoopSystem:
    """A fixed controller pre-composed into its plant: x' = f_cl(x) on `domain`."""

    n: int
    domain: Box
    f_cl: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __post_init__(self):
        if self.domain.dim != self.n:
            raise ValueError("domain dimension does not match state dimension")

    def field(self, x) -> np.ndarray:
        f = np.asarray(self.f_cl(np.asarray(x, dtype=float)), dtype=float)
        if f.shape != (self.n,):
            raise ValueError(f"vector field returned shape {f.shape}, expected ({self.n},)")
        return f


@dataclass(frozen=True)
class DisturbanceSignal:
    """Piecewise-constant disturbance: samples[k] acts on [k*dt, (k+1)*dt)."""

    dt: float
    samples: np.ndarray
    bound: float

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim != 2:
            raise ValueError("disturbance samples must be a (steps, n) array")
        object.__setattr__(self, "samples", arr)
        if self.bound < 0:
            raise ValueError("disturbance bound must be nonnegative")
        norms = np.linalg.norm(arr, axis=1)
        if arr.size and norms.max() > self.bound * (1.0 + 1e-9) + 1e-300:
            raise ValueError(
                f"disturbance sample norm {norms.max():.17g} exceeds bound {self.bound:.17g}"
            )

    @property
    def num_steps(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled state signal; sample k is at time t0 + k*dt.

    `exited_domain_at` is the first sample index outside the declared domain
    box (integration continues inside a 10% inflated box and truncates on
    leaving it), letting callers audit the horizon-coverage assumption per run
    instead of assuming it.
    """

    dt: float
    t0: float
    states: np.ndarray
    exited_domain_at: Optional[int] = None

    def __post_init__(self):
        arr = np.asarray(self.states, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("states must be a nonempty (samples, n) array")
        object.__setattr__(self, "states", arr)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.states))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self.states) - 1)

    def covers(self, t: float) -> bool:
        return t <= self.t_end + 0.5 * self.dt

    def to_csv(self) -> str:
        n = self.states.shape[1]
        lines = ["t," + ",".join(f"x{i + 1}" for i in range(n))]
        for k, row in enumerate(self.states):
            t = self.t0 + k * self.dt
            lines.append(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"


def _num_steps(T: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    return int(math.floor(T / dt + 1e-9))


def integrate(
    system: ClosedLoopSystem,
    x0,
    T: float,
    dt: float,
    disturbance: Optional[DisturbanceSignal] = None,
) -> Trajectory:
    """Integrate x' = f_cl(x) + d from x0 over [0, T] with fixed-step RK4.

    The disturbance (if any) must share the integration step and cover the
    horizon; its step value is added to the field at every RK4 stage.  Returns
    floor(T/dt) + 1 samples.  The first sample leaving the declared domain is
    recorded, and integration stops once the state leaves the domain inflated
    by 10% per axis (the exit sample is kept, later ones are dropped).
    """
    x = np.asarray(x0, dtype=float)
    if x.shape != (system.n,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({system.n},)")
    if not system.domain.contains(x, tol=1e-12):
        raise ValueError(f"x0 {x.tolist()} outside the system domain")
    steps = _num_steps(T, dt)
    if disturbance is not None:
        if abs(disturbance.dt - dt) > 1e-12 * max(1.0, dt):
            raise ValueError("disturbance dt does not match integration dt")
        if disturbance.num_steps < steps:
            raise ValueError("disturbance does not cover the integration horizon")
    inflated = system.domain.inflate(DOMAIN_INFLATION)
    zero = np.zeros(system.n)
    system.field(x)  # validate shape/finiteness once; the loop uses f_cl raw

    states = np.empty((steps + 1, system.n))
    states[0] = x
    exited: Optional[int] = None
    last = steps
    f = system.f_cl
    for k in range(steps):
        d = disturbance.samples[k] if disturbance is not None else zero
        k1 = f(x) + d
        k2 = f(x + (0.5 * dt) * k1) + d
        k3 = f(x + (0.5 * dt) * k2) + d
        k4 = f(x + dt * k3) + d
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationError("non-finite state during integration", k + 1)
        states[k + 1] = x
        if exited is None and not system.domain.contains(x, tol=1e-12):
            exited = k + 1
        if not inflated.contains(x, tol=1e-12):
            last = k + 1
            break
    return Trajectory(dt=dt, t0=0.0, states=states[: last + 1], exited_domain_at=exited)


# ---------------------------------------------------------------------------
# Disturbance sampling

DISTRIBUTIONS = ("uniform-ball", "truncated-gaussian", "fixed-magnitude")


def _unit_directions(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    dirs = rng.standard_normal((count, n))
    norms = np.linalg.norm(dirs, axis=1)
    while np.any(norms < 1e-300):  # pragma: no cover - probability zero
        bad = norms < 1e-300
        dirs[bad] = rng.standard_normal((int(bad.sum()), n))
        norms = np.linalg.norm(dirs, axis=1)
    return dirs / norms[:, None]


def draw_disturbance(
    rng: np.random.Generator, n: int, delta: float, steps: int, distribution: str
) -> np.ndarray:
    """One independent draw per step; every row norm is <= delta."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if distribution not in DISTRIBUTIONS:
        raise ValueError(f"unknown distribution {distribution!r}; use one of {DISTRIBUTIONS}")
    if delta == 0.0 or steps == 0:
        return np.zeros((steps, n))
    if distribution == "uniform-ball":
        dirs = _unit_directions(rng, steps, n)
        radii = delta * rng.random(steps) ** (1.0 / n)
        return dirs * radii[:, None]
    if distribution == "truncated-gaussian":
        out = rng.normal(scale=delta / 3.0, size=(steps, n))
        norms = np.linalg.norm(out, axis=1)
        while np.any(norms > delta):
            bad = norms > delta
            out[bad] = rng.normal(scale=delta / 3.0, size=(int(bad.sum()), n))
            norms = np.linalg.norm(out, axis=1)
        return out
    # fixed-magnitude
    return delta * _unit_directions(rng, steps, n)


def sample_disturbance(
    n: int, delta: float, T: float, dt: float, distribution: str = "uniform-ball", seed: int = 0
) -> DisturbanceSignal:
    """Seeded bounded disturbance covering [0, T] at step dt.

    uniform-ball draws uniformly inside the delta-ball, truncated-gaussian
    rejection-samples a per-component normal with scale delta/3, and
    fixed-magnitude puts every sample exactly on the delta-sphere.
    """
    steps = _num_steps(T, dt)
    rng = np.random.default_rng(seed)
    samples = draw_disturbance(rng, n, delta, steps, distribution)
    return DisturbanceSignal(dt=dt, samples=samples, bound=delta)


def constant_disturbance(vector, steps: int, dt: float, bound: Optional[float] = None) -> DisturbanceSignal:
    """A single vector repeated for every step."""
    v = np.asarray(vector, dtype=float)
    b = float(np.linalg.norm(v)) if bound is None else bound
    return DisturbanceSignal(dt=dt, samples=np.tile(v, (steps, 1)), bound=b)


# ---------------------------------------------------------------------------


def estimate_lipschitz(
    system: ClosedLoopSystem, box: Box, num_pairs: int = 2000, seed: int = 0
) -> float:
    """Sampled estimate of the field's Lipschitz constant on `box`.

    Maximizes the difference quotient over a seeded mix of far pairs and
    short-offset pairs (offset about 1e-4 of the box diameter), then inflates
    by 1.1 as a declared safety factor.  This is an estimate, not a
    certificate; reports using it must flag it as such.
    """
    if num_pairs < 1000:
        raise ValueError("num_pairs must be at least 1000")
    if np.any(box.upper <= box.lower):
        raise ValueError("degenerate box: every axis needs positive extent")
    rng = np.random.default_rng(seed)
    n = box.dim
    half = num_pairs // 2
    best = 0.0
    xs = rng.uniform(box.lower, box.upper, size=(num_pairs, n))
    far = rng.uniform(box.lower, box.upper, size=(half, n))
    offs = 1e-4 * box.diameter * _unit_directions(rng, num_pairs - half, n)
    for i in range(num_pairs):
        x = xs[i]
        z = far[i] if i < half else box.clip(xs[i] + offs[i - half])
        dist = float(np.linalg.norm(x - z))
        if dist < 1e-300:
            continue
        ratio = float(np.linalg.norm(system.field(x) - system.field(z))) / dist
        if ratio > best:
            best = ratio
    return 1.1 * best


def signal_seminorm(s1: Trajectory, s2: Trajectory, a: float, b: float) -> float:
    """max over grid samples in [a, b] of the pointwise two-norm gap."""
    if abs(s1.dt - s2.dt) > 1e-12 * max(1.0, s1.dt) or abs(s1.t0 - s2.t0) > 1e-12:
        raise ValueError("trajectories are on different grids")
    if b < a:
        raise ValueError("window must satisfy a <= b")
    k0 = int(round((a - s1.t0) / s1.dt))
    k1 = int(round((b - s1.t0) / s1.dt))
    if k0 < 0 or k1 >= min(len(s1.states), len(s2.states)):
        raise ValueError(f"trajectories do not cover [{a:g}, {b:g}]")
    diff = s1.states[k0 : k1 + 1] - s2.states[k0 : k1 + 1]
    return float(np.linalg.norm(diff, axis=1).max())
