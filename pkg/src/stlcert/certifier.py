"""Disturbance-bound certification.

Two routes produce a per-subspecification two-norm disturbance bound:

* invariance route ("theorem1"): for an Always clause starting at time 0, the
  largest disturbance norm each member margin can absorb while its decrease is
  held above -alpha(margin), minimized over the clause's feasible region;
* deviation route ("theorem2"): the worst nominal robustness over declared
  initial states, divided by the Lipschitz growth envelope of trajectory
  deviation over the window.

The composite bound is the minimum over subspecifications, and the certified
start region intersects the feasible regions of the invariance-route clauses.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .dynamics import Box, ClosedLoopSystem, integrate
from .spec_lang import (
    Always,
    And,
    ConjunctiveClause,
    Eventually,
    PredicateDef,
    SpecNode,
    Until,
    decompose,
    format_spec,
    predicates_of,
    robustness,
)

GRAD_ZERO_TOL = 1e-12


class CertifierError(Exception):
    """Base class for certification failures."""


class EmptyRegionError(CertifierError):
    """No grid point satisfies the clause: the feasible region is empty on the
    grid (distinct from a negative, infeasible bound)."""


class MissingAlphaError(CertifierError):
    """A clause predicate has no class-K-infinity gain assigned."""


@dataclass(frozen=True)
class ClassKappaInf:
    """Extended class-K-infinity function: zero at zero, strictly increasing,
    defined on all of R.  Families: linear gain*r and cubic gain*r**3."""

    family: str
    gain: float

    def __post_init__(self):
        if self.family not in ("linear", "cubic"):
            raise ValueError(f"unknown family {self.family!r}; use 'linear' or 'cubic'")
        if not self.gain > 0:
            raise ValueError("gain must be positive")

    def __call__(self, r: float) -> float:
        return self.gain * r if self.family == "linear" else self.gain * r**3

    def __str__(self):
        return f"{self.family}:{self.gain:g}"

    @classmethod
    def parse(cls, text: str) -> "ClassKappaInf":
        family, _, gain = text.partition(":")
        return cls(family.strip(), float(gain) if gain else 1.0)


@dataclass(frozen=True)
class GridSampler:
    """Full Cartesian grid over a box, optionally filtered by a clause.

    A one-point axis contributes the axis midpoint.  Iteration order is row
    major over axes, so min-reductions are reproducible with ties going to the
    lowest grid index.
    """

    box: Box
    points_per_axis: tuple[int, ...]
    clause: Optional[ConjunctiveClause] = None

    def __post_init__(self):
        counts = self.points_per_axis
        if isinstance(counts, int):
            counts = (counts,) * self.box.dim
        counts = tuple(int(c) for c in counts)
        if len(counts) != self.box.dim:
            raise ValueError("points_per_axis length does not match box dimension")
        if any(c < 1 for c in counts):
            raise ValueError("points_per_axis entries must be >= 1")
        object.__setattr__(self, "points_per_axis", counts)

    def axis_values(self, i: int) -> np.ndarray:
        lo, hi, c = self.box.lower[i], self.box.upper[i], self.points_per_axis[i]
        if c == 1:
            return np.array([0.5 * (lo + hi)])
        return np.linspace(lo, hi, c)

    @property
    def total_points(self) -> int:
        return int(np.prod(self.points_per_axis))

    def points(self) -> np.ndarray:
        axes = [self.axis_values(i) for i in range(self.box.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        if self.clause is not None and self.clause.predicates:
            keep = np.fromiter((self.clause.holds(p) for p in pts), bool, len(pts))
            pts = pts[keep]
        return pts

    def spacings(self) -> np.ndarray:
        out = np.zeros(self.box.dim)
        for i, c in enumerate(self.points_per_axis):
            if c > 1:
                out[i] = (self.box.upper[i] - self.box.lower[i]) / (c - 1)
        return out


def _broadcast_counts(counts: Union[int, tuple], dim: int) -> tuple[int, ...]:
    if isinstance(counts, int):
        return (counts,) * dim
    return tuple(int(c) for c in counts)


@dataclass
class CertConfig:
    """Certifier knobs: gain assignment, Lipschitz constants, grids, and step.

    `l_rho` is the Lipschitz constant of the robustness measure with respect
    to the signal seminorm; it must be supplied (for two-norm distance
    predicates a bound on the margin gradients is the documented guidance).
    `l_f` may be a sampling estimate; reports flag it as such.
    """

    alpha_map: dict[str, ClassKappaInf] = field(default_factory=dict)
    l_f: float = 1.0
    l_rho: float = 1.0
    points_per_axis: Union[int, tuple[int, ...]] = 21
    init_points_per_axis: Union[int, tuple[int, ...]] = 1
    dt: float = 1e-3
    refine: bool = True
    default_alpha: Optional[ClassKappaInf] = field(
        default_factory=lambda: ClassKappaInf("linear", 1.0)
    )

    def __post_init__(self):
        if not self.l_f > 0:
            raise ValueError("l_f must be positive")
        if not self.l_rho > 0:
            raise ValueError("l_rho must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def alpha_for(self, pred: PredicateDef) -> ClassKappaInf:
        """Gain lookup: exact display name ('!mu'), then base name, then default."""
        key = str(pred)
        if key in self.alpha_map:
            return self.alpha_map[key]
        if pred.name in self.alpha_map:
            return self.alpha_map[pred.name]
        if self.default_alpha is not None:
            return self.default_alpha
        raise MissingAlphaError(f"no class-K gain assigned for predicate {key!r}")


def gradient(pred: PredicateDef, x) -> np.ndarray:
    """Gradient of the predicate's effective margin at x.

    Uses the analytic gradient when available (sign-flipped for negated
    atoms); otherwise central finite differences with per-axis step
    1e-6 * max(1, |x_i|).  An analytic evaluator may return None at isolated
    non-smooth points to request the fallback.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("state is not finite")
    if pred.grad_h is not None:
        g = pred.grad_h(x)
        if g is not None:
            g = np.asarray(g, dtype=float)
            if not np.all(np.isfinite(g)):
                raise ValueError(f"gradient of {pred} is not finite at {x.tolist()}")
            return -g if pred.negated else g
    out = np.empty_like(x)
    for i in range(len(x)):
        h = 1e-6 * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        out[i] = (pred.evaluate(xp) - pred.evaluate(xm)) / (2.0 * h)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"finite-difference gradient of {pred} is not finite at {x.tolist()}")
    return out


def gradient_mismatch(pred: PredicateDef, x) -> Optional[float]:
    """Relative gap between analytic and finite-difference gradients, or None
    when no analytic gradient applies at x."""
    if pred.grad_h is None:
        return None
    x = np.asarray(x, dtype=float)
    ga = pred.grad_h(x)
    if ga is None:
        return None
    ga = np.asarray(ga, dtype=float)
    if pred.negated:
        ga = -ga
    spare = PredicateDef(pred.name, pred.h, None, pred.negated)
    gf = gradient(spare, x)
    return float(np.linalg.norm(ga - gf) / max(1.0, np.linalg.norm(ga)))


def margin_e(
    x, pred: PredicateDef, alpha: ClassKappaInf, system: ClosedLoopSystem
) -> float:
    """Largest disturbance norm e whose worst-case alignment still keeps the
    margin's decrease above -alpha(margin) at x.

    The constraint is affine and decreasing in e, so the maximum is
    (grad . f_cl + alpha(h)) / |grad|.  When the gradient vanishes the
    constraint does not involve e at all: +inf if it holds, else -inf.
    """
    x = np.asarray(x, dtype=float)
    h = pred.evaluate(x)
    if not math.isfinite(h):
        raise ValueError(f"predicate {pred} is not finite at {x.tolist()}")
    g = gradient(pred, x)
    f = system.field(x)
    if not np.all(np.isfinite(f)):
        raise ValueError(f"vector field is not finite at {x.tolist()}")
    ng = float(np.linalg.norm(g))
    num = float(g @ f) + alpha(h)
    if ng < GRAD_ZERO_TOL:
        return math.inf if num >= 0.0 else -math.inf
    return num / ng


@dataclass
class InvarianceBound:
    bound: float
    argmin_state: Optional[np.ndarray]
    binding_predicate: Optional[str]
    grid_points: int
    warnings: list[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.bound >= 0.0


def _point_margin(
    x, preds, alphas, system
) -> tuple[float, Optional[PredicateDef]]:
    best = math.inf
    binding = None
    for p in preds:
        m = margin_e(x, p, alphas[p], system)
        if m < best:
            best = m
            binding = p
    return best, binding


def compute_delta0(
    clause: ConjunctiveClause,
    horizon_check: tuple[float, float],
    system: ClosedLoopSystem,
    config: CertConfig,
) -> InvarianceBound:
    """Invariance-route bound for an Always clause with window starting at 0.

    Minimizes the per-point margin over the grid restricted to the clause's
    feasible region inside the domain; optional coordinate-descent refinement
    (step halving, 50 iterations) polishes the grid argmin.  A negative value
    is reported as infeasible, never clamped.
    """
    a, b = float(horizon_check[0]), float(horizon_check[1])
    if abs(a) > 1e-12:
        raise ValueError("invariance route requires a window starting at 0")
    if not b > 0:
        raise ValueError("window end must be positive")
    preds = predicates_of(clause)
    alphas = {p: config.alpha_for(p) for p in preds}
    grid = GridSampler(
        system.domain, _broadcast_counts(config.points_per_axis, system.n), clause
    )
    pts = grid.points()
    if len(pts) == 0:
        raise EmptyRegionError(
            f"clause {clause} has no feasible point on the {grid.total_points}-point grid"
        )
    best = math.inf
    argmin = None
    binding: Optional[PredicateDef] = None
    for x in pts:
        m, p = _point_margin(x, preds, alphas, system)
        if m < best:
            best, argmin, binding = m, x, p
    warnings = []
    if config.refine and argmin is not None and math.isfinite(best):
        best, argmin, binding = _refine_minimum(
            argmin, best, binding, preds, alphas, system, clause, grid.spacings()
        )
    for p in preds:
        if argmin is not None:
            gap = gradient_mismatch(p, argmin)
            if gap is not None and gap > 1e-4:
                warnings.append(
                    f"analytic/finite-difference gradient mismatch {gap:.3g} "
                    f"for {p} at the minimizer"
                )
    return InvarianceBound(
        bound=best,
        argmin_state=argmin,
        binding_predicate=str(binding) if binding is not None else None,
        grid_points=len(pts),
        warnings=warnings,
    )


def _refine_minimum(x0, v0, b0, preds, alphas, system, clause, spacings, iterations=50):
    cur, val, binding = np.asarray(x0, dtype=float).copy(), v0, b0
    steps = spacings.copy()
    steps[steps == 0.0] = 0.0
    for _ in range(iterations):
        improved = False
        for i in range(len(cur)):
            if steps[i] == 0.0:
                continue
            for s in (steps[i], -steps[i]):
                cand = cur.copy()
                cand[i] += s
                if not system.domain.contains(cand, tol=1e-15):
                    continue
                if not clause.holds(cand):
                    continue
                m, p = _point_margin(cand, preds, alphas, system)
                if m < val:
                    cur, val, binding = cand, m, p
                    improved = True
        if not improved:
            steps *= 0.5
    return val, cur, binding


@dataclass
class NominalFloor:
    value: float
    argmin_state: Optional[np.ndarray]
    fairness_violations: int
    grid_points: int

    @property
    def feasible(self) -> bool:
        return self.value >= 0.0


def compute_capital_delta(
    subspec: SpecNode,
    system: ClosedLoopSystem,
    config: CertConfig,
    init_region: Box,
) -> NominalFloor:
    """Worst nominal robustness over the declared initial-state region.

    Integrates the undisturbed system over the subspecification's window from
    every grid point of `init_region` and takes the minimum robustness.  A
    trajectory that leaves the domain before the window end scores -inf and is
    counted as a horizon-coverage (fairness) violation.
    """
    if isinstance(subspec, And):
        raise ValueError("expected a single temporal subspecification, not a conjunction")
    if not isinstance(subspec, (Always, Eventually, Until)):
        raise TypeError(f"not a temporal node: {subspec!r}")
    b = subspec.horizon
    grid = GridSampler(init_region, _broadcast_counts(config.init_points_per_axis, system.n))
    best = math.inf
    argmin = None
    violations = 0
    pts = grid.points()
    for x0 in pts:
        if not system.domain.contains(x0, tol=1e-12):
            raise ValueError(f"initial grid point {x0.tolist()} outside the system domain")
        traj = integrate(system, x0, b, config.dt)
        exited_early = traj.exited_domain_at is not None and (
            traj.exited_domain_at * config.dt < b
        )
        if not traj.covers(b) or exited_early:
            violations += 1
            value = -math.inf
        else:
            value = robustness(subspec, traj, 0.0)
        if value < best:
            best, argmin = value, x0
    if violations == len(pts):
        raise CertifierError(
            "every initial grid point leaves the domain before the window end"
        )
    return NominalFloor(
        value=best, argmin_state=argmin, fairness_violations=violations, grid_points=len(pts)
    )


def compute_delta1(delta_cap: float, l_rho: float, b: float, l_f: float) -> float:
    """Deviation-route bound: delta_cap / (l_rho * b * exp(l_f * b)).

    A negative nominal floor propagates to a negative (infeasible) bound.
    """
    if not l_rho > 0:
        raise ValueError("l_rho must be positive")
    if not b > 0:
        raise ValueError("b must be positive")
    if l_f < 0:
        raise ValueError("l_f must be nonnegative")
    return delta_cap / (l_rho * b * math.exp(l_f * b))


@dataclass
class SubspecResult:
    subspec: str
    method: str  # "theorem1" | "theorem2"
    bound: float
    argmin_state: Optional[list[float]]
    binding_predicate: Optional[str] = None
    nominal_floor: Optional[float] = None
    fairness_violations: int = 0

    @property
    def feasible(self) -> bool:
        return self.bound >= 0.0

    def to_json_dict(self) -> dict:
        return {
            "subspec": self.subspec,
            "method": self.method,
            "bound": self.bound,
            "argmin_state": self.argmin_state,
            "binding_predicate": self.binding_predicate,
            "nominal_floor": self.nominal_floor,
            "fairness_violations": self.fairness_violations,
            "feasible": self.feasible,
        }


@dataclass
class CertificateReport:
    """Per-subspecification bounds, their composite, and the certified region.

    `region` is the conjunction of invariance-route clauses (empty clause when
    there are none, meaning the whole domain), intersected with the domain box
    through `membership_C_psi`.
    """

    per_subspec: list[SubspecResult]
    delta_T: float
    feasible: bool
    region: ConjunctiveClause
    domain: Box
    config_echo: dict
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "per_subspec": [r.to_json_dict() for r in self.per_subspec],
            "delta_T": self.delta_T,
            "feasible": self.feasible,
            "region": str(self.region),
            "domain": {
                "lower": self.domain.lower.tolist(),
                "upper": self.domain.upper.tolist(),
            },
            "config": self.config_echo,
        }


def certify(
    spec: SpecNode,
    system: ClosedLoopSystem,
    config: CertConfig,
    init_region: Box,
) -> CertificateReport:
    """Certify a full specification: route each conjunct, compose by min.

    Always-from-0 conjuncts take the invariance route; everything else takes
    the deviation route through the nominal-robustness floor.  Any infeasible
    conjunct marks the whole report infeasible while per-conjunct values are
    still listed.
    """
    started = time.perf_counter()
    results: list[SubspecResult] = []
    region_preds: list[PredicateDef] = []
    warnings: list[str] = []
    for leaf in decompose(spec):
        if isinstance(leaf, Always) and abs(leaf.interval[0]) <= 1e-12:
            inv = compute_delta0(leaf.clause, leaf.interval, system, config)
            warnings.extend(inv.warnings)
            results.append(
                SubspecResult(
                    subspec=format_spec(leaf),
                    method="theorem1",
                    bound=inv.bound,
                    argmin_state=None
                    if inv.argmin_state is None
                    else [float(v) for v in inv.argmin_state],
                    binding_predicate=inv.binding_predicate,
                )
            )
            for p in predicates_of(leaf.clause):
                if p not in region_preds:
                    region_preds.append(p)
        else:
            floor = compute_capital_delta(leaf, system, config, init_region)
            bound = compute_delta1(floor.value, config.l_rho, leaf.horizon, config.l_f)
            results.append(
                SubspecResult(
                    subspec=format_spec(leaf),
                    method="theorem2",
                    bound=bound,
                    argmin_state=None
                    if floor.argmin_state is None
                    else [float(v) for v in floor.argmin_state],
                    nominal_floor=floor.value,
                    fairness_violations=floor.fairness_violations,
                )
            )
    delta_T = min(r.bound for r in results)
    feasible = all(r.feasible for r in results)
    config_echo = {
        "points_per_axis": list(_broadcast_counts(config.points_per_axis, system.n)),
        "init_points_per_axis": list(_broadcast_counts(config.init_points_per_axis, system.n)),
        "alpha": {name: str(a) for name, a in sorted(config.alpha_map.items())},
        "default_alpha": None if config.default_alpha is None else str(config.default_alpha),
        "l_f": config.l_f,
        "l_rho": config.l_rho,
        "dt": config.dt,
        "refine": config.refine,
    }
    diagnostics = {
        "runtime_s": time.perf_counter() - started,
        "state_grid_points": int(
            np.prod(_broadcast_counts(config.points_per_axis, system.n))
        ),
        "init_grid_points": int(
            np.prod(_broadcast_counts(config.init_points_per_axis, system.n))
        ),
        "l_f": config.l_f,
        "l_rho": config.l_rho,
        "warnings": warnings,
    }
    return CertificateReport(
        per_subspec=results,
        delta_T=delta_T,
        feasible=feasible,
        region=ConjunctiveClause(tuple(region_preds)),
        domain=system.domain,
        config_echo=config_echo,
        diagnostics=diagnostics,
    )


def membership_C_psi(report: CertificateReport, x) -> bool:
    """True iff x lies in the domain box and every region predicate is >= 0."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("state is not finite")
    return report.domain.contains(x, tol=1e-12) and report.region.holds(x)
