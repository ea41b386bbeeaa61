"""Bundled example systems: a saturated-proportional planar integrator driving
to a goal disc, and a wheeled inverted pendulum ("segway") under an embedded
LQR gain, each packaged with its predicates, specification text, and default
certification settings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .certifier import CertConfig, ClassKappaInf
from .dynamics import Box, ClosedLoopSystem
from .spec_lang import PredicateDef, parse_spec


@dataclass(frozen=True)
class ModelBundle:
    """A system plus everything needed to certify and validate it by name."""

    system: ClosedLoopSystem
    registry: dict[str, PredicateDef]
    spec_text: str
    config: CertConfig
    x0: np.ndarray
    init_region: Box
    notes: tuple[str, ...] = ()
    plot_circles: tuple = ()  # ((center, radius, label), ...) hints for overlays

    def spec(self):
        return parse_spec(self.spec_text, self.registry)


# ---------------------------------------------------------------------------
# Reusable predicate families (also the building blocks for config-defined
# predicates on external linear models).


def make_ball_predicate(name: str, center, radius: float) -> PredicateDef:
    """Margin radius - |x - center|; analytic gradient away from the center.

    At the center the gradient evaluator returns None; the finite-difference
    fallback then yields a near-zero vector and the vacuous-constraint
    convention applies.
    """
    c = np.asarray(center, dtype=float)

    def h(x):
        return radius - float(np.linalg.norm(x - c))

    def grad(x):
        d = np.asarray(x, dtype=float) - c
        r = float(np.linalg.norm(d))
        if r < 1e-9:
            return None
        return -d / r

    return PredicateDef(name, h, grad)


def make_affine_predicate(name: str, a, b: float) -> PredicateDef:
    """Margin a . x + b with exact constant gradient."""
    a = np.asarray(a, dtype=float)

    def h(x):
        return float(a @ np.asarray(x, dtype=float)) + b

    def grad(x):
        return a.copy()

    return PredicateDef(name, h, grad)


def make_quadratic_predicate(name: str, P, q, c: float) -> PredicateDef:
    """Margin x . P x + q . x + c with analytic gradient (P + P^T) x + q."""
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)

    def h(x):
        x = np.asarray(x, dtype=float)
        return float(x @ P @ x + q @ x) + c

    def grad(x):
        x = np.asarray(x, dtype=float)
        return (P + P.T) @ x + q

    return PredicateDef(name, h, grad)


# ---------------------------------------------------------------------------
# Planar integrator steered to a goal disc


GOAL = np.array([0.75, 0.75])
GOAL_RADIUS = 0.1
SI_GAIN = 2.0
SI_INPUT_LIMIT = 0.5


def _si_field(x: np.ndarray) -> np.ndarray:
    return np.clip(SI_GAIN * (GOAL - x), -SI_INPUT_LIMIT, SI_INPUT_LIMIT)


def single_integrator_example() -> ModelBundle:
    """Velocity-controlled point robot on [-1,1]^2 reaching a goal disc.

    The controller saturates a proportional pull toward the goal at 0.5 per
    axis, which reaches the disc from the origin within the 2 s window with a
    small positive margin.  The field is globally Lipschitz with constant
    equal to the proportional gain, which the default config declares.
    """
    domain = Box([-1.0, -1.0], [1.0, 1.0])
    system = ClosedLoopSystem(n=2, domain=domain, f_cl=_si_field, label="single-integrator")
    registry = {"mu_g": make_ball_predicate("mu_g", GOAL, GOAL_RADIUS)}
    config = CertConfig(
        alpha_map={},
        l_f=SI_GAIN,
        l_rho=1.0,
        points_per_axis=41,
        init_points_per_axis=1,
        dt=1e-3,
        refine=True,
    )
    x0 = np.zeros(2)
    return ModelBundle(
        system=system,
        registry=registry,
        spec_text="F[0,2](mu_g)",
        config=config,
        x0=x0,
        init_region=Box(x0, x0),
        plot_circles=(((GOAL[0], GOAL[1]), GOAL_RADIUS, "goal"),),
    )


# ---------------------------------------------------------------------------
# Wheeled inverted pendulum under LQR


SEGWAY_CART_MASS = 10.0  # kg, wheel/base assembly
SEGWAY_PEND_MASS = 5.0  # kg, body treated as a point mass
SEGWAY_LENGTH = 0.5  # m, axle to body center of mass
GRAVITY = 9.81  # m/s^2

# State feedback u = -K x for the linearization below, solved offline from the
# continuous-time algebraic Riccati equation with Q = diag(700, 1, 14000, 350)
# and R = 0.01.  The cheap-control weighting is what lets the loop hold the
# pitch-energy margin over the whole operating box; see the bundle notes.
SEGWAY_LQR_GAIN = np.array(
    [
        -264.57513110646488,
        -313.08054513540156,
        -1962.4936835399562,
        -387.46680023368191,
    ]
)

_KX, _KV, _KTH, _KTHD = SEGWAY_LQR_GAIN


def segway_linearization() -> tuple[np.ndarray, np.ndarray]:
    """Upright-equilibrium linearization (A, B) used for the gain synthesis."""
    mc, mp, lp, g = SEGWAY_CART_MASS, SEGWAY_PEND_MASS, SEGWAY_LENGTH, GRAVITY
    A = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, -mp * g / mc, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, (mc + mp) * g / (lp * mc), 0.0],
        ]
    )
    B = np.array([[0.0], [1.0 / mc], [0.0], [-1.0 / (lp * mc)]])
    return A, B


def _segway_field(x: np.ndarray) -> np.ndarray:
    pos, v, th, thd = float(x[0]), float(x[1]), float(x[2]), float(x[3])
    # wheel torque mapped to a ground-contact force, already in force units
    u = -(_KX * pos + _KV * v + _KTH * th + _KTHD * thd)
    s = math.sin(th)
    c = math.cos(th)
    den = SEGWAY_CART_MASS + SEGWAY_PEND_MASS * s * s
    vdot = (u + SEGWAY_PEND_MASS * s * (SEGWAY_LENGTH * thd * thd - GRAVITY * c)) / den
    thdd = (
        -u * c
        - SEGWAY_PEND_MASS * SEGWAY_LENGTH * thd * thd * s * c
        + (SEGWAY_CART_MASS + SEGWAY_PEND_MASS) * GRAVITY * s
    ) / (SEGWAY_LENGTH * den)
    return np.array((v, vdot, thd, thdd))


def _h1(x):
    return 0.25 - float(np.linalg.norm(x))


def _grad_h1(x):
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r < 1e-9:
        return None  # non-smooth at the origin; finite differences take over
    return -x / r


def _h2(x):
    th, thd = float(x[2]), float(x[3])
    return 10.0 * (0.09 - th * th) - 2.0 * th * thd


def _grad_h2(x):
    th, thd = float(x[2]), float(x[3])
    return np.array([0.0, 0.0, -20.0 * th - 2.0 * thd, -2.0 * th])


def segway_model() -> ModelBundle:
    """Segway regulated to the origin: reach a state-norm ball within 2 s while
    a pitch-energy margin stays nonnegative throughout.

    The operating box is a strict subset of [-1,1]^2 x [-0.4,0.4] x [-1.5,1.5]
    because no LQR of this plant can hold the pitch-energy margin over that
    whole box (position feedback at the box corners overwhelms the pitch loop
    at the margin boundary).  The deviation-route Lipschitz constant is
    declared as 1.0 to match the usual modeling assumption for this task; the
    sampled estimate for the bundled gains is far larger, so reports must
    treat that declaration as unverified (see notes).
    """
    domain = Box([-1.0, -0.8, -0.3, -1.5], [1.0, 0.8, 0.3, 1.5])
    system = ClosedLoopSystem(n=4, domain=domain, f_cl=_segway_field, label="segway")
    registry = {
        "mu1": PredicateDef("mu1", _h1, _grad_h1),
        "mu2": PredicateDef("mu2", _h2, _grad_h2),
    }
    config = CertConfig(
        alpha_map={"mu2": ClassKappaInf("linear", 70.0)},
        l_f=1.0,
        l_rho=1.0,
        points_per_axis=(5, 5, 61, 61),
        init_points_per_axis=1,
        dt=1e-3,
        refine=True,
    )
    x0 = np.array([0.4, 0.0, 0.1, 0.0])
    return ModelBundle(
        system=system,
        registry=registry,
        spec_text="F[0,2](mu1) & G[0,2](mu2)",
        config=config,
        x0=x0,
        init_region=Box(x0, x0),
        notes=(
            "l_f=1.0 is a declared modeling assumption, not a verified bound; "
            "the sampled Lipschitz estimate for the bundled gains exceeds it.",
        ),
    )


# ---------------------------------------------------------------------------
# External models: parameterized linear family


def linear_model(
    a_matrix,
    domain: Box,
    predicates: dict[str, PredicateDef],
    spec_text: str,
    x0,
    init_region: Optional[Box] = None,
    config: Optional[CertConfig] = None,
    label: str = "linear",
) -> ModelBundle:
    """Closed-loop linear system x' = A x with config-supplied predicates."""
    A = np.asarray(a_matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be a square matrix")
    n = A.shape[0]
    if domain.dim != n:
        raise ValueError("domain dimension does not match A")

    def f_cl(x):
        return A @ np.asarray(x, dtype=float)

    x0 = np.asarray(x0, dtype=float)
    system = ClosedLoopSystem(n=n, domain=domain, f_cl=f_cl, label=label)
    if config is None:
        l_f = 1.1 * float(np.linalg.norm(A, 2))  # spectral norm bound, inflated
        config = CertConfig(alpha_map={}, l_f=l_f, l_rho=1.0, points_per_axis=21)
    return ModelBundle(
        system=system,
        registry=predicates,
        spec_text=spec_text,
        config=config,
        x0=x0,
        init_region=init_region if init_region is not None else Box(x0, x0),
    )


MODEL_BUILDERS: dict[str, Callable[[], ModelBundle]] = {
    "single-integrator": single_integrator_example,
    "segway": segway_model,
}


def get_model(name: str) -> ModelBundle:
    try:
        return MODEL_BUILDERS[name]()
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; available: {sorted(MODEL_BUILDERS)}"
        ) from None
