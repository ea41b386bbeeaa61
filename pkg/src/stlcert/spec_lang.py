"""Temporal specification fragment: predicates, conjunctive clauses, and the
windowed operators Always / Eventually / Until, plus top-level conjunction.

A specification is monitored quantitatively (`robustness`) and, independently,
as a boolean verdict (`satisfies`).  Both monitors evaluate on the sample grid
of the signal; neither interpolates.  The boolean monitor never calls the
quantitative one, so it can serve as its oracle in tests.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

# Robustness value of the empty conjunction ("true"): a large finite sentinel
# so that min/max reductions stay well defined on floats.
TRUE_ROBUSTNESS = 1e30

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"[0-9]+(\.[0-9]*)?([eE][-+]?[0-9]+)?|\.[0-9]+")


class SpecParseError(ValueError):
    """Malformed specification text.  Carries the offending character offset."""

    def __init__(self, message: str, position: Optional[int] = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


@dataclass(frozen=True, eq=False)
class PredicateDef:
    """An atomic predicate, true exactly where its margin function is >= 0.

    `h` maps a state vector to a scalar margin.  `grad_h` is the gradient of
    the *base* margin; it may be omitted, or may return None at isolated
    non-smooth points, in which case callers fall back to finite differences.
    A negated atom keeps the base evaluators and flips their sign through
    `negated`, so its effective margin is -h.  On the measure-zero boundary
    h = 0 this flips strict to non-strict satisfaction (both the atom and its
    negation hold there); accepted as a convention.
    """

    name: str
    h: Callable[[np.ndarray], float]
    grad_h: Optional[Callable[[np.ndarray], Optional[np.ndarray]]] = None
    negated: bool = False

    def __post_init__(self):
        if not _IDENT_RE.fullmatch(self.name):
            raise ValueError(f"predicate name {self.name!r} is not an identifier")
        if self.name == "true":
            raise ValueError("'true' is reserved and cannot name a predicate")

    def evaluate(self, x) -> float:
        v = float(self.h(np.asarray(x, dtype=float)))
        return -v if self.negated else v

    def negate(self) -> "PredicateDef":
        return PredicateDef(self.name, self.h, self.grad_h, not self.negated)

    def __eq__(self, other):
        return (
            isinstance(other, PredicateDef)
            and self.name == other.name
            and self.negated == other.negated
        )

    def __hash__(self):
        return hash((self.name, self.negated))

    def __str__(self):
        return f"!{self.name}" if self.negated else self.name

    def __repr__(self):
        return f"PredicateDef({str(self)!r})"


@dataclass(frozen=True)
class ConjunctiveClause:
    """A conjunction of predicate atoms.  The empty conjunction encodes `true`."""

    predicates: tuple[PredicateDef, ...] = ()

    def evaluate(self, x) -> float:
        """Signed margin of the clause at a state: min over member margins."""
        if not self.predicates:
            return TRUE_ROBUSTNESS
        return min(p.evaluate(x) for p in self.predicates)

    def holds(self, x) -> bool:
        """Boolean truth at a state (does not reuse `evaluate`'s min)."""
        return all(p.evaluate(x) >= 0.0 for p in self.predicates)

    def __str__(self):
        if not self.predicates:
            return "true"
        return " & ".join(str(p) for p in self.predicates)


def predicates_of(clause: ConjunctiveClause) -> list[PredicateDef]:
    """Deduplicated member predicates, in first-occurrence order.

    Clause truth at a state is exactly the conjunction of the returned atoms;
    the empty list means the clause is identically true.
    """
    out: list[PredicateDef] = []
    for p in clause.predicates:
        if p not in out:
            out.append(p)
    return out


class SpecNode:
    """Base class for specification AST nodes."""

    @property
    def horizon(self) -> float:
        raise NotImplementedError


def _fmt_num(v: float) -> str:
    # Shortest representation that reparses to the same float.
    if v == int(v):
        return str(int(v))
    return repr(v)


def _check_interval(interval) -> tuple[float, float]:
    a, b = float(interval[0]), float(interval[1])
    if a < 0 or b < 0:
        raise ValueError(f"interval [{a:g},{b:g}] has a negative endpoint")
    if not a < b:
        raise ValueError(f"interval [{a:g},{b:g}] must satisfy a < b")
    return a, b


@dataclass(frozen=True)
class Always(SpecNode):
    interval: tuple[float, float]
    clause: ConjunctiveClause

    def __post_init__(self):
        object.__setattr__(self, "interval", _check_interval(self.interval))

    @property
    def horizon(self):
        return self.interval[1]

    def __str__(self):
        a, b = self.interval
        return f"G[{_fmt_num(a)},{_fmt_num(b)}]({self.clause})"


@dataclass(frozen=True)
class Eventually(SpecNode):
    interval: tuple[float, float]
    clause: ConjunctiveClause

    def __post_init__(self):
        object.__setattr__(self, "interval", _check_interval(self.interval))

    @property
    def horizon(self):
        return self.interval[1]

    def __str__(self):
        a, b = self.interval
        return f"F[{_fmt_num(a)},{_fmt_num(b)}]({self.clause})"


@dataclass(frozen=True)
class Until(SpecNode):
    """`left` must hold from evaluation time through some t' in the window at
    which `right` holds (non-strict overlap at t')."""

    interval: tuple[float, float]
    left: ConjunctiveClause
    right: ConjunctiveClause

    def __post_init__(self):
        object.__setattr__(self, "interval", _check_interval(self.interval))

    @property
    def horizon(self):
        return self.interval[1]

    def __str__(self):
        a, b = self.interval
        return f"({self.left}) U[{_fmt_num(a)},{_fmt_num(b)}] ({self.right})"


@dataclass(frozen=True)
class And(SpecNode):
    left: SpecNode
    right: SpecNode

    @property
    def horizon(self):
        return max(self.left.horizon, self.right.horizon)

    def __str__(self):
        return f"{self.left} & {self.right}"


def decompose(spec: SpecNode) -> list[SpecNode]:
    """Temporal leaves of the conjunction tree, left to right.

    A non-conjunction root yields a singleton.  Duplicates are preserved; the
    downstream min-reduction over leaves is unaffected by repetition.
    """
    if isinstance(spec, And):
        return decompose(spec.left) + decompose(spec.right)
    return [spec]


def horizon(spec: SpecNode) -> float:
    """Largest window endpoint over all temporal leaves."""
    return spec.horizon


def format_spec(spec: SpecNode) -> str:
    """Concrete syntax for `spec`; `parse_spec(format_spec(s))` rebuilds `s`."""
    return str(spec)


# ---------------------------------------------------------------------------
# Parsing


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        self.skip_ws()
        if not self.text.startswith(ch, self.pos):
            raise SpecParseError(f"expected {ch!r}", self.pos)
        self.pos += len(ch)

    def match(self, ch: str) -> bool:
        self.skip_ws()
        if self.text.startswith(ch, self.pos):
            self.pos += len(ch)
            return True
        return False

    def ident(self) -> str:
        self.skip_ws()
        m = _IDENT_RE.match(self.text, self.pos)
        if not m:
            raise SpecParseError("expected identifier", self.pos)
        self.pos = m.end()
        return m.group()

    def number(self) -> float:
        self.skip_ws()
        m = _NUMBER_RE.match(self.text, self.pos)
        if not m:
            raise SpecParseError("expected number", self.pos)
        self.pos = m.end()
        return float(m.group())

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)


def parse_spec(text: str, registry: Mapping[str, PredicateDef]) -> SpecNode:
    """Parse specification text against a predicate registry.

    Grammar::

        spec   := term ('&' term)*
        term   := 'G[' a ',' b ']' '(' clause ')'
                | 'F[' a ',' b ']' '(' clause ')'
                | '(' clause ')' 'U[' a ',' b ']' '(' clause ')'
        clause := atom ('&' atom)*
        atom   := ident | '!' ident | 'true'

    Raises SpecParseError on syntax errors (with position), unknown predicate
    names, and intervals with a >= b or negative endpoints.
    """
    sc = _Scanner(text)
    node = _parse_term(sc, registry)
    while sc.match("&"):
        node = And(node, _parse_term(sc, registry))
    if not sc.at_end():
        raise SpecParseError("unexpected trailing input", sc.pos)
    return node


def _parse_interval(sc: _Scanner) -> tuple[float, float]:
    start = sc.pos
    sc.expect("[")
    a = sc.number()
    sc.expect(",")
    b = sc.number()
    sc.expect("]")
    try:
        return _check_interval((a, b))
    except ValueError as exc:
        raise SpecParseError(str(exc), start) from None


def _parse_clause(sc: _Scanner, registry: Mapping[str, PredicateDef]) -> ConjunctiveClause:
    atoms: list[PredicateDef] = []
    while True:
        sc.skip_ws()
        pos = sc.pos
        if sc.match("!"):
            name = sc.ident()
            if name == "true":
                raise SpecParseError("'true' cannot be negated", pos)
            atoms.append(_resolve(name, registry, pos).negate())
        else:
            name = sc.ident()
            if name != "true":
                atoms.append(_resolve(name, registry, pos))
        if not sc.match("&"):
            break
    return ConjunctiveClause(tuple(atoms))


def _resolve(name: str, registry: Mapping[str, PredicateDef], pos: int) -> PredicateDef:
    try:
        return registry[name]
    except KeyError:
        raise SpecParseError(f"unknown predicate {name!r}", pos) from None


def _parse_term(sc: _Scanner, registry: Mapping[str, PredicateDef]) -> SpecNode:
    sc.skip_ws()
    pos = sc.pos
    ch = sc.peek()
    if ch in ("G", "F") and sc.text.startswith(ch + "[", sc.pos):
        sc.pos += 1
        interval = _parse_interval(sc)
        sc.expect("(")
        clause = _parse_clause(sc, registry)
        sc.expect(")")
        return Always(interval, clause) if ch == "G" else Eventually(interval, clause)
    if ch == "(":
        sc.expect("(")
        left = _parse_clause(sc, registry)
        sc.expect(")")
        sc.skip_ws()
        if not sc.match("U"):
            raise SpecParseError("expected 'U' after clause", sc.pos)
        interval = _parse_interval(sc)
        sc.expect("(")
        right = _parse_clause(sc, registry)
        sc.expect(")")
        return Until(interval, left, right)
    raise SpecParseError("expected 'G[', 'F[' or '(clause) U[...]'", pos)


# ---------------------------------------------------------------------------
# Monitoring on a sampled signal

# The monitors accept any signal object exposing `dt`, `t0` and `states`
# (an array of shape (num_samples, n)); dynamics.Trajectory is the canonical
# implementation.


def _snap_index(signal, t: float, n_samples: int, what: str) -> int:
    """Nearest sample index for time t (the monitor never interpolates)."""
    k = int(round((t - signal.t0) / signal.dt))
    if k < 0 or k >= n_samples:
        raise ValueError(
            f"{what} t={t:g} outside signal range "
            f"[{signal.t0:g}, {signal.t0 + (n_samples - 1) * signal.dt:g}]"
        )
    return k


def _require_coverage(spec: SpecNode, signal, t: float):
    n = len(signal.states)
    end = t + spec.horizon
    k_end = int(round((end - signal.t0) / signal.dt))
    if k_end >= n:
        raise ValueError(
            f"signal too short for horizon: needs coverage to t={end:g}, "
            f"last sample at t={signal.t0 + (n - 1) * signal.dt:g}"
        )


def _clause_values(clause: ConjunctiveClause, signal, k0: int, k1: int) -> np.ndarray:
    if not clause.predicates:
        return np.full(k1 - k0 + 1, TRUE_ROBUSTNESS)
    states = signal.states
    vals = np.empty(k1 - k0 + 1)
    for i, k in enumerate(range(k0, k1 + 1)):
        vals[i] = min(p.evaluate(states[k]) for p in clause.predicates)
    return vals


def robustness(spec: SpecNode, signal, t: float = 0.0) -> float:
    """Quantitative satisfaction margin of `spec` on `signal` at time `t`.

    Space robustness with min/max taken over grid samples: a clause scores the
    min of its member margins, Always the min over its window, Eventually the
    max, Until the best window sample of min(right there, left held so far),
    and conjunction the min of its children.
    """
    if isinstance(spec, And):
        return min(robustness(spec.left, signal, t), robustness(spec.right, signal, t))
    _require_coverage(spec, signal, t)
    n = len(signal.states)
    a, b = spec.interval
    k_a = _snap_index(signal, t + a, n, "window start")
    k_b = _snap_index(signal, t + b, n, "window end")
    if isinstance(spec, Always):
        return float(np.min(_clause_values(spec.clause, signal, k_a, k_b)))
    if isinstance(spec, Eventually):
        return float(np.max(_clause_values(spec.clause, signal, k_a, k_b)))
    if isinstance(spec, Until):
        k_t = _snap_index(signal, t, n, "evaluation time")
        right = _clause_values(spec.right, signal, k_a, k_b)
        left = _clause_values(spec.left, signal, k_t, k_b)
        held = np.minimum.accumulate(left)  # min of left over [t, t'']
        best = -np.inf
        for j, k in enumerate(range(k_a, k_b + 1)):
            best = max(best, min(right[j], held[k - k_t]))
        return float(best)
    raise TypeError(f"not a specification node: {spec!r}")


def satisfies(spec: SpecNode, signal, t: float = 0.0) -> bool:
    """Boolean verdict for `spec` on `signal` at `t`.

    Computed by recursive truth evaluation on the sample grid, without calling
    `robustness`; used as its independent oracle.
    """
    if isinstance(spec, And):
        return satisfies(spec.left, signal, t) and satisfies(spec.right, signal, t)
    _require_coverage(spec, signal, t)
    n = len(signal.states)
    states = signal.states
    a, b = spec.interval
    k_a = _snap_index(signal, t + a, n, "window start")
    k_b = _snap_index(signal, t + b, n, "window end")
    if isinstance(spec, Always):
        return all(spec.clause.holds(states[k]) for k in range(k_a, k_b + 1))
    if isinstance(spec, Eventually):
        return any(spec.clause.holds(states[k]) for k in range(k_a, k_b + 1))
    if isinstance(spec, Until):
        k_t = _snap_index(signal, t, n, "evaluation time")
        left_ok = True
        for k in range(k_t, k_a):
            left_ok = left_ok and spec.left.holds(states[k])
        for k in range(k_a, k_b + 1):
            if k > k_t:
                left_ok = left_ok and spec.left.holds(states[k - 1])
            if not left_ok:
                return False
            if spec.right.holds(states[k]) and spec.left.holds(states[k]):
                return True
        return False
    raise TypeError(f"not a specification node: {spec!r}")
