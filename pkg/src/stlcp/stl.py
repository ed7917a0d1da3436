"""Signal temporal logic over joint system/agent trajectories.

Formulas are built from affine predicates mu(s) >= 0 where s = (x, y_1..y_N)
stacks the controllable system state with the states of N uncontrollable
agents.  The grammar is

    phi ::= true | mu >= 0 | !phi | phi & phi | phi | phi | phi U[a,b] phi

with the usual derived operators F[a,b] (eventually), G[a,b] (always) and
'->' (implication, desugared at parse time).  Semantics follow the discrete
time convention where U[a,b] requires the right operand at some k' in
[k+a, k+b] and the left operand at every k'' in [k, k'].
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

#: Margin subtracted when a negated atom is rewritten in positive normal
#: form: !(mu >= 0) becomes (-mu - NEGATION_MARGIN >= 0).
NEGATION_MARGIN = 1e-9


class StlSyntaxError(ValueError):
    """Raised on malformed formula text; carries the offending position."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class TrajectoryTooShortError(ValueError):
    """Evaluation at k requires k + horizon(phi) <= T."""


# ---------------------------------------------------------------------------
# predicates


def _as_tuple(v) -> tuple[float, ...]:
    return tuple(float(a) for a in np.atleast_1d(np.asarray(v, dtype=float)))


@dataclass(frozen=True)
class AffinePredicate:
    """mu(s) = coeff_x . x + sum_i coeff_y[i] . y_i + offset.

    Coefficients are stored as plain tuples so predicates are hashable and
    compare by value; formula nodes containing the same predicate are then
    shared automatically by the MILP encoder.
    """

    coeff_x: tuple[float, ...]
    coeff_y: tuple[tuple[float, ...], ...]
    offset: float
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "coeff_x", _as_tuple(self.coeff_x))
        object.__setattr__(
            self, "coeff_y", tuple(_as_tuple(cy) for cy in self.coeff_y)
        )
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def n_agents(self) -> int:
        return len(self.coeff_y)

    def value(self, x: Sequence[float], ys: Sequence[Sequence[float]]) -> float:
        acc = self.offset
        for c, v in zip(self.coeff_x, x):
            acc += c * v
        for cy, y in zip(self.coeff_y, ys):
            for c, v in zip(cy, y):
                acc += c * v
        return acc

    def negated(self) -> "AffinePredicate":
        """Strict complement with the PNF margin: -mu - eta >= 0."""
        return AffinePredicate(
            tuple(-c for c in self.coeff_x),
            tuple(tuple(-c for c in cy) for cy in self.coeff_y),
            -self.offset - NEGATION_MARGIN,
            name=f"neg({self.name})" if self.name else "",
        )

    def depends_on_agents(self) -> bool:
        return any(any(c != 0.0 for c in cy) for cy in self.coeff_y)


# ---------------------------------------------------------------------------
# formula AST


@dataclass(frozen=True)
class TrueNode:
    pass


@dataclass(frozen=True)
class Pred:
    predicate: AffinePredicate


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    children: tuple["Formula", ...]

    def __post_init__(self):
        if len(self.children) < 1:
            raise ValueError("And requires at least one child")


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]

    def __post_init__(self):
        if len(self.children) < 1:
            raise ValueError("Or requires at least one child")


def _check_interval(a: int, b: int) -> None:
    if a < 0 or b < 0 or a > b:
        raise ValueError(f"bad temporal interval [{a},{b}]")


@dataclass(frozen=True)
class Always:
    a: int
    b: int
    child: "Formula"

    def __post_init__(self):
        _check_interval(self.a, self.b)


@dataclass(frozen=True)
class Eventually:
    a: int
    b: int
    child: "Formula"

    def __post_init__(self):
        _check_interval(self.a, self.b)


@dataclass(frozen=True)
class Until:
    a: int
    b: int
    left: "Formula"
    right: "Formula"

    def __post_init__(self):
        _check_interval(self.a, self.b)


Formula = Union[TrueNode, Pred, Not, And, Or, Always, Eventually, Until]

#: Predicate that is false everywhere; stands in for the missing bottom
#: constant (e.g. when negating `true` during PNF rewriting).
FALSE_PREDICATE = AffinePredicate((), (), -1.0, name="false")


# ---------------------------------------------------------------------------
# printing


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _pred_text(p: AffinePredicate, signals: "SignalMap") -> str:
    terms = []
    names = signals.slot_names()
    coeffs = list(p.coeff_x) + [c for cy in p.coeff_y for c in cy]
    for c, n in zip(coeffs, names):
        if c == 0.0:
            continue
        if c == 1.0:
            terms.append(f"+ {n}")
        elif c == -1.0:
            terms.append(f"- {n}")
        elif c < 0:
            terms.append(f"- {_fmt_num(-c)}*{n}")
        else:
            terms.append(f"+ {_fmt_num(c)}*{n}")
    if p.offset != 0.0 or not terms:
        terms.append(f"- {_fmt_num(-p.offset)}" if p.offset < 0 else f"+ {_fmt_num(p.offset)}")
    text = " ".join(terms)
    if text.startswith("+ "):
        text = text[2:]
    elif text.startswith("- "):
        text = "-" + text[2:]
    return f"{text} >= 0"


def format_formula(f: Formula, signals: "SignalMap") -> str:
    """Render a formula in the concrete syntax accepted by :func:`parse`."""
    if isinstance(f, TrueNode):
        return "true"
    if isinstance(f, Pred):
        return f"({_pred_text(f.predicate, signals)})"
    if isinstance(f, Not):
        return f"!{format_formula(f.child, signals)}"
    if isinstance(f, And):
        return "(" + " & ".join(format_formula(c, signals) for c in f.children) + ")"
    if isinstance(f, Or):
        return "(" + " | ".join(format_formula(c, signals) for c in f.children) + ")"
    if isinstance(f, Always):
        return f"G[{f.a},{f.b}]{format_formula(f.child, signals)}"
    if isinstance(f, Eventually):
        return f"F[{f.a},{f.b}]{format_formula(f.child, signals)}"
    if isinstance(f, Until):
        return (
            f"({format_formula(f.left, signals)} U[{f.a},{f.b}] "
            f"{format_formula(f.right, signals)})"
        )
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# signal naming


@dataclass(frozen=True)
class SignalMap:
    """Maps signal names used in formula text to state slots.

    x_names[j] is the j-th system state dimension, y_names[i][d] the d-th
    dimension of agent i.
    """

    x_names: tuple[str, ...]
    y_names: tuple[tuple[str, ...], ...]

    @staticmethod
    def default(n_x: int, agent_dims: Sequence[int]) -> "SignalMap":
        """x1..xn for the system; y1..yN for 1-d agents, yi_d otherwise."""
        xs = tuple(f"x{j + 1}" for j in range(n_x))
        ys = []
        for i, d in enumerate(agent_dims):
            if d == 1:
                ys.append((f"y{i + 1}",))
            else:
                ys.append(tuple(f"y{i + 1}_{j + 1}" for j in range(d)))
        return SignalMap(xs, tuple(ys))

    @property
    def n_x(self) -> int:
        return len(self.x_names)

    @property
    def agent_dims(self) -> tuple[int, ...]:
        return tuple(len(y) for y in self.y_names)

    def slot_names(self) -> list[str]:
        return list(self.x_names) + [n for ys in self.y_names for n in ys]

    def resolve(self, name: str):
        for j, n in enumerate(self.x_names):
            if n == name:
                return ("x", j)
        for i, ys in enumerate(self.y_names):
            for d, n in enumerate(ys):
                if n == name:
                    return ("y", i, d)
        raise KeyError(name)

    def predicate(self, coeffs: dict[str, float], offset: float, name: str = "") -> AffinePredicate:
        cx = [0.0] * self.n_x
        cy = [[0.0] * d for d in self.agent_dims]
        for sig, c in coeffs.items():
            slot = self.resolve(sig)
            if slot[0] == "x":
                cx[slot[1]] += c
            else:
                cy[slot[1]][slot[2]] += c
        return AffinePredicate(tuple(cx), tuple(tuple(r) for r in cy), offset, name=name)


# ---------------------------------------------------------------------------
# parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>->|>=|<=|[()\[\],&|!+\-*]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].lstrip()
            if not rest:
                break
            raise StlSyntaxError(f"unexpected character {rest[0]!r}", pos)
        if m.lastgroup == "num" or (m.group("num") is not None):
            toks.append(("num", m.group(0).strip(), m.start()))
        elif m.group("name") is not None:
            toks.append(("name", m.group("name"), m.start("name")))
        else:
            toks.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, signals: SignalMap):
        self.text = text
        self.signals = signals
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value: str):
        kind, val, pos = self.next()
        if val != value:
            raise StlSyntaxError(f"expected {value!r}, found {val or 'end of input'!r}", pos)

    def parse(self) -> Formula:
        f = self.implication()
        kind, val, pos = self.peek()
        if kind != "end":
            raise StlSyntaxError(f"trailing input {val!r}", pos)
        return f

    def implication(self) -> Formula:
        left = self.disjunction()
        if self.peek()[1] == "->":
            self.next()
            right = self.implication()
            # p -> q  desugars immediately to  !p | q
            return Or((Not(left), right))
        return left

    def disjunction(self) -> Formula:
        parts = [self.conjunction()]
        while self.peek()[1] == "|":
            self.next()
            parts.append(self.conjunction())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conjunction(self) -> Formula:
        parts = [self.until()]
        while self.peek()[1] == "&":
            self.next()
            parts.append(self.until())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def until(self) -> Formula:
        left = self.unary()
        kind, val, pos = self.peek()
        if kind == "name" and val == "U" and self.toks[self.i + 1][1] == "[":
            self.next()
            a, b = self.interval()
            right = self.unary()
            try:
                return Until(a, b, left, right)
            except ValueError as e:
                raise StlSyntaxError(str(e), pos) from None
        return left

    def interval(self) -> tuple[int, int]:
        self.expect("[")
        a = self.number(int_only=True)
        self.expect(",")
        b = self.number(int_only=True)
        self.expect("]")
        return a, b

    def number(self, int_only: bool = False):
        sign = 1.0
        if self.peek()[1] == "-":
            self.next()
            sign = -1.0
        kind, val, pos = self.next()
        if kind != "num":
            raise StlSyntaxError(f"expected number, found {val!r}", pos)
        v = float(val) * sign
        if int_only:
            if v != int(v) or v < 0:
                raise StlSyntaxError(f"interval bound must be a nonnegative integer, got {val}", pos)
            return int(v)
        return v

    def unary(self) -> Formula:
        kind, val, pos = self.peek()
        if val == "!":
            self.next()
            return Not(self.unary())
        if kind == "name" and val in ("G", "F") and self.toks[self.i + 1][1] == "[":
            self.next()
            a, b = self.interval()
            child = self.unary()
            try:
                return Always(a, b, child) if val == "G" else Eventually(a, b, child)
            except ValueError as e:
                raise StlSyntaxError(str(e), pos) from None
        return self.primary()

    def primary(self) -> Formula:
        kind, val, pos = self.peek()
        if val == "(":
            self.next()
            f = self.implication()
            self.expect(")")
            return f
        if kind == "name" and val in ("true", "True"):
            self.next()
            return TrueNode()
        return self.atom()

    def atom(self) -> Formula:
        coeffs, const = self.linexpr()
        kind, op, pos = self.next()
        if op not in (">=", "<="):
            raise StlSyntaxError(f"expected '>=' or '<=' in atom, found {op or 'end of input'!r}", pos)
        rcoeffs, rconst = self.linexpr()
        if op == ">=":
            for k2, v in rcoeffs.items():
                coeffs[k2] = coeffs.get(k2, 0.0) - v
            offset = const - rconst
        else:
            out = {k2: -v for k2, v in coeffs.items()}
            for k2, v in rcoeffs.items():
                out[k2] = out.get(k2, 0.0) + v
            coeffs, offset = out, rconst - const
        try:
            return Pred(self.signals.predicate(coeffs, offset))
        except KeyError as e:
            raise StlSyntaxError(f"unknown signal name {e.args[0]!r}", pos) from None

    def linexpr(self) -> tuple[dict[str, float], float]:
        coeffs: dict[str, float] = {}
        const = 0.0
        sign = 1.0
        first = True
        while True:
            kind, val, pos = self.peek()
            if not first:
                if val == "+":
                    self.next()
                    sign = 1.0
                elif val == "-":
                    self.next()
                    sign = -1.0
                else:
                    break
            elif val in ("+", "-"):
                self.next()
                sign = 1.0 if val == "+" else -1.0
            c, name = self.term()
            if name is None:
                const += sign * c
            else:
                coeffs[name] = coeffs.get(name, 0.0) + sign * c
            first = False
        return coeffs, const

    def term(self) -> tuple[float, str | None]:
        kind, val, pos = self.peek()
        if kind == "num":
            self.next()
            c = float(val)
            if self.peek()[1] == "*":
                self.next()
                kind, name, pos = self.next()
                if kind != "name":
                    raise StlSyntaxError(f"expected signal name after '*', found {name!r}", pos)
                return c, name
            return c, None
        if kind == "name":
            self.next()
            return 1.0, val
        raise StlSyntaxError(f"expected term, found {val or 'end of input'!r}", pos)


def parse(text: str, signals: SignalMap) -> Formula:
    """Parse formula text against a signal map.

    Raises StlSyntaxError with a position for malformed input, unknown
    signal names, or bad intervals.
    """
    return _Parser(text, signals).parse()


# ---------------------------------------------------------------------------
# structural operations


def horizon(f: Formula) -> int:
    """Length of the lookahead window needed to evaluate f at time 0."""
    if isinstance(f, (TrueNode, Pred)):
        return 0
    if isinstance(f, Not):
        return horizon(f.child)
    if isinstance(f, (And, Or)):
        return max(horizon(c) for c in f.children)
    if isinstance(f, (Always, Eventually)):
        return f.b + horizon(f.child)
    if isinstance(f, Until):
        return f.b + max(horizon(f.left), horizon(f.right))
    raise TypeError(f"not a formula: {f!r}")


def _shift(t: int, f: Formula) -> Formula:
    # G[t,t] pins a subformula to a fixed offset; used when unrolling !U.
    return f if t == 0 else Always(t, t, f)


def to_pnf(f: Formula, negate: bool = False) -> Formula:
    """Positive normal form: negations pushed into the atoms.

    Negated atoms pick up the NEGATION_MARGIN eta so that the complement
    stays representable as a closed affine constraint.  Negated until is
    unrolled into a conjunction over witnesses since the grammar has no
    release operator; interval bounds keep the horizon unchanged.
    """
    if isinstance(f, TrueNode):
        return Pred(FALSE_PREDICATE) if negate else f
    if isinstance(f, Pred):
        return Pred(f.predicate.negated()) if negate else f
    if isinstance(f, Not):
        return to_pnf(f.child, not negate)
    if isinstance(f, And):
        kids = tuple(to_pnf(c, negate) for c in f.children)
        return Or(kids) if negate else And(kids)
    if isinstance(f, Or):
        kids = tuple(to_pnf(c, negate) for c in f.children)
        return And(kids) if negate else Or(kids)
    if isinstance(f, Always):
        child = to_pnf(f.child, negate)
        return Eventually(f.a, f.b, child) if negate else Always(f.a, f.b, child)
    if isinstance(f, Eventually):
        child = to_pnf(f.child, negate)
        return Always(f.a, f.b, child) if negate else Eventually(f.a, f.b, child)
    if isinstance(f, Until):
        if not negate:
            return Until(f.a, f.b, to_pnf(f.left), to_pnf(f.right))
        nl = to_pnf(f.left, True)
        nr = to_pnf(f.right, True)
        clauses = []
        for j in range(f.a, f.b + 1):
            opts = [_shift(j, nr)] + [_shift(i, nl) for i in range(0, j + 1)]
            clauses.append(Or(tuple(opts)))
        return And(tuple(clauses))
    raise TypeError(f"not a formula: {f!r}")


def is_pnf(f: Formula) -> bool:
    if isinstance(f, Not):
        return False
    if isinstance(f, (And, Or)):
        return all(is_pnf(c) for c in f.children)
    if isinstance(f, (Always, Eventually)):
        return is_pnf(f.child)
    if isinstance(f, Until):
        return is_pnf(f.left) and is_pnf(f.right)
    return True


def collect_predicates(f: Formula, base_time: int = 0) -> list[tuple[AffinePredicate, tuple[int, ...]]]:
    """Distinct predicates of a PNF formula with their occurrence times.

    Returns pairs in first-visit order; times are absolute, assuming the
    formula is applied at base_time.
    """
    order: list[AffinePredicate] = []
    times: dict[AffinePredicate, set[int]] = {}

    def visit(g: Formula, t: int):
        if isinstance(g, TrueNode):
            return
        if isinstance(g, Pred):
            if g.predicate not in times:
                order.append(g.predicate)
                times[g.predicate] = set()
            times[g.predicate].add(t)
            return
        if isinstance(g, Not):
            raise ValueError("collect_predicates expects positive normal form")
        if isinstance(g, (And, Or)):
            for c in g.children:
                visit(c, t)
            return
        if isinstance(g, (Always, Eventually)):
            for tp in range(t + g.a, t + g.b + 1):
                visit(g.child, tp)
            return
        if isinstance(g, Until):
            for tp in range(t + g.a, t + g.b + 1):
                visit(g.right, tp)
                for tpp in range(t, tp + 1):
                    visit(g.left, tpp)
            return
        raise TypeError(f"not a formula: {g!r}")

    visit(f, base_time)
    return [(p, tuple(sorted(times[p]))) for p in order]


# ---------------------------------------------------------------------------
# trajectories and semantics


@dataclass(frozen=True)
class JointTrajectory:
    """System states xs[t] and agent states ys[i][t] for t = 0..T."""

    xs: np.ndarray
    ys: tuple[np.ndarray, ...]

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        ys = tuple(np.asarray(y, dtype=float) for y in self.ys)
        ys = tuple(y[:, None] if y.ndim == 1 else y for y in ys)
        for y in ys:
            if y.shape[0] != xs.shape[0]:
                raise ValueError("system and agent trajectories must share length")
        xs.flags.writeable = False
        for y in ys:
            y.flags.writeable = False
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def length(self) -> int:
        """Index of the final state (number of steps)."""
        return self.xs.shape[0] - 1

    def state(self, t: int):
        return self.xs[t], [y[t] for y in self.ys]

    @staticmethod
    def from_agents(ys: Sequence[np.ndarray], n_x: int = 1) -> "JointTrajectory":
        ys = tuple(np.asarray(y, dtype=float) for y in ys)
        T = ys[0].shape[0]
        return JointTrajectory(np.zeros((T, n_x)), ys)


def _require_window(f: Formula, traj: JointTrajectory, k: int) -> None:
    if k < 0:
        raise ValueError(f"negative evaluation time {k}")
    need = k + horizon(f)
    if need > traj.length:
        raise TrajectoryTooShortError(
            f"evaluation at k={k} needs states through t={need}, trajectory ends at t={traj.length}"
        )


def eval_boolean(f: Formula, traj: JointTrajectory, k: int = 0) -> bool:
    """Boolean satisfaction (phi, traj, k) |= phi."""
    _require_window(f, traj, k)
    return _eval_bool(f, traj, k, {})


def _eval_bool(f: Formula, traj: JointTrajectory, k: int, memo: dict) -> bool:
    key = (id(f), k)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(f, TrueNode):
        v = True
    elif isinstance(f, Pred):
        x, ys = traj.state(k)
        v = f.predicate.value(x, ys) >= 0.0
    elif isinstance(f, Not):
        v = not _eval_bool(f.child, traj, k, memo)
    elif isinstance(f, And):
        v = all(_eval_bool(c, traj, k, memo) for c in f.children)
    elif isinstance(f, Or):
        v = any(_eval_bool(c, traj, k, memo) for c in f.children)
    elif isinstance(f, Always):
        v = all(_eval_bool(f.child, traj, t, memo) for t in range(k + f.a, k + f.b + 1))
    elif isinstance(f, Eventually):
        v = any(_eval_bool(f.child, traj, t, memo) for t in range(k + f.a, k + f.b + 1))
    elif isinstance(f, Until):
        v = any(
            _eval_bool(f.right, traj, kp, memo)
            and all(_eval_bool(f.left, traj, kpp, memo) for kpp in range(k, kp + 1))
            for kp in range(k + f.a, k + f.b + 1)
        )
    else:
        raise TypeError(f"not a formula: {f!r}")
    memo[key] = v
    return v


def eval_robustness(f: Formula, traj: JointTrajectory, k: int = 0) -> float:
    """Quantitative semantics rho(phi, traj, k); rho(true) = +inf."""
    _require_window(f, traj, k)
    return _eval_rho(f, traj, k, {})


def _eval_rho(f: Formula, traj: JointTrajectory, k: int, memo: dict) -> float:
    key = (id(f), k)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if isinstance(f, TrueNode):
        v = math.inf
    elif isinstance(f, Pred):
        x, ys = traj.state(k)
        v = f.predicate.value(x, ys)
    elif isinstance(f, Not):
        v = -_eval_rho(f.child, traj, k, memo)
    elif isinstance(f, And):
        v = min(_eval_rho(c, traj, k, memo) for c in f.children)
    elif isinstance(f, Or):
        v = max(_eval_rho(c, traj, k, memo) for c in f.children)
    elif isinstance(f, Always):
        v = min(_eval_rho(f.child, traj, t, memo) for t in range(k + f.a, k + f.b + 1))
    elif isinstance(f, Eventually):
        v = max(_eval_rho(f.child, traj, t, memo) for t in range(k + f.a, k + f.b + 1))
    elif isinstance(f, Until):
        v = max(
            min(
                _eval_rho(f.right, traj, kp, memo),
                min(_eval_rho(f.left, traj, kpp, memo) for kpp in range(k, kp + 1)),
            )
            for kp in range(k + f.a, k + f.b + 1)
        )
    else:
        raise TypeError(f"not a formula: {f!r}")
    memo[key] = v
    return v


# ---------------------------------------------------------------------------
# convenience constructors used by the case studies


def box_inside(signals: SignalMap, names: Sequence[str], lo: Sequence[float], hi: Sequence[float], label: str = "") -> Formula:
    """Conjunction of affine atoms keeping each named signal within [lo, hi]."""
    atoms = []
    for n, l, h in zip(names, lo, hi):
        atoms.append(Pred(signals.predicate({n: 1.0}, -float(l), name=f"{label}:{n}>={l}")))
        atoms.append(Pred(signals.predicate({n: -1.0}, float(h), name=f"{label}:{n}<={h}")))
    return And(tuple(atoms))


def box_outside(signals: SignalMap, names: Sequence[str], lo: Sequence[float], hi: Sequence[float], label: str = "") -> Formula:
    """Disjunction of affine atoms keeping some named signal outside [lo, hi]."""
    atoms = []
    for n, l, h in zip(names, lo, hi):
        atoms.append(Pred(signals.predicate({n: -1.0}, float(l), name=f"{label}:{n}<={l}")))
        atoms.append(Pred(signals.predicate({n: 1.0}, -float(h), name=f"{label}:{n}>={h}")))
    return Or(tuple(atoms))
