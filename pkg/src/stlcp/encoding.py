"""MILP encoding of temporal-logic specifications over predicted agent regions.

Atoms are affine in the controlled state and the agent positions.  For steps
that are still in the future, the agent part is replaced by its worst case
over the calibrated prediction balls; for an affine function that minimum has
the closed form

    sum_i ( a_i . yhat_i  -  C_i ||a_i||_2 )

so no extra variables or rows are needed per ball, and the encoding stays
sound for every realization the regions cover.  Steps at or before the
current time are folded into constants (both the controlled state and the
agent positions are observed), which shrinks the shrinking-horizon MILPs as
the mission progresses.

Qualitative mode is polarity-aware: the root must hold, so conjunctive paths
emit their atom rows directly and binaries appear only where a disjunction
forces a choice (one indicator per distinct disjunct occurrence, shared via a
cache).  An indicator z carries the one-sided meaning [z = 1 implies the
subformula holds with margin eps], which is sufficient because PNF formulas
are monotone in their leaves.  Quantitative mode carries the worst-case
robustness as a linear expression, with one-hot selector binaries and
channeling rows realizing the min/max lattice exactly; the root is then
pinned above eps_r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .milp import MilpModel
from .stl import (
    AffinePredicate,
    Always,
    And,
    Eventually,
    Not,
    Or,
    Pred,
    TrueNode,
    Until,
    collect_predicates,
    horizon,
)

EPS = 1e-6
EPS_ROBUST = 1e-4


class EncodingError(ValueError):
    pass


class LinExpr:
    """Affine expression over model variables: sum coeffs[v] * v + const."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: dict[int, float] | None = None, const: float = 0.0):
        self.coeffs = dict(coeffs) if coeffs else {}
        self.const = float(const)

    def add_term(self, vid: int, coef: float) -> None:
        if coef == 0.0:
            return
        new = self.coeffs.get(vid, 0.0) + coef
        if new == 0.0:
            self.coeffs.pop(vid, None)
        else:
            self.coeffs[vid] = new

    @property
    def is_const(self) -> bool:
        return not self.coeffs

    def value(self, assignment: dict[int, float]) -> float:
        return self.const + sum(c * assignment[v] for v, c in self.coeffs.items())

    def bounds(self, model: MilpModel) -> tuple[float, float]:
        lo = hi = self.const
        for v, c in self.coeffs.items():
            a, b = c * model.vars[v].lb, c * model.vars[v].ub
            lo += min(a, b)
            hi += max(a, b)
        return lo, hi

    def __repr__(self) -> str:
        terms = " ".join(f"{c:+g}*v{v}" for v, c in sorted(self.coeffs.items()))
        return f"LinExpr({terms} {self.const:+g})"


def _as_expr(h) -> LinExpr:
    if isinstance(h, LinExpr):
        return h
    if isinstance(h, (int, np.integer)):  # variable id
        return LinExpr({int(h): 1.0})
    return LinExpr(const=float(h))


@dataclass
class EncodingContext:
    """Everything the encoder needs to know about one synthesis step.

    state_vars maps future times (tau > k) to the model variable ids of the
    controlled state; observed_x / observed_y hold the constants for
    tau <= k.  radius(tau, agent) returns the prediction-ball radius around
    predicted_y[(tau, agent)] for future steps.
    """

    model: MilpModel
    t_phi: int
    k: int
    state_vars: dict[int, Sequence[int]]
    observed_x: dict[int, np.ndarray]
    predicted_y: dict[tuple[int, int], np.ndarray]
    observed_y: dict[tuple[int, int], np.ndarray]
    radius: Callable[[int, int], float]
    mode: str = "qual"
    eps: float = EPS
    eps_robust: float = EPS_ROBUST
    big_m: float | None = None

    def __post_init__(self):
        if self.mode not in ("qual", "quant"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class Encoding:
    root: object  # bool | var id (qual); float | LinExpr | var id (quant)
    mode: str
    big_m: float
    registry: list = field(default_factory=list)
    n_binaries: int = 0


# ---------------------------------------------------------------------------
# atom tightening


def tightened_offset(pred: AffinePredicate, centers: Sequence[np.ndarray], radii: Sequence[float]) -> float:
    """Worst case of the agent part of an atom over the prediction balls:
    min over y_i in Ball(centers[i], radii[i]) of sum_i a_i . y_i, plus the
    predicate offset."""
    total = pred.offset
    for a, c, r in zip(pred.coeff_y, centers, radii):
        a = np.asarray(a, dtype=float)
        nrm = float(np.linalg.norm(a))
        if nrm == 0.0:
            continue
        total += float(np.dot(a, c)) - r * nrm
    return total


@dataclass(frozen=True)
class TighteningCertificate:
    """KKT witness that the closed-form tightening is the exact ball minimum."""

    value: float
    witnesses: tuple
    multipliers: tuple
    stationarity: float
    feasibility: float
    complementarity: float

    def max_residual(self) -> float:
        return max(self.stationarity, self.feasibility, self.complementarity)


def kkt_certificate(pred: AffinePredicate, centers: Sequence[np.ndarray], radii: Sequence[float]) -> TighteningCertificate:
    """Optimality certificate for min of the atom's agent part over the balls.

    Each ball constraint ||y_i - c_i||^2 <= r_i^2 gets multiplier
    lambda_i = ||a_i|| / (2 r_i); the minimizer sits on the boundary along
    -a_i.  Radii must be positive wherever the atom actually depends on the
    agent.
    """
    ys, lams = [], []
    stat = feas = comp = 0.0
    value = pred.offset
    for a, c, r in zip(pred.coeff_y, centers, radii):
        a = np.asarray(a, dtype=float)
        c = np.asarray(c, dtype=float)
        nrm = float(np.linalg.norm(a))
        if nrm == 0.0:
            ys.append(c.copy())
            lams.append(0.0)
            continue
        if not r > 0.0:
            raise EncodingError("kkt certificate needs a positive radius where the atom depends on the agent")
        y = c - r * a / nrm
        lam = nrm / (2.0 * r)
        ys.append(y)
        lams.append(lam)
        value += float(np.dot(a, y))
        stat = max(stat, float(np.linalg.norm(a + 2.0 * lam * (y - c))))
        feas = max(feas, max(0.0, float(np.dot(y - c, y - c)) - r * r))
        comp = max(comp, abs(lam * (float(np.dot(y - c, y - c)) - r * r)))
    return TighteningCertificate(value, tuple(ys), tuple(lams), stat, feas, comp)


def _atom_expr(ctx: EncodingContext, pred: AffinePredicate, tau: int) -> LinExpr | float:
    """Tightened value of an atom at absolute time tau; constant if fully
    observed or agent-only, affine in the state variables otherwise."""
    expr = LinExpr(const=pred.offset)
    if pred.coeff_x:
        if tau <= ctx.k:
            xs = ctx.observed_x[tau]
            expr.const += float(np.dot(pred.coeff_x, xs[: len(pred.coeff_x)]))
        else:
            try:
                vids = ctx.state_vars[tau]
            except KeyError:
                raise EncodingError(f"no state variables registered for time {tau}") from None
            for d, coef in enumerate(pred.coeff_x):
                expr.add_term(vids[d], coef)
    for i, a in enumerate(pred.coeff_y):
        a = np.asarray(a, dtype=float)
        nrm = float(np.linalg.norm(a))
        if nrm == 0.0:
            continue
        if tau <= ctx.k:
            expr.const += float(np.dot(a, ctx.observed_y[(tau, i)]))
        else:
            center = ctx.predicted_y[(tau, i)]
            r = float(ctx.radius(tau, i))
            expr.const += float(np.dot(a, center))
            if math.isinf(r):
                expr.const = -math.inf
                break
            expr.const -= r * nrm
    if expr.const == -math.inf:
        return -math.inf  # uncalibrated radius: atom unsatisfiable for any state
    if expr.is_const:
        return expr.const
    return expr


def select_big_m(ctx: EncodingContext, formula) -> float:
    """Bound on |tightened atom value| across the formula, doubled.

    Interval arithmetic over the model's variable bounds; infinite radii give
    atoms that fold to constants and are excluded.
    """
    worst = 1.0
    for pred, times in collect_predicates(formula, base_time=0):
        for tau in times:
            e = _atom_expr(ctx, pred, tau)
            if isinstance(e, LinExpr):
                lo, hi = e.bounds(ctx.model)
                cand = max(abs(lo), abs(hi))
            else:
                cand = abs(e)
            if math.isfinite(cand):
                worst = max(worst, cand)
    return 2.0 * worst


# ---------------------------------------------------------------------------
# encoding proper


def encode(ctx: EncodingContext, formula) -> Encoding:
    """Encode a PNF formula rooted at absolute time 0 into ctx.model."""
    from .stl import is_pnf

    if not is_pnf(formula):
        raise EncodingError("encoder expects positive normal form; call to_pnf first")
    if horizon(formula) > ctx.t_phi:
        raise EncodingError(f"formula horizon {horizon(formula)} exceeds available window {ctx.t_phi}")
    if ctx.big_m is None:
        ctx.big_m = select_big_m(ctx, formula)
    enc = Encoding(root=None, mode=ctx.mode, big_m=ctx.big_m)
    if ctx.mode == "qual":
        state = _QualState()
        kt = _known_truth(ctx, state, formula, 0)
        if kt is None:
            _encode_qual(ctx, enc, state, formula, 0, None)
        enc.root = kt
    else:
        enc.root = _encode_quant(ctx, enc, {}, formula, 0)
    return enc


def _temporal_children(formula, tau: int):
    """Rewrite one temporal layer into (kind, [(child, time), ...]) groups."""
    if isinstance(formula, And):
        return "and", [(c, tau) for c in formula.children]
    if isinstance(formula, Or):
        return "or", [(c, tau) for c in formula.children]
    if isinstance(formula, Always):
        return "and", [(formula.child, t) for t in range(tau + formula.a, tau + formula.b + 1)]
    if isinstance(formula, Eventually):
        return "or", [(formula.child, t) for t in range(tau + formula.a, tau + formula.b + 1)]
    raise EncodingError(f"cannot encode node {type(formula).__name__}")


class _QualState:
    """Per-encode caches: three-valued folds, indicator binaries, emitted rows."""

    __slots__ = ("truth", "indicators", "emitted")

    def __init__(self):
        self.truth: dict = {}
        self.indicators: dict = {}
        self.emitted: set = set()


def _known_truth(ctx, state, formula, tau: int):
    """Three-valued fold: True/False when the observed prefix (or an
    agent-only tightened constant) decides the subformula, None otherwise."""
    key = (formula, tau)
    if key in state.truth:
        return state.truth[key]
    out = _known_truth_inner(ctx, state, formula, tau)
    state.truth[key] = out
    return out


def _known_truth_inner(ctx, state, formula, tau: int):
    if isinstance(formula, TrueNode):
        return True
    if isinstance(formula, Not):
        raise EncodingError("encoder expects negation normal form; call to_pnf first")
    if isinstance(formula, Pred):
        e = _atom_expr(ctx, formula.predicate, tau)
        if isinstance(e, float):
            return e >= 0.0  # constant fold: plain sign test, no margin
        return None
    if isinstance(formula, Until):
        pairs = [(_until_witness(formula, dt2), tau) for dt2 in range(formula.a, formula.b + 1)]
        kind = "or"
    else:
        kind, pairs = _temporal_children(formula, tau)
    bits = [_known_truth(ctx, state, child, t) for child, t in pairs]
    if kind == "and":
        if any(b is False for b in bits):
            return False
        return True if all(b is True for b in bits) else None
    if any(b is True for b in bits):
        return True
    return False if all(b is False for b in bits) else None


def _until_witness(formula: Until, dt2: int) -> And:
    """Witness at offset dt2: right holds there and left holds up to it.
    Point shifts G[d,d] keep every part a plain formula node so indicator
    caching works across witnesses that share parts."""
    parts = [Always(dt2, dt2, formula.right)]
    parts += [Always(d, d, formula.left) for d in range(dt2 + 1)]
    return And(tuple(parts))


def _encode_qual(ctx, enc, state, formula, tau: int, guard: int | None) -> None:
    """Emit rows so that guard = 1 (or unconditionally when guard is None)
    forces the subformula at tau.  Caller guarantees the fold is undecided."""
    key = (formula, tau, guard)
    if key in state.emitted:
        return
    state.emitted.add(key)
    if isinstance(formula, Pred):
        e = _atom_expr(ctx, formula.predicate, tau)
        row = {v: -c for v, c in e.coeffs.items()}
        rhs = e.const - ctx.eps
        name = f"sat_{formula.predicate.name}_t{tau}"
        if guard is not None:
            # e >= eps - M (1 - z)
            row[guard] = ctx.big_m
            rhs += ctx.big_m
            name += f"_g{guard}"
        ctx.model.add_constraint(row, "<=", rhs, name=name)
        return
    if isinstance(formula, Until):
        pairs = [(_until_witness(formula, dt2), tau) for dt2 in range(formula.a, formula.b + 1)]
        kind = "or"
    else:
        kind, pairs = _temporal_children(formula, tau)
    live, seen = [], set()
    for child, t in pairs:
        if _known_truth(ctx, state, child, t) is None and (child, t) not in seen:
            seen.add((child, t))
            live.append((child, t))
    if kind == "and":
        for child, t in live:
            _encode_qual(ctx, enc, state, child, t, guard)
        return
    if len(live) == 1:  # single undecided disjunct must hold outright
        _encode_qual(ctx, enc, state, live[0][0], live[0][1], guard)
        return
    zs = [_ensure_indicator(ctx, enc, state, child, t) for child, t in live]
    label = f"cover_{type(formula).__name__.lower()}_t{tau}"
    if guard is None:
        ctx.model.add_constraint({z: 1.0 for z in zs}, ">=", 1.0, name=label)
    else:
        ctx.model.add_constraint({guard: 1.0, **{z: -1.0 for z in zs}}, "<=", 0.0, name=f"{label}_g{guard}")


def _ensure_indicator(ctx, enc, state, formula, tau: int) -> int:
    """Binary z with the one-sided meaning [z = 1 implies formula at tau],
    shared across every disjunction that mentions this occurrence."""
    key = (formula, tau)
    if key in state.indicators:
        return state.indicators[key]
    z = ctx.model.add_binary(f"z{enc.n_binaries}_{type(formula).__name__.lower()}_t{tau}")
    enc.n_binaries += 1
    state.indicators[key] = z
    enc.registry.append(("ind", z, formula, tau))
    _encode_qual(ctx, enc, state, formula, tau, z)
    return z


def _encode_quant(ctx, enc, cache, formula, tau: int):
    key = (formula, tau)
    if key in cache:
        return cache[key]
    out = _encode_quant_inner(ctx, enc, cache, formula, tau)
    cache[key] = out
    return out


def _encode_quant_inner(ctx, enc, cache, formula, tau: int):
    if isinstance(formula, TrueNode):
        return math.inf
    if isinstance(formula, Not):
        raise EncodingError("encoder expects negation normal form; call to_pnf first")
    if isinstance(formula, Pred):
        return _atom_expr(ctx, formula.predicate, tau)
    if isinstance(formula, Until):
        witnesses = []
        for t2 in range(tau + formula.a, tau + formula.b + 1):
            parts = [_encode_quant(ctx, enc, cache, formula.right, t2)]
            parts += [_encode_quant(ctx, enc, cache, formula.left, t1) for t1 in range(tau, t2 + 1)]
            witnesses.append(_quant_gate(ctx, enc, "min", parts, f"until_w{t2}_t{tau}"))
        return _quant_gate(ctx, enc, "max", witnesses, f"until_t{tau}")
    kind, pairs = _temporal_children(formula, tau)
    handles = [_encode_quant(ctx, enc, cache, child, t) for child, t in pairs]
    return _quant_gate(ctx, enc, "min" if kind == "and" else "max", handles, f"{kind}_t{tau}")


def _quant_gate(ctx, enc, op: str, handles: list, label: str):
    """Exact min/max of affine robustness terms via one-hot selectors."""
    sign = 1.0 if op == "min" else -1.0
    neutral = math.inf if op == "min" else -math.inf
    kids = []
    const_fold = neutral
    for h in handles:
        if isinstance(h, LinExpr) or isinstance(h, (int, np.integer)):
            if not any(_same_handle(h, other) for other in kids):
                kids.append(h)
        else:
            v = float(h)
            const_fold = min(const_fold, v) if op == "min" else max(const_fold, v)
    if const_fold == (-math.inf if op == "min" else math.inf):
        return const_fold  # an infinitely bad (good) branch dominates
    if math.isfinite(const_fold):
        kids.append(const_fold)
    if not kids:
        return neutral
    if len(kids) == 1:
        return kids[0]
    M2 = 2.0 * ctx.big_m
    rbar = ctx.model.add_continuous(f"r_{label}", -ctx.big_m, ctx.big_m)
    sels = [ctx.model.add_binary(f"p_{label}_{i}") for i in range(len(kids))]
    enc.n_binaries += len(sels)
    ctx.model.add_constraint({p: 1.0 for p in sels}, "=", 1.0, name=f"{label}_onehot")
    exprs = [_as_expr(h) for h in kids]
    for i, e in enumerate(exprs):
        # rbar <= e_i (min) / rbar >= e_i (max)
        row = {rbar: sign}
        for v, c in e.coeffs.items():
            row[v] = row.get(v, 0.0) - sign * c
        ctx.model.add_constraint(row, "<=", sign * e.const, name=f"{label}_dom{i}")
        # channeling: selector i pins rbar to e_i from the other side
        row = {rbar: -sign, sels[i]: M2}
        for v, c in e.coeffs.items():
            row[v] = row.get(v, 0.0) + sign * c
        ctx.model.add_constraint(row, "<=", M2 - sign * e.const, name=f"{label}_pin{i}")
    enc.registry.append(("sel", op, rbar, sels, exprs))
    return rbar


def _same_handle(a, b) -> bool:
    if isinstance(a, (int, np.integer)) and isinstance(b, (int, np.integer)):
        return int(a) == int(b)
    return a is b


# ---------------------------------------------------------------------------
# pinning the root and warm-start assignments


def require(ctx: EncodingContext, enc: Encoding) -> int | None:
    """Constrain ctx.model so the encoded formula holds; returns the root
    robustness variable in quantitative mode, None otherwise.

    Qualitative encodings pin the root during encode (the root rows are
    emitted unguarded), so only a fold to False needs a row here."""
    r = enc.root
    if enc.mode == "qual":
        if r is False:
            ctx.model.add_constraint({}, ">=", 1.0, name="spec_unsat")
        return None
    if isinstance(r, float):
        # fully observed robustness: plain sign test, no margin
        if not r >= 0.0:
            ctx.model.add_constraint({}, ">=", 1.0, name="spec_unsat")
        return None
    e = _as_expr(r)
    if len(e.coeffs) == 1 and e.const == 0.0:
        (vid, coef), = e.coeffs.items()
        if coef == 1.0 and not ctx.model.vars[vid].is_binary:
            ctx.model.vars[vid].lb = max(ctx.model.vars[vid].lb, ctx.eps_robust)
            return vid
    rbar = ctx.model.add_continuous("r_root", -ctx.big_m, ctx.big_m)
    row = {rbar: 1.0}
    for v, c in e.coeffs.items():
        row[v] = row.get(v, 0.0) - c
    ctx.model.add_constraint(row, "=", e.const, name="root_value")
    ctx.model.vars[rbar].lb = ctx.eps_robust
    enc.registry.append(("root", rbar, e))
    return rbar


def suggest_assignment(ctx: EncodingContext, enc: Encoding, xs: np.ndarray) -> dict[int, int]:
    """Candidate 0/1 assignment of every encoding binary, read off a candidate
    state trajectory (rows 0..t_phi).  Atoms use the same tightened values the
    rows enforce, so a feasible trajectory yields a feasible dive."""
    return candidate_values(ctx, enc, xs)[0]


def candidate_values(ctx: EncodingContext, enc: Encoding, xs: np.ndarray) -> tuple[dict[int, int], dict[int, float]]:
    """suggest_assignment plus the values the encoding's own continuous
    variables (selector gates, root) take at that trajectory, so a caller can
    assemble a complete solution vector without re-solving."""
    xs = np.asarray(xs, dtype=float)
    vals: dict[int, float] = {}
    for tau, vids in ctx.state_vars.items():
        for d, vid in enumerate(vids):
            vals[vid] = float(xs[tau, d])
    memo: dict = {}

    def holds(formula, tau: int) -> bool:
        key = (formula, tau)
        if key in memo:
            return memo[key]
        if isinstance(formula, TrueNode):
            out = True
        elif isinstance(formula, Pred):
            e = _atom_expr(ctx, formula.predicate, tau)
            if isinstance(e, float):
                out = e >= 0.0
            else:
                # slack absorbs float echo when the candidate sits exactly on
                # the eps boundary of an active row
                out = e.value(vals) >= ctx.eps - 1e-9
        elif isinstance(formula, Until):
            out = any(
                holds(_until_witness(formula, dt2), tau)
                for dt2 in range(formula.a, formula.b + 1)
            )
        else:
            kind, pairs = _temporal_children(formula, tau)
            agg = all if kind == "and" else any
            out = agg(holds(child, t) for child, t in pairs)
        memo[key] = out
        return out

    out: dict[int, int] = {}
    extras: dict[int, float] = {}
    for entry in enc.registry:
        if entry[0] == "ind":
            _, z, formula, tau = entry
            out[z] = 1 if holds(formula, tau) else 0
        elif entry[0] == "root":
            _, rbar, e = entry
            extras[rbar] = vals[rbar] = e.value(vals)
        else:
            _, op, rbar, sels, exprs = entry
            scores = [e.value(vals) for e in exprs]
            best = min(range(len(scores)), key=lambda i: (scores[i] if op == "min" else -scores[i], i))
            for i, p in enumerate(sels):
                out[p] = 1 if i == best else 0
            extras[rbar] = vals[rbar] = scores[best]
    return out, extras


def debug_dump(enc: Encoding) -> str:
    lines = [f"mode={enc.mode} big_m={enc.big_m} binaries={enc.n_binaries} root={enc.root!r}"]
    for entry in enc.registry:
        lines.append("  " + repr(entry))
    return "\n".join(lines)
