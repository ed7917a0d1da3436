"""Shared oracles and generators for the test suite.

Everything here is written directly against the mathematical definitions and
deliberately avoids reusing library internals, so tests compare two
independent routes to the same answer.
"""

import math

import numpy as np

from stlcp import stl


# ---------------------------------------------------------------------------
# brute-force STL semantics (dict-dispatch, no memoization, no shortcuts)


def oracle_robustness(f, traj, k):
    mu = lambda p, t: p.value(traj.xs[t], [y[t] for y in traj.ys])
    if isinstance(f, stl.TrueNode):
        return math.inf
    if isinstance(f, stl.Pred):
        return mu(f.predicate, k)
    if isinstance(f, stl.Not):
        return -oracle_robustness(f.child, traj, k)
    if isinstance(f, stl.And):
        return min([oracle_robustness(c, traj, k) for c in f.children])
    if isinstance(f, stl.Or):
        return max([oracle_robustness(c, traj, k) for c in f.children])
    if isinstance(f, stl.Always):
        return min([oracle_robustness(f.child, traj, t) for t in range(k + f.a, k + f.b + 1)])
    if isinstance(f, stl.Eventually):
        return max([oracle_robustness(f.child, traj, t) for t in range(k + f.a, k + f.b + 1)])
    if isinstance(f, stl.Until):
        best = -math.inf
        for kp in range(k + f.a, k + f.b + 1):
            inner = oracle_robustness(f.right, traj, kp)
            for kpp in range(k, kp + 1):
                inner = min(inner, oracle_robustness(f.left, traj, kpp))
            best = max(best, inner)
        return best
    raise TypeError(f)


def oracle_boolean(f, traj, k):
    if isinstance(f, stl.TrueNode):
        return True
    if isinstance(f, stl.Pred):
        return f.predicate.value(traj.xs[k], [y[k] for y in traj.ys]) >= 0.0
    if isinstance(f, stl.Not):
        return not oracle_boolean(f.child, traj, k)
    if isinstance(f, stl.And):
        return all([oracle_boolean(c, traj, k) for c in f.children])
    if isinstance(f, stl.Or):
        return any([oracle_boolean(c, traj, k) for c in f.children])
    if isinstance(f, stl.Always):
        return all([oracle_boolean(f.child, traj, t) for t in range(k + f.a, k + f.b + 1)])
    if isinstance(f, stl.Eventually):
        return any([oracle_boolean(f.child, traj, t) for t in range(k + f.a, k + f.b + 1)])
    if isinstance(f, stl.Until):
        for kp in range(k + f.a, k + f.b + 1):
            if oracle_boolean(f.right, traj, kp) and all(
                [oracle_boolean(f.left, traj, t) for t in range(k, kp + 1)]
            ):
                return True
        return False
    raise TypeError(f)


# ---------------------------------------------------------------------------
# random formula / trajectory generators (granular values keep atom values
# far from the 1e-9 negation margin unless exactly zero)


def random_predicate(rng, n_x, agent_dims, granularity=0.25):
    draw = lambda n: granularity * rng.integers(-8, 9, size=n)
    cx = draw(n_x)
    cy = tuple(draw(d) for d in agent_dims)
    return stl.AffinePredicate(tuple(cx), tuple(tuple(c) for c in cy), float(draw(1)[0]))


def random_formula(rng, n_x=1, agent_dims=(1,), depth=3, max_interval=3):
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.05:
            return stl.TrueNode()
        return stl.Pred(random_predicate(rng, n_x, agent_dims))
    kind = rng.integers(0, 6)
    sub = lambda: random_formula(rng, n_x, agent_dims, depth - 1, max_interval)
    if kind == 0:
        return stl.Not(sub())
    if kind == 1:
        return stl.And(tuple(sub() for _ in range(rng.integers(2, 4))))
    if kind == 2:
        return stl.Or(tuple(sub() for _ in range(rng.integers(2, 4))))
    a = int(rng.integers(0, max_interval))
    b = a + int(rng.integers(0, max_interval))
    if kind == 3:
        return stl.Always(a, b, sub())
    if kind == 4:
        return stl.Eventually(a, b, sub())
    return stl.Until(a, b, sub(), sub())


def random_trajectory(rng, length, n_x=1, agent_dims=(1,), granularity=0.25):
    xs = granularity * rng.integers(-8, 9, size=(length + 1, n_x))
    ys = tuple(granularity * rng.integers(-8, 9, size=(length + 1, d)) for d in agent_dims)
    return stl.JointTrajectory(xs.astype(float), tuple(y.astype(float) for y in ys))


# ---------------------------------------------------------------------------
# conformal quantile oracle


def oracle_quantile(scores, delta):
    """Smallest z in the inf-augmented multiset with rank >= p."""
    k = len(scores)
    p = math.ceil((k + 1) * (1.0 - delta))
    aug = sorted(list(scores) + [math.inf])
    for z in aug:
        if sum(1 for s in aug if s <= z) >= p:
            return z
    return math.inf


# ---------------------------------------------------------------------------
# grid minimizer for tightening checks


def grid_min_over_balls(coeff_y, centers, radii, step=1e-3):
    """min over y in product of Euclidean balls of sum_i a_i . y_i, by grid."""
    total = 0.0
    for a, c, r in zip(coeff_y, centers, radii):
        a = np.asarray(a, float)
        c = np.asarray(c, float)
        d = len(c)
        axes = [np.arange(c[j] - r, c[j] + r + step / 2, step) for j in range(d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        keep = np.sum((pts - c) ** 2, axis=1) <= r * r + 1e-12
        pts = pts[keep]
        if len(pts) == 0:
            pts = c[None, :]
        total += float(np.min(pts @ a))
    return total
