"""Independent reference implementations used to cross-check the package.

These deliberately use brute force (vertex enumeration, dense grids, direct
case arithmetic) instead of the code paths they verify.
"""

import itertools
import math

import numpy as np

from xaddplan import GE, GT, LinExpr, Polytope


def polytope_rows(p: Polytope):
    """All constraints as (a, b) rows meaning a.x >= b over sorted var ids."""
    vids = sorted(p.box)
    idx = {v: i for i, v in enumerate(vids)}
    rows = []
    for e, _ in p.constraints:
        a = np.zeros(len(vids))
        for v, c in e.coeffs.items():
            a[idx[v]] = c
        rows.append((a, -e.const))
    for v in vids:
        lo, hi = p.box[v]
        a = np.zeros(len(vids))
        a[idx[v]] = 1.0
        rows.append((a.copy(), lo))
        a = np.zeros(len(vids))
        a[idx[v]] = -1.0
        rows.append((a, -hi))
    return vids, rows


def enumerate_vertices(p: Polytope, tol=1e-7):
    """All vertices of the closed relaxation by solving constraint subsets."""
    vids, rows = polytope_rows(p)
    n = len(vids)
    verts = []
    for combo in itertools.combinations(range(len(rows)), n):
        A = np.array([rows[i][0] for i in combo])
        b = np.array([rows[i][1] for i in combo])
        if abs(np.linalg.det(A)) < 1e-10:
            continue
        x = np.linalg.solve(A, b)
        if all(a @ x >= bb - tol for a, bb in rows):
            if not any(np.allclose(x, v, atol=1e-7) for v in verts):
                verts.append(x)
    return vids, verts


def lp_vertex_oracle(objective: LinExpr, p: Polytope):
    """Max of a linear objective over the region via exhaustive vertices.

    Returns None when the region is empty (no feasible vertex exists for a
    nonempty bounded region, so emptiness and vertex-free coincide).
    """
    vids, verts = enumerate_vertices(p)
    if not verts:
        return None
    best = -math.inf
    for v in verts:
        pt = dict(zip(vids, v))
        best = max(best, objective.evaluate({i: pt.get(i, 0.0) for i in objective.coeffs}))
    return best


def feasible_by_sampling(p: Polytope, rng, samples=10_000):
    """True when rejection sampling finds a point satisfying all constraints."""
    vids = sorted(p.box)
    lo = np.array([p.box[v][0] for v in vids])
    hi = np.array([p.box[v][1] for v in vids])
    pts = rng.uniform(lo, hi, size=(samples, len(vids)))
    idx = {v: i for i, v in enumerate(vids)}
    ok = np.ones(samples, dtype=bool)
    for e, sense in p.constraints:
        vals = np.full(samples, e.const)
        for v, c in e.coeffs.items():
            vals += c * pts[:, idx[v]]
        ok &= (vals > 0) if sense == GT else (vals >= 0)
    return bool(ok.any())


def random_feasible_polytope(rng, dims, n_constraints, extent=2.0, margin=0.2):
    """A bounded polytope with nonempty interior (anchored at a random point)."""
    box = {i: (-extent, extent) for i in range(dims)}
    anchor = rng.uniform(-extent * 0.6, extent * 0.6, size=dims)
    cons = []
    for _ in range(n_constraints):
        a = rng.uniform(-1.0, 1.0, size=dims)
        if np.abs(a).max() < 0.1:
            continue
        # a.x + c >= 0 holds with slack `margin` at the anchor
        c = -(a @ anchor) + margin
        cons.append((LinExpr({i: a[i] for i in range(dims)}, c), GE))
    return Polytope(cons, box)


def random_linexpr(rng, dims, scale=3.0):
    return LinExpr({i: rng.uniform(-scale, scale) for i in range(dims)
                    if rng.random() < 0.8},
                   rng.uniform(-scale, scale))


def random_diagram(store, rng, names, depth=3, const_leaves=False, scale=3.0):
    """Random ordered diagram over the given continuous variable names."""
    if depth == 0 or rng.random() < 0.25:
        if const_leaves:
            return store.mk_terminal(round(rng.uniform(-scale, scale), 3))
        coeffs = {n: round(rng.uniform(-scale, scale), 3) for n in names
                  if rng.random() < 0.7}
        return store.mk_terminal(store.linear(coeffs, round(rng.uniform(-scale, scale), 3)))
    coeffs = {n: round(rng.uniform(-1.0, 1.0), 3) for n in names}
    if all(abs(c) < 0.05 for c in coeffs.values()):
        coeffs[names[0]] = 1.0
    cond = store.linear(coeffs, round(rng.uniform(-1.0, 1.0), 3))
    hi = random_diagram(store, rng, names, depth - 1, const_leaves, scale)
    lo = random_diagram(store, rng, names, depth - 1, const_leaves, scale)
    return store.branch(cond, hi, lo)


# ---------------------------------------------------------------------------
# Dense-grid dynamic programming for the 1D rover domain.
# ---------------------------------------------------------------------------

class Mars1dGrid:
    """Value iteration on a dense state/action grid with clipped transitions.

    Transitions that leave the state box are clipped; because the reward only
    depends on the current position, a clipped outward move is never better
    than standing still, so clipping does not distort the maximum.
    """

    def __init__(self, state_step=0.5, action_step=0.5):
        self.xs = np.arange(-100.0, 100.0 + 1e-9, state_step)
        self.acts = np.arange(-20.0, 20.0 + 1e-9, action_step)
        self.state_step = state_step
        self.values = {h: self._solve_to(h) for h in []}

    def _reward(self, x, tp1, tp2, a):
        tp1p = tp1 | ((x > 40.0) & (x < 60.0))
        tp2p = tp2 | ((x > -60.0) & (x < -40.0))
        r1 = np.where(tp1p & ~tp1 & (x > 50.0), 40.0 - 0.2 * (x - 50.0),
             np.where(tp1p & ~tp1 & (x < 50.0), 40.0 - 0.2 * (50.0 - x),
             np.where(tp1p & tp1, 1.1, -2.0)))
        r2 = np.where(tp2p & ~tp2 & (x > -50.0), 60.0 - 0.2 * (-x + 50.0),
             np.where(tp2p & ~tp2 & (x < -50.0), 60.0 - 0.2 * (x + 50.0),
             np.where(tp2p & tp2, 1.2, -1.0)))
        return r1 + r2 - 0.1 * abs(a), tp1p, tp2p

    def solve(self, horizon):
        xs = self.xs
        flags = [(False, False), (False, True), (True, False), (True, True)]
        v = {fl: np.zeros(len(xs)) for fl in flags}
        for _ in range(horizon):
            nv = {}
            for tp1, tp2 in flags:
                t1 = np.full(len(xs), tp1)
                t2 = np.full(len(xs), tp2)
                best = np.full(len(xs), -np.inf)
                for a in self.acts:
                    r, tp1p, tp2p = self._reward(xs, t1, t2, a)
                    xp = np.clip(xs + a, -100.0, 100.0)
                    idx = np.rint((xp + 100.0) / self.state_step).astype(int)
                    cont = np.where(
                        tp1p & tp2p, v[(True, True)][idx],
                        np.where(tp1p, v[(True, False)][idx],
                                 np.where(tp2p, v[(False, True)][idx],
                                          v[(False, False)][idx])))
                    best = np.maximum(best, r + cont)
                nv[(tp1, tp2)] = best
            v = nv
        return v

    def value_at(self, v, tp1, tp2, x):
        return float(np.interp(x, self.xs, v[(tp1, tp2)]))
