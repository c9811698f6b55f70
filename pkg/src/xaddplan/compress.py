"""Bounded-error diagram compression by successive pairwise leaf merging.

The core primitive finds, for two leaves with their validity regions, the
single hyperplane minimizing the worst absolute error over both regions.
Because leaves and constraints are linear, the worst error over a bounded
polytope is attained at a vertex, so the min-max program reduces to a linear
program over the (finitely many, possibly exponential) region vertices.  It
is solved by constraint generation: starting from no constraints, each round
adds the currently worst-error vertices (one per side of the absolute value
per region) and re-solves, terminating once no vertex beats the master
optimum.  Termination is finite since every round either stops or adds a
vertex from a finite set.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import math

from .lpcore import (GE, LinExpr, LpProblem, Polytope, lp_solve,
                     maximize_over, LpError, NumericalInstability)

_STOP_TOL = 1e-7     # constraint-generation stopping tolerance
_MAX_ROUNDS = 500


@dataclass
class LeafRecord:
    """A leaf expression, the polytopes where it is valid, and the error
    already accumulated into it by previous merges (0 for original leaves)."""
    terminal: int
    expr: LinExpr
    regions: list
    error: float = 0.0


@dataclass
class MergeResult:
    """Best merged hyperplane for a leaf pair.

    ``eps`` is the optimal worst-case error; ``vertex_constraints`` counts the
    distinct region vertices at which constraints were generated (at most the
    total vertex count of all regions).  ``converged`` is False only when an
    early-exit cutoff was supplied and the lower bound already exceeded it.
    """
    coeffs: LinExpr
    eps: float
    vertex_constraints: int
    converged: bool = True


def _space_vars(l1: LeafRecord, l2: LeafRecord):
    vs = set(l1.expr.vars()) | set(l2.expr.vars())
    for rec in (l1, l2):
        for region in rec.regions:
            for e, _ in region.constraints:
                vs |= e.vars()
    return sorted(vs)


def pair_leaf_approx(l1: LeafRecord, l2: LeafRecord, cutoff: float | None = None) -> MergeResult:
    """Optimal single-hyperplane approximation of two leaves (constraint generation).

    Pure function of the two records; safe to run concurrently across pairs.
    With ``cutoff`` set, returns early (converged=False) as soon as the master
    lower bound proves the optimal error is at least the cutoff.
    """
    xs = _space_vars(l1, l2)
    m = len(xs)
    # master LP variable ids: 0..m-1 hyperplane coefficients, m its constant,
    # m+1 the error bound being minimized
    c_ids = list(range(m + 1))
    eps_id = m + 1

    work = [(rec.expr, region) for rec in (l1, l2) for region in rec.regions]
    if not work:
        raise LpError("pair_leaf_approx needs at least one region")

    scale = 1.0
    for rec in (l1, l2):
        scale = max(scale, abs(rec.expr.const),
                    *(abs(c) for c in rec.expr.coeffs.values()))
    for _, region in work:
        for v in xs:
            lo, hi = region.box[v]
            scale = max(scale, abs(lo), abs(hi))

    c_star = {i: 0.0 for i in c_ids}
    eps_master = -math.inf
    vertex_keys = set()
    rows = []            # master constraints as (LinExpr over c_ids+eps, GE)

    def c_expr_at(pt):
        """f*(pt) as a LinExpr over the master's coefficient variables."""
        coeffs = {i: pt.get(xs[i], 0.0) for i in range(m)}
        coeffs[m] = 1.0
        return LinExpr(coeffs)

    def leaf_minus_c(expr):
        """expr - f* as a LinExpr over the x-space for the subproblems."""
        cs = dict(expr.coeffs)
        for i, v in enumerate(xs):
            cs[v] = cs.get(v, 0.0) - c_star[i]
        return LinExpr(cs, expr.const - c_star[m])

    stop_tol = _STOP_TOL * max(1.0, scale)
    for _ in range(_MAX_ROUNDS):
        worst = 0.0
        new_rows = []
        for li, (expr, region) in enumerate(work):
            diff = leaf_minus_c(expr)
            for sgn in (1.0, -1.0):
                pt, val = maximize_over(diff * sgn, region)
                worst = max(worst, val)
                # coordinates free in this LP are completed to a box corner so
                # the constraint point is a genuine region vertex
                full = {v: pt.get(v, region.box[v][0]) for v in xs}
                key = (li, tuple(round(full[v], 9) for v in xs))
                if key not in vertex_keys:
                    vertex_keys.add(key)
                    # |expr(full) - c.(full,1)| <= eps, both sides
                    cpt = c_expr_at(full)
                    fval = expr.evaluate(full)
                    new_rows.append((LinExpr({eps_id: 1.0}) - (LinExpr(const=fval) - cpt), GE))
                    new_rows.append((LinExpr({eps_id: 1.0}) - (cpt - LinExpr(const=fval)), GE))
        done = eps_master > -math.inf and worst <= eps_master + stop_tol
        if done or not new_rows:
            # verification pass: `worst` is the LP-certified max error of the
            # returned hyperplane, so report it even if it exceeds the master
            # optimum by the stopping slack
            return MergeResult(_c_to_expr(c_star, xs),
                               max(eps_master, worst, 0.0), len(vertex_keys))
        rows.extend(new_rows)
        c_star, eps_master = _solve_master(rows, c_ids, eps_id, scale)
        if cutoff is not None and eps_master >= cutoff:
            return MergeResult(_c_to_expr(c_star, xs), eps_master,
                               len(vertex_keys), converged=False)
    raise NumericalInstability("constraint generation failed to converge")


def _c_to_expr(c_star, xs):
    return LinExpr({v: c_star[i] for i, v in enumerate(xs)}, c_star[len(xs)])


def _solve_master(rows, c_ids, eps_id, scale):
    """Solve min eps over the generated constraints, then minimize the
    coefficient 1-norm at that optimum.

    The second stage picks a canonical small-coefficient hyperplane whenever
    the optimal face is degenerate (e.g. point regions leave free directions).
    The coefficient box grows while it clips a still-improving optimum.
    """
    bound = 10.0 * (scale + 1.0)
    best = None
    for _ in range(4):
        box = {i: (-bound, bound) for i in c_ids}
        box[eps_id] = (0.0, bound)
        res = lp_solve(LpProblem(LinExpr({eps_id: 1.0}), "min", Polytope(rows, box)))
        if not res.is_optimal:
            raise LpError(f"master LP unexpectedly {res.status}")
        pt = {i: res.point.get(i, 0.0) for i in c_ids + [eps_id]}
        hit = any(abs(pt[i]) >= 0.98 * bound for i in c_ids)
        hit = hit or pt[eps_id] >= 0.98 * bound
        # grow only while unclipping improves the optimum beyond float noise;
        # a clipped-but-stable optimum is accepted (the caller's verification
        # pass keeps the returned pair sound either way)
        if not hit or (best is not None and res.value >= best - 1e-4 * (1.0 + abs(best))):
            break
        best = res.value
        bound *= 100.0

    eps_opt = pt[eps_id]
    t0 = eps_id + 1
    rows2 = list(rows)
    rows2.append((LinExpr({eps_id: -1.0}, eps_opt + 1e-9), GE))   # eps <= opt
    obj = {}
    box2 = {i: (-bound, bound) for i in c_ids}
    box2[eps_id] = (0.0, bound)
    for j, cid in enumerate(c_ids):
        t = t0 + j
        rows2.append((LinExpr({t: 1.0, cid: -1.0}), GE))          # t >= c
        rows2.append((LinExpr({t: 1.0, cid: 1.0}), GE))           # t >= -c
        box2[t] = (0.0, bound)
        obj[t] = 1.0
    res2 = lp_solve(LpProblem(LinExpr(obj), "min", Polytope(rows2, box2)))
    if res2.is_optimal:
        point = {i: res2.point.get(i, 0.0) for i in c_ids}
        point[eps_id] = eps_opt
        return point, eps_opt
    return pt, eps_opt


def xadd_compress(store, root: int, eps: float):
    """Merge leaves pairwise while the accumulated error stays under ``eps``.

    Returns ``(compressed_root, eps_used)`` with the LP-verifiable guarantee
    ``max_abs_diff(root, compressed_root) <= eps_used <= eps``.  ``eps = 0``
    returns the diagram unchanged.  Node count never increases; every accepted
    merge removes one distinct leaf and re-reduces the diagram.
    """
    eps = float(eps)
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    if eps == 0.0:
        return root, 0.0

    center = {v: (lo + hi) / 2.0 for v, (lo, hi) in store.box().items()}
    records = []
    for part in store.enumerate_partitions(root):
        if part.expr.is_const() and not math.isfinite(part.expr.const):
            raise ValueError("cannot compress a diagram with infinite leaves")
        records.append(LeafRecord(part.terminal, part.expr,
                                  [p.polytope for p in part.paths]))
    records.sort(key=lambda r: (r.expr.evaluate(center), r.terminal))

    open_list = deque(records)
    eps_used = 0.0
    out = root
    while open_list:
        l1 = open_list.popleft()
        survivors = []
        for l2 in open_list:
            budget = eps - max(l1.error, l2.error)
            if budget <= 0.0:
                survivors.append(l2)
                continue
            res = pair_leaf_approx(l1, l2, cutoff=budget)
            err = res.eps + max(l1.error, l2.error)
            if res.converged and err < eps:
                eps_used = max(eps_used, err)
                tstar = store.mk_terminal(res.coeffs)
                out = store.replace_terminals(
                    out, {l1.terminal: tstar, l2.terminal: tstar})
                l1 = LeafRecord(tstar, res.coeffs, l1.regions + l2.regions, err)
            else:
                survivors.append(l2)
        open_list = deque(survivors)
    return out, eps_used


def relative_epsilon(store, root: int, fraction: float) -> float:
    """Per-iteration error budget as a fraction of the diagram's max magnitude."""
    if fraction < 0.0:
        raise ValueError("fraction must be nonnegative")
    return fraction * store.max_abs_diff(root, store.ZERO)
