"""Linear expressions, bounded polytopes, and a self-contained simplex solver.

Everything here is pure and reentrant: no globals, no shared mutable state,
so these routines are safe to call from many threads at once.

All scalars are 64-bit floats.  Tolerances:

* ``FEAS_TOL`` (1e-7): feasibility / strict-interior threshold,
* ``OPT_TOL`` (1e-9): optimality threshold for simplex reduced costs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
ZERO_COEFF = 1e-12
MAX_PIVOTS = 100_000

GE = ">="   # weak constraint: expr >= 0
GT = ">"    # strict constraint: expr > 0


class LpError(Exception):
    """Base class for solver failures."""


class NumericalInstability(LpError):
    """Raised when simplex pivoting exceeds the iteration cap."""


class InfeasibleRegion(LpError):
    """Raised when an operation requires a nonempty region but got none."""


class LinExpr:
    """Sparse affine expression ``sum(c_v * x_v) + const`` over integer var ids.

    Canonical sparse form: coefficients with magnitude <= 1e-12 are dropped,
    so two expressions representing the same function compare equal.
    Instances are immutable by convention; all arithmetic returns new objects.
    """

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs=None, const=0.0):
        cs = {}
        if coeffs:
            for v, c in coeffs.items():
                c = float(c)
                if abs(c) > ZERO_COEFF:
                    cs[int(v)] = c + 0.0
        self.coeffs = cs
        self.const = float(const) + 0.0

    # -- queries ---------------------------------------------------------

    def is_const(self):
        return not self.coeffs

    def coeff(self, v):
        return self.coeffs.get(v, 0.0)

    def vars(self):
        return frozenset(self.coeffs)

    def evaluate(self, point):
        val = self.const
        for v, c in self.coeffs.items():
            val += c * point[v]
        return val

    def key(self):
        """Hashable canonical key (sorted coefficient tuple, constant)."""
        return (tuple(sorted(self.coeffs.items())), self.const)

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return LinExpr(self.coeffs, self.const + other)
        cs = dict(self.coeffs)
        for v, c in other.coeffs.items():
            cs[v] = cs.get(v, 0.0) + c
        return LinExpr(cs, self.const + other.const)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return LinExpr(self.coeffs, self.const - other)
        return self + (-other)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, k):
        k = float(k)
        return LinExpr({v: c * k for v, c in self.coeffs.items()}, self.const * k)

    __rmul__ = __mul__

    def drop(self, v):
        """Copy of the expression with variable ``v`` removed."""
        cs = dict(self.coeffs)
        cs.pop(v, None)
        return LinExpr(cs, self.const)

    def subst(self, v, e):
        """Replace variable ``v`` by the expression ``e``."""
        c = self.coeffs.get(v)
        if c is None:
            return self
        return self.drop(v) + e * c

    def __eq__(self, other):
        return isinstance(other, LinExpr) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"LinExpr({self.coeffs!r}, {self.const!r})"


@dataclass
class Polytope:
    """Conjunction of linear constraints intersected with a finite box.

    ``constraints`` is a list of ``(LinExpr, sense)`` pairs with sense GE
    (``expr >= 0``) or GT (``expr > 0``).  ``box`` maps every variable that
    may appear in constraints (and objectives over this region) to finite
    ``(lo, hi)`` bounds with ``lo < hi``, so the region is always bounded.
    """

    constraints: list = field(default_factory=list)
    box: dict = field(default_factory=dict)


@dataclass
class LpProblem:
    objective: LinExpr
    sense: str            # "max" | "min"
    region: Polytope


@dataclass
class LpResult:
    status: str           # "optimal" | "infeasible" | "unbounded"
    point: dict | None = None
    value: float | None = None

    @property
    def is_optimal(self):
        return self.status == "optimal"


# ---------------------------------------------------------------------------
# Dense two-phase tableau simplex with Bland's anti-cycling rule.
# ---------------------------------------------------------------------------

def _do_pivot(T, obj, basis, r, c):
    T[r] /= T[r, c]
    col = T[:, c].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])
    obj -= obj[c] * T[r]
    T[:, c] = 0.0
    T[r, c] = 1.0
    obj[c] = 0.0
    basis[r] = c


def _pivot_loop(T, obj, basis, allowed):
    """Run Bland-rule pivots until optimal/unbounded. Returns status string."""
    for _ in range(MAX_PIVOTS):
        cand = np.flatnonzero(obj[:allowed] < -OPT_TOL)
        if cand.size == 0:
            return "optimal"
        enter = int(cand[0])
        col = T[:, enter]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            return "unbounded"
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12]
        leave = int(ties[np.argmin(basis[ties])])
        _do_pivot(T, obj, basis, leave, enter)
    raise NumericalInstability(f"simplex exceeded {MAX_PIVOTS} pivots")


def _solve_standard(A, b, c):
    """Maximize c.z s.t. A z <= b, z >= 0.  Returns (status, z)."""
    m, n = A.shape
    if n == 0:
        return ("optimal", np.zeros(0)) if (b >= -FEAS_TOL).all() else ("infeasible", None)
    neg = b < 0.0
    n_art = int(np.count_nonzero(neg))
    art_start = n + m
    ncols = art_start + n_art
    T = np.zeros((m, ncols + 1))
    T[:, :n] = A
    T[:, n:art_start] = np.eye(m)
    T[:, -1] = b
    T[neg] *= -1.0
    basis = np.arange(n, art_start)
    j = art_start
    for i in np.flatnonzero(neg):
        T[i, j] = 1.0
        basis[i] = j
        j += 1

    if n_art:
        # Phase 1: maximize -(sum of artificials); starts feasible by design.
        obj = np.zeros(ncols + 1)
        obj[art_start:ncols] = 1.0
        for i in np.flatnonzero(neg):
            obj -= T[i]
        status = _pivot_loop(T, obj, basis, art_start)
        if status != "optimal":
            raise NumericalInstability("phase-1 simplex did not converge")
        # Judge feasibility by the actual residual in the artificial variables;
        # the incrementally maintained objective cell accumulates drift.
        residual = sum(T[i, -1] for i in range(m) if basis[i] >= art_start)
        if residual > 5e-7 * max(1.0, float(np.abs(b).max())):
            return "infeasible", None
        # Drive leftover zero-valued artificials out of the basis; drop
        # redundant rows that cannot pivot on any structural column.
        drop = []
        for i in range(m):
            if basis[i] >= art_start:
                piv = np.flatnonzero(np.abs(T[i, :art_start]) > PIVOT_TOL)
                if piv.size:
                    _do_pivot(T, obj, basis, i, int(piv[0]))
                else:
                    drop.append(i)
        if drop:
            keep = np.setdiff1d(np.arange(m), np.array(drop))
            T = T[keep]
            basis = basis[keep]
            m = T.shape[0]

    obj = np.zeros(ncols + 1)
    obj[:n] = -np.asarray(c, dtype=float)
    for i in range(m):
        bi = basis[i]
        if obj[bi] != 0.0:
            obj -= obj[bi] * T[i]
    status = _pivot_loop(T, obj, basis, art_start)
    if status != "optimal":
        return status, None
    z = np.zeros(n)
    for i in range(m):
        if basis[i] < n:
            z[basis[i]] = T[i, -1]
    return "optimal", z


def _split_constant_constraints(constraints):
    """Drop variable-free constraints; return (rows, feasible_flag)."""
    rows = []
    for expr, sense in constraints:
        if expr.is_const():
            if sense == GT:
                if expr.const <= FEAS_TOL:
                    return rows, False
            elif expr.const < -FEAS_TOL:
                return rows, False
        else:
            rows.append((expr, sense))
    return rows, True


def lp_solve(problem: LpProblem) -> LpResult:
    """Solve a box-bounded LP exactly (strict constraints as closed relaxation).

    Deterministic for identical input: variables enter the tableau in sorted
    id order, constraints in list order, and pivoting follows Bland's rule.
    """
    obj = problem.objective
    region = problem.region
    rows, ok = _split_constant_constraints(region.constraints)
    if not ok:
        return LpResult("infeasible")

    vids = sorted(obj.vars().union(*[e.vars() for e, _ in rows]) if rows else obj.vars())
    for v in vids:
        if v not in region.box:
            raise LpError(f"variable {v} missing from the region box")
    if not vids:
        return LpResult("optimal", {}, obj.const)

    idx = {v: i for i, v in enumerate(vids)}
    lo = np.array([region.box[v][0] for v in vids])
    hi = np.array([region.box[v][1] for v in vids])
    n = len(vids)

    # Shift to z = x - lo >= 0.  Each "expr >= 0" row becomes -a.z <= a.lo + k
    # and each box upper bound becomes z_j <= hi_j - lo_j.
    A = np.zeros((len(rows) + n, n))
    b = np.zeros(len(rows) + n)
    for r, (expr, _) in enumerate(rows):
        a = np.zeros(n)
        for v, cf in expr.coeffs.items():
            a[idx[v]] = cf
        s = np.abs(a).max()        # equilibrate for numerical stability
        A[r] = -a / s
        b[r] = (expr.const + a @ lo) / s
    A[len(rows):] = np.eye(n)
    b[len(rows):] = hi - lo

    c = np.zeros(n)
    sgn = 1.0 if problem.sense == "max" else -1.0
    for v, cf in obj.coeffs.items():
        c[idx[v]] = sgn * cf

    status, z = _solve_standard(A, b, c)
    if status != "optimal":
        return LpResult(status)
    point = {v: float(lo[idx[v]] + z[idx[v]]) for v in vids}
    return LpResult("optimal", point, obj.evaluate(point))


def _components(constraints):
    """Group constraints into connected components by shared variables."""
    groups = []
    for item in constraints:
        vs = set(item[0].vars())
        merged = [g for g in groups if g[0] & vs]
        for g in merged:
            groups.remove(g)
            vs |= g[0]
        groups.append((vs, [c for g in merged for c in g[1]] + [item]))
    return [g[1] for g in groups]


def polytope_feasible(p: Polytope) -> bool:
    """True iff the closed relaxation of ``p`` is nonempty and, when strict
    constraints are present, has nonempty interior relative to them.

    Strictness is tested by maximizing a common slack ``t`` subject to
    ``expr - t >= 0`` for every strict constraint; the region passes when the
    optimal slack exceeds FEAS_TOL.
    """
    rows, ok = _split_constant_constraints(p.constraints)
    if not ok:
        return False
    if not rows:
        return True
    for comp in _components(rows):
        if not _component_feasible(comp, p.box):
            return False
    return True


def _component_feasible(rows, box):
    strict = [e for e, s in rows if s == GT]
    if not strict:
        res = lp_solve(LpProblem(LinExpr(), "max", Polytope(rows, box)))
        return res.is_optimal
    t = 1 + max(max(max(e.coeffs) for e, _ in rows), max(box))
    aug = []
    for e, s in rows:
        if s == GT:
            cs = dict(e.coeffs)
            cs[t] = -1.0
            aug.append((LinExpr(cs, e.const), GE))
        else:
            aug.append((e, GE))
    box2 = dict(box)
    box2[t] = (-1.0, 1.0)
    res = lp_solve(LpProblem(LinExpr({t: 1.0}), "max", Polytope(aug, box2)))
    return res.is_optimal and res.value > FEAS_TOL


def maximize_over(e: LinExpr, p: Polytope):
    """Maximize ``e`` over ``p`` (closed relaxation); returns (point, value).

    The returned point is a basic feasible solution (vertex) in the subspace
    of variables mentioned by ``e`` or the constraints.  Raises
    InfeasibleRegion when the closed region is empty.
    """
    res = lp_solve(LpProblem(e, "max", p))
    if res.status == "infeasible":
        raise InfeasibleRegion("maximize_over called on an empty region")
    if res.status != "optimal":
        raise LpError(f"unexpected LP status {res.status}")
    return res.point, res.value
