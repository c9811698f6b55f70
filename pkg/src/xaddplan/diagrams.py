"""Hash-consed decision diagrams with linear decisions and linear leaves.

A :class:`DiagramStore` owns every node: structurally identical nodes share a
single integer id, internal nodes never have equal children, and on every
root-to-leaf path the decision order indices strictly increase.  Decisions are
either boolean-variable tests or canonicalized strict linear inequalities
``expr > 0`` (the false branch covers ``expr <= 0``); consequently a point
lying exactly on a decision boundary falls to the else branch, which only
matters on measure-zero sets.

Stores are single-threaded: callers must serialize access to one store.
Independent stores never share node ids.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field

from .lpcore import (GE, GT, FEAS_TOL, LinExpr, Polytope, LpProblem,
                     lp_solve, polytope_feasible)

TERM_ORDER = 1 << 60          # pseudo order index for terminals
_DEC_ROUND = 10               # decimals kept in canonical decision expressions

sys.setrecursionlimit(max(sys.getrecursionlimit(), 100_000))


class DiagramError(Exception):
    """Base class for diagram construction/usage errors."""


class OrderingViolation(DiagramError):
    pass


class NonLinearResult(DiagramError):
    """A product would have produced a non-linear leaf."""


class UnassignedVariable(DiagramError):
    pass


class InvalidProbability(DiagramError):
    pass


@dataclass(frozen=True)
class Decision:
    """An interned decision: a boolean variable or a linear test ``expr > 0``.

    ``index`` is the global order position, unique per decision and fixed for
    the store's lifetime; parents always carry smaller indices than children.
    """
    index: int
    bool_var: str | None
    expr: LinExpr | None

    @property
    def is_bool(self):
        return self.bool_var is not None


@dataclass
class PathRegion:
    """One feasible root-to-leaf path: its boolean literals and its polytope."""
    bools: dict
    polytope: Polytope


@dataclass
class CasePartition:
    """All feasible paths that reach one distinct leaf expression."""
    terminal: int
    expr: LinExpr
    paths: list


def _fmt(x: float) -> str:
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return repr(x + 0.0)


class DiagramStore:
    """Node, decision and variable tables plus the full operation algebra."""

    def __init__(self):
        self._cont_ids = {}        # name -> id
        self._cont_names = []      # id -> name
        self._bounds = {}          # id -> (lo, hi)
        self._bool_vars = {}       # name -> creation order (dict keeps order)

        self._decisions = []       # index -> Decision
        self._dec_intern = {}      # canonical key -> Decision

        self._nodes = []           # id -> ("t", LinExpr) | ("i", dec, hi, lo)
        self._term_intern = {}
        self._int_intern = {}

        self._apply_cache = {}
        self._ite_cache = {}
        self._feas_cache = {}
        self._reduce_cache = {}
        self._cont_vars_cache = {}
        self._bool_vars_cache = {}

        self.ZERO = self.mk_terminal(0.0)
        self.ONE = self.mk_terminal(1.0)
        self.POS_INF = self.mk_terminal(math.inf)
        self.NEG_INF = self.mk_terminal(-math.inf)

    # -- variables ---------------------------------------------------------

    def declare_cont(self, name, lo, hi):
        if name in self._cont_ids or name in self._bool_vars:
            raise DiagramError(f"variable {name!r} already declared")
        lo, hi = float(lo), float(hi)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise DiagramError(f"variable {name!r} needs finite bounds with lo < hi")
        vid = len(self._cont_names)
        self._cont_ids[name] = vid
        self._cont_names.append(name)
        self._bounds[vid] = (lo, hi)
        return vid

    def declare_bool(self, name):
        if name in self._cont_ids or name in self._bool_vars:
            raise DiagramError(f"variable {name!r} already declared")
        self._bool_vars[name] = len(self._bool_vars)

    def has_var(self, name):
        return name in self._cont_ids or name in self._bool_vars

    def cont_names(self):
        return list(self._cont_names)

    def bool_names(self):
        return list(self._bool_vars)

    def var_id(self, name):
        try:
            return self._cont_ids[name]
        except KeyError:
            raise DiagramError(f"unknown continuous variable {name!r}") from None

    def var_name(self, vid):
        return self._cont_names[vid]

    def bounds(self, name):
        return self._bounds[self.var_id(name)]

    def box(self):
        return dict(self._bounds)

    def linear(self, coeffs=None, const=0.0) -> LinExpr:
        """Build a LinExpr from a name-keyed coefficient mapping."""
        return LinExpr({self.var_id(n): c for n, c in (coeffs or {}).items()}, const)

    # -- node construction ---------------------------------------------------

    def mk_terminal(self, expr) -> int:
        if isinstance(expr, (int, float)):
            expr = LinExpr(const=expr)
        for v in expr.coeffs:
            if v >= len(self._cont_names):
                raise DiagramError(f"terminal uses undeclared variable id {v}")
        key = expr.key()
        nid = self._term_intern.get(key)
        if nid is None:
            nid = len(self._nodes)
            self._nodes.append(("t", expr))
            self._term_intern[key] = nid
        return nid

    def mk_internal(self, dec: Decision, hi: int, lo: int) -> int:
        if hi == lo:
            return hi
        if dec.index >= self.root_index(hi) or dec.index >= self.root_index(lo):
            raise OrderingViolation(
                f"decision #{dec.index} must precede both children")
        key = (dec.index, hi, lo)
        nid = self._int_intern.get(key)
        if nid is None:
            nid = len(self._nodes)
            self._nodes.append(("i", dec, hi, lo))
            self._int_intern[key] = nid
        return nid

    def is_terminal(self, f):
        return self._nodes[f][0] == "t"

    def expr(self, f) -> LinExpr:
        node = self._nodes[f]
        if node[0] != "t":
            raise DiagramError("not a terminal")
        return node[1]

    def parts(self, f):
        node = self._nodes[f]
        if node[0] != "i":
            raise DiagramError("not an internal node")
        return node[1], node[2], node[3]

    def root_index(self, f):
        node = self._nodes[f]
        return TERM_ORDER if node[0] == "t" else node[1].index

    # -- decisions -----------------------------------------------------------

    def _canon_decision(self, e: LinExpr):
        """Canonicalize a decision expression ``e > 0``.

        Returns ("const", truth) for variable-free tests, otherwise
        ("dec", expr, flipped): the stored expression is scaled so its
        largest-magnitude coefficient is +-1 and its first nonzero coefficient
        (by variable id, then constant) is positive; ``flipped`` records a sign
        flip, in which case ``e > 0`` is read as the *false* branch of the
        canonical test (boundary points land on the else branch either way).
        """
        if not e.coeffs:
            return ("const", e.const > 0.0)
        s = max(max(abs(c) for c in e.coeffs.values()), abs(e.const))
        e = e * (1.0 / s)
        lead = e.coeffs[min(e.coeffs)]
        flipped = lead < 0.0
        if flipped:
            e = -e
        e = LinExpr({v: round(c, _DEC_ROUND) for v, c in e.coeffs.items()},
                    round(e.const, _DEC_ROUND))
        if not e.coeffs:
            # all variable coefficients rounded away; resolve as a constant
            return ("const", e.const < 0.0 if flipped else e.const > 0.0)
        return ("dec", e, flipped)

    def _intern_decision(self, key, bool_var, expr) -> Decision:
        dec = self._dec_intern.get(key)
        if dec is None:
            dec = Decision(len(self._decisions), bool_var, expr)
            self._decisions.append(dec)
            self._dec_intern[key] = dec
        return dec

    def bool_decision(self, name) -> Decision:
        if name not in self._bool_vars:
            raise DiagramError(f"unknown boolean variable {name!r}")
        return self._intern_decision(("b", name), name, None)

    def ineq_decision(self, e: LinExpr):
        """Intern the canonical decision for ``e > 0``.

        Returns (decision, flipped) or (None, truth) when the test is constant.
        """
        canon = self._canon_decision(e)
        if canon[0] == "const":
            return None, canon[1]
        _, expr, flipped = canon
        return self._intern_decision(("l", expr.key()), None, expr), flipped

    # -- ordered insertion (ite) ----------------------------------------------

    def _cofactor(self, f, dec, branch):
        node = self._nodes[f]
        if node[0] == "i" and node[1] is dec:
            return node[2] if branch else node[3]
        return f

    def ite(self, dec: Decision, f: int, g: int) -> int:
        """Diagram equal to f where ``dec`` holds and g elsewhere.

        Unlike mk_internal this accepts children already containing ``dec`` or
        decisions ordered before it; the test is inserted at its order slot.
        """
        if f == g:
            return f
        key = (dec.index, f, g)
        out = self._ite_cache.get(key)
        if out is not None:
            return out
        top = min(dec.index, self.root_index(f), self.root_index(g))
        if top == dec.index:
            out = self.mk_internal(dec, self._cofactor(f, dec, True),
                                   self._cofactor(g, dec, False))
        else:
            t = self._nodes[f][1] if self.root_index(f) == top else self._nodes[g][1]
            out = self.mk_internal(
                t,
                self.ite(dec, self._cofactor(f, t, True), self._cofactor(g, t, True)),
                self.ite(dec, self._cofactor(f, t, False), self._cofactor(g, t, False)))
        self._ite_cache[key] = out
        return out

    def branch(self, cond, hi: int, lo: int) -> int:
        """Ordered if-then-else on a condition.

        ``cond`` is a boolean variable name or a LinExpr meaning ``expr > 0``.
        Constant tests resolve immediately.
        """
        if isinstance(cond, str):
            return self.ite(self.bool_decision(cond), hi, lo)
        dec, flipped = self.ineq_decision(cond)
        if dec is None:
            return hi if flipped else lo
        if flipped:
            hi, lo = lo, hi
        return self.ite(dec, hi, lo)

    # -- apply ----------------------------------------------------------------

    def apply(self, f: int, g: int, op: str) -> int:
        """Pointwise add/sub/mul/max/min of two diagrams (reduced result).

        ``mul`` requires at least one constant leaf on every co-path, else
        NonLinearResult is raised.  max/min introduce new decisions comparing
        co-occurring leaves.
        """
        return self.reduce_lp(self._apply(f, g, op))

    def _leaf_op(self, f, g, op):
        e1, e2 = self.expr(f), self.expr(g)
        if op == "add":
            return self.mk_terminal(e1 + e2)
        if op == "sub":
            return self.mk_terminal(e1 - e2)
        if op == "mul":
            if e1.is_const():
                if not math.isfinite(e1.const) and not e2.is_const():
                    raise DiagramError("product with an infinite leaf")
                return self.mk_terminal(e2 * e1.const)
            if e2.is_const():
                if not math.isfinite(e2.const) and not e1.is_const():
                    raise DiagramError("product with an infinite leaf")
                return self.mk_terminal(e1 * e2.const)
            raise NonLinearResult("product of two non-constant leaves")
        # max / min
        if f == g:
            return f
        for a, b, first in ((e1, e2, True), (e2, e1, False)):
            if a.is_const() and not math.isfinite(a.const):
                big = a.const > 0
                pick_first = big if op == "max" else not big
                return (f if first else g) if pick_first else (g if first else f)
        diff = e1 - e2
        if diff.is_const():
            bigger = f if diff.const > 0.0 else g
            smaller = g if diff.const > 0.0 else f
            return bigger if op == "max" else smaller
        if op == "max":
            return self.branch(diff, f, g)
        return self.branch(diff, g, f)

    def _apply(self, f, g, op):
        # cheap identities
        if op == "add":
            if f == self.ZERO:
                return g
            if g == self.ZERO:
                return f
        elif op == "sub":
            if g == self.ZERO:
                return f
        elif op == "mul":
            if f == self.ZERO or g == self.ZERO:
                return self.ZERO
            if f == self.ONE:
                return g
            if g == self.ONE:
                return f
        elif op == "max":
            if f == self.NEG_INF or g == self.POS_INF or f == g:
                return g
            if g == self.NEG_INF or f == self.POS_INF:
                return f
        elif op == "min":
            if f == self.POS_INF or g == self.NEG_INF or f == g:
                return g
            if g == self.POS_INF or f == self.NEG_INF:
                return f
        else:
            raise DiagramError(f"unknown operation {op!r}")

        if op in ("add", "mul", "max", "min") and g < f:
            key = (op, g, f)
        else:
            key = (op, f, g)
        out = self._apply_cache.get(key)
        if out is not None:
            return out

        fn, gn = self._nodes[f], self._nodes[g]
        if fn[0] == "t" and gn[0] == "t":
            out = self._leaf_op(f, g, op)
        else:
            top = min(self.root_index(f), self.root_index(g))
            dec = fn[1] if self.root_index(f) == top else gn[1]
            hi = self._apply(self._cofactor(f, dec, True),
                             self._cofactor(g, dec, True), op)
            lo = self._apply(self._cofactor(f, dec, False),
                             self._cofactor(g, dec, False), op)
            out = self.ite(dec, hi, lo)
        self._apply_cache[key] = out
        return out

    def scale(self, f: int, k: float) -> int:
        """Pointwise multiplication by a scalar constant."""
        if k == 1.0:
            return f
        return self.map_terminals(f, lambda e: e * k)

    def map_terminals(self, f: int, fn) -> int:
        """Rebuild ``f`` with every leaf expression passed through ``fn``."""
        memo = {}

        def rec(n):
            out = memo.get(n)
            if out is not None:
                return out
            node = self._nodes[n]
            if node[0] == "t":
                out = self.mk_terminal(fn(node[1]))
            else:
                out = self.mk_internal(node[1], rec(node[2]), rec(node[3]))
            memo[n] = out
            return out

        return rec(f)

    def replace_terminals(self, f: int, mapping: dict) -> int:
        """Swap terminal node ids per ``mapping`` and re-reduce."""
        memo = {}

        def rec(n):
            out = memo.get(n)
            if out is not None:
                return out
            node = self._nodes[n]
            if node[0] == "t":
                out = mapping.get(n, n)
            else:
                hi, lo = rec(node[2]), rec(node[3])
                out = hi if hi == lo else self.mk_internal(node[1], hi, lo)
            memo[n] = out
            return out

        return self.reduce_lp(rec(f))

    # -- evaluation -------------------------------------------------------------

    def evaluate(self, f: int, bools: dict | None = None, point: dict | None = None):
        """Walk root to leaf; linear tests are true iff ``expr > 0``."""
        bools = bools or {}
        point = point or {}
        idpoint = {}
        for name, val in point.items():
            idpoint[self.var_id(name)] = float(val)
        n = f
        while True:
            node = self._nodes[n]
            if node[0] == "t":
                try:
                    return node[1].evaluate(idpoint)
                except KeyError as exc:
                    raise UnassignedVariable(
                        f"missing value for {self.var_name(exc.args[0])!r}") from None
            dec = node[1]
            if dec.is_bool:
                if dec.bool_var not in bools:
                    raise UnassignedVariable(f"missing boolean {dec.bool_var!r}")
                taken = bool(bools[dec.bool_var])
            else:
                try:
                    taken = dec.expr.evaluate(idpoint) > 0.0
                except KeyError as exc:
                    raise UnassignedVariable(
                        f"missing value for {self.var_name(exc.args[0])!r}") from None
            n = node[2] if taken else node[3]

    # -- substitution and renaming ----------------------------------------------

    def substitute_cont(self, f: int, var: str, e) -> int:
        """Replace a continuous variable by a linear expression everywhere."""
        if isinstance(e, (int, float)):
            e = LinExpr(const=e)
        return self.reduce_lp(self._substitute(f, {self.var_id(var): e}, {}))

    def rename_vars(self, f: int, cont_map: dict | None = None,
                    bool_map: dict | None = None) -> int:
        """Simultaneously rename variables (used to prime state variables)."""
        cmap = {self.var_id(a): LinExpr({self.var_id(b): 1.0})
                for a, b in (cont_map or {}).items()}
        return self.reduce_lp(self._substitute(f, cmap, dict(bool_map or {})))

    def _substitute(self, f, cmap, bmap):
        memo = {}

        def sub_expr(e):
            out = e
            for v, repl in cmap.items():
                out = out.subst(v, repl)
            return out

        def rec(n):
            out = memo.get(n)
            if out is not None:
                return out
            node = self._nodes[n]
            if node[0] == "t":
                out = self.mk_terminal(sub_expr(node[1]))
            else:
                dec, hi, lo = node[1], rec(node[2]), rec(node[3])
                if dec.is_bool:
                    name = bmap.get(dec.bool_var, dec.bool_var)
                    out = self.ite(self.bool_decision(name), hi, lo)
                else:
                    out = self.branch(sub_expr(dec.expr), hi, lo)
            memo[n] = out
            return out

        return rec(f)

    def restrict_bool(self, f: int, name: str, value) -> int:
        """Collapse every decision on ``name`` to the chosen branch."""
        value = bool(value)
        memo = {}

        def rec(n):
            out = memo.get(n)
            if out is not None:
                return out
            node = self._nodes[n]
            if node[0] == "t":
                out = n
            else:
                dec = node[1]
                if dec.is_bool and dec.bool_var == name:
                    out = rec(node[2] if value else node[3])
                else:
                    hi, lo = rec(node[2]), rec(node[3])
                    out = hi if hi == lo else self.mk_internal(dec, hi, lo)
            memo[n] = out
            return out

        return rec(f)

    # -- variable usage ----------------------------------------------------------

    def cont_vars_of(self, f) -> frozenset:
        out = self._cont_vars_cache.get(f)
        if out is not None:
            return out
        node = self._nodes[f]
        if node[0] == "t":
            out = node[1].vars()
        else:
            out = self.cont_vars_of(node[2]) | self.cont_vars_of(node[3])
            if not node[1].is_bool:
                out |= node[1].expr.vars()
        self._cont_vars_cache[f] = out
        return out

    def bool_vars_of(self, f) -> frozenset:
        out = self._bool_vars_cache.get(f)
        if out is not None:
            return out
        node = self._nodes[f]
        if node[0] == "t":
            out = frozenset()
        else:
            out = self.bool_vars_of(node[2]) | self.bool_vars_of(node[3])
            if node[1].is_bool:
                out |= {node[1].bool_var}
        self._bool_vars_cache[f] = out
        return out

    def mentions_cont(self, f, name):
        return self.var_id(name) in self.cont_vars_of(f)

    def mentions_bool(self, f, name):
        return name in self.bool_vars_of(f)

    # -- LP-backed reduction -------------------------------------------------------

    def _ctx_feasible(self, ctx) -> bool:
        key = frozenset(ctx)
        out = self._feas_cache.get(key)
        if out is None:
            out = polytope_feasible(self._ctx_polytope(ctx))
            self._feas_cache[key] = out
        return out

    def _ctx_polytope(self, ctx) -> Polytope:
        cons = []
        for idx, pol in ctx:
            e = self._decisions[idx].expr
            cons.append((e, GT) if pol else (-e, GE))
        return Polytope(cons, self._bounds)

    def _relevant_ctx(self, ctx, varset):
        """Constraints of ctx connected to ``varset`` through shared variables."""
        if not ctx:
            return ctx
        pending = set(varset)
        items = [(c, self._decisions[c[0]].expr.vars()) for c in ctx]
        picked = []
        changed = True
        while changed:
            changed = False
            rest = []
            for item in items:
                if item[1] & pending:
                    picked.append(item[0])
                    pending |= item[1]
                    changed = True
                else:
                    rest.append(item)
            items = rest
        return tuple(sorted(picked))

    def reduce_lp(self, f: int) -> int:
        """Prune paths whose polytope is empty and collapse implied decisions.

        Semantics on the domain box are preserved exactly; the result of a
        second application is the identical node id.
        """
        return self._reduce(f, ())

    def _reduce(self, f, ctx):
        node = self._nodes[f]
        if node[0] == "t":
            return f
        key = (f, self._relevant_ctx(ctx, self.cont_vars_of(f)))
        out = self._reduce_cache.get(key)
        if out is not None:
            return out
        dec = node[1]
        if dec.is_bool:
            hi, lo = self._reduce(node[2], ctx), self._reduce(node[3], ctx)
            out = hi if hi == lo else self.mk_internal(dec, hi, lo)
        else:
            ctx_t = tuple(sorted(ctx + ((dec.index, True),)))
            ctx_f = tuple(sorted(ctx + ((dec.index, False),)))
            if not self._ctx_feasible(ctx_f):
                out = self._reduce(node[2], ctx)
            elif not self._ctx_feasible(ctx_t):
                out = self._reduce(node[3], ctx)
            else:
                hi, lo = self._reduce(node[2], ctx_t), self._reduce(node[3], ctx_f)
                out = hi if hi == lo else self.mk_internal(dec, hi, lo)
        self._reduce_cache[key] = out
        return out

    # -- path and partition enumeration -----------------------------------------------

    def _paths(self, f):
        """Yield (bools, ctx, terminal) for every feasible root-to-leaf path."""
        out = []

        def rec(n, bools, ctx):
            node = self._nodes[n]
            if node[0] == "t":
                out.append((dict(bools), ctx, n))
                return
            dec = node[1]
            if dec.is_bool:
                bools[dec.bool_var] = True
                rec(node[2], bools, ctx)
                bools[dec.bool_var] = False
                rec(node[3], bools, ctx)
                del bools[dec.bool_var]
            else:
                ctx_t = tuple(sorted(ctx + ((dec.index, True),)))
                if self._ctx_feasible(ctx_t):
                    rec(node[2], bools, ctx_t)
                ctx_f = tuple(sorted(ctx + ((dec.index, False),)))
                if self._ctx_feasible(ctx_f):
                    rec(node[3], bools, ctx_f)

        rec(f, {}, ())
        return out

    def enumerate_partitions(self, f: int) -> list:
        """One CasePartition per distinct leaf; infeasible paths are omitted."""
        by_term = {}
        order = []
        for bools, ctx, term in self._paths(f):
            part = by_term.get(term)
            if part is None:
                part = CasePartition(term, self.expr(term), [])
                by_term[term] = part
                order.append(part)
            part.paths.append(PathRegion(bools, self._ctx_polytope(ctx)))
        return order

    # -- stochastic-transition helpers ----------------------------------------------

    def integrate_dirac(self, q: int, var: str, ple: int) -> int:
        """Marginalize ``var`` out of ``q`` against a deterministic assignment.

        ``ple`` is a case-structured assignment diagram whose leaves give the
        value of ``var``; its decisions must not mention ``var`` itself.
        Equivalent to summing, over the assignment's cases, the indicator of
        the case region times ``q`` with ``var`` substituted by the case value.
        """
        vid = self.var_id(var)
        memo = {}

        def rec(n):
            out = memo.get(n)
            if out is not None:
                return out
            node = self._nodes[n]
            if node[0] == "t":
                out = self._substitute(q, {vid: node[1]}, {})
            else:
                dec = node[1]
                if not dec.is_bool and vid in dec.expr.vars():
                    raise DiagramError(
                        f"assignment for {var!r} conditions on itself")
                hi, lo = rec(node[2]), rec(node[3])
                out = self.ite(dec, hi, lo) if hi != lo else hi
            memo[n] = out
            return out

        return self.reduce_lp(rec(ple))

    def marginalize_bool(self, q: int, var: str, prob: int) -> int:
        """Sum ``var`` out of ``q`` under ``P(var=1) = prob``.

        ``prob`` must have constant leaves within [0, 1].
        """
        for term in self._reachable_terminals(prob):
            e = self.expr(term)
            if not e.is_const() or not -1e-9 <= e.const <= 1.0 + 1e-9:
                raise InvalidProbability(
                    f"probability leaf {e.const if e.is_const() else e!r} "
                    f"for {var!r} outside [0, 1]")
        if not self.mentions_bool(q, var):
            return q
        q1 = self.restrict_bool(q, var, True)
        q0 = self.restrict_bool(q, var, False)
        comp = self._apply(self.ONE, prob, "sub")
        out = self._apply(self._apply(q1, prob, "mul"),
                          self._apply(q0, comp, "mul"), "add")
        return self.reduce_lp(out)

    def _reachable_terminals(self, f):
        seen = set()
        stack = [f]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            node = self._nodes[n]
            if node[0] == "t":
                yield n
            else:
                stack.append(node[2])
                stack.append(node[3])

    # -- parameter maximization ---------------------------------------------------------

    def _indicator(self, dec, polarity):
        return self.mk_internal(dec, self.ONE, self.ZERO) if polarity \
            else self.mk_internal(dec, self.ZERO, self.ONE)

    def _ind_nonneg(self, f):
        """0/1 diagram for ``f >= 0`` (leafwise)."""
        memo = {}

        def rec(n):
            out = memo.get(n)
            if out is not None:
                return out
            node = self._nodes[n]
            if node[0] == "t":
                e = node[1]
                if e.is_const():
                    out = self.ONE if e.const >= -1e-12 else self.ZERO
                else:
                    out = self.branch(-e, self.ZERO, self.ONE)
            else:
                hi, lo = rec(node[2]), rec(node[3])
                out = hi if hi == lo else self.ite(node[1], hi, lo)
            memo[n] = out
            return out

        return rec(f)

    def select(self, cond01, a, b):
        """Piece together ``a`` where a 0/1 diagram is 1 and ``b`` where 0."""
        return self._select(cond01, a, b)

    def _select(self, cond01, a, b):
        memo = {}

        def rec(n):
            out = memo.get(n)
            if out is not None:
                return out
            node = self._nodes[n]
            if node[0] == "t":
                c = node[1].const
                out = a if c > 0.5 else b
            else:
                hi, lo = rec(node[2]), rec(node[3])
                out = hi if hi == lo else self.ite(node[1], hi, lo)
            memo[n] = out
            return out

        return rec(cond01)

    def max_param(self, q: int, var: str, lo: float, hi: float) -> int:
        """Eliminate ``var`` by maximizing over its section of [lo, hi].

        For each feasible path the constraints mentioning ``var`` split into
        lower/upper bound expressions over the remaining variables; since each
        leaf is linear in ``var`` the maximizer is the binding bound on the
        side selected by the leaf slope.  Candidates are guarded by conditions
        making them feasible and folded with pointwise max.
        """
        lo, hi = float(lo), float(hi)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise DiagramError(f"parameter {var!r} needs finite bounds with lo < hi")
        vid = self.var_id(var)
        if vid not in self.cont_vars_of(q):
            return self.reduce_lp(q)

        acc = self.NEG_INF
        for bools, ctx, term in self._paths(q):
            lowers = [self.mk_terminal(lo)]
            uppers = [self.mk_terminal(hi)]
            guard = self.ONE
            for idx, pol in ctx:
                e = self._decisions[idx].expr
                beta = e.coeff(vid)
                if beta == 0.0:
                    guard = self._apply(guard, self._indicator(self._decisions[idx], pol), "mul")
                else:
                    bound = self.mk_terminal(e.drop(vid) * (-1.0 / beta))
                    if pol == (beta > 0.0):
                        lowers.append(bound)
                    else:
                        uppers.append(bound)
            for bname, bval in bools.items():
                guard = self._apply(guard, self._indicator(self.bool_decision(bname), bval), "mul")

            low = lowers[0]
            for b in lowers[1:]:
                low = self._apply(low, b, "max")
            upp = uppers[0]
            for b in uppers[1:]:
                upp = self._apply(upp, b, "min")
            guard = self._apply(guard, self._ind_nonneg(self._apply(upp, low, "sub")), "mul")

            leaf = self.expr(term)
            slope = leaf.coeff(vid)
            rest = leaf.drop(vid)
            if slope > 0.0:
                val = self.map_terminals(upp, lambda u, r=rest, s=slope: r + u * s)
            elif slope < 0.0:
                val = self.map_terminals(low, lambda u, r=rest, s=slope: r + u * s)
            else:
                val = self.mk_terminal(rest)

            acc = self.reduce_lp(self._apply(acc, self._select(guard, val, self.NEG_INF), "max"))

        out = self.reduce_lp(acc)
        for term in self._reachable_terminals(out):
            e = self.expr(term)
            if e.is_const() and not math.isfinite(e.const):
                raise DiagramError("parameter maximization left an uncovered region")
        return out

    # -- diagram metrics --------------------------------------------------------------------

    def max_abs_diff(self, f: int, g: int) -> float:
        """LP-verified max over booleans and the box of ``|f - g|``."""
        if f == g:
            return 0.0
        d = self.apply(f, g, "sub")
        best = 0.0
        for _, ctx, term in self._paths(d):
            e = self.expr(term)
            if e.is_const():
                if not math.isfinite(e.const):
                    raise DiagramError("difference of diagrams with infinite leaves")
                best = max(best, abs(e.const))
                continue
            region = self._ctx_polytope(ctx)
            for obj in (e, -e):
                res = lp_solve(LpProblem(obj, "max", region))
                if res.is_optimal:
                    best = max(best, res.value)
        return best

    def node_count(self, f: int) -> int:
        seen = set()
        stack = [f]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            node = self._nodes[n]
            if node[0] == "i":
                stack.append(node[2])
                stack.append(node[3])
        return len(seen)

    # -- rendering ------------------------------------------------------------------------

    def expr_text(self, e: LinExpr) -> str:
        if e.is_const():
            return _fmt(e.const)
        terms = []
        for v in sorted(e.coeffs):
            c = e.coeffs[v]
            name = self._cont_names[v]
            if c == 1.0:
                t = name
            elif c == -1.0:
                t = f"-{name}"
            else:
                t = f"{_fmt(c)}*{name}"
            terms.append(t)
        out = terms[0]
        for t in terms[1:]:
            out += f" - {t[1:]}" if t.startswith("-") else f" + {t}"
        if e.const != 0.0:
            out += f" - {_fmt(-e.const)}" if e.const < 0 else f" + {_fmt(e.const)}"
        return out

    def decision_text(self, dec: Decision) -> str:
        return dec.bool_var if dec.is_bool else f"{self.expr_text(dec.expr)} > 0"

    def to_text(self, f: int) -> str:
        """Serialize to the textual diagram grammar (true branch first)."""
        memo = {}

        def rec(n):
            out = memo.get(n)
            if out is not None:
                return out
            node = self._nodes[n]
            if node[0] == "t":
                out = f"[{self.expr_text(node[1])}]"
            else:
                out = f"({self.decision_text(node[1])} {rec(node[2])} {rec(node[3])})"
            memo[n] = out
            return out

        return rec(f)

    def from_text(self, text: str) -> int:
        """Parse the textual diagram grammar; variables must be declared."""
        toks = _tokenize_diagram(text)
        pos = [0]

        def peek():
            return toks[pos[0]] if pos[0] < len(toks) else ("eof", "")

        def take(kind=None):
            tok = peek()
            if kind and tok[0] != kind:
                raise DiagramError(f"diagram text: expected {kind}, got {tok[1]!r}")
            pos[0] += 1
            return tok

        def parse_affine():
            e = LinExpr()
            sign = 1.0
            first = True
            while True:
                tok = peek()
                if tok[0] == "op" and tok[1] in "+-":
                    take()
                    sign = 1.0 if tok[1] == "+" else -1.0
                elif not first:
                    return e
                tok = peek()
                if tok[0] == "num":
                    take()
                    val = float(tok[1])
                    if peek() == ("op", "*"):
                        take()
                        name = take("ident")[1]
                        e = e + LinExpr({self.var_id(name): sign * val})
                    else:
                        e = e + sign * val
                elif tok[0] == "ident":
                    if tok[1] == "inf":
                        take()
                        e = e + sign * math.inf
                    else:
                        take()
                        e = e + LinExpr({self.var_id(tok[1]): sign})
                else:
                    raise DiagramError(f"diagram text: unexpected {tok[1]!r}")
                first = False
                sign = 1.0

        def parse_node():
            tok = peek()
            if tok == ("op", "["):
                take()
                e = parse_affine()
                take_close = take()
                if take_close != ("op", "]"):
                    raise DiagramError("diagram text: expected ]")
                return self.mk_terminal(e)
            if tok == ("op", "("):
                take()
                tok = peek()
                if tok[0] == "ident" and tok[1] in self._bool_vars:
                    take()
                    dec_cond = tok[1]
                else:
                    e = parse_affine()
                    take("gt")
                    zero = take("num")
                    if float(zero[1]) != 0.0:
                        raise DiagramError("diagram text: decisions compare against 0")
                    dec_cond = e
                hi = parse_node()
                lo = parse_node()
                if take() != ("op", ")"):
                    raise DiagramError("diagram text: expected )")
                return self.branch(dec_cond, hi, lo)
            raise DiagramError(f"diagram text: unexpected {tok[1]!r}")

        out = parse_node()
        if peek()[0] != "eof":
            raise DiagramError("diagram text: trailing input")
        return out

    def export_dot(self, f: int) -> str:
        """Graphviz text: solid edges for true branches, dotted for false."""
        ids = {}
        lines = ["digraph diagram {", "  rankdir=TB;"]
        edges = []

        def rec(n):
            if n in ids:
                return ids[n]
            ids[n] = f"n{len(ids)}"
            me = ids[n]
            node = self._nodes[n]
            if node[0] == "t":
                lines.append(f'  {me} [shape=box,label="{self.expr_text(node[1])}"];')
            else:
                lines.append(f'  {me} [shape=ellipse,label="{self.decision_text(node[1])}"];')
                hi, lo = rec(node[2]), rec(node[3])
                edges.append(f"  {me} -> {hi} [style=solid];")
                edges.append(f"  {me} -> {lo} [style=dotted];")
            return me

        rec(f)
        return "\n".join(lines + edges + ["}"]) + "\n"

    def print_case(self, f: int) -> str:
        """Case-statement rendering, one line per feasible path."""
        lines = ["{"]
        for bools, ctx, term in self._paths(f):
            lits = []
            for idx, pol in ctx:
                txt = f"({self.expr_text(self._decisions[idx].expr)} > 0)"
                lits.append(txt if pol else f"!{txt}")
            for name, val in bools.items():
                lits.append(name if val else f"!{name}")
            cond = " & ".join(lits) if lits else "true"
            lines.append(f"  {cond} : {self.expr_text(self.expr(term))}")
        lines.append("}")
        return "\n".join(lines) + "\n"


_DIAGRAM_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*'?)"
    r"|(?P<gt>>)"
    r"|(?P<op>[][()+\-*]))")


def _tokenize_diagram(text):
    toks = []
    pos = 0
    while pos < len(text):
        m = _DIAGRAM_TOKEN.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise DiagramError(f"diagram text: bad character {text[pos]!r}")
        pos = m.end()
        kind = m.lastgroup
        toks.append((kind, m.group(kind)))
    return toks
