"""Hybrid MDP model, symbolic regression, and bounded approximate value iteration.

State is a mix of boolean and box-bounded continuous variables; actions carry
box-bounded continuous parameters.  Transitions factor into per-variable
conditional functions listed parent-before-child: boolean variables get
piecewise-constant probabilities, continuous variables get deterministic
piecewise-linear assignments (delta transitions), and both may condition on
earlier next-state variables in the same step (synchronic arcs).  The reward
may mention current state, action parameters, and next state.

One solve owns one DiagramStore and runs single-threaded; independent solves
(e.g. an error sweep) can run in parallel on separate stores.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from .compress import relative_epsilon, xadd_compress
from .diagrams import DiagramStore
from .lpcore import LpProblem, lp_solve

PRIME = "'"
PRIMED_PAD = 1e6     # box padding for primed variables (values may step
                     # outside the state box for one transition)


class ModelError(Exception):
    """Raised when a model fails validation; carries the diagnostic list."""

    def __init__(self, diagnostics):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = list(diagnostics)


class SolverError(Exception):
    pass


class OutOfDomain(Exception):
    pass


def primed(name: str) -> str:
    return name + PRIME


@dataclass
class Cpf:
    var: str          # unprimed variable name this transition assigns
    kind: str         # "bool" | "cont"
    diagram: int


@dataclass
class ActionDef:
    name: str
    params: list = field(default_factory=list)   # [(name, lo, hi)]
    cpfs: list = field(default_factory=list)     # parent-before-child order


@dataclass
class HmdpModel:
    store: DiagramStore
    name: str
    cont_vars: list            # [(name, lo, hi)] declaration order
    bool_vars: list            # [name]
    actions: list              # [ActionDef]
    reward: int
    discount: float = 1.0
    horizon: int | None = None

    def action(self, name):
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)


class ModelBuilder:
    """Declares variables (current and primed) in one store and assembles a model."""

    def __init__(self, name="model"):
        self.store = DiagramStore()
        self.name = name
        self.cont_vars = []
        self.bool_vars = []
        self.actions = []
        self._reward = None
        self.discount = 1.0
        self.horizon = None

    def cont_var(self, name, lo, hi):
        self.store.declare_cont(name, lo, hi)
        self.store.declare_cont(primed(name), lo - PRIMED_PAD, hi + PRIMED_PAD)
        self.cont_vars.append((name, float(lo), float(hi)))
        return self

    def bool_var(self, name):
        self.store.declare_bool(name)
        self.store.declare_bool(primed(name))
        self.bool_vars.append(name)
        return self

    def action(self, name, params=()):
        act = ActionDef(name, [(p, float(lo), float(hi)) for p, lo, hi in params])
        for p, lo, hi in act.params:
            if not self.store.has_var(p):
                self.store.declare_cont(p, lo, hi)
        self.actions.append(act)
        return act

    def cpf(self, action: ActionDef, var: str, diagram: int):
        kind = "bool" if var in self.bool_vars else "cont"
        action.cpfs.append(Cpf(var, kind, diagram))
        return self

    def reward(self, diagram: int):
        self._reward = diagram
        return self

    def build(self) -> HmdpModel:
        if self._reward is None:
            raise ModelError(["model has no reward"])
        model = HmdpModel(self.store, self.name, self.cont_vars, self.bool_vars,
                          self.actions, self._reward, self.discount, self.horizon)
        diags = validate(model)
        if diags:
            raise ModelError(diags)
        return model


def validate(model: HmdpModel) -> list:
    """Check the model restrictions; returns one diagnostic per violation."""
    out = []
    store = model.store
    state = {n for n, _, _ in model.cont_vars} | set(model.bool_vars)
    if not 0.0 <= model.discount <= 1.0:
        out.append(f"discount {model.discount} outside [0, 1]")
    if model.horizon is not None and model.horizon < 0:
        out.append(f"horizon {model.horizon} is negative")

    all_params = {}
    seen_actions = set()
    for act in model.actions:
        if act.name in seen_actions:
            out.append(f"duplicate action {act.name!r}")
        seen_actions.add(act.name)
        for p, lo, hi in act.params:
            if p in state or p in all_params:
                out.append(f"action {act.name!r}: parameter {p!r} shadows another name")
            all_params[p] = act.name
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                out.append(f"action {act.name!r}: parameter {p!r} needs finite bounds")

    if not model.actions:
        out.append("model has no actions")

    for act in model.actions:
        assigned = []
        own_params = {p for p, _, _ in act.params}
        for cpf in act.cpfs:
            if cpf.var not in state:
                out.append(f"action {act.name!r}: transition for unknown variable {cpf.var!r}")
                continue
            if cpf.var in assigned:
                out.append(f"action {act.name!r}: duplicate transition for {cpf.var!r}")
            ok_cont = {n for n, _, _ in model.cont_vars} | own_params
            ok_bool = set(model.bool_vars)
            ok_cont |= {primed(v) for v in assigned if v not in model.bool_vars}
            ok_bool |= {primed(v) for v in assigned if v in model.bool_vars}
            used_c = {store.var_name(v) for v in store.cont_vars_of(cpf.diagram)}
            used_b = set(store.bool_vars_of(cpf.diagram))
            if primed(cpf.var) in used_c | used_b:
                out.append(f"action {act.name!r}: transition for {cpf.var!r} "
                           "depends on itself (cyclic)")
            bad = (used_c - ok_cont) | (used_b - ok_bool)
            bad.discard(primed(cpf.var))
            if bad:
                out.append(
                    f"action {act.name!r}: transition for {cpf.var!r} references "
                    f"{sorted(bad)} (cyclic or forward next-state reference)")
            if cpf.kind == "bool":
                for term in store._reachable_terminals(cpf.diagram):
                    e = store.expr(term)
                    if not e.is_const():
                        out.append(f"action {act.name!r}: probability for {cpf.var!r} "
                                   "has a non-constant leaf")
                        break
                    if not -1e-9 <= e.const <= 1.0 + 1e-9:
                        out.append(f"action {act.name!r}: probability leaf {e.const} "
                                   f"for {cpf.var!r} outside [0, 1]")
                        break
            assigned.append(cpf.var)
        missing = state - set(assigned)
        if missing:
            out.append(f"action {act.name!r}: no transition for {sorted(missing)}")

    used_c = {store.var_name(v) for v in store.cont_vars_of(model.reward)}
    used_b = set(store.bool_vars_of(model.reward))
    ok_c = {n for n, _, _ in model.cont_vars}
    ok_c |= {primed(n) for n, _, _ in model.cont_vars}
    ok_c |= set(all_params)
    ok_b = set(model.bool_vars) | {primed(b) for b in model.bool_vars}
    bad = (used_c - ok_c) | (used_b - ok_b)
    if bad:
        out.append(f"reward references unknown variables {sorted(bad)}")
    return out


def prime_diagram(model: HmdpModel, f: int) -> int:
    """Rename every current-state variable to its primed version."""
    cmap = {n: primed(n) for n, _, _ in model.cont_vars}
    bmap = {b: primed(b) for b in model.bool_vars}
    return model.store.rename_vars(f, cmap, bmap)


def regress(model: HmdpModel, value: int, action: ActionDef, order=None) -> int:
    """Action-value diagram over state and action parameters.

    Eliminates next-state variables against the action's transitions in any
    child-before-parent order (default: reverse declaration order); the reward
    is added before elimination, so next-state rewards and synchronic arcs are
    handled exactly.
    """
    store = model.store
    q = prime_diagram(model, value)
    if model.discount != 1.0:
        q = store.scale(q, model.discount)
    q = store.apply(model.reward, q, "add")

    cpfs = list(reversed(action.cpfs)) if order is None else list(order)
    if {c.var for c in cpfs} != {c.var for c in action.cpfs}:
        raise SolverError("elimination order must cover exactly the action's transitions")
    for cpf in cpfs:
        pv = primed(cpf.var)
        if cpf.kind == "cont":
            if store.mentions_cont(q, pv):
                q = store.integrate_dirac(q, pv, cpf.diagram)
        else:
            if store.mentions_bool(q, pv):
                q = store.marginalize_bool(q, pv, cpf.diagram)

    leftover = [store.var_name(v) for v in store.cont_vars_of(q)
                if store.var_name(v).endswith(PRIME)]
    leftover += [b for b in store.bool_vars_of(q) if b.endswith(PRIME)]
    if leftover:
        raise SolverError(
            f"next-state variables {sorted(leftover)} survived regression "
            "(invalid elimination order?)")
    return q


@dataclass
class SolveRecord:
    """Everything produced by one value-iteration run."""
    model: HmdpModel
    eps_requested: float
    eps_mode: str
    values: list = field(default_factory=list)        # V^0 .. V^h
    eps_budget: list = field(default_factory=list)    # per-iteration budget
    eps_used: list = field(default_factory=list)      # per-iteration realized
    nodes: list = field(default_factory=list)
    partitions: list = field(default_factory=list)
    millis: list = field(default_factory=list)
    converged_at: int | None = None
    q_diagrams: dict = field(default_factory=dict)    # h -> {action: pre-max Q}

    @property
    def horizon_solved(self):
        return len(self.values) - 1

    @property
    def cumulative_bound(self):
        return sum(self.eps_used)

    def value(self, h):
        if not 0 <= h <= self.horizon_solved:
            raise OutOfDomain(f"horizon {h} not solved (0..{self.horizon_solved})")
        return self.values[h]


def basdp(model: HmdpModel, horizon=None, eps=0.0, eps_mode="absolute",
          retain_q="final") -> SolveRecord:
    """Value iteration with per-iteration bounded-error compression.

    ``eps_mode`` is "absolute" (budget = eps each iteration) or "relative"
    (budget = eps times the max magnitude of the current value diagram).
    Iteration stops early when the compressed result is the identical node:
    the store is canonical, so id equality is semantic equality.  The sum of
    realized per-iteration errors bounds the total value error for any
    discount <= 1.
    """
    horizon = model.horizon if horizon is None else horizon
    if horizon is None or horizon < 0:
        raise SolverError("a nonnegative horizon is required")
    if eps < 0.0:
        raise SolverError("eps must be nonnegative")
    if eps_mode not in ("absolute", "relative"):
        raise SolverError(f"unknown eps mode {eps_mode!r}")
    diags = validate(model)
    if diags:
        raise ModelError(diags)

    store = model.store
    rec = SolveRecord(model, eps, eps_mode)
    v = store.ZERO
    rec.values.append(v)
    rec.eps_budget.append(0.0)
    rec.eps_used.append(0.0)
    rec.nodes.append(store.node_count(v))
    rec.partitions.append(len(store.enumerate_partitions(v)))
    rec.millis.append(0.0)

    for h in range(1, horizon + 1):
        t0 = time.perf_counter()
        pre_max = {}
        vh = None
        for act in model.actions:
            q = regress(model, v, act)
            pre_max[act.name] = q
            for p, lo, hi in act.params:
                q = store.max_param(q, p, lo, hi)
            vh = q if vh is None else store.apply(vh, q, "max")
        budget = eps if eps_mode == "absolute" else relative_epsilon(store, vh, eps)
        vh, used = xadd_compress(store, vh, budget)
        rec.values.append(vh)
        rec.eps_budget.append(budget)
        rec.eps_used.append(used)
        rec.nodes.append(store.node_count(vh))
        rec.partitions.append(len(store.enumerate_partitions(vh)))
        rec.millis.append((time.perf_counter() - t0) * 1000.0)
        if retain_q == "all":
            rec.q_diagrams[h] = pre_max
        elif retain_q == "final":
            rec.q_diagrams = {h: pre_max}
        if vh == v:
            rec.converged_at = h
            break
        v = vh
    return rec


def _check_state(model, bools, point):
    for b in model.bool_vars:
        if b not in bools:
            raise OutOfDomain(f"missing boolean {b!r}")
    for n, lo, hi in model.cont_vars:
        if n not in point:
            raise OutOfDomain(f"missing value for {n!r}")
        if not lo - 1e-9 <= point[n] <= hi + 1e-9:
            raise OutOfDomain(f"{n}={point[n]} outside [{lo}, {hi}]")


def value_at(record: SolveRecord, h: int, bools: dict, point: dict) -> float:
    """Evaluate the h-stage-to-go value at a concrete state."""
    _check_state(record.model, bools, point)
    return record.model.store.evaluate(record.value(h), bools, point)


def policy_at(record: SolveRecord, h: int, bools: dict, point: dict):
    """Best (action, parameter values, q-value) at a concrete state.

    Uses the retained pre-max action-value diagrams for horizon ``h`` when
    available, otherwise re-runs one regression against V^(h-1).  The state is
    substituted numerically; what remains is maximized over the parameter box
    per feasible region by LP.
    """
    model = record.model
    store = model.store
    _check_state(model, bools, point)
    if not 1 <= h <= record.horizon_solved:
        raise OutOfDomain(f"horizon {h} not solved (1..{record.horizon_solved})")
    qs = record.q_diagrams.get(h)
    if qs is None:
        qs = {a.name: regress(model, record.value(h - 1), a) for a in model.actions}

    best = None
    for act in model.actions:
        q = qs[act.name]
        for b, val in bools.items():
            q = store.restrict_bool(q, b, val)
        for n, _, _ in model.cont_vars:
            if store.mentions_cont(q, n):
                q = store.substitute_cont(q, n, float(point[n]))
        if not act.params:
            cand = (store.evaluate(q, {}, {}), act.name, {})
        else:
            cand = None
            for part in store.enumerate_partitions(q):
                for path in part.paths:
                    res = lp_solve(LpProblem(part.expr, "max", path.polytope))
                    if not res.is_optimal:
                        continue
                    ppt = {p: res.point.get(store.var_id(p), lo)
                           for p, lo, hi in act.params}
                    if cand is None or res.value > cand[0]:
                        cand = (res.value, act.name, ppt)
            if cand is None:
                continue
        if best is None or cand[0] > best[0]:
            best = cand
    if best is None:
        raise SolverError("no feasible action at this state")
    return best[1], best[2], best[0]
