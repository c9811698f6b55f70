"""Domain description language: recursive-descent parser and canonical printer.

A domain file declares box-bounded continuous variables, boolean variables,
parametrized actions whose statements assign each next-state variable in
parent-before-child order, a reward expression, and a discount:

    domain tank {
      cvariables { level in [0, 100]; }
      bvariables { leak; }
      action fill(rate in [0, 5]) {
        leak' = if level > 90 then 0.3 else 0.0;
        level' = level + rate;
      }
      reward = if level > 50 then level - 50 else 0;
      discount 1.0;
      horizon 4;
    }

Value expressions combine numbers, variables, ``+ - *`` (one factor of every
product must be numeric), ``abs(e)``, and ``if <cond> then <e> else <e>``;
conditions combine boolean variables and comparisons of linear expressions
with ``& | !``.  ``b' = bernoulli(p)`` is sugar for assigning the probability
expression directly.  ``//`` starts a comment.  Parsing never crashes on bad
input: every failure carries a line/column diagnostic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .diagrams import DiagramStore
from .mdp import HmdpModel, ModelBuilder, ModelError, primed

_KEYWORDS = {"domain", "cvariables", "bvariables", "action", "reward",
             "discount", "horizon", "in", "if", "then", "else", "abs",
             "bernoulli"}

_TOKEN = re.compile(
    r"(?P<ws>\s+|//[^\n]*)"
    r"|(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*'?)"
    r"|(?P<op><=|>=|[][}{)(<>=&|!+\-*,;])")


@dataclass
class Diagnostic:
    line: int
    col: int
    message: str

    def __str__(self):
        return f"{self.line}:{self.col}: {self.message}"


class DomainParseError(Exception):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


@dataclass
class DomainSource:
    """A parsed domain: raw text, the model, and source spans per construct."""
    text: str
    model: HmdpModel
    spans: dict = field(default_factory=dict)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text):
    toks = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DomainParseError([Diagnostic(line, col, f"bad character {text[pos]!r}")])
        chunk = m.group(0)
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, chunk, line, col))
        nl = chunk.count("\n")
        if nl:
            line += nl
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    toks.append(_Tok("eof", "<eof>", line, col))
    return toks


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.pos = 0
        self.builder = None
        self.spans = {}
        self.params = {}        # param name -> (lo, hi), all actions

    # -- token plumbing ----------------------------------------------------

    def peek(self, ahead=0):
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def take(self):
        tok = self.toks[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        raise DomainParseError([Diagnostic(tok.line, tok.col, message)])

    def expect(self, text):
        tok = self.take()
        if tok.text != text:
            self.fail(f"expected {text!r}, got {tok.text!r}", tok)
        return tok

    def accept(self, text):
        if self.peek().text == text:
            return self.take()
        return None

    def ident(self, what="identifier"):
        tok = self.take()
        if tok.kind != "ident":
            self.fail(f"expected {what}, got {tok.text!r}", tok)
        if tok.text in _KEYWORDS:
            self.fail(f"{tok.text!r} is a reserved word", tok)
        return tok

    def number(self):
        sign = 1.0
        while self.accept("-"):
            sign = -sign
        tok = self.take()
        if tok.kind != "num":
            self.fail(f"expected a number, got {tok.text!r}", tok)
        return sign * float(tok.text)

    # -- declarations --------------------------------------------------------

    def parse(self) -> DomainSource:
        head = self.expect("domain")
        name = self.ident("domain name")
        self.spans["domain"] = (head.line, head.col)
        self.builder = ModelBuilder(name.text)
        self.expect("{")

        self.expect("cvariables")
        self.expect("{")
        while not self.accept("}"):
            tok = self.ident("variable name")
            self.expect("in")
            self.expect("[")
            lo = self.number()
            self.expect(",")
            hi = self.number()
            self.expect("]")
            self.expect(";")
            self.spans[f"cvar {tok.text}"] = (tok.line, tok.col)
            self._declare_cont(tok, lo, hi)

        if self.peek().text == "bvariables":
            self.take()
            self.expect("{")
            while not self.accept("}"):
                tok = self.ident("variable name")
                self.expect(";")
                self.spans[f"bvar {tok.text}"] = (tok.line, tok.col)
                self._declare_bool(tok)

        while self.peek().text == "action":
            self._parse_action()
        if not self.builder.actions:
            self.fail("domain declares no actions")

        tok = self.expect("reward")
        self.spans["reward"] = (tok.line, tok.col)
        self.expect("=")
        reward = self._node(self._expr())
        self.expect(";")
        self.builder.reward(self.builder.store.reduce_lp(reward))

        self.expect("discount")
        self.builder.discount = self.number()
        self.expect(";")

        if self.peek().text == "horizon":
            self.take()
            h = self.number()
            if h != int(h) or h < 0:
                self.fail("horizon must be a nonnegative integer")
            self.builder.horizon = int(h)
            self.expect(";")

        self.expect("}")
        if self.peek().kind != "eof":
            self.fail(f"unexpected {self.peek().text!r} after the domain")

        try:
            model = self.builder.build()
        except ModelError as err:
            anchor = self.spans.get("domain", (1, 1))
            raise DomainParseError(
                [Diagnostic(anchor[0], anchor[1], d) for d in err.diagnostics]) from None
        return DomainSource(self.text, model, self.spans)

    def _declare_cont(self, tok, lo, hi):
        if self.builder.store.has_var(tok.text):
            self.fail(f"variable {tok.text!r} already declared", tok)
        if tok.text.endswith("'"):
            self.fail("declared names must be unprimed", tok)
        if not lo < hi:
            self.fail(f"unbounded variable: {tok.text!r} needs lo < hi bounds", tok)
        self.builder.cont_var(tok.text, lo, hi)

    def _declare_bool(self, tok):
        if self.builder.store.has_var(tok.text):
            self.fail(f"variable {tok.text!r} already declared", tok)
        if tok.text.endswith("'"):
            self.fail("declared names must be unprimed", tok)
        self.builder.bool_var(tok.text)

    def _parse_action(self):
        self.take()
        name = self.ident("action name")
        self.spans[f"action {name.text}"] = (name.line, name.col)
        params = []
        self.expect("(")
        while not self.accept(")"):
            if params:
                self.expect(",")
            ptok = self.ident("parameter name")
            self.expect("in")
            self.expect("[")
            lo = self.number()
            self.expect(",")
            hi = self.number()
            self.expect("]")
            if self.builder.store.has_var(ptok.text) or ptok.text in self.params:
                self.fail(f"parameter {ptok.text!r} shadows another name", ptok)
            params.append((ptok.text, lo, hi))
            self.params[ptok.text] = (lo, hi)
        act = self.builder.action(name.text, params)
        self.expect("{")
        while not self.accept("}"):
            vtok = self.take()
            if vtok.kind != "ident" or not vtok.text.endswith("'"):
                self.fail("expected a primed variable assignment", vtok)
            var = vtok.text[:-1]
            if not self.builder.store.has_var(var):
                self.fail(f"unknown identifier {var!r}", vtok)
            self.expect("=")
            if self.peek().text == "bernoulli":
                self.take()
                if var not in self.builder.bool_vars:
                    self.fail(f"bernoulli assignment needs a boolean, got {var!r}", vtok)
                self.expect("(")
                diagram = self._node(self._expr())
                self.expect(")")
            else:
                diagram = self._node(self._expr())
            self.expect(";")
            self.spans[f"cpf {act.name} {var}'"] = (vtok.line, vtok.col)
            self.builder.cpf(act, var, self.builder.store.reduce_lp(diagram))

    # -- value expressions -------------------------------------------------------
    # parse results are ("num", float) or ("node", id); numbers stay symbolic
    # until used so products can check that one factor is numeric.

    def _node(self, val):
        if val[0] == "num":
            return self.builder.store.mk_terminal(val[1])
        return val[1]

    def _expr(self):
        if self.peek().text == "if":
            self.take()
            cond = self._bool_or()
            self.expect("then")
            then = self._node(self._expr())
            self.expect("else")
            other = self._node(self._expr())
            store = self.builder.store
            return ("node", store.select(cond, then, other))
        return self._additive()

    def _additive(self):
        left = self._mul()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            right = self._mul()
            if left[0] == "num" and right[0] == "num":
                left = ("num", left[1] + right[1] if op == "+" else left[1] - right[1])
            else:
                store = self.builder.store
                left = ("node", store.apply(self._node(left), self._node(right),
                                            "add" if op == "+" else "sub"))
        return left

    def _mul(self):
        left = self._unary()
        while self.peek().text == "*":
            star = self.take()
            right = self._unary()
            if left[0] == "num" and right[0] == "num":
                left = ("num", left[1] * right[1])
            elif left[0] == "num":
                left = ("node", self.builder.store.scale(right[1], left[1]))
            elif right[0] == "num":
                left = ("node", self.builder.store.scale(left[1], right[1]))
            else:
                self.fail("nonlinearity: one factor of a product must be a number", star)
        return left

    def _unary(self):
        if self.peek().text == "-":
            self.take()
            val = self._unary()
            if val[0] == "num":
                return ("num", -val[1])
            return ("node", self.builder.store.scale(val[1], -1.0))
        return self._primary()

    def _primary(self):
        tok = self.peek()
        if tok.kind == "num":
            self.take()
            return ("num", float(tok.text))
        if tok.text == "abs":
            self.take()
            self.expect("(")
            inner = self._node(self._expr())
            self.expect(")")
            store = self.builder.store
            return ("node", store.apply(inner, store.scale(inner, -1.0), "max"))
        if tok.text == "(":
            self.take()
            val = self._expr()
            self.expect(")")
            return val
        if tok.kind == "ident":
            if tok.text in _KEYWORDS:
                self.fail(f"unexpected {tok.text!r} in an expression", tok)
            self.take()
            store = self.builder.store
            base = tok.text[:-1] if tok.text.endswith("'") else tok.text
            if not store.has_var(tok.text) and not store.has_var(base):
                self.fail(f"unknown identifier {tok.text!r}", tok)
            if tok.text in store.bool_names() or base in self.builder.bool_vars:
                self.fail(f"boolean {tok.text!r} cannot be used as a value", tok)
            return ("node", store.mk_terminal(store.linear({tok.text: 1.0})))
        self.fail(f"unexpected {tok.text!r} in an expression", tok)

    # -- boolean conditions (built as 0/1 indicator diagrams) ----------------------

    def _bool_or(self):
        out = self._bool_and()
        store = self.builder.store
        while self.accept("|"):
            out = store.apply(out, self._bool_and(), "max")
        return out

    def _bool_and(self):
        out = self._bool_not()
        store = self.builder.store
        while self.accept("&"):
            out = store.apply(out, self._bool_not(), "min")
        return out

    def _bool_not(self):
        if self.accept("!"):
            inner = self._bool_not()
            store = self.builder.store
            return store.apply(store.ONE, inner, "sub")
        return self._bool_atom()

    def _bool_atom(self):
        store = self.builder.store
        tok = self.peek()
        if tok.kind == "ident" and tok.text not in _KEYWORDS:
            base = tok.text[:-1] if tok.text.endswith("'") else tok.text
            if base in self.builder.bool_vars:
                nxt = self.peek(1).text
                if nxt not in ("<", ">", "<=", ">="):
                    self.take()
                    return store.branch(tok.text, store.ONE, store.ZERO)
        if tok.text == "(":
            # could be a parenthesized condition or a parenthesized linear
            # expression starting a comparison; try the comparison first
            mark = self.pos
            try:
                return self._comparison()
            except DomainParseError:
                self.pos = mark
            self.take()
            out = self._bool_or()
            self.expect(")")
            return out
        return self._comparison()

    def _comparison(self):
        left = self._linear()
        op = self.take()
        if op.text not in ("<", ">", "<=", ">="):
            self.fail(f"expected a comparison, got {op.text!r}", op)
        right = self._linear()
        store = self.builder.store
        if op.text == ">":
            return store.branch(left - right, store.ONE, store.ZERO)
        if op.text == "<":
            return store.branch(right - left, store.ONE, store.ZERO)
        if op.text == ">=":
            return store.branch(right - left, store.ZERO, store.ONE)
        return store.branch(left - right, store.ZERO, store.ONE)

    def _linear(self):
        out = self._linear_term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            term = self._linear_term()
            out = out + term if op == "+" else out - term
        return out

    def _linear_term(self):
        store = self.builder.store
        tok = self.peek()
        if tok.text == "-":
            self.take()
            return -self._linear_term()
        if tok.text == "(":
            self.take()
            out = self._linear()
            self.expect(")")
            return out
        if tok.kind == "num":
            self.take()
            val = float(tok.text)
            if self.accept("*"):
                vtok = self.ident("variable")
                if not store.has_var(vtok.text):
                    self.fail(f"unknown identifier {vtok.text!r}", vtok)
                return store.linear({vtok.text: val})
            return store.linear({}, val)
        if tok.kind == "ident" and tok.text not in _KEYWORDS:
            self.take()
            if not store.has_var(tok.text):
                self.fail(f"unknown identifier {tok.text!r}", tok)
            if tok.text in store.bool_names():
                self.fail(f"boolean {tok.text!r} cannot appear in a comparison", tok)
            return store.linear({tok.text: 1.0})
        self.fail(f"unexpected {tok.text!r} in a linear expression", tok)


def parse_domain(text: str) -> DomainSource:
    """Parse and validate a domain; raises DomainParseError with positioned
    diagnostics on any failure."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Canonical printer: parse(print_domain(parse(text).model)) reproduces the
# model, and printing is byte-deterministic.
# ---------------------------------------------------------------------------

def _render_expr(store, f):
    if store.is_terminal(f):
        return store.expr_text(store.expr(f))
    dec, hi, lo = store.parts(f)
    cond = dec.bool_var if dec.is_bool else f"{store.expr_text(dec.expr)} > 0"
    then_txt = _render_expr(store, hi)
    if not store.is_terminal(hi):
        then_txt = f"({then_txt})"
    return f"if {cond} then {then_txt} else {_render_expr(store, lo)}"


def print_domain(model: HmdpModel) -> str:
    """Canonical text for a model; whitespace and case order are normalized."""
    store = model.store
    out = [f"domain {model.name} {{"]
    out.append("  cvariables {")
    for name, lo, hi in model.cont_vars:
        out.append(f"    {name} in [{lo!r}, {hi!r}];")
    out.append("  }")
    if model.bool_vars:
        out.append("  bvariables {")
        for name in model.bool_vars:
            out.append(f"    {name};")
        out.append("  }")
    for act in model.actions:
        params = ", ".join(f"{p} in [{lo!r}, {hi!r}]" for p, lo, hi in act.params)
        out.append(f"  action {act.name}({params}) {{")
        for cpf in act.cpfs:
            out.append(f"    {primed(cpf.var)} = {_render_expr(store, cpf.diagram)};")
        out.append("  }")
    out.append(f"  reward = {_render_expr(store, model.reward)};")
    out.append(f"  discount {model.discount!r};")
    if model.horizon is not None:
        out.append(f"  horizon {model.horizon};")
    out.append("}")
    return "\n".join(out) + "\n"
