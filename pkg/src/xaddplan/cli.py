"""Command-line driver: solve, compress, eval, export, sample, diff.

Exit codes: 0 success, 1 usage error, 2 parse/validation error, 3 solver
error.  Failures print one machine-parsable line ``error: <message>`` on
stderr.  File formats: ``.hmdp`` domain text, ``.xadd`` diagram text (variable
header lines then one node line), ``.csv`` samples and statistics, ``.dot``
graphs.  All CSV floats use 9 significant digits; sample CSVs are
byte-deterministic for a given configuration.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import domains
from .compress import xadd_compress
from .diagrams import DiagramStore, DiagramError
from .lang import DomainParseError, parse_domain
from .lpcore import LpError
from .mdp import ModelError, OutOfDomain, SolverError, basdp, policy_at, value_at

_F = "{:.9g}"


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    """Validated knobs for one solve/sample run."""
    horizon: int | None = None
    eps: float = 0.0
    eps_mode: str = "absolute"
    out_dir: str | None = None
    retain_q: str = "final"
    seed: int | None = None       # reserved; current subcommands are deterministic
    grids: list = field(default_factory=list)   # [(axis, lo, hi, steps)]

    def check(self):
        if self.horizon is not None and self.horizon < 0:
            raise CliError("horizon must be >= 0", 1)
        if self.eps < 0.0:
            raise CliError("eps must be >= 0", 1)
        for axis, lo, hi, steps in self.grids:
            if steps < 2:
                raise CliError(f"grid for {axis!r} needs at least 2 steps", 1)
            if not lo < hi:
                raise CliError(f"grid for {axis!r} needs lo < hi", 1)


def _load_domain(spec: str):
    if spec.startswith("inventory:"):
        try:
            text = domains.builtin("inventory", int(spec.split(":", 1)[1]))
        except ValueError as err:
            raise CliError(str(err), 1) from None
    elif spec in domains.BUILTIN_NAMES:
        text = domains.builtin(spec)
    else:
        path = Path(spec)
        if not path.exists():
            raise CliError(f"no builtin or file named {spec!r}", 1)
        text = path.read_text()
    try:
        return parse_domain(text)
    except DomainParseError as err:
        raise CliError(str(err.diagnostics[0]), 2) from None


def write_diagram_file(store: DiagramStore, node: int, path):
    """Diagram text plus headers declaring every variable the node mentions."""
    lines = []
    used_c = store.cont_vars_of(node)
    for name in store.cont_names():
        vid = store.var_id(name)
        if vid in used_c:
            lo, hi = store.bounds(name)
            lines.append(f"cvar {name} {lo!r} {hi!r}")
    used_b = store.bool_vars_of(node)
    for name in store.bool_names():
        if name in used_b:
            lines.append(f"bvar {name}")
    lines.append(store.to_text(node))
    Path(path).write_text("\n".join(lines) + "\n")


def read_diagram_file(path, store: DiagramStore | None = None):
    """Load a diagram file, declaring its variables into ``store`` (or a new one)."""
    store = store or DiagramStore()
    body = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "cvar":
            name, lo, hi = parts[1], float(parts[2]), float(parts[3])
            if store.has_var(name):
                if store.bounds(name) != (lo, hi):
                    raise CliError(f"variable {name!r} redeclared with other bounds", 2)
            else:
                store.declare_cont(name, lo, hi)
        elif parts[0] == "bvar":
            if not store.has_var(parts[1]):
                store.declare_bool(parts[1])
        else:
            body = line if body is None else body + " " + line
    if body is None:
        raise CliError(f"{path}: no diagram found", 2)
    try:
        # the file format is a tree, so re-reduce to recover sharing
        return store, store.reduce_lp(store.from_text(body))
    except DiagramError as err:
        raise CliError(f"{path}: {err}", 2) from None


def _parse_state(text, model):
    bools, point = {}, {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise CliError(f"bad state assignment {item!r}", 1)
        name, val = (s.strip() for s in item.split("=", 1))
        if name in model.bool_vars:
            bools[name] = val.lower() in ("1", "true", "t")
        else:
            try:
                point[name] = float(val)
            except ValueError:
                raise CliError(f"bad state value {item!r}", 1) from None
    return bools, point


def _parse_grid(text):
    try:
        axis, spec = text.split("=", 1)
        lo, hi, steps = spec.split(":")
        return axis.strip(), float(lo), float(hi), int(steps)
    except ValueError:
        raise CliError(f"bad grid spec {text!r} (want axis=lo:hi:steps)", 1) from None


# -- subcommands --------------------------------------------------------------

def _cmd_solve(args):
    cfg = RunConfig(horizon=args.horizon, eps=args.eps_rel if args.eps_rel is not None else args.eps,
                    eps_mode="relative" if args.eps_rel is not None else "absolute",
                    out_dir=args.out, retain_q="all" if args.retain_q else "final",
                    seed=args.seed)
    cfg.check()
    src = _load_domain(args.domain)
    record = basdp(src.model, horizon=cfg.horizon, eps=cfg.eps,
                   eps_mode=cfg.eps_mode, retain_q=cfg.retain_q)
    out = Path(cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    rows = ["h,nodes,partitions,eps_used,millis"]
    for h in range(record.horizon_solved + 1):
        rows.append(",".join([str(h), str(record.nodes[h]), str(record.partitions[h]),
                              _F.format(record.eps_used[h]),
                              _F.format(record.millis[h])]))
        write_diagram_file(src.model.store, record.values[h], out / f"value_h{h}.xadd")
    (out / "stats.csv").write_text("\n".join(rows) + "\n")
    print(f"solved horizon={record.horizon_solved} nodes={record.nodes[-1]} "
          f"eps_total={_F.format(record.cumulative_bound)}"
          + (f" converged_at={record.converged_at}" if record.converged_at else ""))
    return 0


def _cmd_compress(args):
    if args.eps < 0:
        raise CliError("eps must be >= 0", 1)
    if args.eps == 0:
        # no merge can fit a zero budget; the output is the input byte for byte
        Path(args.out).write_bytes(Path(args.infile).read_bytes())
        print("eps_used 0")
        return 0
    store, node = read_diagram_file(args.infile)
    comp, used = xadd_compress(store, node, args.eps)
    write_diagram_file(store, comp, args.out)
    print(f"eps_used {_F.format(used)}")
    print(f"nodes {store.node_count(node)} -> {store.node_count(comp)}")
    return 0


def _cmd_eval(args):
    cfg = RunConfig(horizon=args.horizon, eps=args.eps_rel if args.eps_rel is not None else args.eps,
                    eps_mode="relative" if args.eps_rel is not None else "absolute",
                    seed=args.seed)
    cfg.check()
    src = _load_domain(args.domain)
    record = basdp(src.model, horizon=cfg.horizon, eps=cfg.eps, eps_mode=cfg.eps_mode)
    bools, point = _parse_state(args.state, src.model)
    h = record.horizon_solved
    val = value_at(record, h, bools, point)
    act, params, q = policy_at(record, h, bools, point)
    print(f"value {_F.format(val)}")
    ptxt = " ".join(f"{p}={_F.format(v)}" for p, v in sorted(params.items()))
    print(f"action {act}{(' ' + ptxt) if ptxt else ''} q {_F.format(q)}")
    return 0


def _cmd_export(args):
    store, node = read_diagram_file(args.infile)
    if args.format == "dot":
        text = store.export_dot(node)
    else:
        text = store.print_case(node)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_sample(args):
    cfg = RunConfig(grids=[_parse_grid(g) for g in args.grid], seed=args.seed)
    cfg.check()
    if not 1 <= len(cfg.grids) <= 2:
        raise CliError("sample needs one or two --grid axes", 1)
    store, node = read_diagram_file(args.infile)
    fixed = {}
    for item in args.fix or []:
        name, val = item.split("=", 1)
        fixed[name.strip()] = val.strip().lower() in ("1", "true", "t")
    bools = sorted(store.bool_vars_of(node) - set(fixed))
    axes = [g[0] for g in cfg.grids]
    for axis in axes:
        if not store.has_var(axis):
            raise CliError(f"diagram does not mention axis {axis!r}", 1)

    def grid_points(g):
        _, lo, hi, steps = g
        return [lo + (hi - lo) * i / (steps - 1) for i in range(steps)]

    header = axes + bools + sorted(fixed) + ["value"]
    rows = [",".join(header)]
    combos = range(1 << len(bools))
    for combo in combos:
        assign = dict(fixed)
        for i, b in enumerate(bools):
            assign[b] = bool((combo >> (len(bools) - 1 - i)) & 1)
        pts1 = grid_points(cfg.grids[0])
        pts2 = grid_points(cfg.grids[1]) if len(cfg.grids) > 1 else [None]
        for p1 in pts1:
            for p2 in pts2:
                point = {axes[0]: p1}
                if p2 is not None:
                    point[axes[1]] = p2
                val = store.evaluate(node, assign, point)
                cells = [_F.format(p1)]
                if p2 is not None:
                    cells.append(_F.format(p2))
                cells += ["1" if assign[b] else "0" for b in bools]
                cells += ["1" if assign[b] else "0" for b in sorted(fixed)]
                cells.append(_F.format(val))
                rows.append(",".join(cells))
    text = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_diff(args):
    store, a = read_diagram_file(args.a)
    store, b = read_diagram_file(args.b, store)
    print(_F.format(store.max_abs_diff(a, b)))
    return 0


def _build_parser():
    p = argparse.ArgumentParser(prog="xaddplan",
                                description="Hybrid MDP planning with bounded-error "
                                            "piecewise-linear value diagrams")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, domain=True):
        if domain:
            sp.add_argument("--domain", required=True,
                            help="builtin name (mars1d, mars2d, inventory[:n]) or .hmdp path")
            sp.add_argument("--horizon", type=int, default=None)
            eps = sp.add_mutually_exclusive_group()
            eps.add_argument("--eps", type=float, default=0.0,
                             help="absolute per-iteration error budget")
            eps.add_argument("--eps-rel", type=float, default=None,
                             help="per-iteration budget as a fraction of max |V|")
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("solve", help="run value iteration, write stats and value diagrams")
    common(sp)
    sp.add_argument("--out", default=None, help="output directory")
    sp.add_argument("--retain-q", action="store_true",
                    help="retain pre-max action values for every horizon")
    sp.set_defaults(fn=_cmd_solve)

    sp = sub.add_parser("compress", help="compress a diagram file under an error bound")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(fn=_cmd_compress)

    sp = sub.add_parser("eval", help="value and greedy action at a state")
    common(sp)
    sp.add_argument("--state", required=True, help='e.g. "x=55,tp1=0,tp2=0"')
    sp.set_defaults(fn=_cmd_eval)

    sp = sub.add_parser("export", help="render a diagram file as DOT or case text")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--format", choices=("dot", "case"), default="dot")
    sp.add_argument("--out", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(fn=_cmd_export)

    sp = sub.add_parser("sample", help="evaluate a diagram over a grid into CSV")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--grid", action="append", required=True,
                    help="axis=lo:hi:steps (repeat for a second axis)")
    sp.add_argument("--fix", action="append", help="fix a boolean, e.g. tp1=1")
    sp.add_argument("--out", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(fn=_cmd_sample)

    sp = sub.add_parser("diff", help="LP-verified max absolute difference of two diagrams")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(fn=_cmd_diff)
    return p


def cli_run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.fn(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except (DomainParseError, ModelError, DiagramError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (SolverError, OutOfDomain, LpError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 3


def main():
    sys.exit(cli_run(sys.argv[1:]))


if __name__ == "__main__":
    main()
