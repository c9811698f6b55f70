"""Hybrid MDP planning with piecewise-linear value diagrams.

Layers, bottom to top:

* :mod:`~xaddplan.lpcore` — linear expressions, bounded polytopes, simplex.
* :mod:`~xaddplan.diagrams` — the hash-consed decision-diagram store and its
  operation algebra (apply, substitution, restriction, pruning, parameter
  maximization, diagram diffing, text/DOT export).
* :mod:`~xaddplan.compress` — bounded-error leaf merging driven by LP
  constraint generation.
* :mod:`~xaddplan.mdp` — the hybrid MDP model and approximate value iteration
  with per-iteration error budgets.
* :mod:`~xaddplan.lang` / :mod:`~xaddplan.domains` / :mod:`~xaddplan.cli` —
  the domain language, builtin benchmarks, and the command line.
"""

from .lpcore import (GE, GT, InfeasibleRegion, LinExpr, LpError, LpProblem,
                     LpResult, NumericalInstability, Polytope, lp_solve,
                     maximize_over, polytope_feasible)
from .diagrams import (CasePartition, Decision, DiagramError, DiagramStore,
                       InvalidProbability, NonLinearResult, OrderingViolation,
                       PathRegion, UnassignedVariable)
from .compress import (LeafRecord, MergeResult, pair_leaf_approx,
                       relative_epsilon, xadd_compress)
from .mdp import (ActionDef, Cpf, HmdpModel, ModelBuilder, ModelError,
                  OutOfDomain, SolveRecord, SolverError, basdp, policy_at,
                  primed, regress, validate, value_at)
from .lang import (Diagnostic, DomainParseError, DomainSource, parse_domain,
                   print_domain)
from .domains import BUILTIN_NAMES, builtin

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
