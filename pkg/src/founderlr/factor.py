"""Discrete factors and exact variable elimination.

A :class:`Factor` is a nonnegative table over an ordered scope of
:class:`Variable` objects. Networks are plain bags of conditional probability
factors plus an evidence assignment; :func:`eliminate` returns the
unnormalized joint table over the query variables with the evidence absorbed,
so its entries are ``p(query, evidence)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError, NumericalError

UNDERFLOW_GUARD = 1e-290


@dataclass(frozen=True)
class Variable:
    name: str
    states: tuple

    def __post_init__(self):
        states = tuple(self.states)
        object.__setattr__(self, "states", states)
        if not states:
            raise InputError(f"variable {self.name!r} has an empty domain")
        if len(set(states)) != len(states):
            raise InputError(f"variable {self.name!r} has duplicate state labels")

    @property
    def size(self) -> int:
        return len(self.states)

    def index(self, state) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise InputError(f"state {state!r} not in domain of {self.name!r}") from None

    def __repr__(self) -> str:
        return f"Variable({self.name!r}, {len(self.states)} states)"


class Factor:
    """Nonnegative table indexed by the joint states of ``scope``.

    The table is stored as an ndarray with one axis per scope variable and is
    made read-only on construction.
    """

    __slots__ = ("scope", "table")

    def __init__(self, scope: Sequence[Variable], table):
        scope = tuple(scope)
        names = [v.name for v in scope]
        if len(set(names)) != len(names):
            raise InputError(f"repeated variable in factor scope {names}")
        arr = np.array(table, dtype=float)
        shape = tuple(v.size for v in scope)
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise InputError(f"table of size {arr.size} does not fit scope shape {shape}")
        arr = arr.reshape(shape)
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise InputError("factor entries must be finite and nonnegative")
        arr.setflags(write=False)
        self.scope = scope
        self.table = arr

    @classmethod
    def _trusted(cls, scope, arr) -> "Factor":
        # internal constructor for tables already known to be valid
        f = cls.__new__(cls)
        arr = np.asarray(arr, dtype=float)
        arr.setflags(write=False)
        f.scope = tuple(scope)
        f.table = arr
        return f

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.scope)

    def __repr__(self) -> str:
        return f"Factor({list(self.names)})"

    def value(self, assignment: Mapping[str, object]) -> float:
        idx = tuple(v.index(assignment[v.name]) for v in self.scope)
        return float(self.table[idx])

    def transpose(self, order: Sequence[str]) -> "Factor":
        pos = {n: i for i, n in enumerate(self.names)}
        if sorted(order) != sorted(pos):
            raise InputError(f"cannot reorder {self.names} as {tuple(order)}")
        axes = [pos[n] for n in order]
        return Factor._trusted([self.scope[a] for a in axes], np.transpose(self.table, axes))

    def normalized(self) -> np.ndarray:
        total = self.table.sum()
        if total <= 0:
            raise NumericalError("cannot normalize a factor with zero mass")
        return self.table / total


def multiply(a: Factor, b: Factor) -> Factor:
    """Pointwise product; the result scope is ``a.scope`` followed by new variables of ``b``."""
    index = {}
    for v in a.scope + b.scope:
        prev = index.get(v.name)
        if prev is None:
            index[v.name] = v
        elif prev.states != v.states:
            raise InputError(f"domain mismatch on shared variable {v.name!r}")
    a_names = set(a.names)
    extra = [v for v in b.scope if v.name not in a_names]
    scope = list(a.scope) + extra
    ta = a.table.reshape(a.table.shape + (1,) * len(extra))
    # permute b into the result order, with singleton axes for a-only variables
    order = [v.name for v in scope]
    bpos = {n: i for i, n in enumerate(b.names)}
    in_b = [n for n in order if n in bpos]
    tb = np.transpose(b.table, [bpos[n] for n in in_b])
    tb = tb.reshape([scope[i].size if order[i] in bpos else 1 for i in range(len(order))])
    return Factor._trusted(scope, ta * tb)


def multiply_all(factors: Iterable[Factor]) -> Factor:
    factors = list(factors)
    if not factors:
        return Factor._trusted((), np.ones(()))
    out = factors[0]
    for f in factors[1:]:
        out = multiply(out, f)
    return out


def marginalize(a: Factor, keep: Iterable[str | Variable]) -> Factor:
    """Sum out every scope variable not named in ``keep``."""
    keep_names = {k.name if isinstance(k, Variable) else k for k in keep}
    unknown = keep_names - set(a.names)
    if unknown:
        raise InputError(f"variables {sorted(unknown)} not in factor scope {a.names}")
    axes = tuple(i for i, n in enumerate(a.names) if n not in keep_names)
    scope = [v for v in a.scope if v.name in keep_names]
    return Factor._trusted(scope, a.table.sum(axis=axes) if axes else a.table)


def condition(a: Factor, evidence: Mapping[str, object]) -> Factor:
    """Zero every entry inconsistent with ``evidence``; the scope is unchanged."""
    pos = {n: i for i, n in enumerate(a.names)}
    missing = set(evidence) - set(pos)
    if missing:
        raise InputError(f"evidence variables {sorted(missing)} not in factor scope {a.names}")
    mask = np.ones(a.table.shape, dtype=bool)
    for name, state in evidence.items():
        axis = pos[name]
        keep = np.zeros(a.scope[axis].size, dtype=bool)
        keep[a.scope[axis].index(state)] = True
        shape = [1] * a.table.ndim
        shape[axis] = -1
        mask &= keep.reshape(shape)
    return Factor._trusted(a.scope, np.where(mask, a.table, 0.0))


def _slice_evidence(a: Factor, evidence: Mapping[str, object]) -> Factor:
    # drops evidence variables by indexing; equals marginalize(condition(a, ev))
    idx = []
    scope = []
    for v in a.scope:
        if v.name in evidence:
            idx.append(v.index(evidence[v.name]))
        else:
            idx.append(slice(None))
            scope.append(v)
    return Factor._trusted(scope, np.asarray(a.table[tuple(idx)]))


def deterministic(child: Variable, parents: Sequence[Variable], fn: Callable[..., object]) -> Factor:
    """0/1 CPT with ``child = fn(*parent_states)``."""
    parents = list(parents)
    shape = [p.size for p in parents] + [child.size]
    table = np.zeros(shape)
    for idx in np.ndindex(*shape[:-1]):
        state = fn(*(p.states[i] for p, i in zip(parents, idx)))
        table[idx + (child.index(state),)] = 1.0
    return Factor._trusted(parents + [child], table)


def prior(var: Variable, probs) -> Factor:
    return Factor([var], np.asarray(probs, dtype=float))


@dataclass
class Network:
    """Factors over declared variables, with an evidence assignment."""

    variables: dict[str, Variable] = field(default_factory=dict)
    factors: list[Factor] = field(default_factory=list)
    evidence: dict[str, object] = field(default_factory=dict)

    def add_variable(self, var: Variable) -> Variable:
        prev = self.variables.get(var.name)
        if prev is not None and prev != var:
            raise InputError(f"variable {var.name!r} redeclared with a different domain")
        self.variables[var.name] = var
        return var

    def add_factor(self, factor: Factor) -> None:
        for v in factor.scope:
            if self.variables.get(v.name) != v:
                raise InputError(f"factor references undeclared variable {v.name!r}")
        self.factors.append(factor)

    def observe(self, name: str, state) -> None:
        if name not in self.variables:
            raise InputError(f"evidence on undeclared variable {name!r}")
        self.variables[name].index(state)
        self.evidence[name] = state

    def copy(self) -> "Network":
        return Network(dict(self.variables), list(self.factors), dict(self.evidence))

    def validate(self) -> None:
        """Check factor scopes and acyclicity of the CPT structure.

        A factor's last scope variable is taken as its child; factors with a
        single variable are root priors.
        """
        children = {}
        for f in self.factors:
            for v in f.scope:
                if self.variables.get(v.name) != v:
                    raise InputError(f"factor references undeclared variable {v.name!r}")
            if f.scope:
                children.setdefault(f.scope[-1].name, []).append([v.name for v in f.scope[:-1]])
        state = {}

        def visit(n):
            if state.get(n) == 1:
                raise InputError(f"directed cycle through {n!r}")
            if state.get(n) == 2:
                return
            state[n] = 1
            for parents in children.get(n, []):
                for p in parents:
                    visit(p)
            state[n] = 2

        for n in children:
            visit(n)


def elimination_order(factors: Sequence[Factor], eliminate_names: Iterable[str]) -> list[str]:
    """Greedy min-degree ordering, ties broken lexicographically."""
    adj: dict[str, set[str]] = {}
    for f in factors:
        for n in f.names:
            adj.setdefault(n, set()).update(m for m in f.names if m != n)
    todo = set(eliminate_names)
    order = []
    while todo:
        best = min(todo, key=lambda n: (len(adj.get(n, ())), n))
        nbrs = adj.pop(best, set())
        for a in nbrs:
            adj[a].discard(best)
            adj[a].update(nbrs - {a})
        todo.remove(best)
        order.append(best)
    return order


def eliminate(
    net: Network,
    query: Sequence[str | Variable],
    underflow_guard: float = UNDERFLOW_GUARD,
) -> Factor:
    """Unnormalized joint table over ``query`` with the network evidence absorbed.

    Entries equal ``p(query = ., E)``. Evidence variables outside the query are
    sliced away; evidence on query variables zeroes inconsistent entries.
    """
    qnames = [q.name if isinstance(q, Variable) else q for q in query]
    for n in qnames:
        if n not in net.variables:
            raise InputError(f"query variable {n!r} not declared")
    drop = {k: v for k, v in net.evidence.items() if k not in qnames}
    keep_ev = {k: v for k, v in net.evidence.items() if k in qnames}

    factors = []
    scale = 1.0
    for f in net.factors:
        g = _slice_evidence(f, drop) if drop.keys() & set(f.names) else f
        if keep_ev.keys() & set(g.names):
            g = condition(g, {k: v for k, v in keep_ev.items() if k in g.names})
        if not g.scope:
            scale *= float(g.table)
            continue
        factors.append(g)

    present = {n for f in factors for n in f.names}
    order = elimination_order(factors, present - set(qnames))
    for name in order:
        touching = [f for f in factors if name in f.names]
        rest = [f for f in factors if name not in f.names]
        prod = multiply_all(touching)
        msg = marginalize(prod, [n for n in prod.names if n != name])
        if msg.scope:
            rest.append(msg)
        else:
            scale *= float(msg.table)
        factors = rest

    result = multiply_all(factors)
    missing = [n for n in qnames if n not in result.names]
    if missing:
        # query variables untouched by any factor carry unit mass per state
        ones = [Factor._trusted([net.variables[n]], np.ones(net.variables[n].size)) for n in missing]
        result = multiply_all([result] + ones)
        ev = {n: keep_ev[n] for n in missing if n in keep_ev}
        if ev:
            result = condition(result, ev)
    result = Factor._trusted(result.scope, result.table * scale)
    result = result.transpose(qnames) if qnames else result
    nz = result.table[result.table > 0]
    if nz.size and nz.max() < underflow_guard:
        raise NumericalError("likelihood underflow in variable elimination")
    return result
