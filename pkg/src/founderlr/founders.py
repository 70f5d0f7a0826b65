"""Founder-gene models: baseline, coancestry / urn, IBD patterns, heterogeneity, cascades.

Each model can be used in two ways. :meth:`FounderModel.attach` adds factors for the
founding genes to a compiled case network (the structural route), while the
``*_joint`` constructors return an explicit :class:`FounderJoint` over a list of
founder slots (the vector route used by sensitivity analysis).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .factor import Factor, Network, Variable, eliminate, prior
from .genetics import BOOL, FALSE, TRUE, FounderSlot, Marker, selector_factor

# ---------------------------------------------------------------------------
# explicit joints


@dataclass(frozen=True)
class FounderJoint:
    """Joint distribution over the alleles of an ordered list of founder slots.

    ``table`` has one axis per slot; :attr:`f` is its row-major flattening,
    which fixes the index scheme shared with sensitivity vectors.
    """

    slots: tuple[FounderSlot, ...]
    alleles: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        t = np.asarray(self.table, dtype=float)
        if t.shape != (len(self.alleles),) * len(self.slots):
            raise InputError("joint table shape does not match slots and alleles")
        if np.any(t < -1e-15) or abs(t.sum() - 1.0) > 1e-9:
            raise InputError("founder joint must be nonnegative and sum to 1")
        t = np.clip(t, 0.0, None)
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def f(self) -> np.ndarray:
        return self.table.reshape(-1)

    def marginal(self, slot_index: int) -> np.ndarray:
        axes = tuple(i for i in range(len(self.slots)) if i != slot_index)
        return self.table.sum(axis=axes)


def _product_table(vectors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones(())
    for v in vectors:
        out = np.multiply.outer(out, v)
    return out


def baseline_founders(marker: Marker, slots: Sequence[FounderSlot], population: str) -> FounderJoint:
    rho = marker.rho(population)
    return FounderJoint(tuple(slots), marker.alleles, _product_table([rho] * len(slots)))


@dataclass(frozen=True)
class CoancestryParams:
    """Dirichlet concentration given either as a coancestry ``theta`` or directly as ``M``."""

    theta: float | None = None
    M: float | None = None

    def __post_init__(self):
        if (self.theta is None) == (self.M is None):
            raise InputError("give exactly one of theta or M")
        if self.theta is not None and not 0.0 <= self.theta < 1.0:
            raise InputError("theta must lie in [0, 1)")
        if self.M is not None and not self.M > 0:
            raise InputError("M must be positive")

    @property
    def alpha(self) -> float:
        if self.M is not None:
            return float(self.M)
        return math.inf if self.theta == 0 else (1.0 - self.theta) / self.theta


def urn_table(rho: np.ndarray, n: int, alpha: float) -> np.ndarray:
    """Joint of ``n`` exchangeable urn draws with concentration ``alpha`` and base ``rho``.

    Built gene by gene: the k-th draw is allele a with probability
    ``(#earlier copies of a + alpha*rho[a]) / (k - 1 + alpha)``.
    """
    rho = np.asarray(rho, dtype=float)
    k = rho.size
    if math.isinf(alpha):
        return _product_table([rho] * n)
    table = np.ones(())
    # counts[..., a] tracks copies of allele a among earlier genes
    counts = np.zeros((k,))
    eye = np.eye(k)
    for i in range(n):
        step = (counts + alpha * rho) / (i + alpha)
        table = table[..., None] * step
        if i + 1 < n:
            counts = counts[..., None, :] + eye.reshape((1,) * i + (k, k))
    return table


def coancestry_joint(
    marker: Marker, slots: Sequence[FounderSlot], params: CoancestryParams, population: str
) -> FounderJoint:
    table = urn_table(marker.rho(population), len(slots), params.alpha)
    return FounderJoint(tuple(slots), marker.alleles, table)


# ---------------------------------------------------------------------------
# network fragments


@dataclass
class Fragment:
    """Auxiliary variables and factors that together define founder-gene CPTs."""

    variables: list[Variable] = field(default_factory=list)
    factors: list[Factor] = field(default_factory=list)

    def add_to(self, net: Network) -> None:
        for v in self.variables:
            net.add_variable(v)
        for f in self.factors:
            net.add_factor(f)

    def joint(self, genes: Sequence[Variable]) -> np.ndarray:
        """Marginal table over ``genes`` with every auxiliary variable summed out."""
        net = Network()
        for g in genes:
            net.add_variable(g)
        self.add_to(net)
        return eliminate(net, list(genes)).table


def _bernoulli(var: Variable, p: float) -> Factor:
    return prior(var, [p, 1.0 - p])


def polya_urn_fragment(
    marker: Marker, genes: Sequence[Variable], M: float, population: str, prefix: str = "urn"
) -> Fragment:
    """Urn scheme with binary switches only.

    Gene i (from the second on) is a fresh pool draw with probability
    ``M / (M + i - 1)``; otherwise a chain of Bernoulli(1/j) choices copies one of
    the earlier genes uniformly.
    """
    if M <= 0:
        raise InputError("M must be positive")
    genes = list(genes)
    n = len(genes)
    if n == 0:
        raise InputError("urn needs at least one gene")
    rho = marker.rho(population)
    frag = Fragment()
    frag.factors.append(prior(genes[0], rho))
    for i in range(2, n + 1):
        g = genes[i - 1]
        pool = Variable(f"{prefix}.pool[{i}]", marker.alleles)
        c = Variable(f"{prefix}.c[{i}]", BOOL)
        frag.variables += [pool, c]
        frag.factors += [prior(pool, rho), _bernoulli(c, M / (M + i - 1))]
        if i == 2:
            frag.factors.append(selector_factor(g, pool, genes[0], c))
            continue
        prev = genes[0]
        for j in range(2, i):
            d = Variable(f"{prefix}.d[{i},{j}]", BOOL)
            temp = Variable(f"{prefix}.temp[{i},{j}]", marker.alleles)
            frag.variables += [d, temp]
            frag.factors += [_bernoulli(d, 1.0 / j), selector_factor(temp, genes[j - 1], prev, d)]
            prev = temp
        frag.factors.append(selector_factor(g, pool, prev, c))
    return frag


def _copy_factor(src: Variable, dst: Variable) -> Factor:
    return Factor._trusted([src, dst], np.eye(src.size))


# ---------------------------------------------------------------------------
# identity by descent

GENE_TAGS = ("apg", "amg", "bpg", "bmg")
GENE_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


@dataclass(frozen=True)
class IBDPattern:
    """Identity pattern among the four genes (apg, amg, bpg, bmg) of two actors.

    ``indicators`` follow the pair order apg=amg, apg=bpg, apg=bmg, amg=bpg,
    amg=bmg, bpg=bmg.
    """

    indicators: tuple[bool, bool, bool, bool, bool, bool]

    def __post_init__(self):
        ind = tuple(bool(x) for x in self.indicators)
        if len(ind) != 6:
            raise InputError("an IBD pattern has six indicators")
        object.__setattr__(self, "indicators", ind)
        classes = self.classes()
        implied = tuple(any(i in c and j in c for c in classes) for i, j in GENE_PAIRS)
        if implied != ind:
            raise InputError(f"IBD pattern {self.label} is not transitively closed")

    @classmethod
    def parse(cls, text: str) -> "IBDPattern":
        """From a 0/1 string such as ``"010010"`` or a label such as ``"apg=bpg&amg=bmg"``."""
        text = text.strip()
        if len(text) == 6 and set(text) <= {"0", "1"}:
            return cls(tuple(c == "1" for c in text))
        if text == "none":
            return cls((False,) * 6)
        ind = [False] * 6
        for part in text.split("&"):
            a, b = (GENE_TAGS.index(x) for x in part.split("="))
            ind[GENE_PAIRS.index(tuple(sorted((a, b))))] = True
        return cls(tuple(ind))

    def classes(self) -> list[tuple[int, ...]]:
        parent = list(range(4))

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        for (i, j), on in zip(GENE_PAIRS, self.indicators):
            if on:
                parent[find(j)] = find(i)
        groups: dict[int, list[int]] = {}
        for g in range(4):
            groups.setdefault(find(g), []).append(g)
        return sorted((tuple(v) for v in groups.values()), key=lambda c: c[0])

    @property
    def common(self) -> int:
        return min(sum(self.indicators), 4)

    @property
    def label(self) -> str:
        parts = [f"{GENE_TAGS[i]}={GENE_TAGS[j]}" for (i, j), on in zip(GENE_PAIRS, self.indicators) if on]
        return "&".join(parts) if parts else "none"

    def __str__(self) -> str:
        return self.label


NO_IBD = IBDPattern((False,) * 6)

# (family, arrangement, share of the family mass, [(p(pattern | R), indicators)])
# The no-IBD row of every arrangement is implied and added by ibd_pattern_distribution.
_F = Fraction
_IBD_TABLE = (
    ("parent_child", "a father of b", _F(1, 4), [(_F(1, 2), "010000"), (_F(1, 2), "000100")]),
    ("parent_child", "a mother of b", _F(1, 4), [(_F(1, 2), "001000"), (_F(1, 2), "000010")]),
    ("parent_child", "b father of a", _F(1, 4), [(_F(1, 2), "010000"), (_F(1, 2), "001000")]),
    ("parent_child", "b mother of a", _F(1, 4), [(_F(1, 2), "000100"), (_F(1, 2), "000010")]),
    ("sibs", "sibs", _F(1), [(_F(1, 4), "010010"), (_F(1, 4), "010000"), (_F(1, 4), "000010")]),
    ("half_sibs", "half sibs, same mother", _F(1, 2), [(_F(1, 2), "000010")]),
    ("half_sibs", "half sibs, same father", _F(1, 2), [(_F(1, 2), "010000")]),
    ("avuncular", "a sib of father of b", _F(1, 4), [(_F(1, 4), "010000"), (_F(1, 4), "000100")]),
    ("avuncular", "a sib of mother of b", _F(1, 4), [(_F(1, 4), "001000"), (_F(1, 4), "000010")]),
    ("avuncular", "b sib of father of a", _F(1, 4), [(_F(1, 4), "010000"), (_F(1, 4), "001000")]),
    ("avuncular", "b sib of mother of a", _F(1, 4), [(_F(1, 4), "000100"), (_F(1, 4), "000010")]),
    ("cousins", "cousins, mothers are sibs", _F(1, 4), [(_F(1, 4), "000010")]),
    ("cousins", "cousins, mother of a sib of father of b", _F(1, 4), [(_F(1, 4), "000100")]),
    ("cousins", "cousins, father of a sib of mother of b", _F(1, 4), [(_F(1, 4), "001000")]),
    ("cousins", "cousins, fathers are sibs", _F(1, 4), [(_F(1, 4), "010000")]),
    ("double_cousins", "double cousins, same-sex parents sibs", _F(1, 2),
     [(_F(1, 16), "010010"), (_F(3, 16), "000010"), (_F(3, 16), "010000")]),
    ("double_cousins", "double cousins, opposite-sex parents sibs", _F(1, 2),
     [(_F(1, 16), "001100"), (_F(3, 16), "000100"), (_F(3, 16), "001000")]),
    ("second_cousins", "second cousins, mothers are cousins", _F(1, 4), [(_F(1, 16), "000010")]),
    ("second_cousins", "second cousins, mother of a cousin of father of b", _F(1, 4), [(_F(1, 16), "000100")]),
    ("second_cousins", "second cousins, father of a cousin of mother of b", _F(1, 4), [(_F(1, 16), "001000")]),
    ("second_cousins", "second cousins, fathers are cousins", _F(1, 4), [(_F(1, 16), "010000")]),
    ("parent_and_sib", "b mother and sister of a", _F(1, 4),
     [(_F(1, 4), "110100"), (_F(1, 4), "000100"), (_F(1, 4), "010010"), (_F(1, 4), "000010")]),
    ("parent_and_sib", "b father and brother of a", _F(1, 4),
     [(_F(1, 4), "101010"), (_F(1, 4), "001000"), (_F(1, 4), "010010"), (_F(1, 4), "010000")]),
    ("parent_and_sib", "a mother and sister of b", _F(1, 4),
     [(_F(1, 4), "011001"), (_F(1, 4), "001000"), (_F(1, 4), "010010"), (_F(1, 4), "000010")]),
    ("parent_and_sib", "a father and brother of b", _F(1, 4),
     [(_F(1, 4), "000111"), (_F(1, 4), "000100"), (_F(1, 4), "010010"), (_F(1, 4), "010000")]),
    ("parents_are_sibs", "parents are sibs", _F(1), [
        (_F(1, 16), "111111"), (_F(1, 16), "000111"), (_F(1, 16), "011001"),
        (_F(1, 16), "101010"), (_F(1, 16), "110100"),
        (_F(1, 32), "001100"), (_F(1, 32), "100001"), (_F(3, 16), "010010"),
        (_F(1, 8), "000010"), (_F(1, 8), "010000"),
        (_F(1, 32), "000100"), (_F(1, 32), "001000"), (_F(1, 32), "100000"), (_F(1, 32), "000001"),
    ]),
)

RELATIONSHIP_FAMILIES = (
    "parent_child", "sibs", "half_sibs", "avuncular", "cousins",
    "double_cousins", "second_cousins", "parent_and_sib", "parents_are_sibs",
)


@dataclass(frozen=True)
class RelationshipPrior:
    """Family masses for the relationship of two actors; the remainder is ``unrelated``.

    Values may be floats, :class:`fractions.Fraction` or sympy expressions.
    """

    parent_child: object = 0
    sibs: object = 0
    half_sibs: object = 0
    avuncular: object = 0
    cousins: object = 0
    double_cousins: object = 0
    second_cousins: object = 0
    parent_and_sib: object = 0
    parents_are_sibs: object = 0

    def __post_init__(self):
        vals = [getattr(self, f) for f in RELATIONSHIP_FAMILIES]
        if all(isinstance(v, (int, float, Fraction)) for v in vals):
            if any(v < 0 for v in vals):
                raise InputError("relationship masses must be nonnegative")
            if sum(vals) > 1 + 1e-12:
                raise InputError("relationship masses must not exceed 1 in total")

    @classmethod
    def default(cls) -> "RelationshipPrior":
        """Unrelated 0.9, parent-child 0.05 and half-sibs 0.05."""
        return cls(parent_child=0.05, half_sibs=0.05)

    @property
    def unrelated(self):
        return 1 - sum(getattr(self, f) for f in RELATIONSHIP_FAMILIES)


@dataclass(frozen=True)
class Arrangement:
    name: str
    family: str
    probability: object
    patterns: tuple[tuple[IBDPattern, object], ...]


def ibd_pattern_distribution(rel: RelationshipPrior) -> list[Arrangement]:
    """All arrangements R with p(R) and p(pattern | R), no-IBD rows included.

    The first entry is ``unrelated`` (no IBD with probability one). Arithmetic is
    generic, so Fraction or symbolic masses give exact results.
    """
    out = [Arrangement("unrelated", "unrelated", rel.unrelated, ((NO_IBD, 1),))]
    for family, name, share, rows in _IBD_TABLE:
        mass = getattr(rel, family) * share
        pats = [(IBDPattern.parse(ind), p) for p, ind in rows]
        rest = 1 - sum(p for p, _ in rows)
        if rest:
            pats.append((NO_IBD, rest))
        out.append(Arrangement(name, family, mass, tuple(pats)))
    return out


def _is_positive(x) -> bool:
    try:
        return float(x) > 0
    except TypeError:
        return True  # symbolic masses are kept


def ibd_support(rel: RelationshipPrior):
    """Arrangements with positive mass, the distinct patterns reachable from them, and p(pattern | R)."""
    arr = [a for a in ibd_pattern_distribution(rel) if _is_positive(a.probability)]
    patterns: list[IBDPattern] = []
    for a in arr:
        for p, w in a.patterns:
            if _is_positive(w) and p not in patterns:
                patterns.append(p)
    cond = np.zeros((len(arr), len(patterns)))
    for r, a in enumerate(arr):
        for p, w in a.patterns:
            if p in patterns:
                cond[r, patterns.index(p)] += float(w)
    p_r = np.array([float(a.probability) for a in arr])
    return arr, patterns, p_r, cond


def pattern_founder_fragment(
    pattern: IBDPattern, marker: Marker, genes: Sequence[Variable], population: str
) -> Fragment:
    """One fresh pool draw per identity class; other members copy the class representative."""
    if len(genes) != 4:
        raise InputError("an IBD pattern covers exactly four genes")
    if not isinstance(pattern, IBDPattern):
        pattern = IBDPattern(tuple(pattern))
    rho = marker.rho(population)
    frag = Fragment()
    for cls in pattern.classes():
        rep = genes[cls[0]]
        frag.factors.append(prior(rep, rho))
        for j in cls[1:]:
            frag.factors.append(_copy_factor(rep, genes[j]))
    return frag


def expand_classes(rep_table: np.ndarray, classes: Sequence[Sequence[int]], k: int) -> np.ndarray:
    """Spread a joint over class representatives (plus trailing extra axes) onto the four genes."""
    grid = np.indices((k,) * 4)
    owner = {}
    for c, cls in enumerate(classes):
        for g in cls:
            owner[g] = c
    reps = [cls[0] for cls in classes]
    out = rep_table[tuple(grid[r] for r in reps)]
    mask = np.ones((k,) * 4, dtype=bool)
    for g in range(4):
        mask &= grid[g] == grid[reps[owner[g]]]
    extra = out.ndim - 4
    return out * mask.reshape(mask.shape + (1,) * extra)


def pattern_table(pattern: IBDPattern, rho: np.ndarray, alpha: float = math.inf, extra: int = 0) -> np.ndarray:
    """p(apg, amg, bpg, bmg, extra genes... | pattern).

    Class representatives and ``extra`` genes are consecutive urn draws with
    concentration ``alpha`` (independent pool draws when ``alpha`` is infinite).
    """
    classes = pattern.classes()
    reps = urn_table(rho, len(classes) + extra, alpha)
    return expand_classes(reps, classes, len(rho))


# ---------------------------------------------------------------------------
# heterogeneity

LATENT = "latent"


@dataclass(frozen=True)
class SubpopModel:
    """Subpopulation gene pools with mixture weights and a per-actor assignment.

    ``assignment`` maps an actor to ``"latent"`` (its own latent S), ``"shared:<group>"``
    (one latent S for every actor naming that group) or a population name (fixed).
    Actors not listed are latent.
    """

    populations: tuple[str, ...]
    weights: tuple[float, ...] | None = None
    assignment: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        pops = tuple(self.populations)
        object.__setattr__(self, "populations", pops)
        if not pops or len(set(pops)) != len(pops):
            raise InputError("subpopulations must be nonempty and distinct")
        w = (1.0 / len(pops),) * len(pops) if self.weights is None else tuple(float(x) for x in self.weights)
        if len(w) != len(pops) or any(x < 0 for x in w) or abs(sum(w) - 1) > 1e-9:
            raise InputError("subpopulation weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)
        for actor, a in self.assignment.items():
            if a != LATENT and not a.startswith("shared:") and a not in pops:
                raise InputError(f"actor {actor!r}: unknown subpopulation {a!r}")
        object.__setattr__(self, "assignment", dict(self.assignment))

    def source(self, actor: str) -> tuple[str, str]:
        """('latent', S-variable name) or ('fixed', population)."""
        a = self.assignment.get(actor, LATENT)
        if a == LATENT:
            return LATENT, f"S[{actor}]"
        if a.startswith("shared:"):
            return LATENT, f"S[{a[7:]}]"
        return "fixed", a

    def s_variable(self, name: str) -> Variable:
        return Variable(name, self.populations)


def het_fragment(
    subpop: SubpopModel, genes: Mapping[str, tuple[Variable, Variable]], marker: Marker,
    unit_latents: bool = False,
) -> tuple[Fragment, list[Variable]]:
    """Given its S value, each actor's genes are i.i.d. from that subpopulation's pool.

    Returns the fragment and the latent S variables (in first-use order).
    With ``unit_latents`` the S priors are replaced by unit factors so that
    inference returns likelihoods conditional on S.
    """
    for p in subpop.populations:
        marker.rho(p)
    frag = Fragment()
    latents: list[Variable] = []
    cond = np.stack([marker.rho(p) for p in subpop.populations])
    for actor, pair in genes.items():
        kind, ref = subpop.source(actor)
        if kind == "fixed":
            frag.factors += [prior(g, marker.rho(ref)) for g in pair]
            continue
        s = subpop.s_variable(ref)
        if s not in latents:
            latents.append(s)
            frag.variables.append(s)
            w = np.ones(s.size) if unit_latents else np.array(subpop.weights)
            frag.factors.append(Factor._trusted([s], w))
        for g in pair:
            frag.factors.append(Factor._trusted([s, g], cond))
    return frag, latents


# ---------------------------------------------------------------------------
# composed models


@dataclass(frozen=True)
class LatentSpec:
    """How per-marker tables are conditioned and recombined across markers.

    ``kind`` is ``"none"``, ``"shared"`` (variables are shared by all markers and
    ``weights`` is their joint prior) or ``"patterns"`` (a per-marker pattern
    variable, mixed by ``pattern_given_relationship`` under ``relationship_prior``).
    """

    kind: str
    variables: tuple[Variable, ...] = ()
    weights: np.ndarray | None = None
    relationship_prior: np.ndarray | None = None
    pattern_given_relationship: np.ndarray | None = None
    relationship_labels: tuple[str, ...] = ()


@dataclass(frozen=True)
class FounderModel:
    """A founder-gene scenario for one population (or a subpopulation mixture).

    ``urn`` makes the genes of ``urn_actors`` (all founders when ``None``) an
    exchangeable urn sequence. ``ibd`` puts an uncertain relationship on ``pair``.
    ``het`` draws genes from latent subpopulations. ``urn`` combines with either
    of the others (the urn supplies their fresh draws); ``ibd`` with ``het`` is
    rejected.
    """

    population: str | None = None
    urn: CoancestryParams | None = None
    urn_actors: tuple[str, ...] | None = None
    ibd: RelationshipPrior | None = None
    pair: tuple[str, str] | None = None
    route: str = "auto"
    het: SubpopModel | None = None
    structural: bool = False
    label: str = "baseline"

    def __post_init__(self):
        if self.ibd is not None and self.het is not None:
            raise InputError("IBD combined with HET is not supported: IBD genes cannot come from different subpopulations")
        if self.het is None and self.population is None:
            raise InputError("a population is required")
        if self.route not in ("auto", "relationship", "pattern"):
            raise InputError(f"unknown conditioning route {self.route!r}")
        if self.pair is not None and len(self.pair) != 2:
            raise InputError("the IBD pair names two actors")

    # convenience constructors -------------------------------------------------
    @classmethod
    def baseline(cls, population: str) -> "FounderModel":
        return cls(population=population)

    @classmethod
    def coancestry(cls, population: str, theta: float, actors=None) -> "FounderModel":
        return cls(population=population, urn=CoancestryParams(theta=theta),
                   urn_actors=None if actors is None else tuple(actors), label=f"coancestry({theta:g})")

    @classmethod
    def uaf(cls, population: str, M: float, actors=None, structural: bool = False) -> "FounderModel":
        return cls(population=population, urn=CoancestryParams(M=M),
                   urn_actors=None if actors is None else tuple(actors), structural=structural, label="UAF")

    @classmethod
    def relatedness(cls, population: str, rel: RelationshipPrior | None = None, pair=None,
                    route: str = "auto") -> "FounderModel":
        return cls(population=population, ibd=rel or RelationshipPrior.default(),
                   pair=None if pair is None else tuple(pair), route=route, label="IBD")

    @classmethod
    def heterogeneous(cls, subpop: SubpopModel) -> "FounderModel":
        return cls(het=subpop, label="HET")

    # ---------------------------------------------------------------------------
    def with_pair(self, pair) -> "FounderModel":
        return self if self.pair is not None else replace(self, pair=tuple(pair))

    @property
    def is_baseline(self) -> bool:
        return self.urn is None and self.ibd is None and self.het is None

    def _urn_set(self, actors) -> list[str]:
        if self.urn is None or math.isinf(self.urn.alpha):
            return []
        return [a for a in actors if self.urn_actors is None or a in self.urn_actors]

    def _ibd_support(self):
        arr, patterns, p_r, cond = ibd_support(self.ibd)
        return arr, patterns, p_r, cond

    def conditioning_route(self) -> str:
        if self.ibd is None:
            return "none"
        if self.route != "auto":
            return self.route
        arr, patterns, _, _ = self._ibd_support()
        return "pattern" if len(patterns) < len(arr) else "relationship"

    def latent_spec(self, actors: Sequence[str]) -> LatentSpec:
        """Across-marker conditioning for the attached founders ``actors``."""
        if self.het is not None:
            names = []
            for a in actors:
                kind, ref = self.het.source(a)
                if kind == LATENT and ref not in names:
                    names.append(ref)
            if not names:
                return LatentSpec("none")
            vars_ = tuple(self.het.s_variable(n) for n in names)
            w = _product_table([np.array(self.het.weights)] * len(vars_))
            return LatentSpec("shared", vars_, w)
        if self.ibd is not None:
            arr, patterns, p_r, cond = self._ibd_support()
            labels = tuple(a.name for a in arr)
            if self.conditioning_route() == "relationship":
                r = Variable("R", labels)
                return LatentSpec("shared", (r,), p_r, relationship_labels=labels)
            pi = Variable("pi", tuple(p.label for p in patterns))
            return LatentSpec("patterns", (pi,), None, p_r, cond, labels)
        return LatentSpec("none")

    def attach(self, net: Network, genes: Mapping[str, tuple[Variable, Variable]], marker: Marker,
               unit_latents: bool = False) -> list[Variable]:
        """Add founder factors for ``genes`` to ``net``; returns across-marker latent variables.

        With ``unit_latents`` latent roots carry unit factors instead of priors, so
        eliminating gives ``p(E_m, T | latents)``.
        """
        actors = list(genes)
        urn_actors = self._urn_set(actors)
        if self.het is not None:
            return self._attach_het(net, genes, marker, urn_actors, unit_latents)
        if self.ibd is not None:
            return self._attach_ibd(net, genes, marker, urn_actors, unit_latents)
        rho = marker.rho(self.population)
        for a in actors:
            if a not in urn_actors:
                for g in genes[a]:
                    net.add_factor(prior(g, rho))
        if urn_actors:
            urn_genes = [g for a in urn_actors for g in genes[a]]
            if self.structural:
                polya_urn_fragment(marker, urn_genes, self.urn.alpha, self.population).add_to(net)
            else:
                net.add_factor(Factor._trusted(urn_genes, urn_table(rho, len(urn_genes), self.urn.alpha)))
        return []

    def _attach_het(self, net, genes, marker, urn_actors, unit_latents):
        plain = {a: g for a, g in genes.items() if a not in urn_actors}
        frag, latents = het_fragment(self.het, plain, marker, unit_latents)
        frag.add_to(net)
        if not urn_actors:
            return latents
        # urn actors: one urn per subpopulation, shared by the actors currently in it
        sources = {a: self.het.source(a) for a in urn_actors}
        svars = []
        for a in urn_actors:
            kind, ref = sources[a]
            if kind == LATENT:
                s = self.het.s_variable(ref)
                if s not in svars:
                    svars.append(s)
        for s in svars:
            if s not in latents:
                latents.append(s)
                net.add_variable(s)
                w = np.ones(s.size) if unit_latents else np.array(self.het.weights)
                net.add_factor(Factor._trusted([s], w))
        k = len(marker.alleles)
        urn_genes = [g for a in urn_actors for g in genes[a]]
        table = np.zeros((len(self.het.populations),) * len(svars) + (k,) * len(urn_genes))
        for combo in itertools.product(range(len(self.het.populations)), repeat=len(svars)):
            chosen = {s.name: self.het.populations[i] for s, i in zip(svars, combo)}
            pop_of = []
            for a in urn_actors:
                kind, ref = sources[a]
                pop = chosen[ref] if kind == LATENT else ref
                pop_of += [pop, pop]
            table[combo] = _grouped_urn(marker, pop_of, self.urn.alpha)
        net.add_factor(Factor._trusted(svars + urn_genes, table))
        return latents

    def _attach_ibd(self, net, genes, marker, urn_actors, unit_latents):
        if self.pair is None:
            raise InputError("IBD scenario needs a designated actor pair")
        a, b = self.pair
        if a not in genes or b not in genes:
            raise InputError(f"IBD pair {a!r}/{b!r} must both be attached founders")
        if urn_actors and not {a, b} <= set(urn_actors) and ({a, b} & set(urn_actors)):
            raise InputError("a cascaded IBD pair must lie entirely inside or outside the urn")
        rho = marker.rho(self.population)
        cascaded = a in urn_actors
        other_urn = [x for x in urn_actors if x not in (a, b)]
        joint_extra = [g for x in other_urn for g in genes[x]] if cascaded else []
        for x in genes:
            if x in (a, b) or x in urn_actors:
                continue
            for g in genes[x]:
                net.add_factor(prior(g, rho))
        if other_urn and not cascaded:
            urn_genes = [g for x in other_urn for g in genes[x]]
            net.add_factor(Factor._trusted(urn_genes, urn_table(rho, len(urn_genes), self.urn.alpha)))
        alpha = self.urn.alpha if cascaded else math.inf
        arr, patterns, p_r, cond = self._ibd_support()
        pi = net.add_variable(Variable("pi", tuple(p.label for p in patterns)))
        pair_genes = list(genes[a]) + list(genes[b])
        table = np.stack([pattern_table(p, rho, alpha, extra=len(joint_extra)) for p in patterns])
        net.add_factor(Factor._trusted([pi] + pair_genes + joint_extra, table))
        if self.conditioning_route() == "relationship":
            r = net.add_variable(Variable("R", tuple(x.name for x in arr)))
            net.add_factor(Factor._trusted([r], np.ones(len(arr)) if unit_latents else p_r))
            net.add_factor(Factor._trusted([r, pi], cond))
            return [r]
        w = np.ones(len(patterns)) if unit_latents else p_r @ cond
        net.add_factor(Factor._trusted([pi], w))
        return [pi]


def _grouped_urn(marker: Marker, pop_of: Sequence[str], alpha: float) -> np.ndarray:
    """Joint over genes where genes sharing a population form one urn sequence."""
    n = len(pop_of)
    k = len(marker.alleles)
    groups: dict[str, list[int]] = {}
    for i, p in enumerate(pop_of):
        groups.setdefault(p, []).append(i)
    table = np.ones(())
    order = []
    for p, idx in groups.items():
        table = np.multiply.outer(table, urn_table(marker.rho(p), len(idx), alpha))
        order += idx
    inverse = np.argsort(order)
    return np.transpose(table, inverse).reshape((k,) * n)


def cascade(first: FounderModel, second: FounderModel) -> FounderModel:
    """Feed the urn outputs of ``first`` into ``second`` as its fresh draws.

    Only urn followed by IBD or by HET is allowed.
    """
    if first.urn is None or first.ibd is not None or first.het is not None:
        raise InputError("the first stage of a cascade must be a plain urn model")
    if second.urn is not None:
        raise InputError("the second stage of a cascade must be IBD or HET")
    if second.ibd is None and second.het is None:
        raise InputError("the second stage of a cascade must be IBD or HET")
    return replace(
        second,
        urn=first.urn,
        urn_actors=first.urn_actors,
        population=second.population or first.population,
        label=f"{first.label}+{second.label}",
    )


def scenario_joint(model: FounderModel, marker: Marker, slots: Sequence[FounderSlot]) -> FounderJoint:
    """Explicit joint over ``slots`` induced by ``model`` (latent variables summed out)."""
    net = Network()
    genes = {}
    for actor in dict.fromkeys(s.actor for s in slots):
        genes[actor] = (net.add_variable(Variable(f"{actor}pg", marker.alleles)),
                        net.add_variable(Variable(f"{actor}mg", marker.alleles)))
    model.attach(net, genes, marker)
    gene_vars = [genes[s.actor][0 if s.gene == "pg" else 1] for s in slots]
    table = eliminate(net, gene_vars).table
    return FounderJoint(tuple(slots), marker.alleles, table)


# ---------------------------------------------------------------------------
# partition processes


def _rising(alpha, n):
    out = 1
    for i in range(n):
        out = out * (alpha + i)
    return out


def partition_probability(alpha, sizes: Sequence[int]):
    """Probability of one particular set partition with block ``sizes`` under concentration ``alpha``."""
    sizes = list(sizes)
    if any(s < 1 for s in sizes):
        raise InputError("block sizes must be positive")
    n = sum(sizes)
    num = alpha ** len(sizes)
    for s in sizes:
        num = num * math.factorial(s - 1)
    return num / _rising(alpha, n)


def set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[head]] + part
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1:]


def composed_partition_probabilities(alpha, beta, n: int = 3) -> dict[tuple[int, ...], object]:
    """Block-size profile probabilities when a concentration-``beta`` process feeds its
    fresh draws through a concentration-``alpha`` process.

    Keys are sorted block sizes (descending); values sum to one.
    """
    out: dict[tuple[int, ...], object] = {}
    for inner in set_partitions(range(n)):
        p_inner = partition_probability(beta, [len(b) for b in inner])
        for outer in set_partitions(range(len(inner))):
            p_outer = partition_probability(alpha, [len(b) for b in outer])
            sizes = tuple(sorted((sum(len(inner[i]) for i in blk) for blk in outer), reverse=True))
            out[sizes] = out.get(sizes, 0) + p_inner * p_outer
    return out


def cascade_partition_odds(alpha, beta):
    """n = 3 odds of (all distinct, one pair, all same) for two cascaded urns.

    Returns ``(closed_form, enumerated)``. ``closed_form`` evaluates
    ``(a²b², 3ab(a+b+2), (a+b)(a+b+3) - ab + 4)``; ``enumerated`` is obtained by
    composing the two partition processes and scaling by the common denominator
    ``(a+1)(a+2)(b+1)(b+2)``.
    """
    a, b = alpha, beta
    closed = (a * a * b * b, 3 * a * b * (a + b + 2), (a + b) * (a + b + 3) - a * b + 4)
    probs = composed_partition_probabilities(a, b, 3)
    denom = (a + 1) * (a + 2) * (b + 1) * (b + 2)
    enumerated = tuple(probs.get(k, 0) * denom for k in ((1, 1, 1), (2, 1), (3,)))
    return closed, enumerated


def dirichlet_partition_odds(alpha):
    """n = 3 odds (all distinct, one pair, all same) for a single urn."""
    return (alpha * alpha, 3 * alpha, 2)


def pair_identity_probability(alpha, beta) -> object:
    """Probability that two given genes end up in one block after cascading."""
    probs = composed_partition_probabilities(alpha, beta, 2)
    return probs.get((2,), 0)
