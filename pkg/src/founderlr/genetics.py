"""Markers, genotypes and compilation of forensic cases into per-marker networks.

Four case topologies are supported:

``criminal-id``
    suspect ``s`` and an alternative ``as``; the trace copies ``sgt`` or ``asgt``.
``mixture``
    suspect ``s``, victim ``v`` and unknowns ``as``, ``av``; the mixed trace is the
    union of the alleles of two contributors selected by a four-state target.
``paternity``
    mother ``m``, putative father ``pf``, alternative father ``af`` and child ``c``.
``sibship``
    mothers ``m1``, ``m2``; deceased father ``tf2`` and alternative ``af``; child ``c1``
    of ``m1`` and children ``c21``, ``c22`` of ``m2`` and ``tf2``.

Founder gene distributions are attached by a founder model (see
:mod:`founderlr.founders`), so the same compiled structure serves every scenario.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .factor import Factor, Network, Variable, deterministic, prior

OTHER = "other"
TRUE, FALSE = "true", "false"
BOOL = (TRUE, FALSE)
MAX_MIX_ALLELES = 4


def allele_key(label: str):
    """Sort key: numeric repeat counts in numeric order, then other labels, ``other`` last."""
    if label == OTHER:
        return (2, 0.0, label)
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def sort_alleles(labels) -> tuple[str, ...]:
    return tuple(sorted(set(labels), key=allele_key))


def make_genotype(a, b) -> tuple[str, str]:
    """Unordered allele pair, stored in allele order."""
    a, b = str(a), str(b)
    return (a, b) if allele_key(a) <= allele_key(b) else (b, a)


def genotype_states(alleles: Sequence[str]) -> tuple[tuple[str, str], ...]:
    alleles = list(alleles)
    return tuple((alleles[i], alleles[j]) for i in range(len(alleles)) for j in range(i, len(alleles)))


def subset_states(alleles: Sequence[str], max_size: int = MAX_MIX_ALLELES) -> tuple[tuple[str, ...], ...]:
    alleles = list(alleles)
    out = []
    for size in range(1, min(max_size, len(alleles)) + 1):
        out.extend(itertools.combinations(alleles, size))
    return tuple(out)


@dataclass(frozen=True)
class Marker:
    """Allele labels plus one frequency vector per population."""

    name: str
    alleles: tuple[str, ...]
    freqs: Mapping[str, np.ndarray]

    def __post_init__(self):
        alleles = tuple(self.alleles)
        object.__setattr__(self, "alleles", alleles)
        if len(set(alleles)) != len(alleles):
            raise InputError(f"marker {self.name}: duplicate allele labels")
        if not alleles:
            raise InputError(f"marker {self.name}: no alleles")
        freqs = {}
        for pop, vec in self.freqs.items():
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (len(alleles),):
                raise InputError(f"marker {self.name}/{pop}: frequency vector has wrong length")
            if np.any(vec < 0) or abs(vec.sum() - 1.0) > 1e-9:
                raise InputError(f"marker {self.name}/{pop}: frequencies must be >= 0 and sum to 1")
            vec = vec.copy()
            vec.setflags(write=False)
            freqs[pop] = vec
        object.__setattr__(self, "freqs", freqs)

    @property
    def populations(self) -> tuple[str, ...]:
        return tuple(self.freqs)

    def rho(self, population: str) -> np.ndarray:
        try:
            return self.freqs[population]
        except KeyError:
            raise InputError(f"marker {self.name}: no frequencies for population {population!r}") from None

    def coarsen(self, keep: Sequence[str]) -> "Marker":
        """Collapse every allele outside ``keep`` into a single ``other`` allele."""
        keep = sort_alleles(a for a in keep if a != OTHER)
        pos = {a: i for i, a in enumerate(self.alleles)}
        unknown = [a for a in keep if a not in pos]
        if unknown:
            raise InputError(f"marker {self.name}: alleles {unknown} not in the frequency table")
        freqs = {}
        rest_mass = 0.0
        for pop, vec in self.freqs.items():
            kept = np.array([vec[pos[a]] for a in keep])
            # recompute the remainder from the discarded entries to avoid cancellation
            rest = float(sum(vec[i] for a, i in pos.items() if a not in set(keep)))
            freqs[pop] = (kept, rest)
            rest_mass = max(rest_mass, rest)
        alleles = keep + ((OTHER,) if rest_mass > 0 else ())
        out = {}
        for pop, (kept, rest) in freqs.items():
            vec = np.append(kept, rest) if rest_mass > 0 else kept
            out[pop] = vec / vec.sum()
        return Marker(self.name, alleles, out)


@dataclass(frozen=True)
class FounderSlot:
    actor: str
    gene: str  # "pg" (paternal) or "mg" (maternal)
    marker: str = ""

    @property
    def name(self) -> str:
        return f"{self.actor}{self.gene}"


# ---------------------------------------------------------------------------
# deterministic and Mendelian CPTs

def _check_same_domain(*vars_: Variable) -> None:
    first = vars_[0]
    for v in vars_[1:]:
        if v.states != first.states:
            raise InputError(f"domain mismatch between {first.name!r} and {v.name!r}")


def mendelian_factor(ppg: Variable, pmg: Variable, child_gene: Variable) -> Factor:
    """Child gene is a copy of either parental gene with probability 1/2."""
    _check_same_domain(ppg, pmg, child_gene)
    k = ppg.size
    eye = np.eye(k)
    table = 0.5 * eye[:, None, :] + 0.5 * eye[None, :, :]
    return Factor([ppg, pmg, child_gene], table)


def genotype_factor(pg: Variable, mg: Variable, gt: Variable) -> Factor:
    _check_same_domain(pg, mg)
    return deterministic(gt, [pg, mg], make_genotype)


def selector_factor(out: Variable, if_true: Variable, if_false: Variable, switch: Variable) -> Factor:
    """``out`` copies ``if_true`` when the boolean ``switch`` is true, else ``if_false``."""
    _check_same_domain(out, if_true, if_false)
    if set(switch.states) != set(BOOL):
        raise InputError(f"switch {switch.name!r} must be boolean")
    return deterministic(out, [if_true, if_false, switch], lambda a, b, s: a if s == TRUE else b)


def mixture_factor(p1gt: Variable, p2gt: Variable, mix: Variable) -> Factor:
    """The mixed trace shows the union of the two contributors' alleles."""
    alleles = {a for g in p1gt.states + p2gt.states for a in g}
    rank = {a: allele_key(a) for a in alleles}
    return deterministic(
        mix, [p1gt, p2gt],
        lambda g1, g2: tuple(sorted(set(g1) | set(g2), key=rank.__getitem__)),
    )


# ---------------------------------------------------------------------------
# case description

@dataclass(frozen=True)
class Topology:
    name: str
    founders: tuple[str, ...]
    children: tuple[str, ...]
    typed: tuple[str, ...]
    evidence: str | None
    target: str
    target_states: tuple[str, ...]
    hypotheses: tuple[str, str]
    ibd_pair: tuple[str, str]

    @property
    def actors(self) -> tuple[str, ...]:
        return self.founders + self.children


TOPOLOGIES = {
    "criminal-id": Topology(
        "criminal-id", ("s", "as"), (), ("s",), "trace",
        "S guilty?", BOOL, (TRUE, FALSE), ("s", "as")),
    "mixture": Topology(
        "mixture", ("s", "v", "as", "av"), (), ("s", "v"), "mix",
        "target", ("s&v", "s&av", "as&v", "as&av"), ("s&v", "as&v"), ("s", "as")),
    "paternity": Topology(
        "paternity", ("m", "pf", "af"), ("c",), ("m", "pf", "c"), None,
        "tf=pf?", BOOL, (TRUE, FALSE), ("pf", "af")),
    "sibship": Topology(
        "sibship", ("m1", "m2", "af", "tf2"), ("c1", "c21", "c22"),
        ("m1", "c1", "m2", "c21", "c22"), None,
        "tf1=tf2?", BOOL, (TRUE, FALSE), ("tf2", "af")),
}


def topology(name: str) -> Topology:
    try:
        return TOPOLOGIES[name]
    except KeyError:
        raise InputError(f"unknown topology {name!r}; expected one of {sorted(TOPOLOGIES)}") from None


@dataclass
class CaseSpec:
    """Actors, per-marker evidence and the hypothesis pair of a forensic case.

    ``genotypes`` maps actor -> marker -> genotype for typed actors. ``trace`` and
    ``mix`` hold the crime-scene evidence for the criminal-id and mixture topologies.
    """

    topology: str
    markers: tuple[str, ...]
    genotypes: dict[str, dict[str, tuple[str, str]]] = field(default_factory=dict)
    trace: dict[str, tuple[str, str]] = field(default_factory=dict)
    mix: dict[str, tuple[str, ...]] = field(default_factory=dict)
    hypotheses: tuple[str, str] | None = None
    scenarios: list = field(default_factory=list)
    label: str = "case"

    def __post_init__(self):
        topo = topology(self.topology)
        self.markers = tuple(self.markers)
        for actor in self.genotypes:
            if actor not in topo.actors:
                raise InputError(f"unknown actor role {actor!r} for topology {topo.name}")
        missing = [a for a in topo.typed if a not in self.genotypes]
        if missing:
            raise InputError(f"{topo.name}: missing genotypes for typed actors {missing}")
        if topo.evidence == "trace" and not self.trace:
            raise InputError("criminal-id case needs trace evidence")
        if topo.evidence == "mix" and not self.mix:
            raise InputError("mixture case needs mixed-trace evidence")
        self.genotypes = {a: {m: make_genotype(*g) for m, g in gts.items()} for a, gts in self.genotypes.items()}
        self.trace = {m: make_genotype(*g) for m, g in self.trace.items()}
        for m, alleles in self.mix.items():
            if not 1 <= len(set(alleles)) <= MAX_MIX_ALLELES:
                raise InputError(f"mixture at {m}: between 1 and {MAX_MIX_ALLELES} alleles required")
        self.mix = {m: sort_alleles(str(a) for a in alleles) for m, alleles in self.mix.items()}
        if self.hypotheses is None:
            self.hypotheses = topo.hypotheses
        self.hypotheses = tuple(self.hypotheses)
        for h in self.hypotheses:
            if h not in topo.target_states:
                raise InputError(f"hypothesis {h!r} not a state of {topo.target!r}")
        if len(self.hypotheses) != 2 or self.hypotheses[0] == self.hypotheses[1]:
            raise InputError("exactly two distinct hypotheses are required")

    @property
    def topo(self) -> Topology:
        return topology(self.topology)

    def observed_alleles(self, marker: str) -> tuple[str, ...]:
        seen = set()
        for gts in self.genotypes.values():
            seen.update(gts.get(marker, ()))
        seen.update(self.trace.get(marker, ()))
        seen.update(self.mix.get(marker, ()))
        return sort_alleles(seen)

    def restrict(self, markers: Sequence[str]) -> "CaseSpec":
        """Copy of the case keeping only ``markers`` (in the given order)."""
        unknown = [m for m in markers if m not in self.markers]
        if unknown:
            raise InputError(f"markers {unknown} not in case")
        keep = set(markers)
        return CaseSpec(
            self.topology, tuple(markers),
            {a: {m: g for m, g in gts.items() if m in keep} for a, gts in self.genotypes.items()},
            {m: g for m, g in self.trace.items() if m in keep},
            {m: g for m, g in self.mix.items() if m in keep},
            self.hypotheses, list(self.scenarios), self.label,
        )

    def founder_slots(self, marker: str = "", actors: Sequence[str] | None = None) -> list[FounderSlot]:
        actors = self.topo.founders if actors is None else actors
        return [FounderSlot(a, g, marker) for a in actors for g in ("pg", "mg")]


# ---------------------------------------------------------------------------
# compilation

@dataclass
class CompiledMarker:
    """Network for one marker with handles on the target, founder genes and latents."""

    network: Network
    marker: Marker
    target: Variable
    genes: dict[str, tuple[Variable, Variable]]
    latents: list[Variable]

    def gene_vars(self, slots: Sequence[FounderSlot]) -> list[Variable]:
        return [self.genes[s.actor][0 if s.gene == "pg" else 1] for s in slots]


def gene_variable(name: str, marker: Marker) -> Variable:
    return Variable(name, marker.alleles)


def _genotype_var(name: str, marker: Marker) -> Variable:
    return Variable(name, genotype_states(marker.alleles))


def compile_case(
    case: CaseSpec,
    marker: Marker,
    founders,
    free_actors: Sequence[str] = (),
    target_prior: Sequence[float] | None = None,
    unit_latents: bool = False,
) -> CompiledMarker:
    """Build the network for ``marker`` with founder distributions from ``founders``.

    ``founders`` must provide ``attach(net, genes, marker, unit_latents)``, adding
    founder factors and returning the across-marker latent variables.
    Founders listed in ``free_actors`` get no founder factor at all, so their
    genes can be queried to obtain likelihoods conditional on founder values.
    """
    topo = case.topo
    for a in free_actors:
        if a not in topo.founders:
            raise InputError(f"{a!r} is not a founder of {topo.name}")
    net = Network()
    genes = {}
    for a in topo.founders:
        genes[a] = (net.add_variable(gene_variable(f"{a}pg", marker)),
                    net.add_variable(gene_variable(f"{a}mg", marker)))

    target = net.add_variable(Variable(topo.target, topo.target_states))
    tp = np.full(target.size, 1.0 / target.size) if target_prior is None else np.asarray(target_prior, float)
    net.add_factor(prior(target, tp))

    def gene(name):
        return net.add_variable(gene_variable(name, marker))

    def genotype_node(actor, pg, mg):
        gt = net.add_variable(_genotype_var(f"{actor}gt", marker))
        net.add_factor(genotype_factor(pg, mg, gt))
        return gt

    def child(name, father, mother):
        cpg, cmg = gene(f"{name}pg"), gene(f"{name}mg")
        net.add_factor(mendelian_factor(*father, cpg))
        net.add_factor(mendelian_factor(*mother, cmg))
        genes[name] = (cpg, cmg)
        return genotype_node(name, cpg, cmg)

    gts = {}
    if topo.name == "criminal-id":
        for a in topo.founders:
            gts[a] = genotype_node(a, *genes[a])
        trace = net.add_variable(_genotype_var("trace", marker))
        net.add_factor(selector_factor(trace, gts["s"], gts["as"], target))
    elif topo.name == "mixture":
        for a in topo.founders:
            gts[a] = genotype_node(a, *genes[a])
        sw1 = net.add_variable(Variable("p1=s?", BOOL))
        sw2 = net.add_variable(Variable("p2=v?", BOOL))
        net.add_factor(deterministic(sw1, [target], lambda t: TRUE if t.split("&")[0] == "s" else FALSE))
        net.add_factor(deterministic(sw2, [target], lambda t: TRUE if t.split("&")[1] == "v" else FALSE))
        p1 = net.add_variable(_genotype_var("p1gt", marker))
        p2 = net.add_variable(_genotype_var("p2gt", marker))
        net.add_factor(selector_factor(p1, gts["s"], gts["as"], sw1))
        net.add_factor(selector_factor(p2, gts["v"], gts["av"], sw2))
        mix = net.add_variable(Variable("mix", subset_states(marker.alleles)))
        net.add_factor(mixture_factor(p1, p2, mix))
    elif topo.name == "paternity":
        tf = (gene("tfpg"), gene("tfmg"))
        for i in range(2):
            net.add_factor(selector_factor(tf[i], genes["pf"][i], genes["af"][i], target))
        for a in ("m", "pf"):
            gts[a] = genotype_node(a, *genes[a])
        gts["c"] = child("c", tf, genes["m"])
    elif topo.name == "sibship":
        tf1 = (gene("tf1pg"), gene("tf1mg"))
        for i in range(2):
            net.add_factor(selector_factor(tf1[i], genes["tf2"][i], genes["af"][i], target))
        for a in ("m1", "m2"):
            gts[a] = genotype_node(a, *genes[a])
        gts["c1"] = child("c1", tf1, genes["m1"])
        gts["c21"] = child("c21", genes["tf2"], genes["m2"])
        gts["c22"] = child("c22", genes["tf2"], genes["m2"])
    else:  # pragma: no cover - guarded by topology()
        raise InputError(topo.name)

    attached = {a: genes[a] for a in topo.founders if a not in set(free_actors)}
    latents = list(founders.attach(net, attached, marker, unit_latents)) if attached else []

    # evidence
    for actor, by_marker in case.genotypes.items():
        g = by_marker.get(marker.name)
        if g is None:
            continue
        if actor not in gts:
            raise InputError(f"{topo.name}: actor {actor!r} cannot carry a genotype")
        _observe_alleles(marker, g)
        net.observe(f"{actor}gt", g)
    if topo.evidence == "trace" and marker.name in case.trace:
        _observe_alleles(marker, case.trace[marker.name])
        net.observe("trace", case.trace[marker.name])
    if topo.evidence == "mix" and marker.name in case.mix:
        _observe_alleles(marker, case.mix[marker.name])
        net.observe("mix", case.mix[marker.name])

    return CompiledMarker(net, marker, target, {a: genes[a] for a in topo.founders}, latents)


def _observe_alleles(marker: Marker, alleles) -> None:
    bad = [a for a in alleles if a not in marker.alleles]
    if bad:
        raise InputError(f"marker {marker.name}: evidence alleles {bad} absent from the allele domain")


def case_marker(case: CaseSpec, marker: Marker, coarsen: bool = True) -> Marker:
    """The marker as used for ``case``: coarsened to observed alleles plus ``other`` by default."""
    if not coarsen:
        _observe_alleles(marker, case.observed_alleles(marker.name))
        return marker
    return marker.coarsen(case.observed_alleles(marker.name))
