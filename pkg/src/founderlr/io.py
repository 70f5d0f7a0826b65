"""Frequency databases (CSV) and case files (JSON)."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .founders import (
    RELATIONSHIP_FAMILIES, FounderModel, RelationshipPrior, SubpopModel, cascade,
)
from .genetics import OTHER, CaseSpec, Marker, sort_alleles, topology

SUM_TOL = 1e-6  # silently accepted excess
SUM_HARD = 1e-3  # renormalised with a warning up to this excess; beyond it the row set is rejected
DEFAULT_FLOOR = 0.001
HEADER = ["population", "marker", "allele", "frequency"]


# ---------------------------------------------------------------------------
# frequency database


@dataclass
class FrequencyDB:
    """``freqs[population][marker][allele]`` plus database sizes in individuals.

    Listed frequencies may fall short of 1; the remainder belongs to unlisted
    alleles and is carried as ``other`` when a :class:`Marker` is built.
    """

    freqs: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    sizes: dict[str, int] = field(default_factory=dict)

    @property
    def populations(self) -> tuple[str, ...]:
        return tuple(self.freqs)

    def markers(self) -> tuple[str, ...]:
        seen = {}
        for per in self.freqs.values():
            seen.update(dict.fromkeys(per))
        return tuple(seen)

    def check_population(self, population: str) -> None:
        if population not in self.freqs:
            raise InputError(f"population {population!r} not in frequency DB; have {list(self.freqs)}")

    def has_allele(self, population: str, marker: str, allele: str) -> bool:
        return allele in self.freqs.get(population, {}).get(marker, {})

    def marker(self, name: str, populations: Sequence[str] | None = None,
               evidence: Sequence[str] = (), strict: bool = True,
               floor: float = DEFAULT_FLOOR) -> Marker:
        """Marker over every listed allele (plus ``other`` for the unlisted mass).

        An evidence allele missing from a population's table is an error in strict
        mode; otherwise it receives ``floor`` with a warning, taken from the
        unlisted mass when there is enough of it and by renormalising when not.
        """
        pops = list(self.freqs) if populations is None else list(populations)
        for p in pops:
            self.check_population(p)
            if name not in self.freqs[p]:
                raise InputError(f"marker {name!r} has no frequencies for population {p!r}")
        tables = {p: dict(self.freqs[p][name]) for p in pops}
        for p in pops:
            for a in evidence:
                if a in tables[p]:
                    continue
                if strict:
                    raise InputError(f"allele {a} of marker {name} missing from the {p} frequency table")
                if not 0 < floor < 1:
                    raise InputError("missing-allele floor must lie in (0, 1)")
                warnings.warn(f"allele {a} of marker {name} missing from the {p} table; "
                              f"using floor frequency {floor:g}")
                listed = sum(tables[p].values())
                if 1.0 - listed < floor:
                    scale = (1.0 - floor) / listed
                    tables[p] = {k: v * scale for k, v in tables[p].items()}
                tables[p][a] = floor
        labels = sort_alleles(a for t in tables.values() for a in t)
        if OTHER in labels:
            raise InputError(f"marker {name}: allele label {OTHER!r} is reserved")
        rest = {p: 1.0 - math.fsum(t.values()) for p, t in tables.items()}
        need_other = any(r > 1e-12 for r in rest.values())
        alleles = labels + ((OTHER,) if need_other else ())
        freqs = {}
        for p, t in tables.items():
            vec = [t.get(a, 0.0) for a in labels]
            if need_other:
                vec.append(max(rest[p], 0.0))
            vec = np.array(vec)
            freqs[p] = vec / vec.sum()
        return Marker(name, alleles, freqs)


def _norm_allele(text: str) -> str:
    text = text.strip()
    if not text:
        raise InputError("empty allele label")
    try:
        x = float(text)
    except ValueError:
        return text
    # 9.3 stays 9.3, 07 becomes 7
    return str(int(x)) if x.is_integer() else repr(x)


def load_frequency_db(path) -> FrequencyDB:
    """Read ``population,marker,allele,frequency`` rows and ``population,size,<n>`` rows."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read frequency DB {path}: {exc}") from None
    rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
    rows = [r for r in rows if not r[0].lstrip().startswith("#")]
    if not rows:
        raise InputError(f"frequency DB {path} is empty")
    if [c.strip().lower() for c in rows[0]] != HEADER:
        raise InputError(f"frequency DB {path}: header must be {','.join(HEADER)}")
    db = FrequencyDB()
    for lineno, row in enumerate(rows[1:], start=2):
        row = [c.strip() for c in row]
        if len(row) == 3 and row[1].lower() == "size":
            try:
                n = int(row[2])
            except ValueError:
                raise InputError(f"{path}:{lineno}: database size must be an integer") from None
            if n <= 0:
                raise InputError(f"{path}:{lineno}: database size must be positive")
            db.sizes[row[0]] = n
            db.freqs.setdefault(row[0], {})
            continue
        if len(row) != 4 or not all(row):
            raise InputError(f"{path}:{lineno}: malformed row {row!r}")
        pop, marker, allele, value = row
        try:
            freq = float(value)
        except ValueError:
            raise InputError(f"{path}:{lineno}: frequency {value!r} is not a number") from None
        if not 0.0 <= freq <= 1.0:
            raise InputError(f"{path}:{lineno}: frequency {freq} outside [0, 1]")
        table = db.freqs.setdefault(pop, {}).setdefault(marker, {})
        allele = _norm_allele(allele)
        if allele in table:
            raise InputError(f"{path}:{lineno}: duplicate allele {allele} for {pop}/{marker}")
        table[allele] = freq
    for pop, per in db.freqs.items():
        for marker, table in per.items():
            total = math.fsum(table.values())
            if total > 1 + SUM_HARD:
                raise InputError(f"{pop}/{marker}: frequencies sum to {total:.6f} (> 1)")
            if total > 1 + SUM_TOL:
                warnings.warn(f"{pop}/{marker}: frequencies sum to {total:.6f}; renormalised")
                per[marker] = {a: v / total for a, v in table.items()}
    return db


def write_frequency_db(db: FrequencyDB, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for pop, per in db.freqs.items():
            for marker, table in per.items():
                for allele, freq in table.items():
                    w.writerow([pop, marker, allele, repr(float(freq))])
        for pop, n in db.sizes.items():
            w.writerow([pop, "size", n])


# ---------------------------------------------------------------------------
# scenarios


SCENARIO_KINDS = ("baseline", "coancestry", "uaf", "ibd", "het", "cascade")
_DEFAULT_LABELS = {"baseline": "Baseline", "coancestry": "Coancestry", "uaf": "UAF",
                   "ibd": "IBD", "het": "HET"}


def _relationship_prior(cfg) -> RelationshipPrior:
    if cfg is None or cfg == "default":
        return RelationshipPrior.default()
    if not isinstance(cfg, Mapping):
        raise InputError("ibd prior must be an object of relationship masses")
    cfg = dict(cfg)
    unrelated = cfg.pop("unrelated", None)
    unknown = set(cfg) - set(RELATIONSHIP_FAMILIES)
    if unknown:
        raise InputError(f"unknown relationships {sorted(unknown)}; expected {list(RELATIONSHIP_FAMILIES)}")
    try:
        prior = RelationshipPrior(**{k: float(v) for k, v in cfg.items()})
    except (TypeError, ValueError):
        raise InputError("relationship masses must be numbers") from None
    if unrelated is not None and abs(float(unrelated) - prior.unrelated) > 1e-9:
        raise InputError(f"ibd prior: unrelated mass {unrelated} disagrees with the remainder {prior.unrelated:.6g}")
    return prior


def _num(cfg, key, kind):
    try:
        x = float(cfg[key])
    except KeyError:
        raise InputError(f"{kind} scenario needs {key!r}") from None
    except (TypeError, ValueError):
        raise InputError(f"{kind} scenario: {key!r} must be a number") from None
    return x


def scenario_model(cfg: Mapping, population: str, populations: Sequence[str] = ()) -> FounderModel:
    """Founder model for one tagged scenario config.

    ``population`` is the gene pool for non-HET scenarios; ``populations`` is the
    default subpopulation list for HET.
    """
    if isinstance(cfg, str):
        cfg = {"kind": cfg}
    if not isinstance(cfg, Mapping) or "kind" not in cfg:
        raise InputError(f"scenario must be an object with a 'kind' field, got {cfg!r}")
    kind = cfg["kind"]
    label = cfg.get("label")
    actors = cfg.get("actors")
    if kind == "baseline":
        model = FounderModel.baseline(population)
    elif kind == "coancestry":
        model = FounderModel.coancestry(population, _num(cfg, "theta", kind), actors)
    elif kind == "uaf":
        model = FounderModel.uaf(population, _num(cfg, "M", kind) if "M" in cfg else 100.0, actors,
                                 structural=bool(cfg.get("structural", False)))
    elif kind == "ibd":
        pair = cfg.get("pair")
        model = FounderModel.relatedness(population, _relationship_prior(cfg.get("prior")),
                                         pair=pair, route=cfg.get("route", "auto"))
    elif kind == "het":
        pops = tuple(cfg.get("populations") or populations)
        if not pops:
            raise InputError("het scenario needs populations")
        model = FounderModel.heterogeneous(
            SubpopModel(pops, cfg.get("weights"), dict(cfg.get("assignment") or {})))
    elif kind == "cascade":
        first = scenario_model(cfg.get("first", {"kind": "uaf"}), population, populations)
        second = scenario_model(cfg.get("second", {"kind": "ibd"}), population, populations)
        model = cascade(first, second)
        label = label or f"{_label_of(cfg.get('first', {'kind': 'uaf'}))}+{_label_of(cfg.get('second', {'kind': 'ibd'}))}"
    else:
        raise InputError(f"unknown scenario kind {kind!r}; expected one of {list(SCENARIO_KINDS)}")
    return replace(model, label=label or _DEFAULT_LABELS[kind])


def _label_of(cfg) -> str:
    if isinstance(cfg, str):
        cfg = {"kind": cfg}
    return cfg.get("label") or _DEFAULT_LABELS.get(cfg.get("kind"), str(cfg.get("kind")))


def parse_scenario_arg(text: str, case_scenarios: Sequence[Mapping] = ()) -> dict:
    """``--scenario`` value: inline JSON, a label or kind from the case file, or ``kind[:value]``."""
    text = text.strip()
    if text.startswith("{"):
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"bad scenario JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise InputError("scenario JSON must be an object")
        return cfg
    for cfg in case_scenarios:
        if _label_of(cfg).lower() == text.lower():
            return dict(cfg)
    for cfg in case_scenarios:
        if cfg.get("kind") == text.lower():
            return dict(cfg)
    kind, _, value = text.partition(":")
    kind = kind.lower()
    if kind not in SCENARIO_KINDS:
        raise InputError(f"unknown scenario {text!r}")
    cfg = {"kind": kind}
    if value:
        key = {"uaf": "M", "coancestry": "theta"}.get(kind)
        if key is None:
            raise InputError(f"scenario {kind!r} takes no inline value")
        cfg[key] = value
    return cfg


# ---------------------------------------------------------------------------
# case files


def _genotype(value, where: str) -> tuple[str, str]:
    if isinstance(value, str):
        value = value.split()
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise InputError(f"{where}: genotype must be two alleles")
    return tuple(_norm_allele(str(a)) for a in value)


def case_from_dict(doc: Mapping, name: str = "case") -> CaseSpec:
    if not isinstance(doc, Mapping):
        raise InputError(f"{name}: case file must hold a JSON object")
    if "topology" not in doc:
        raise InputError(f"{name}: missing 'topology'")
    topo = topology(doc["topology"])
    actors = doc.get("actors") or {}
    if not isinstance(actors, Mapping):
        raise InputError(f"{name}: 'actors' must map roles to genotype maps")
    genotypes = {}
    for role, gts in actors.items():
        if role not in topo.actors:
            raise InputError(f"{name}: unknown actor role {role!r} for topology {topo.name}")
        if gts is None:
            continue
        if not isinstance(gts, Mapping):
            raise InputError(f"{name}: genotypes of {role!r} must be a marker map or null")
        genotypes[role] = {m: _genotype(g, f"{name}/{role}/{m}") for m, g in gts.items()}
    evidence = doc.get("evidence") or {}
    unknown = set(evidence) - {"trace", "mix"}
    if unknown:
        raise InputError(f"{name}: unknown evidence kinds {sorted(unknown)}")
    trace = {m: _genotype(g, f"{name}/trace/{m}") for m, g in (evidence.get("trace") or {}).items()}
    mix = {}
    for m, alleles in (evidence.get("mix") or {}).items():
        if isinstance(alleles, str):
            alleles = alleles.split()
        mix[m] = tuple(_norm_allele(str(a)) for a in alleles)
    markers = doc.get("markers")
    if markers is None:
        order: dict[str, None] = {}
        for src in [trace, mix] + [genotypes[a] for a in topo.typed if a in genotypes]:
            order.update(dict.fromkeys(src))
        markers = list(order)
    markers = [str(m) for m in markers]
    if not markers:
        raise InputError(f"{name}: no markers")
    for m in markers:
        for role in topo.typed:
            if m not in genotypes.get(role, {}):
                raise InputError(f"{name}: typed actor {role!r} has no genotype for marker {m}")
        if topo.evidence == "trace" and m not in trace:
            raise InputError(f"{name}: no trace for marker {m}")
        if topo.evidence == "mix" and m not in mix:
            raise InputError(f"{name}: no mixture for marker {m}")
    scenarios = doc.get("scenarios") or []
    if not isinstance(scenarios, list):
        raise InputError(f"{name}: 'scenarios' must be an array")
    for cfg in scenarios:
        if not isinstance(cfg, Mapping) or cfg.get("kind") not in SCENARIO_KINDS:
            raise InputError(f"{name}: bad scenario entry {cfg!r}")
    hyps = doc.get("hypotheses")
    return CaseSpec(topo.name, tuple(markers), genotypes, trace, mix,
                    tuple(hyps) if hyps is not None else None, [dict(s) for s in scenarios],
                    str(doc.get("label", name)))


def load_case(path, db: FrequencyDB | None = None, populations: Sequence[str] | None = None,
              strict: bool = True) -> CaseSpec:
    """Parse and validate a JSON case file; with ``db``, also check its alleles in strict mode."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read case file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"case file {path} is not valid JSON: {exc}") from None
    case = case_from_dict(doc, path.stem)
    if db is not None:
        check_case_alleles(case, db, populations, strict)
    return case


def missing_alleles(case: CaseSpec, db: FrequencyDB, populations: Sequence[str] | None = None):
    """[(population, marker, allele)] for evidence alleles absent from the DB.

    A marker with no table at all for a population is reported once with allele None.
    """
    pops = db.populations if populations is None else tuple(populations)
    out = []
    for p in pops:
        db.check_population(p)
        for m in case.markers:
            if m not in db.freqs[p]:
                out.append((p, m, None))
                continue
            out += [(p, m, a) for a in case.observed_alleles(m) if not db.has_allele(p, m, a)]
    return out


def check_case_alleles(case: CaseSpec, db: FrequencyDB, populations=None, strict: bool = True) -> None:
    missing = missing_alleles(case, db, populations)
    for p, m, a in missing:
        if a is None:
            raise InputError(f"marker {m!r} has no frequencies for population {p!r}")
    if missing and strict:
        p, m, a = missing[0]
        raise InputError(f"allele {a} of marker {m} missing from the {p} frequency table"
                         + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))


def case_markers(case: CaseSpec, db: FrequencyDB, populations: Sequence[str] | None = None,
                 strict: bool = True, floor: float = DEFAULT_FLOOR) -> dict[str, Marker]:
    return {m: db.marker(m, populations, case.observed_alleles(m), strict, floor) for m in case.markers}
