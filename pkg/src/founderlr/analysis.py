"""End-to-end runs: case + frequency DB + scenarios -> LR and bounds reports."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

from .errors import InputError, NumericalError
from .founders import FounderModel
from .genetics import CaseSpec
from .io import DEFAULT_FLOOR, FrequencyDB, case_markers, parse_scenario_arg, scenario_model
from .multimarker import LRReport, analyze
from .sensitivity import BOUND_MODES, BoundsRow, marker_bounds


@dataclass
class RunConfig:
    population: str
    scenarios: Sequence[str] = ()  # empty: the case file's scenarios, else baseline
    markers: Sequence[str] = ()  # empty: every marker of the case
    prior: float | None = None
    eps_modes: Sequence[str] = BOUND_MODES
    epsilon: float | None = None
    strict: bool = True
    floor: float = DEFAULT_FLOOR
    coarsen: bool = True
    jobs: int = 1


@dataclass
class AnalysisReport:
    case: str
    topology: str
    population: str
    markers: tuple[str, ...]
    results: list[LRReport]
    warnings: list[str] = field(default_factory=list)


@dataclass
class BoundsReport:
    case: str
    population: str
    scenario: str
    modes: tuple[str, ...]
    rows: list[BoundsRow]
    warnings: list[str] = field(default_factory=list)


def _scenario_configs(case: CaseSpec, requested: Sequence[str]) -> list[dict]:
    if requested:
        return [parse_scenario_arg(s, case.scenarios) for s in requested]
    return [dict(s) for s in case.scenarios] or [{"kind": "baseline"}]


def _subpops(db: FrequencyDB, cfg: dict) -> tuple[str, ...]:
    """Populations a scenario draws on (the HET list, including inside cascades)."""
    pops = []
    for part in (cfg, cfg.get("first") or {}, cfg.get("second") or {}):
        if isinstance(part, dict) and part.get("kind") == "het":
            pops += list(part.get("populations") or db.populations)
    return tuple(pops)


def _restrict(case: CaseSpec, markers: Sequence[str]) -> CaseSpec:
    return case.restrict(list(markers)) if markers else case


def _models(case: CaseSpec, db: FrequencyDB, config: RunConfig):
    db.check_population(config.population)
    out = []
    for cfg in _scenario_configs(case, config.scenarios):
        pops = tuple(dict.fromkeys((config.population,) + _subpops(db, cfg)))
        model = scenario_model(cfg, config.population, db.populations)
        out.append((model, pops))
    return out


def run_analysis(case: CaseSpec, db: FrequencyDB, config: RunConfig) -> AnalysisReport:
    """Per-marker and overall LRs (exact and product rule) for each requested scenario."""
    case = _restrict(case, config.markers)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        results = []
        for model, pops in _models(case, db, config):
            markers = case_markers(case, db, pops, config.strict, config.floor)
            try:
                results.append(analyze(case, markers, model, config.coarsen, config.jobs, config.prior))
            except (InputError, NumericalError) as exc:
                raise type(exc)(f"scenario {model.label}: {exc}") from exc
    notes = list(dict.fromkeys(str(w.message) for w in caught))
    return AnalysisReport(case.label, case.topology, config.population, tuple(case.markers), results, notes)


def run_bounds(case: CaseSpec, db: FrequencyDB, config: RunConfig) -> BoundsReport:
    """Baseline LR, scenario LR and the requested bound intervals for each marker."""
    case = _restrict(case, config.markers)
    models = _models(case, db, config)
    if len(models) != 1:
        raise InputError("bounds takes exactly one scenario")
    model, _ = models[0]
    if model.het is not None or (model.urn is None and model.ibd is None) or (model.urn and model.ibd):
        raise InputError("bounds supports the UAF and IBD scenarios only")
    modes = tuple(config.eps_modes)
    rows = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        markers = case_markers(case, db, (config.population,), config.strict, config.floor)
        for name in case.markers:
            try:
                rows.append(marker_bounds(case, markers[name], model, config.population,
                                          epsilon=config.epsilon, coarsen=config.coarsen, modes=modes))
            except (InputError, NumericalError) as exc:
                raise type(exc)(f"marker {name}, scenario {model.label}: {exc}") from exc
    notes = list(dict.fromkeys(str(w.message) for w in caught))
    return BoundsReport(case.label, config.population, model.label, modes, rows, notes)


def default_model(population: str) -> FounderModel:
    return FounderModel.baseline(population)
