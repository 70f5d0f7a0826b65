"""Combining per-marker likelihoods into overall likelihood ratios.

Markers are conditionally independent given the target and the scenario's
across-marker latent variables (relationship R, or the subpopulation labels S).
The exact overall likelihood averages the product over markers with respect to
those latents; the product rule instead averages each marker separately.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError, NumericalError
from .factor import eliminate
from .founders import FounderModel, LatentSpec
from .genetics import CaseSpec, Marker, case_marker, compile_case


@dataclass(frozen=True)
class MarkerLikelihoodTable:
    """``table[t] = p(E_m, T = t | conditioning)`` for one conditioning value."""

    marker: str
    conditioning: str
    target_states: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.shape != (len(self.target_states),) or np.any(t < 0) or not np.all(np.isfinite(t)):
            raise NumericalError(f"marker {self.marker}: invalid likelihood table")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)


def _model_for(case: CaseSpec, model: FounderModel) -> FounderModel:
    return model.with_pair(case.topo.ibd_pair) if model.ibd is not None else model


def latent_spec(case: CaseSpec, model: FounderModel) -> LatentSpec:
    return _model_for(case, model).latent_spec(case.topo.founders)


def per_marker_tables(
    case: CaseSpec, marker: Marker, model: FounderModel, coarsen: bool = True
) -> list[MarkerLikelihoodTable]:
    """One table per joint value of the scenario's conditioning variables, in state order."""
    model = _model_for(case, model)
    mk = case_marker(case, marker, coarsen)
    cm = compile_case(case, mk, model, unit_latents=True)
    spec = model.latent_spec(case.topo.founders)
    query = [cm.target.name] + [v.name for v in spec.variables]
    joint = eliminate(cm.network, query).table
    states = cm.target.states
    if not spec.variables:
        return [MarkerLikelihoodTable(marker.name, "none", states, joint)]
    out = []
    for combo in itertools.product(*(range(v.size) for v in spec.variables)):
        label = ",".join(str(v.states[i]) for v, i in zip(spec.variables, combo))
        out.append(MarkerLikelihoodTable(marker.name, label, states, joint[(slice(None),) + combo]))
    return out


def _log(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(x)


def _target_prior(case: CaseSpec) -> np.ndarray:
    n = len(case.topo.target_states)
    return np.full(n, 1.0 / n)


def _conditional_log_tables(case: CaseSpec, tables: Sequence[Sequence[MarkerLikelihoodTable]]) -> np.ndarray:
    """Array [marker, conditioning, target] of log p(E_m | T, conditioning)."""
    if not tables:
        raise InputError("no markers to combine")
    lp_t = _log(_target_prior(case))
    arr = np.stack([np.stack([t.table for t in per]) for per in tables])
    return _log(arr) - lp_t


def _log_evidence(case: CaseSpec, spec: LatentSpec, logs: np.ndarray) -> np.ndarray:
    """log p(E | T = t) for every target state, combining all markers exactly."""
    if spec.kind == "none":
        return logs[:, 0, :].sum(axis=0)
    if spec.kind == "shared":
        lw = _log(np.asarray(spec.weights, dtype=float).reshape(-1))
        return np.logaddexp.reduce(lw[:, None] + logs.sum(axis=0), axis=0)
    # per-marker patterns mixed by p(pattern | R), then averaged over R
    lpr = _log(spec.relationship_prior)
    lcond = _log(spec.pattern_given_relationship)  # [R, pi]
    per_r = np.logaddexp.reduce(lcond[None, :, :, None] + logs[:, None, :, :], axis=2)  # [m, R, t]
    return np.logaddexp.reduce(lpr[:, None] + per_r.sum(axis=0), axis=0)


def _marginal_log_evidence(spec: LatentSpec, logs: np.ndarray) -> np.ndarray:
    """Array [marker, target] of log p(E_m | T) with the latents averaged per marker."""
    if spec.kind == "none":
        return logs[:, 0, :]
    if spec.kind == "shared":
        lw = _log(np.asarray(spec.weights, dtype=float).reshape(-1))
        return np.logaddexp.reduce(lw[None, :, None] + logs, axis=1)
    lpi = _log(spec.relationship_prior @ spec.pattern_given_relationship)
    return np.logaddexp.reduce(lpi[None, :, None] + logs, axis=1)


def _log10_ratio(num: float, den: float, context: str) -> float:
    if den == -math.inf:
        if num == -math.inf:
            raise NumericalError(f"{context}: evidence impossible under both hypotheses")
        warnings.warn(f"{context}: zero likelihood under the alternative hypothesis; LR is infinite")
        return math.inf
    return (num - den) / math.log(10)


def _hyp_index(case: CaseSpec) -> tuple[int, int]:
    states = case.topo.target_states
    return states.index(case.hypotheses[0]), states.index(case.hypotheses[1])


def exact_from_tables(case: CaseSpec, spec: LatentSpec, tables) -> float:
    """Overall log10 LR from per-marker tables, combining markers exactly."""
    h0, h1 = _hyp_index(case)
    le = _log_evidence(case, spec, _conditional_log_tables(case, tables))
    return _log10_ratio(le[h0], le[h1], "overall")


def per_marker_lrs(case: CaseSpec, spec: LatentSpec, tables) -> np.ndarray:
    h0, h1 = _hyp_index(case)
    lm = _marginal_log_evidence(spec, _conditional_log_tables(case, tables))
    out = []
    for m, per in enumerate(tables):
        out.append(10 ** _log10_ratio(lm[m, h0], lm[m, h1], f"marker {per[0].marker}"))
    return np.array(out)


def product_rule_combined(lrs: Sequence[float]) -> float:
    """Sum of per-marker log10 LRs."""
    lrs = np.asarray(lrs, dtype=float)
    if np.any(lrs < 0) or np.any(np.isnan(lrs)):
        raise NumericalError("per-marker LRs must be nonnegative numbers")
    with np.errstate(divide="ignore"):
        return float(np.log10(lrs).sum())


def posterior_probability(lr: float, prior: float = 0.5) -> float:
    if not 0.0 < prior < 1.0:
        raise InputError("prior must lie strictly between 0 and 1")
    if math.isinf(lr):
        return 1.0
    return lr * prior / (lr * prior + (1.0 - prior))


@dataclass
class LRReport:
    scenario: str
    markers: tuple[str, ...]
    per_marker: np.ndarray
    log10_exact: float
    log10_product: float
    route: str = "none"
    posterior: float | None = None
    prior: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def lr_exact(self) -> float:
        return 10 ** self.log10_exact

    @property
    def lr_product(self) -> float:
        return 10 ** self.log10_product


def all_tables(case: CaseSpec, markers: Mapping[str, Marker], model: FounderModel,
               coarsen: bool = True, jobs: int = 1):
    names = list(case.markers)
    missing = [m for m in names if m not in markers]
    if missing:
        raise InputError(f"no frequencies for markers {missing}")

    def one(name):
        try:
            return per_marker_tables(case, markers[name], model, coarsen)
        except (InputError, NumericalError) as exc:
            raise type(exc)(f"marker {name}, scenario {model.label}: {exc}") from exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, names))
    return [one(n) for n in names]


def analyze(case: CaseSpec, markers: Mapping[str, Marker], model: FounderModel,
            coarsen: bool = True, jobs: int = 1, prior: float | None = None) -> LRReport:
    """Per-marker LRs plus exact and product-rule overall log10 LRs for one scenario."""
    spec = latent_spec(case, model)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tables = all_tables(case, markers, model, coarsen, jobs)
        lrs = per_marker_lrs(case, spec, tables)
        exact = exact_from_tables(case, spec, tables)
        product = product_rule_combined(lrs)
    notes = sorted({str(w.message) for w in caught})
    route = _model_for(case, model).conditioning_route()
    report = LRReport(model.label, tuple(case.markers), lrs, exact, product, route, notes=notes)
    if prior is not None:
        report.prior = prior
        report.posterior = posterior_probability(10 ** exact if exact < 308 else math.inf, prior)
    return report


def exact_combined(case: CaseSpec, markers: Mapping[str, Marker], model: FounderModel, **kw) -> float:
    return analyze(case, markers, model, **kw).log10_exact
