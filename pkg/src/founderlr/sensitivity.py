"""Sensitivity of a single-marker LR to the founder joint distribution f.

With ``p_t[i] = P(T = t, E | F = i)`` the log-LR is ``h(f) = log(p1 @ f) - log(p0 @ f)``,
a ratio of linear forms. Two analyses are provided: extremes of h along the
constrained steepest-descent line through the baseline ``f0``, and exact extremes
of the LR over a box-and-equality neighbourhood by linear-fractional programming.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import qr

from .errors import InputError, NumericalError
from .factor import eliminate
from .founders import FounderJoint, FounderModel, baseline_founders, scenario_joint
from .genetics import CaseSpec, FounderSlot, Marker, case_marker, compile_case
from .lp import solve_lp

RANK_TOL = 1e-9
ZERO_MASS = 1e-12  # likelihood mass treated as zero, relative to the baseline
DEFAULT_CEILING = 50_000
EPS_MODES = ("csd-abs", "csd-rel", "lfp-abs", "lfp-rel")


@dataclass(frozen=True)
class LikelihoodVectors:
    """``p1`` is the numerator hypothesis, ``p0`` the denominator one."""

    slots: tuple[FounderSlot, ...]
    p0: np.ndarray
    p1: np.ndarray

    def __post_init__(self):
        for name in ("p0", "p1"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise InputError(f"{name} must be finite and nonnegative")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        if self.p0.shape != self.p1.shape:
            raise InputError("p0 and p1 must have the same length")

    def lr(self, f) -> float:
        return _ratio(self.p1 @ f, self.p0 @ f)


def _ratio(num: float, den: float) -> float:
    if den <= 0:
        if num <= 0:
            raise NumericalError("likelihood is zero under both hypotheses")
        return math.inf
    return num / den


def founder_likelihood_vectors(
    case: CaseSpec, marker: Marker, population: str, actors: Sequence[str] | None = None,
    coarsen: bool = True, ceiling: int = DEFAULT_CEILING,
) -> tuple[LikelihoodVectors, Marker]:
    """Likelihood vectors over the genes of ``actors`` (default: the case's designated pair).

    Remaining founders keep baseline distributions. One elimination with the free
    genes as query variables yields every entry at once. Returns the vectors and the
    (possibly coarsened) marker that indexes them.
    """
    topo = case.topo
    actors = tuple(topo.ibd_pair if actors is None else actors)
    mk = case_marker(case, marker, coarsen)
    size = len(mk.alleles) ** (2 * len(actors))
    if size > ceiling:
        raise InputError(f"founder configuration space of {size} entries exceeds the ceiling {ceiling}")
    cm = compile_case(case, mk, FounderModel.baseline(population), free_actors=actors)
    slots = tuple(case.founder_slots(marker.name, actors))
    genes = cm.gene_vars(slots)
    table = eliminate(cm.network, [cm.target] + genes).table
    states = topo.target_states
    h0, h1 = (states.index(h) for h in case.hypotheses)
    return LikelihoodVectors(slots, table[h1].reshape(-1), table[h0].reshape(-1)), mk


def log_lr(f, vectors: LikelihoodVectors) -> float:
    f = np.asarray(f, dtype=float)
    num, den = vectors.p1 @ f, vectors.p0 @ f
    if den <= 0:
        raise NumericalError("denominator likelihood is zero")
    with np.errstate(divide="ignore"):
        return float(np.log(num) - np.log(den))


def gradient(f, vectors: LikelihoodVectors) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    num, den = vectors.p1 @ f, vectors.p0 @ f
    if num <= 0 or den <= 0:
        raise NumericalError("gradient needs positive likelihoods under both hypotheses")
    return vectors.p1 / num - vectors.p0 / den


# ---------------------------------------------------------------------------
# constraints


@dataclass(frozen=True)
class ConstraintSet:
    X: np.ndarray
    flags: tuple[str, ...] = ()

    @property
    def rank(self) -> int:
        return self.X.shape[1]


def prune_columns(X: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Keep a linearly independent subset of columns chosen by pivoted QR."""
    if X.shape[1] == 0:
        return X
    _, r, piv = qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    if d.size == 0 or d[0] == 0:
        return X[:, :0]
    rank = int((d > tol * d[0]).sum())
    return X[:, np.sort(piv[:rank])]


def _swap_columns(shape, perm) -> list[np.ndarray]:
    n = int(np.prod(shape))
    idx = np.arange(n).reshape(shape)
    swapped = np.transpose(idx, perm).reshape(-1)
    cols = []
    for i, j in zip(range(n), swapped):
        if i < j:
            v = np.zeros(n)
            v[i], v[j] = 1.0, -1.0
            cols.append(v)
    return cols


def build_constraints(
    slots: Sequence[FounderSlot], k: int,
    flags: Sequence[str] = ("simplex", "actor", "gene", "marginal"),
    pair: Sequence[str] | None = None,
) -> ConstraintSet:
    """Columns of X for the requested constraint families, pruned to full column rank.

    ``actor``: invariance under swapping the gene pairs of the two ``pair`` actors;
    ``gene``: invariance under swapping each actor's paternal and maternal gene;
    ``marginal``: every single-slot marginal fixed; ``simplex``: total mass.
    """
    slots = list(slots)
    unknown = set(flags) - {"simplex", "actor", "gene", "marginal"}
    if unknown:
        raise InputError(f"unknown constraint flags {sorted(unknown)}")
    n_slots = len(slots)
    shape = (k,) * n_slots
    n = k ** n_slots
    cols: list[np.ndarray] = []
    if "simplex" in flags:
        cols.append(np.ones(n))
    actors = list(dict.fromkeys(s.actor for s in slots))

    def pos(actor, gene):
        for i, s in enumerate(slots):
            if s.actor == actor and s.gene == gene:
                return i
        raise InputError(f"no slot for {actor}{gene}")

    if "actor" in flags:
        a, b = pair if pair is not None else actors[:2]
        perm = list(range(n_slots))
        for g in ("pg", "mg"):
            i, j = pos(a, g), pos(b, g)
            perm[i], perm[j] = j, i
        cols += _swap_columns(shape, perm)
    if "gene" in flags:
        for a in actors:
            perm = list(range(n_slots))
            i, j = pos(a, "pg"), pos(a, "mg")
            perm[i], perm[j] = j, i
            cols += _swap_columns(shape, perm)
    if "marginal" in flags:
        grid = np.indices(shape).reshape(n_slots, -1)
        for s in range(n_slots):
            for a in range(k):
                cols.append((grid[s] == a).astype(float))
    X = np.array(cols).T if cols else np.zeros((n, 0))
    return ConstraintSet(prune_columns(X), tuple(flags))


# ---------------------------------------------------------------------------
# neighbourhoods


def epsilon_from_scenario(f, f0, mode: str) -> float:
    """Distance of ``f`` from ``f0`` in one of the four neighbourhood norms."""
    f = np.asarray(f, dtype=float)
    f0 = np.asarray(f0, dtype=float)
    d = f - f0
    if mode == "csd-abs":
        return float(np.linalg.norm(d))
    if mode == "lfp-abs":
        return float(np.abs(d).max(initial=0.0))
    if mode not in EPS_MODES:
        raise InputError(f"unknown epsilon mode {mode!r}")
    zero = f0 <= 0
    if np.any(zero & (f > 0)):
        raise InputError("relative distance undefined: scenario puts mass where the baseline has none")
    if zero.any():
        warnings.warn(f"{int(zero.sum())} configurations with zero baseline mass excluded from the relative norm")
    rel = np.abs(d[~zero] / f0[~zero])
    return float(np.linalg.norm(rel)) if mode == "csd-rel" else float(rel.max(initial=0.0))


@dataclass
class SensitivityProblem:
    f0: np.ndarray
    vectors: LikelihoodVectors
    X: np.ndarray
    eps: float
    mode: str = "lfp-rel"
    W: np.ndarray | None = None

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=float)
        if self.mode not in EPS_MODES:
            raise InputError(f"unknown epsilon mode {self.mode!r}")
        if self.eps < 0:
            raise InputError("epsilon must be nonnegative")
        if self.X.shape[0] != self.f0.size or self.f0.size != self.vectors.p0.size:
            raise InputError("dimension mismatch in sensitivity problem")
        if self.W is None and self.mode == "csd-rel":
            self.W = np.diag(self.f0)

    @property
    def weights(self) -> np.ndarray:
        return self.f0 if self.mode.endswith("rel") else np.ones_like(self.f0)


# ---------------------------------------------------------------------------
# constrained steepest descent


def csd_direction(g, X, W=None) -> np.ndarray:
    """Unit direction of steepest ascent of h within the constraint null space.

    With a weight matrix W the step in f-space is ``W @ delta``.
    """
    g = np.asarray(g, dtype=float)
    if X.shape[1] == 0:
        r = g if W is None else np.asarray(W) @ g
    elif W is None:
        coef, *_ = np.linalg.lstsq(X, g, rcond=None)
        r = g - X @ coef
    else:
        W = np.asarray(W, dtype=float)
        W2 = W @ W
        coef = np.linalg.solve(X.T @ W2 @ X, X.T @ W2 @ g)
        r = W @ (g - X @ coef)
    norm = np.linalg.norm(r)
    if norm <= 1e-12 * max(1.0, np.linalg.norm(g)):
        raise NumericalError("gradient lies in the constraint space")
    return r / norm


def csd_extremes(problem: SensitivityProblem) -> tuple[float, float]:
    """(min h, max h) along the constrained steepest-descent line, |t| <= eps, f >= 0.

    h is linear-fractional along the line, hence monotone between the feasible
    endpoints, so only the endpoints are evaluated.
    """
    v, f0 = problem.vectors, problem.f0
    h0 = log_lr(f0, v)
    if problem.eps == 0:
        return h0, h0
    W = problem.W if problem.mode == "csd-rel" else None
    try:
        delta = csd_direction(gradient(f0, v), problem.X, W)
    except NumericalError:
        return h0, h0
    step = delta if W is None else W @ delta
    lo, hi = -problem.eps, problem.eps
    pos, neg = step > 1e-15, step < -1e-15
    if pos.any():
        lo = max(lo, float(np.max(-f0[pos] / step[pos])))
    if neg.any():
        hi = min(hi, float(np.min(-f0[neg] / step[neg])))
    vals = []
    for t in (lo, hi):
        f = np.clip(f0 + t * step, 0.0, None)
        num, den = v.p1 @ f, v.p0 @ f
        if den <= ZERO_MASS * (v.p0 @ f0):
            vals.append(math.inf if num > 0 else h0)
        elif num <= 0:
            vals.append(-math.inf)
        else:
            vals.append(math.log(num) - math.log(den))
    return min(vals), max(vals)


# ---------------------------------------------------------------------------
# linear-fractional programming


def _orbits(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split X into equality-of-coordinates columns (e_i - e_j) and the rest.

    Returns orbit labels (coordinates forced equal share a label, numbered 0..r-1)
    and the remaining columns.
    """
    n = X.shape[0]
    nz = X != 0
    counts = nz.sum(axis=0)
    sums = X.sum(axis=0)
    swap = (counts == 2) & (np.abs(sums) < 1e-12) & (np.abs(X).max(axis=0, initial=0) == 1.0)
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for col in np.nonzero(swap)[0]:
        i, j = np.nonzero(nz[:, col])[0]
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(n)])
    _, labels = np.unique(roots, return_inverse=True)
    return labels, X[:, ~swap]


@dataclass
class _Reduced:
    """Orbit-reduced LP data with orbit values written as ``hi * u``."""

    labels: np.ndarray
    act: np.ndarray  # orbits with a positive upper box
    hi: np.ndarray  # upper box of the active orbits
    lo_ratio: np.ndarray  # lower box over upper box, per active orbit
    p0: np.ndarray  # p0 mass per unit of u, relative to the baseline denominator
    p1: np.ndarray
    E: np.ndarray  # equality rows over (y0, u), each scaled to unit max
    n_orbits: int

    def lift(self, u: np.ndarray) -> np.ndarray:
        z = np.zeros(self.n_orbits)
        z[self.act] = self.hi * u
        return z[self.labels]


def _reduce(problem: SensitivityProblem) -> _Reduced:
    v, f0 = problem.vectors, problem.f0
    w = problem.weights
    scale = v.p0 @ f0
    if scale <= 0:
        raise NumericalError("baseline denominator likelihood is zero")
    # exact presolve: coordinates tied by exchangeability share one variable per orbit
    labels, rest = _orbits(problem.X)
    r = int(labels.max()) + 1
    G = np.zeros((f0.size, r))
    G[np.arange(f0.size), labels] = 1.0
    rep = np.zeros(r, dtype=int)
    rep[labels[::-1]] = np.arange(f0.size)[::-1]
    if not (np.allclose(f0, f0[rep][labels], rtol=1e-9, atol=0)
            and np.allclose(w, w[rep][labels], rtol=1e-9, atol=0)):
        raise NumericalError("baseline or weights are not constant on exchangeability orbits")
    hi = f0[rep] + problem.eps * w[rep]
    lo = f0[rep] - problem.eps * w[rep]
    # orbits with hi = 0 are pinned at zero and dropped
    act = np.nonzero(hi > 0)[0]
    sc = hi[act]
    L = (G.T @ rest)[act]
    E = np.hstack([-(rest.T @ f0)[:, None], L.T * sc[None, :]])
    E = E[np.abs(E).max(axis=1) > 0]
    E /= np.abs(E).max(axis=1, keepdims=True)
    return _Reduced(labels, act, sc, np.clip(lo[act], 0.0, None) / sc,
                    (G.T @ v.p0)[act] * sc / scale, (G.T @ v.p1)[act] * sc / scale, E, r)


def _box_rows(red: _Reduced, homogeneous: bool):
    """Rows ``u <= y0`` and ``u >= lo_ratio * y0`` (``y0 = 1`` when not homogeneous)."""
    m = red.act.size
    has_lo = red.lo_ratio > 0
    if homogeneous:
        upper = np.hstack([-np.ones((m, 1)), np.eye(m)])
        lower = np.hstack([red.lo_ratio[has_lo, None], -np.eye(m)[has_lo]])
        return np.vstack([upper, lower]), np.zeros(m + int(has_lo.sum()))
    return (np.vstack([np.eye(m), -np.eye(m)[has_lo]]),
            np.concatenate([np.ones(m), -red.lo_ratio[has_lo]]))


def _lfp(problem: SensitivityProblem, maximize: bool, red: _Reduced | None = None):
    """Charnes-Cooper program for one direction; returns (status, LR, optimal f or None)."""
    red = _reduce(problem) if red is None else red
    # f = lift(y) / y0, normalised so the denominator equals the baseline one
    c = np.concatenate([[0.0], red.p1])
    A_eq = np.vstack([np.concatenate([[0.0], red.p0]), red.E])
    b_eq = np.zeros(A_eq.shape[0])
    b_eq[0] = 1.0
    A_ub, b_ub = _box_rows(red, homogeneous=True)
    res = solve_lp(c, A_ub, b_ub, A_eq, b_eq, maximize=maximize)
    if res.status != "optimal":
        return res.status, None, None
    y0, u = res.x[0], res.x[1:]
    f = red.lift(u / y0) if y0 > 0 else None
    return "optimal", max(res.value, 0.0), f


def _min_mass(red: _Reduced, p: np.ndarray) -> float | None:
    """Smallest ``p`` mass over the feasible region, relative to the baseline denominator."""
    A_ub, b_ub = _box_rows(red, homogeneous=False)
    res = solve_lp(p, A_ub, b_ub, red.E[:, 1:], -red.E[:, 0])
    return res.value if res.status == "optimal" else None


def lfp_extremes(problem: SensitivityProblem, trivial: bool = True) -> tuple[float, float]:
    """(min LR, max LR) over Xᵀf = Xᵀf0, f >= 0, |f - f0| <= eps * w componentwise.

    With ``trivial`` set, a region that reaches a point where the numerator
    (denominator) likelihood vanishes reports a lower bound of 0 (upper bound of inf).
    """
    v = problem.vectors
    base = v.lr(problem.f0)
    red = _reduce(problem)
    out = []
    for maximize in (False, True):
        status, value, _ = _lfp(problem, maximize, red)
        if status == "infeasible":
            out.append(base)
        elif status == "unbounded":
            out.append(math.inf if maximize else 0.0)
        else:
            out.append(value)
    lo, hi = out
    if trivial and problem.eps > 0:
        # masses are relative to the baseline denominator, so the baseline numerator is ``base``
        m1 = _min_mass(red, red.p1)
        if m1 is not None and m1 <= ZERO_MASS * base:
            lo = 0.0
        m0 = _min_mass(red, red.p0)
        if m0 is not None and m0 <= ZERO_MASS:
            hi = math.inf
    # the LP optimum is exact up to pivot tolerance; never report a range excluding the baseline
    return min(lo, base), max(hi, base)


# ---------------------------------------------------------------------------
# per-marker bounds


BOUND_MODES = ("lfp-rel", "csd-rel", "csd-abs")


@dataclass
class BoundsRow:
    marker: str
    baseline: float
    exact: float
    intervals: dict[str, tuple[float, float]] = field(default_factory=dict)
    eps: dict[str, float] = field(default_factory=dict)

    @property
    def lfp_rel(self):
        return self.intervals.get("lfp-rel")

    @property
    def csd_rel(self):
        return self.intervals.get("csd-rel")

    @property
    def csd_abs(self):
        return self.intervals.get("csd-abs")


def bound_interval(problem: SensitivityProblem) -> tuple[float, float]:
    """(lower, upper) LR for one problem, dispatching on its epsilon mode."""
    if problem.mode.startswith("lfp"):
        return lfp_extremes(problem)
    lo, hi = csd_extremes(problem)
    return (math.exp(lo) if lo > -math.inf else 0.0, math.exp(hi) if hi < math.inf else math.inf)


def marker_bounds(
    case: CaseSpec, marker: Marker, model: FounderModel, population: str,
    flags: Sequence[str] = ("simplex", "actor", "gene", "marginal"),
    epsilon: float | None = None, coarsen: bool = True, modes: Sequence[str] = BOUND_MODES,
) -> BoundsRow:
    """Baseline LR, scenario LR and one bound interval per mode for one marker.

    Each neighbourhood radius comes from the scenario joint unless ``epsilon``
    overrides all of them.
    """
    bad = [m for m in modes if m not in EPS_MODES]
    if bad:
        raise InputError(f"unknown epsilon modes {bad}; expected {list(EPS_MODES)}")
    pair = case.topo.ibd_pair
    if model.ibd is not None:
        model = model.with_pair(pair)
    vectors, mk = founder_likelihood_vectors(case, marker, population, pair, coarsen)
    slots = vectors.slots
    f0 = baseline_founders(mk, slots, population).f
    f = scenario_joint(model, mk, slots).f
    X = build_constraints(slots, len(mk.alleles), flags, pair).X
    row = BoundsRow(marker.name, vectors.lr(f0), vectors.lr(f))
    for mode in modes:
        eps = epsilon_from_scenario(f, f0, mode) if epsilon is None else float(epsilon)
        row.eps[mode] = eps
        row.intervals[mode] = bound_interval(SensitivityProblem(f0, vectors, X, eps, mode))
    return row
