"""Portfolio data model, valuation functions, validation and file formats.

A facility's value at horizon is ``v(eps)`` with
``eps = rho * (beta . eta) + sqrt(1 - rho^2) * xi``; ``eta`` are the common
factors and ``xi`` the facility's own noise.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .hermite import norm_cdf, norm_inv_cdf

LOADING_NORM_TOL = 1e-8


# --------------------------------------------------------------------------
# valuation functions


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant value: ``values[j]`` on ``(thresholds[j-1], thresholds[j]]``."""

    thresholds: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    kind = "step"

    def problems(self) -> list[str]:
        out = []
        if len(self.values) != len(self.thresholds) + 1:
            out.append("values must have one entry more than thresholds")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            out.append("thresholds must be strictly increasing")
        if not all(math.isfinite(v) for v in self.values + self.thresholds):
            out.append("non-finite threshold or value")
        return out

    def as_step(self) -> "StepFunction":
        return self

    def pieces(self):
        """``(lo, hi, monomial_coefficients)`` for each interval."""
        edges = (-math.inf,) + self.thresholds + (math.inf,)
        return [(edges[j], edges[j + 1], np.array([self.values[j]])) for j in range(len(self.values))]

    def evaluate(self, eps):
        idx = np.searchsorted(np.asarray(self.thresholds), eps, side="left")
        return np.asarray(self.values)[idx]

    def _params(self) -> dict[str, str]:
        return {
            "thresholds": "|".join(repr(t) for t in self.thresholds),
            "values": "|".join(repr(v) for v in self.values),
        }


@dataclass(frozen=True)
class DefaultIndicator:
    """Default-only loan: ``default_value`` when ``eps <= Phi^-1(pd)``."""

    pd: float
    performing_value: float = 1.0
    default_value: float = 0.0

    kind = "default"

    def problems(self) -> list[str]:
        out = []
        if not 0.0 < self.pd < 1.0:
            out.append(f"pd must lie in (0, 1), got {self.pd}")
        if not (math.isfinite(self.performing_value) and math.isfinite(self.default_value)):
            out.append("non-finite value")
        return out

    @property
    def threshold(self) -> float:
        return norm_inv_cdf(self.pd)

    def as_step(self) -> StepFunction:
        return StepFunction((self.threshold,), (self.default_value, self.performing_value))

    def pieces(self):
        return self.as_step().pieces()

    def evaluate(self, eps):
        return np.where(np.asarray(eps) <= self.threshold, self.default_value, self.performing_value)

    def _params(self) -> dict[str, str]:
        return {
            "pd": repr(float(self.pd)),
            "performing": repr(float(self.performing_value)),
            "default": repr(float(self.default_value)),
        }


@dataclass(frozen=True)
class SampledCurve:
    """Piecewise-linear value through ``(eps, value)`` points, flat outside."""

    eps: tuple[float, ...]
    values: tuple[float, ...]

    kind = "curve"

    def __post_init__(self):
        object.__setattr__(self, "eps", tuple(float(t) for t in self.eps))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def problems(self) -> list[str]:
        out = []
        if len(self.eps) != len(self.values) or not self.eps:
            out.append("eps and values must be non-empty and of equal length")
        if any(b <= a for a, b in zip(self.eps, self.eps[1:])):
            out.append("eps must be strictly increasing")
        if not all(math.isfinite(v) for v in self.values + self.eps):
            out.append("non-finite point")
        return out

    def as_step(self):
        return None

    def pieces(self):
        e, v = self.eps, self.values
        out = [(-math.inf, e[0], np.array([v[0]]))]
        for j in range(len(e) - 1):
            slope = (v[j + 1] - v[j]) / (e[j + 1] - e[j])
            out.append((e[j], e[j + 1], np.array([v[j] - slope * e[j], slope])))
        out.append((e[-1], math.inf, np.array([v[-1]])))
        return out

    def evaluate(self, eps):
        return np.interp(eps, self.eps, self.values)

    def _params(self) -> dict[str, str]:
        return {
            "eps": "|".join(repr(t) for t in self.eps),
            "values": "|".join(repr(v) for v in self.values),
        }


ValueSpec = Union[DefaultIndicator, StepFunction, SampledCurve]


def expected_value(spec: ValueSpec) -> float:
    """``E[v(eps)]`` for standard normal ``eps``."""
    step = spec.as_step()
    if step is not None:
        edges = np.concatenate(([-np.inf], step.thresholds, [np.inf]))
        probs = np.diff(norm_cdf(edges))
        return float(np.dot(probs, step.values))
    from .expansion import facility_coefficients

    return float(facility_coefficients(spec, 0).v[0])


# --------------------------------------------------------------------------
# portfolio


@dataclass(frozen=True)
class FactorModel:
    factor_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "factor_names", tuple(self.factor_names))

    @property
    def n_factors(self) -> int:
        return len(self.factor_names)


@dataclass(frozen=True)
class Facility:
    id: str
    weight: float
    rho: float
    loadings: dict[int, float]
    value: ValueSpec


@dataclass(frozen=True)
class Portfolio:
    facilities: tuple[Facility, ...]
    factor_model: FactorModel

    def __post_init__(self):
        object.__setattr__(self, "facilities", tuple(self.facilities))

    def __len__(self):
        return len(self.facilities)

    @property
    def n_factors(self) -> int:
        return self.factor_model.n_factors

    @cached_property
    def ids(self) -> list[str]:
        return [f.id for f in self.facilities]

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([f.weight for f in self.facilities], dtype=float)

    @cached_property
    def rhos(self) -> np.ndarray:
        return np.array([f.rho for f in self.facilities], dtype=float)

    @cached_property
    def loading_matrix(self) -> np.ndarray:
        b = np.zeros((len(self.facilities), self.n_factors))
        for i, f in enumerate(self.facilities):
            for k, val in f.loadings.items():
                b[i, k] = val
        return b

    def with_weights(self, weights) -> "Portfolio":
        facs = [
            Facility(f.id, float(w), f.rho, dict(f.loadings), f.value)
            for f, w in zip(self.facilities, weights)
        ]
        return Portfolio(tuple(facs), self.factor_model)


@dataclass(frozen=True)
class Violation:
    facility_id: str
    rule: str
    detail: str = ""


def validate(portfolio: Portfolio) -> list[Violation]:
    """Return every broken invariant; an empty list means the portfolio is valid."""
    out: list[Violation] = []
    nf = portfolio.n_factors
    if nf < 1:
        out.append(Violation("<factor-model>", "factor-count", "at least one factor required"))
    if len(set(portfolio.factor_model.factor_names)) != nf:
        out.append(Violation("<factor-model>", "factor-names", "factor names must be unique"))
    if not portfolio.facilities:
        out.append(Violation("<portfolio>", "empty-portfolio", "empty portfolio"))
    seen = set()
    for f in portfolio.facilities:
        if f.id in seen:
            out.append(Violation(f.id, "duplicate-id", "facility ids must be unique"))
        seen.add(f.id)
        if not (math.isfinite(f.weight) and f.weight > 0):
            out.append(Violation(f.id, "weight-positive", f"weight {f.weight}"))
        if not abs(f.rho) < 1.0:
            out.append(Violation(f.id, "rho-bound", f"|rho| = {abs(f.rho)} must be < 1"))
        bad_idx = [k for k in f.loadings if not 0 <= k < nf]
        if bad_idx:
            out.append(Violation(f.id, "loading-index", f"indices {bad_idx} outside [0, {nf})"))
        norm2 = sum(v * v for v in f.loadings.values())
        if abs(norm2 - 1.0) > LOADING_NORM_TOL:
            out.append(Violation(f.id, "loading-norm", f"sum of squared loadings {norm2:.12g} != 1"))
        for msg in f.value.problems():
            out.append(Violation(f.id, "value-spec", msg))
    return out


# --------------------------------------------------------------------------
# synthetic benchmark portfolios


def _pair_loadings(region: int, industry: int, n_regions: int, split: float) -> dict[int, float]:
    a, b = split, 1.0 - split
    norm = math.hypot(a, b)
    return {region: a / norm, n_regions + industry: b / norm}


def _region_industry_model(n_regions: int, n_industries: int) -> FactorModel:
    return FactorModel(
        tuple(f"region_{r:02d}" for r in range(n_regions))
        + tuple(f"industry_{k:02d}" for k in range(n_industries))
    )


def synthesize_benchmark(
    kind: str,
    factor_counts: tuple[int, int] = (45, 61),
    loans: int = 500,
    rho: float = 0.6,
    pd: float = 0.01,
    seed: int = 0,
    block: int = 100,
    split: float = 0.5,
    factor_correlation: float = 0.0,
) -> Portfolio:
    """Identical default-only loans on a region x industry factor grid.

    ``diversified`` places one loan on every region/industry pair.
    ``concentrated`` puts ``loans - block`` loans on uniformly drawn pairs and
    ``block`` loans on the single pair (region 0, industry 0).

    With ``factor_correlation = r > 0`` the sector indices are equicorrelated
    with correlation ``r``; the loadings are then mapped onto the same number
    of independent factors through the symmetric square root of that
    correlation matrix, so every loading vector becomes dense.
    """
    n_reg, n_ind = factor_counts
    if n_reg < 1 or n_ind < 1:
        raise ValueError("factor counts must be >= 1")
    if not 0.0 < split < 1.0:
        raise ValueError("split must lie in (0, 1)")
    model = _region_industry_model(n_reg, n_ind)
    value = DefaultIndicator(pd, 1.0, 0.0)
    if kind == "diversified":
        pairs = [(r, k) for r in range(n_reg) for k in range(n_ind)]
    elif kind == "concentrated":
        if loans < block or block < 0:
            raise ValueError(f"loans ({loans}) must be >= block size ({block})")
        rng = np.random.default_rng(seed)
        n_rand = loans - block
        regions = rng.integers(0, n_reg, size=n_rand)
        industries = rng.integers(0, n_ind, size=n_rand)
        pairs = list(zip(regions.tolist(), industries.tolist())) + [(0, 0)] * block
    else:
        raise ValueError(f"unknown benchmark kind {kind!r}")
    if not 0.0 <= factor_correlation < 1.0:
        raise ValueError("factor_correlation must lie in [0, 1)")
    loads = [_pair_loadings(r, k, n_reg, split) for r, k in pairs]
    if factor_correlation > 0.0:
        root = equicorrelation_root(n_reg + n_ind, factor_correlation)
        loads = [_correlated(d, root) for d in loads]
    facs = tuple(
        Facility(f"L{i:05d}", 1.0, rho, ld, value) for i, ld in enumerate(loads)
    )
    return Portfolio(facs, model)


def equicorrelation_root(n: int, r: float) -> np.ndarray:
    """Symmetric square root of ``(1 - r) I + r 11'`` in closed form."""
    a = math.sqrt(1.0 - r)
    b = (math.sqrt(1.0 + (n - 1) * r) - a) / n
    return a * np.eye(n) + b * np.ones((n, n))


def _correlated(loading: dict[int, float], root: np.ndarray) -> dict[int, float]:
    vec = np.zeros(root.shape[0])
    for k, x in loading.items():
        vec[k] = x
    vec = root @ vec
    vec /= np.linalg.norm(vec)
    return {k: float(x) for k, x in enumerate(vec) if x != 0.0}


def migration_value(pd: float, recovery: float, downgrade_prob: float = 0.08,
                    upgrade_prob: float = 0.05, downgrade_value: float = 0.96,
                    upgrade_value: float = 1.01) -> StepFunction:
    """Rating-migration style step value: default, downgrade, stable, upgrade."""
    c_def = norm_inv_cdf(pd)
    c_down = norm_inv_cdf(pd + downgrade_prob)
    c_up = norm_inv_cdf(1.0 - upgrade_prob)
    return StepFunction((c_def, c_down, c_up), (recovery, downgrade_value, 1.0, upgrade_value))


def synthesize_heterogeneous(
    loans: int = 200,
    factor_counts: tuple[int, int] = (8, 12),
    dominant: int = 10,
    dominant_share: float = 0.1,
    rho_range: tuple[float, float] = (0.3, 0.7),
    pd_range: tuple[float, float] = (0.01, 0.05),
    weight_sigma: float = 1.0,
    seed: int = 0,
    split: float = 0.5,
    factor_correlation: float = 0.0,
) -> Portfolio:
    """Granular bank-like portfolio with a few dominant exposures.

    Weights are log-normal; the ``dominant`` largest are rescaled so that
    together they carry ``dominant_share`` of total exposure (when the draws
    already exceed that share they are scaled down). Values follow
    :func:`migration_value` with random recovery. ``factor_correlation`` is
    handled as in :func:`synthesize_benchmark`.
    """
    n_reg, n_ind = factor_counts
    if loans < dominant:
        raise ValueError("loans must be >= dominant")
    rng = np.random.default_rng(seed)
    model = _region_industry_model(n_reg, n_ind)
    w = rng.lognormal(0.0, weight_sigma, size=loans)
    order = np.argsort(-w, kind="stable")
    top, rest = order[:dominant], order[dominant:]
    if dominant:
        w[top] *= dominant_share / (1.0 - dominant_share) * w[rest].sum() / w[top].sum()
    w = w / w.sum() * loans
    rhos = rng.uniform(*rho_range, size=loans)
    pds = np.exp(rng.uniform(math.log(pd_range[0]), math.log(pd_range[1]), size=loans))
    recov = rng.uniform(0.2, 0.6, size=loans)
    regions = rng.integers(0, n_reg, size=loans)
    industries = rng.integers(0, n_ind, size=loans)
    if not 0.0 <= factor_correlation < 1.0:
        raise ValueError("factor_correlation must lie in [0, 1)")
    root = equicorrelation_root(n_reg + n_ind, factor_correlation) if factor_correlation > 0.0 else None
    facs = []
    for i in range(loans):
        ld = _pair_loadings(int(regions[i]), int(industries[i]), n_reg, split)
        if root is not None:
            ld = _correlated(ld, root)
        facs.append(Facility(f"H{i:05d}", float(w[i]), float(rhos[i]), ld,
                             migration_value(float(pds[i]), float(recov[i]))))
    facs = tuple(facs)
    return Portfolio(facs, model)


# --------------------------------------------------------------------------
# file formats

_HEADER = ["id", "weight", "rho", "value_kind", "value_params", "loadings"]


def _encode_params(params: dict[str, str]) -> str:
    return ";".join(f"{k}={v}" for k, v in params.items())


def _decode_params(text: str) -> dict[str, str]:
    out = {}
    for item in filter(None, text.split(";")):
        key, _, val = item.partition("=")
        out[key.strip()] = val.strip()
    return out


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split("|") if t.strip())


def _value_from_row(kind: str, params: dict[str, str]) -> ValueSpec:
    if kind == "default":
        return DefaultIndicator(
            float(params["pd"]),
            float(params.get("performing", 1.0)),
            float(params.get("default", 0.0)),
        )
    if kind == "step":
        return StepFunction(_floats(params.get("thresholds", "")), _floats(params["values"]))
    if kind == "curve":
        return SampledCurve(_floats(params["eps"]), _floats(params["values"]))
    raise ValueError(f"unknown value_kind {kind!r}")


def save_portfolio(portfolio: Portfolio, path, factor_path=None) -> None:
    """Write the portfolio CSV and, optionally, the factor-model JSON."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_HEADER)
        for f in portfolio.facilities:
            loadings = ";".join(f"{k}:{v!r}" for k, v in sorted(f.loadings.items()))
            writer.writerow([
                f.id, repr(float(f.weight)), repr(float(f.rho)), f.value.kind,
                _encode_params(f.value._params()), loadings,
            ])
    if factor_path is not None:
        save_factor_model(portfolio.factor_model, factor_path)


def save_factor_model(model: FactorModel, path) -> None:
    Path(path).write_text(json.dumps({"factors": list(model.factor_names)}, indent=2) + "\n",
                          encoding="utf-8")


def load_factor_model(path) -> FactorModel:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return FactorModel(tuple(str(n) for n in data["factors"]))


def load_portfolio(path, factor_path) -> Portfolio:
    model = load_factor_model(factor_path)
    facs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"portfolio file missing columns {sorted(missing)}")
        for row in reader:
            loadings = {}
            for item in filter(None, row["loadings"].split(";")):
                k, _, v = item.partition(":")
                loadings[int(k)] = float(v)
            facs.append(Facility(
                row["id"], float(row["weight"]), float(row["rho"]), loadings,
                _value_from_row(row["value_kind"], _decode_params(row["value_params"])),
            ))
    return Portfolio(tuple(facs), model)


def portfolio_from_arrays(
    weights: Sequence[float],
    rhos: Sequence[float],
    loadings: np.ndarray,
    values: Sequence[ValueSpec],
    ids: Sequence[str] | None = None,
    factor_names: Sequence[str] | None = None,
) -> Portfolio:
    """Convenience constructor from dense arrays (zero loadings are dropped)."""
    loadings = np.atleast_2d(np.asarray(loadings, dtype=float))
    n, nf = loadings.shape
    ids = ids or [f"F{i}" for i in range(n)]
    names = factor_names or [f"f{k}" for k in range(nf)]
    facs = tuple(
        Facility(ids[i], float(weights[i]), float(rhos[i]),
                 {k: float(loadings[i, k]) for k in range(nf) if loadings[i, k] != 0.0},
                 values[i])
        for i in range(n)
    )
    return Portfolio(facs, FactorModel(tuple(names)))
