"""Portfolio risk measures and their Euler allocation.

VaR here is economic capital on the *value* distribution:
``VaR = E(V) - q_alpha`` with ``alpha`` the lower-tail probability. The
adjustment formulas are written so that positive numbers add capital.

Facility contributions of the adjustments are obtained by pushing each
facility's weight derivative of every input (moments, ``V_1f`` slopes)
through the formula. The formulas are analytic, so a complex-step
directional derivative gives the chain rule to machine precision.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict
from typing import Mapping

import numpy as np

from .exceptions import MonotonicityError, SingularDerivativeError
from .expansion import (
    ConditionalMoments,
    Expansion,
    MomentBundle,
    SymmetricTensor,
    TailCoefficients,
    conditional_tables,
    expand_portfolio,
    systematic_moments,
    tail_split,
)
from .hermite import FACTORIAL, he_all, norm_inv_cdf, norm_pdf
from .idio import (
    DEFAULT_K_CAP,
    IdioMoments,
    facility_idio_moments,
    facility_idio_moments_closed_form,
    portfolio_idio_moments,
)

ORDER_FLAGS = ("onef", "mf2", "mf3", "ga2", "ga3")
_COMPLEX_STEP = 1e-40


# --------------------------------------------------------------------------
# adjustment formulas (complex-safe)


def var2_formula(eta, mu2, mu2_prime, v1, v2):
    return (mu2_prime - mu2 * (eta + v2 / v1)) / (2.0 * v1)


def var3_formula(eta, mu3, mu3_prime, mu3_second, v1, v2, v3):
    r = v2 / v1
    bracket = (
        mu3_second
        - mu3_prime * (2.0 * eta + 3.0 * r)
        + mu3 * ((eta * eta - 1.0) + 3.0 * eta * r + (3.0 * v2 * v2 - v1 * v3) / (v1 * v1))
    )
    return -bracket / (6.0 * v1 * v1)


def es2_formula(eta, alpha, mu2, v1):
    return norm_pdf(eta) * mu2 / (2.0 * alpha * v1)


def es3_formula(eta, alpha, mu3, mu3_prime, v1, v2):
    return -norm_pdf(eta) / (6.0 * alpha * v1 * v1) * (mu3_prime - mu3 * (eta + v2 / v1))


def _check_slope(v1):
    if v1 == 0.0:
        raise SingularDerivativeError("V_1f' vanishes at the quantile point")


def quantile_adjustment(mu: ConditionalMoments, v1f_derivs, eta1: float, order: int) -> float:
    """Second- or third-order VaR adjustment from conditional moments.

    ``v1f_derivs`` is ``(V', V'', V''')`` of the single-factor value at ``eta1``.
    """
    v1, v2, v3 = v1f_derivs
    _check_slope(v1)
    if order == 2:
        return float(var2_formula(eta1, mu.mu2, mu.mu2_prime, v1, v2))
    if order == 3:
        return float(var3_formula(eta1, mu.mu3, mu.mu3_prime, mu.mu3_second, v1, v2, v3))
    raise ValueError("order must be 2 or 3")


def es_adjustment(mu: ConditionalMoments, v1f_derivs, eta1: float, alpha: float, order: int) -> float:
    v1, v2, _ = v1f_derivs
    _check_slope(v1)
    if order == 2:
        return float(es2_formula(eta1, alpha, mu.mu2, v1))
    if order == 3:
        return float(es3_formula(eta1, alpha, mu.mu3, mu.mu3_prime, v1, v2))
    raise ValueError("order must be 2 or 3")


def euler_through(fn, values: Mapping[str, float], eulers: Mapping[str, np.ndarray], **fixed) -> np.ndarray:
    """Per-facility ``sum_q dfn/dq * euler_q`` by a complex-step derivative."""
    args = {k: values[k] + 1j * _COMPLEX_STEP * np.asarray(eulers[k]) for k in values}
    return np.imag(fn(**fixed, **args)) / _COMPLEX_STEP


# --------------------------------------------------------------------------
# standard deviation


def portfolio_sigma(tensors: Mapping[int, SymmetricTensor], c: np.ndarray, loadings: np.ndarray):
    """``sigma`` of the systematic value and its Euler contributions.

    ``c[i, n] = w_i rho_i^n v_i^(n) / n!`` and ``loadings`` must be in the same
    basis as ``tensors``.
    """
    var = 0.0
    contrib = np.zeros(c.shape[0])
    for n, t in tensors.items():
        if n == 0:
            continue
        var += FACTORIAL[n] * t.norm2()
        contrib += FACTORIAL[n] * c[:, n] * t.contract_rank_one(loadings)
    sigma = float(np.sqrt(max(var, 0.0)))
    if sigma == 0.0:
        return 0.0, np.zeros(c.shape[0])
    return sigma, contrib / sigma


# --------------------------------------------------------------------------
# single factor


def check_monotone(tc: TailCoefficients, eta: float) -> float:
    slope = float(tc.v1f_value(eta, 1))
    if not slope > 0.0:
        raise MonotonicityError(eta, slope)
    return slope


def var_es_1f(tc: TailCoefficients, alpha: float):
    """Single-factor VaR, ES and their Euler contributions.

    Returns ``(var, es, var_contrib, es_contrib)``.
    """
    eta = norm_inv_cdf(alpha)
    coef = tc.v1f
    nmax = coef.size - 1
    if not np.any(coef[1:]):
        z = np.zeros(tc.expansion.n_facilities)
        return 0.0, 0.0, z, z.copy()
    check_monotone(tc, eta)
    he = he_all(nmax, eta)
    e = tc.expansion
    own = e.c[:, : nmax + 1] * e.b0[:, None] ** np.arange(nmax + 1)
    var_c = -own[:, 1:] @ he[1:]
    es_c = norm_pdf(eta) / alpha * (own[:, 1:] @ he[:-1])
    return float(-coef[1:] @ he[1:]), float(norm_pdf(eta) / alpha * (coef[1:] @ he[:-1])), var_c, es_c


# --------------------------------------------------------------------------
# configuration and report


@dataclass(frozen=True)
class RiskConfig:
    """Engine settings; ``alpha`` is the lower-tail probability of value."""

    alpha: float = 0.001
    orders: tuple[str, ...] = ORDER_FLAGS
    onef_order: int = 30
    tensor_order: int = 3
    cond_cap: int = 8
    sigma_order: int | None = None
    idio_order: int = 30
    idio_k_cap: int = DEFAULT_K_CAP
    idio_method: str = "series"
    mu3_terms: str = "standard"
    coef_method: str = "exact"
    principal: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 0.5:
            raise ValueError(f"alpha must lie in (0, 0.5), got {self.alpha}")
        bad = set(self.orders) - set(ORDER_FLAGS)
        if bad:
            raise ValueError(f"unknown order flags {sorted(bad)}")
        if "onef" not in self.orders:
            raise ValueError("the 'onef' order is mandatory")
        if self.idio_method not in ("series", "closed_form"):
            raise ValueError("idio_method must be 'series' or 'closed_form'")

    @classmethod
    def from_confidence(cls, confidence: float, **kw) -> "RiskConfig":
        return cls(alpha=1.0 - confidence, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["orders"] = list(self.orders)
        d["principal"] = None if self.principal is None else list(self.principal)
        return d


CONTRIBUTION_COLUMNS = (
    "sigma_c", "var_c", "es_c",
    "var_1f", "var_mf2", "var_mf3", "var_ga2", "var_ga3", "mixed_term",
    "es_1f", "es_mf2", "es_mf3", "es_ga2", "es_ga3",
)


@dataclass
class RiskReport:
    """Portfolio measures, per-order breakdown and facility contributions."""

    expected_value: float
    sigma: float
    var_total: float
    es_total: float
    breakdown: dict[str, float]
    contributions: dict[str, np.ndarray]
    ids: list[str]
    diagnostics: dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    principal: np.ndarray | None = None
    y_dot_beta: np.ndarray | None = None

    def cumulative_var(self) -> dict[str, float]:
        """VaR after each successive order, mirroring the benchmark tables."""
        out = {}
        acc = 0.0
        label = []
        for key in ("1f", "mf2", "mf3", "ga2", "ga3"):
            name = f"var_{key}"
            if name not in self.breakdown:
                continue
            acc += self.breakdown[name]
            label.append(key)
            out["+".join(label)] = acc
        return out

    def to_dict(self) -> dict:
        return {
            "portfolio": {
                "expected_value": self.expected_value,
                "sigma": self.sigma,
                "var_total": self.var_total,
                "es_total": self.es_total,
                "breakdown": dict(self.breakdown),
                "cumulative_var": self.cumulative_var(),
                "diagnostics": dict(self.diagnostics),
                "principal": None if self.principal is None else [float(x) for x in self.principal],
            },
            "facilities": [
                {
                    "id": fid,
                    **({} if self.y_dot_beta is None else {"y_dot_beta": float(self.y_dot_beta[i])}),
                    **{k: float(v[i]) for k, v in self.contributions.items()},
                }
                for i, fid in enumerate(self.ids)
            ],
            "config": self.config,
        }


def _allocate_sum(parts):
    return np.sum(parts, axis=0) if parts else 0.0


def analyze(portfolio, config: RiskConfig | None = None, *, expansion: Expansion | None = None,
            timings: dict | None = None) -> RiskReport:
    """Full analytic pipeline: expansion, rotation, tail split, moments, allocation."""
    cfg = config or RiskConfig()
    tick = time.perf_counter()
    if expansion is None:
        expansion = expand_portfolio(
            portfolio,
            onef_order=cfg.onef_order,
            tensor_order=cfg.tensor_order,
            cond_cap=cfg.cond_cap,
            coef_order=max(cfg.idio_order, cfg.sigma_order or 0),
            coef_method=cfg.coef_method,
            principal=cfg.principal,
        )
    e = expansion
    tc = tail_split(e)
    if timings is not None:
        timings["expansion"] = time.perf_counter() - tick
        tick = time.perf_counter()

    alpha = cfg.alpha
    eta = norm_inv_cdf(alpha)
    n_fac = e.n_facilities
    zero = np.zeros(n_fac)

    sig_order = cfg.sigma_order or cfg.tensor_order
    c = e.c
    tensors = {n: SymmetricTensor.from_rank_one_sum(c[:, n], e.loadings, n) for n in range(1, sig_order + 1)}
    sigma, sigma_c = portfolio_sigma(tensors, c, e.loadings)

    var1, es1, var1_c, es1_c = var_es_1f(tc, alpha)
    breakdown = {"var_1f": var1, "es_1f": es1}
    contrib = {"var_1f": var1_c, "es_1f": es1_c}
    diagnostics = {"eta": eta}

    if not np.any(tc.v1f[1:]):
        # systematically constant portfolio: every adjustment vanishes
        wanted = [o for o in cfg.orders if o != "onef"]
        for o in wanted:
            breakdown[f"var_{o}"] = breakdown[f"es_{o}"] = 0.0
            contrib[f"var_{o}"] = contrib[f"es_{o}"] = zero.copy()
    else:
        v1, v2, v3 = (float(tc.v1f_value(eta, d)) for d in (1, 2, 3))
        diagnostics.update({"v1f_prime": v1, "v1f_second": v2, "v1f_third": v3})
        v_vals = {"v1": v1, "v2": v2, "v3": v3}
        v_eul = {"v1": tc.v1f_euler(eta, 1), "v2": tc.v1f_euler(eta, 2), "v3": tc.v1f_euler(eta, 3)}

        need_sys = {"mf2", "mf3"} & set(cfg.orders)
        need_ga = {"ga2", "ga3"} & set(cfg.orders)
        ct = conditional_tables(e, eta) if (need_sys or need_ga) else None
        if need_sys:
            sysb = systematic_moments(ct, cfg.mu3_terms)
            m = sysb.moments
            diagnostics.update({f"{k}_mf": getattr(m, k) for k in ("mu2", "mu2_prime", "mu3", "mu3_prime", "mu3_second")})
        if need_ga:
            fm = None
            if cfg.idio_method == "closed_form":
                fm = facility_idio_moments_closed_form(portfolio, e, eta)
            idio = portfolio_idio_moments(e, ct, cfg.idio_k_cap, facility_moments=fm)
            diagnostics.update({
                "mu2_ga": idio.mu2_ga, "mu3_ga": idio.mu3_ga, "mixed": idio.mixed,
            })

        def second(mu2, mu2p, e_mu2, e_mu2p):
            vals = {"mu2": mu2, "mu2_prime": mu2p, "v1": v1, "v2": v2}
            eul = {"mu2": e_mu2, "mu2_prime": e_mu2p, "v1": v_eul["v1"], "v2": v_eul["v2"]}
            dv = var2_formula(eta, mu2, mu2p, v1, v2)
            dv_c = euler_through(var2_formula, vals, eul, eta=eta)
            es_vals = {"mu2": mu2, "v1": v1}
            es_eul = {"mu2": e_mu2, "v1": v_eul["v1"]}
            de = es2_formula(eta, alpha, mu2, v1)
            de_c = euler_through(es2_formula, es_vals, es_eul, eta=eta, alpha=alpha)
            return float(dv), dv_c, float(de), de_c

        def third(mu3, mu3p, mu3pp, e3, e3p, e3pp):
            vals = {"mu3": mu3, "mu3_prime": mu3p, "mu3_second": mu3pp, **v_vals}
            eul = {"mu3": e3, "mu3_prime": e3p, "mu3_second": e3pp, **v_eul}
            dv = var3_formula(eta, mu3, mu3p, mu3pp, v1, v2, v3)
            dv_c = euler_through(var3_formula, vals, eul, eta=eta)
            es_vals = {"mu3": mu3, "mu3_prime": mu3p, "v1": v1, "v2": v2}
            es_eul = {"mu3": e3, "mu3_prime": e3p, "v1": v_eul["v1"], "v2": v_eul["v2"]}
            de = es3_formula(eta, alpha, mu3, mu3p, v1, v2)
            de_c = euler_through(es3_formula, es_vals, es_eul, eta=eta, alpha=alpha)
            return float(dv), dv_c, float(de), de_c

        if "mf2" in cfg.orders:
            eu = sysb.euler
            r = second(m.mu2, m.mu2_prime, eu["mu2"], eu["mu2_prime"])
            breakdown["var_mf2"], contrib["var_mf2"], breakdown["es_mf2"], contrib["es_mf2"] = r
        if "mf3" in cfg.orders:
            eu = sysb.euler
            r = third(m.mu3, m.mu3_prime, m.mu3_second, eu["mu3"], eu["mu3_prime"], eu["mu3_second"])
            breakdown["var_mf3"], contrib["var_mf3"], breakdown["es_mf3"], contrib["es_mf3"] = r
        if "ga2" in cfg.orders:
            eu = idio.euler
            r = second(idio.mu2_ga, idio.mu2_ga_prime, eu["mu2_ga"], eu["mu2_ga_prime"])
            breakdown["var_ga2"], contrib["var_ga2"], breakdown["es_ga2"], contrib["es_ga2"] = r
        if "ga3" in cfg.orders:
            eu = idio.euler
            r = third(
                idio.mu3_ga + idio.mixed, idio.mu3_ga_prime + idio.mixed_prime,
                idio.mu3_ga_second + idio.mixed_second,
                eu["mu3_ga"] + eu["mixed"], eu["mu3_ga_prime"] + eu["mixed_prime"],
                eu["mu3_ga_second"] + eu["mixed_second"],
            )
            breakdown["var_ga3"], contrib["var_ga3"], breakdown["es_ga3"], contrib["es_ga3"] = r
            mx = third(idio.mixed, idio.mixed_prime, idio.mixed_second,
                       eu["mixed"], eu["mixed_prime"], eu["mixed_second"])
            breakdown["mixed_term"], contrib["mixed_term"] = mx[0], mx[1]

    var_keys = [f"var_{o}" if o != "onef" else "var_1f" for o in cfg.orders]
    es_keys = [f"es_{o}" if o != "onef" else "es_1f" for o in cfg.orders]
    var_total = float(sum(breakdown[k] for k in var_keys))
    es_total = float(sum(breakdown[k] for k in es_keys))
    contrib["var_c"] = _allocate_sum([contrib[k] for k in var_keys])
    contrib["es_c"] = _allocate_sum([contrib[k] for k in es_keys])
    contrib["sigma_c"] = sigma_c
    ordered = {k: np.asarray(contrib[k], dtype=float) for k in CONTRIBUTION_COLUMNS if k in contrib}
    if timings is not None:
        timings["measures"] = time.perf_counter() - tick
    return RiskReport(
        expected_value=float(c[:, 0].sum()),
        sigma=sigma,
        var_total=var_total,
        es_total=es_total,
        breakdown={k: float(v) for k, v in breakdown.items()},
        contributions=ordered,
        ids=list(portfolio.ids),
        diagnostics={k: float(v) for k, v in diagnostics.items()},
        config=cfg.to_dict(),
        principal=np.asarray(e.rotation.principal, dtype=float).copy(),
        y_dot_beta=e.b0.copy(),
    )
