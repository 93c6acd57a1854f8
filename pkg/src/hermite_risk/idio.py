"""Idiosyncratic (granularity) moments conditional on the principal factor.

For facility ``i`` the systematic driver is ``s = b0 * eta1 + g * zeta`` with
``g = sqrt(1 - b0^2)`` and ``zeta`` standard normal and independent of
``eta1``. Expanding the conditional powers ``E[v^r | s]`` in ``He_k(zeta)``
gives the ``h_k`` series used below; every average over the non-principal
factors then reduces to orthogonality and triple products in ``zeta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expansion import (
    ConditionalMoments,
    ConditionalTables,
    Expansion,
    Field,
    Term,
    evaluate_terms,
    rank_one_dense,
)
from .hermite import (
    FACTORIAL,
    binom,
    gauss_hermite_rule,
    he_all_derivs,
    norm_cdf,
    norm_pdf,
    triple_table,
)

DEFAULT_K_CAP = 6


def h_series(ft: np.ndarray, b0: np.ndarray, eta1: float, kmax: int, deriv: int = 0) -> np.ndarray:
    """``sum_{n>=k} C(n,k) ft_n b0^(n-k) He_{n-k}^{(d)}(eta1)`` for ``k = 0..kmax``.

    The ``g^k`` factor is left out; callers multiply it in.
    """
    nmax = ft.shape[1] - 1
    hd = he_all_derivs(nmax, eta1, deriv)
    out = np.zeros((ft.shape[0], kmax + 1))
    for k in range(min(kmax, nmax) + 1):
        j = np.arange(nmax - k + 1)
        coef = np.array([binom(jj + k, k) for jj in j]) * hd[j]
        out[:, k] = (ft[:, k:] * b0[:, None] ** j) @ coef
    return out


@dataclass
class FacilityIdioMoments:
    """Per-facility ``<mu2_i>``, ``<mu3_i>`` at ``eta1``; index = derivative order."""

    eta1: float
    mu2: np.ndarray  # (3, I)
    mu3: np.ndarray  # (3, I)


def _series_parts(e: Expansion, eta1: float, kmax: int):
    b0 = np.clip(e.b0, -1.0, 1.0)
    gam = np.sqrt(np.clip(1.0 - b0 * b0, 0.0, None))
    gk = gam[:, None] ** np.arange(kmax + 1)
    hv = [h_series(e.vt, b0, eta1, kmax, d) for d in range(3)]
    hw = [h_series(e.wt, b0, eta1, kmax, d) for d in range(3)]
    hu0 = [h_series(e.ut, b0, eta1, 0, d)[:, 0] for d in range(3)]
    return b0, gam, gk, hv, hw, hu0


def facility_idio_moments(e: Expansion, eta1: float, kmax: int = DEFAULT_K_CAP) -> FacilityIdioMoments:
    """Conditional idiosyncratic second/third central moments via ``h_k`` series."""
    _, _, gk, hv_t, hw_t, hu0 = _series_parts(e, eta1, kmax)
    hv = [h * gk for h in hv_t]
    hw = [h * gk for h in hw_t]
    kf = FACTORIAL[: kmax + 1]
    tt = triple_table(kmax)

    def pair(a, b):
        # d^0..2 of sum_k k! a_k b_k
        return np.stack([
            (a[0] * b[0]) @ kf,
            (a[1] * b[0] + a[0] * b[1]) @ kf,
            (a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2]) @ kf,
        ])

    def cube(h):
        t0 = np.einsum("klm,ik,il,im->i", tt, h[0], h[0], h[0], optimize=True)
        t1 = 3.0 * np.einsum("klm,ik,il,im->i", tt, h[1], h[0], h[0], optimize=True)
        t2 = 3.0 * (
            np.einsum("klm,ik,il,im->i", tt, h[2], h[0], h[0], optimize=True)
            + 2.0 * np.einsum("klm,ik,il,im->i", tt, h[1], h[1], h[0], optimize=True)
        )
        return np.stack([t0, t1, t2])

    w0 = np.stack([hw[d][:, 0] for d in range(3)])
    u0 = np.stack(hu0)
    mu2 = w0 - pair(hv, hv)
    mu3 = u0 - 3.0 * pair(hv, hw) + 2.0 * cube(hv)
    return FacilityIdioMoments(float(eta1), mu2, mu3)


def _step_conditional_moments(step, rho: float, s: np.ndarray):
    """``E[v^r | s]`` and two ``s``-derivatives for a step value, r = 1..3."""
    sig = np.sqrt(1.0 - rho * rho)
    t = rho / sig
    c = np.asarray(step.thresholds)
    a = np.asarray(step.values)
    z = (c[None, :] - rho * s[:, None]) / sig
    surv = 1.0 - norm_cdf(z)
    dens = norm_pdf(z)
    out = {}
    for r in (1, 2, 3):
        jump = np.diff(a ** r)
        out[r] = (
            a[0] ** r + surv @ jump,
            t * (dens @ jump),
            t * t * ((z * dens) @ jump),
        )
    return out


def facility_idio_moments_closed_form(portfolio, e: Expansion, eta1: float, nodes: int = 96) -> FacilityIdioMoments:
    """Same moments as :func:`facility_idio_moments`, by quadrature over ``zeta``.

    Uses the closed-form conditional Bernoulli/step probabilities; only step
    valued facilities are supported (curves raise ``TypeError``).
    """
    rule = gauss_hermite_rule(nodes)
    n_fac = len(portfolio.facilities)
    mu2 = np.zeros((3, n_fac))
    mu3 = np.zeros((3, n_fac))
    for i, f in enumerate(portfolio.facilities):
        step = f.value.as_step()
        if step is None:
            raise TypeError(f"facility {f.id}: closed-form idiosyncratic moments need a step value")
        b0 = float(np.clip(e.b0[i], -1.0, 1.0))
        g = np.sqrt(max(0.0, 1.0 - b0 * b0))
        s = b0 * eta1 + g * rule.nodes
        m = _step_conditional_moments(step, f.rho, s)
        (m1, m1p, m1pp), (m2, m2p, m2pp), (m3, m3p, m3pp) = m[1], m[2], m[3]
        c2 = (m2 - m1 ** 2, m2p - 2 * m1 * m1p, m2pp - 2 * (m1p ** 2 + m1 * m1pp))
        c3 = (
            m3 - 3 * m1 * m2 + 2 * m1 ** 3,
            m3p - 3 * (m1p * m2 + m1 * m2p) + 6 * m1 ** 2 * m1p,
            m3pp - 3 * (m1pp * m2 + 2 * m1p * m2p + m1 * m2pp) + 12 * m1 * m1p ** 2 + 6 * m1 ** 2 * m1pp,
        )
        for d in range(3):
            mu2[d, i] = b0 ** d * np.dot(rule.weights, c2[d])
            mu3[d, i] = b0 ** d * np.dot(rule.weights, c3[d])
    return FacilityIdioMoments(float(eta1), mu2, mu3)


def mixed_weights(e: Expansion, eta1: float, kmax: int) -> dict[tuple[int, int], np.ndarray]:
    """Scalars ``q_i^(n,d)`` with ``<V_mf . mu2_i> = sum_n (V_mf^(n) . Bs_i^n) q_i^(n)``."""
    _, gam, _, hv, hw, _ = _series_parts(e, eta1, kmax)
    tt = triple_table(kmax)
    out = {}
    ks = np.arange(kmax + 1)
    for n in range(1, e.tensor_order + 1):
        expo = ks[:, None] + ks[None, :] - n
        mask = tt[n] != 0.0
        gpow = np.where(mask[None], gam[:, None, None] ** np.clip(expo, 0, None)[None], 0.0)
        coef = gpow * tt[n][None]

        def quad(a, b):
            return np.einsum("ikl,ik,il->i", coef, a, b)

        sq = (
            quad(hv[0], hv[0]),
            2.0 * quad(hv[1], hv[0]),
            2.0 * (quad(hv[2], hv[0]) + quad(hv[1], hv[1])),
        )
        for d in range(3):
            out[(n, d)] = FACTORIAL[n] * hw[d][:, n] - sq[d]
    return out


@dataclass
class IdioMoments:
    """Granularity moments at ``eta1`` and their per-facility Euler derivatives."""

    eta1: float
    mu2_ga: float
    mu2_ga_prime: float
    mu3_ga: float
    mu3_ga_prime: float
    mu3_ga_second: float
    mixed: float
    mixed_prime: float
    mixed_second: float
    facility: FacilityIdioMoments
    euler: dict[str, np.ndarray] = field(default_factory=dict)

    def as_conditional(self, include_mixed: bool = True) -> ConditionalMoments:
        k = 1.0 if include_mixed else 0.0
        return ConditionalMoments(
            self.eta1,
            self.mu2_ga,
            self.mu2_ga_prime,
            self.mu3_ga + k * self.mixed,
            self.mu3_ga_prime + k * self.mixed_prime,
            self.mu3_ga_second + k * self.mixed_second,
        )


def portfolio_idio_moments(
    e: Expansion,
    ct: ConditionalTables,
    kmax: int = DEFAULT_K_CAP,
    facility_moments: FacilityIdioMoments | None = None,
) -> IdioMoments:
    """Sum facility moments with ``w^2``/``w^3`` and assemble the mixed term."""
    eta1 = ct.eta1
    fm = facility_moments if facility_moments is not None else facility_idio_moments(e, eta1, kmax)
    w = e.weights
    w2, w3 = w ** 2, w ** 3
    mu2 = w2 @ fm.mu2.T
    mu3 = w3 @ fm.mu3.T
    euler = {
        "mu2_ga": 2.0 * w2 * fm.mu2[0],
        "mu2_ga_prime": 2.0 * w2 * fm.mu2[1],
        "mu3_ga": 3.0 * w3 * fm.mu3[0],
        "mu3_ga_prime": 3.0 * w3 * fm.mu3[1],
        "mu3_ga_second": 3.0 * w3 * fm.mu3[2],
    }

    bs = e.bs
    q = mixed_weights(e, eta1, max(kmax, e.tensor_order))
    mixed_vals = []
    for d in range(3):
        terms = []
        for n in range(1, e.tensor_order + 1):
            for d1 in range(d + 1):
                d2 = d - d1
                s_scal = 3.0 * w2 * q[(n, d2)]
                s_field = Field(n, rank_one_dense(s_scal, bs, n), 2.0 * s_scal)
                sub = "abc"[:n]
                terms.append(Term(binom(d, d1), [ct.field(n, d1), s_field], [sub, sub]))
        val, eul = evaluate_terms(terms, bs)
        mixed_vals.append(val)
        euler[["mixed", "mixed_prime", "mixed_second"][d]] = eul
    return IdioMoments(
        float(eta1), float(mu2[0]), float(mu2[1]), float(mu3[0]), float(mu3[1]), float(mu3[2]),
        *map(float, mixed_vals), facility=fm, euler=euler,
    )


def combine_moments(systematic: ConditionalMoments, idio: IdioMoments) -> ConditionalMoments:
    """Total-variance / total-cumulance combination of the two residual parts."""
    return systematic + idio.as_conditional(include_mixed=True)
