"""Hermite expansion of facility and portfolio conditional expectations.

Conventions used throughout:

* ``vt[i, n] = rho_i^n / n! * v_i^(n)`` is the coefficient of ``He_n(beta_i . eta)``
  in the conditional expectation of facility ``i``; ``c[i, n] = w_i * vt[i, n]``.
* After rotation the principal factor is index 0, ``b0`` is the loading on it and
  ``Bs`` the loadings on the remaining ``D = N_f - 1`` factors.
* A conditional table of order ``n`` is the tensor ``sum_i a_i Bs_i^{(x)n}``; its
  weight (Euler) derivative for facility ``i`` is ``a_i Bs_i^{(x)n}``, so every
  contraction of such tables can be allocated to facilities in linear time.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .hermite import (
    FACTORIAL,
    MAX_ORDER,
    binom,
    gauss_hermite_rule,
    he_all,
    he_all_derivs,
    norm_cdf,
    norm_pdf,
    product_linearization,
    triple_product_integral,
)
from .exceptions import DomainError, OrderOverflowError
from .rotation import Rotation, build_rotation, principal_factor

COEF_ORDER_CAP = MAX_ORDER - 3
MAX_TENSOR_ORDER = 3


# --------------------------------------------------------------------------
# facility coefficients


@dataclass(frozen=True)
class CoefficientSet:
    """Hermite coefficients of ``v``, ``v**2`` and ``v**3`` up to ``order``."""

    v: np.ndarray
    w: np.ndarray
    u: np.ndarray

    @property
    def order(self) -> int:
        return self.v.size - 1


def _interval_moments(lo: float, hi: float, mmax: int) -> np.ndarray:
    """``int_lo^hi He_m(x) phi(x) dx`` for ``m = 0 .. mmax``."""
    out = np.empty(mmax + 1)
    out[0] = norm_cdf(hi) - norm_cdf(lo)

    def g(x):
        # He_{m-1}(x) phi(x), vanishing at infinity
        if math.isinf(x):
            return np.zeros(mmax)
        return he_all(mmax - 1, x) * norm_pdf(x)

    if mmax >= 1:
        out[1:] = g(lo) - g(hi)
    return out


def _exact_coefficients(pieces, order: int) -> np.ndarray:
    """Exact Hermite coefficients of a piecewise polynomial (monomial pieces)."""
    from numpy.polynomial import hermite_e

    deg = max(p.size - 1 for _, _, p in pieces)
    mmax = order + deg
    out = np.zeros(order + 1)
    for lo, hi, mono in pieces:
        if not np.any(mono):
            continue
        herm = hermite_e.poly2herme(mono)
        moments = _interval_moments(lo, hi, mmax)
        for n in range(order + 1):
            acc = 0.0
            for q, pq in enumerate(herm):
                if pq != 0.0:
                    for deg_out, mult in product_linearization(q, n).items():
                        acc += pq * mult * moments[deg_out]
            out[n] += acc
    return out


def _power_pieces(pieces, power: int):
    from numpy.polynomial import polynomial as P

    return [(lo, hi, P.polypow(mono, power)) for lo, hi, mono in pieces]


def facility_coefficients(spec, order: int, method: str = "exact", nodes: int = 128) -> CoefficientSet:
    """Coefficients ``v^(n) = E[v(eps) He_n(eps)]`` (and of ``v^2``, ``v^3``).

    ``method="exact"`` integrates the piecewise-polynomial representation in
    closed form (steps, indicators and linear curves alike), so jumps cause no
    Gibbs-type error. ``method="quadrature"`` uses a Gauss-Hermite rule and is
    only sensible for smooth curves.
    """
    if order > COEF_ORDER_CAP:
        raise OrderOverflowError(f"coefficient order {order} exceeds cap {COEF_ORDER_CAP}")
    if method == "exact":
        pieces = spec.pieces()
        return CoefficientSet(
            _exact_coefficients(pieces, order),
            _exact_coefficients(_power_pieces(pieces, 2), order),
            _exact_coefficients(_power_pieces(pieces, 3), order),
        )
    if method == "quadrature":
        rule = gauss_hermite_rule(nodes)
        vals = np.asarray(spec.evaluate(rule.nodes), dtype=float)
        basis = he_all(order, rule.nodes) * rule.weights
        return CoefficientSet(basis @ vals, basis @ vals ** 2, basis @ vals ** 3)
    raise ValueError(f"unknown coefficient method {method!r}")


def scaled_coefficients(coef: np.ndarray, rho) -> np.ndarray:
    """``rho^n / n! * coef[n]`` (broadcasts over leading facility axis)."""
    coef = np.asarray(coef, dtype=float)
    n = np.arange(coef.shape[-1])
    rho = np.asarray(rho, dtype=float)[..., None]
    return coef * rho ** n / FACTORIAL[: coef.shape[-1]]


def single_factor_value(cs: CoefficientSet, rho: float, eta, order: int | None = None):
    """Conditional expectation of one facility given its systematic driver ``eta``."""
    if not abs(rho) < 1.0:
        raise DomainError("|rho| must be < 1")
    order = cs.order if order is None else min(order, cs.order)
    coef = scaled_coefficients(cs.v[: order + 1], rho)
    basis = he_all(order, eta)
    return np.tensordot(coef, basis, axes=(0, 0))


# --------------------------------------------------------------------------
# symmetric tensors


def _multiplicities(idx: np.ndarray, order: int) -> np.ndarray:
    mult = np.full(idx.shape[0], FACTORIAL[order])
    for row, combo in enumerate(idx):
        for _, grp in itertools.groupby(combo):
            mult[row] /= FACTORIAL[len(list(grp))]
    return mult


class SymmetricTensor:
    """Symmetric tensor stored once per sorted multi-index ``k1 <= ... <= kn``."""

    def __init__(self, order: int, dim: int, indices: np.ndarray, values: np.ndarray):
        self.order = order
        self.dim = dim
        self.indices = np.asarray(indices, dtype=np.int64).reshape(-1, order)
        self.values = np.asarray(values, dtype=float)
        self.multiplicity = _multiplicities(self.indices, order)
        self._lookup = {tuple(r): k for k, r in enumerate(self.indices.tolist())}

    @staticmethod
    def sorted_indices(dim: int, order: int) -> np.ndarray:
        combos = list(itertools.combinations_with_replacement(range(dim), order))
        return np.array(combos, dtype=np.int64).reshape(len(combos), order)

    @classmethod
    def from_rank_one_sum(cls, scalars, vectors, order: int, chunk_elems: int = 4_000_000):
        """``sum_i scalars[i] * vectors[i]^{(x)order}``."""
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        scalars = np.asarray(scalars, dtype=float)
        dim = vectors.shape[1]
        idx = cls.sorted_indices(dim, order)
        vals = np.zeros(idx.shape[0])
        step = max(1, chunk_elems // max(1, idx.shape[0]))
        for start in range(0, vectors.shape[0], step):
            vec = vectors[start:start + step]
            prod = np.ones((vec.shape[0], idx.shape[0]))
            for j in range(order):
                prod *= vec[:, idx[:, j]]
            vals += scalars[start:start + step] @ prod
        return cls(order, dim, idx, vals)

    @classmethod
    def from_dense(cls, arr):
        arr = np.asarray(arr, dtype=float)
        order, dim = arr.ndim, (arr.shape[0] if arr.ndim else 0)
        idx = cls.sorted_indices(dim, order)
        vals = arr[tuple(idx.T)] if order else arr.reshape(1)
        return cls(order, dim, idx, vals)

    def __getitem__(self, multi_index) -> float:
        key = tuple(sorted(int(k) for k in multi_index))
        return float(self.values[self._lookup[key]])

    @property
    def entries(self) -> dict[tuple[int, ...], float]:
        return {tuple(r): float(v) for r, v in zip(self.indices.tolist(), self.values)}

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim,) * self.order)
        for perm in set(itertools.permutations(range(self.order))):
            out[tuple(self.indices[:, list(perm)].T)] = self.values
        return out

    def norm2(self) -> float:
        """Sum of squares over the full (unsorted) index space."""
        return float(np.dot(self.multiplicity, self.values ** 2))

    def contract_rank_one(self, vectors, chunk_elems: int = 4_000_000) -> np.ndarray:
        """``T . v^{(x)n}`` for every row ``v`` of ``vectors``."""
        vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
        weights = self.multiplicity * self.values
        out = np.empty(vectors.shape[0])
        step = max(1, chunk_elems // max(1, self.indices.shape[0]))
        for start in range(0, vectors.shape[0], step):
            vec = vectors[start:start + step]
            prod = np.ones((vec.shape[0], self.indices.shape[0]))
            for j in range(self.order):
                prod *= vec[:, self.indices[:, j]]
            out[start:start + step] = prod @ weights
        return out

    def to_json_dict(self) -> dict:
        return {
            "order": self.order,
            "dim": self.dim,
            "entries": [[list(map(int, k)), float(v)] for k, v in zip(self.indices.tolist(), self.values)],
        }


# --------------------------------------------------------------------------
# dense helpers for conditional tables (orders 1..3 over the non-principal block)


def rank_one_dense(scalars: np.ndarray, vectors: np.ndarray, order: int, chunk: int = 2048) -> np.ndarray:
    """Dense ``sum_i s_i v_i^{(x)order}``."""
    n_fac, dim = vectors.shape
    if order == 0:
        return np.asarray(scalars.sum())
    if order == 1:
        return vectors.T @ scalars
    if order == 2:
        return (vectors * scalars[:, None]).T @ vectors
    if order == 3:
        out = np.zeros((dim, dim * dim))
        for s in range(0, n_fac, chunk):
            v = vectors[s:s + chunk]
            outer = (v[:, :, None] * v[:, None, :]).reshape(v.shape[0], dim * dim)
            out += (v * scalars[s:s + chunk, None]).T @ outer
        return out.reshape(dim, dim, dim)
    raise ValueError("dense tables only for order <= 3")


def contract_rank_one(env: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """``env . v_i^{(x)n}`` for every facility row ``v_i``."""
    order = env.ndim
    if order == 0:
        return np.full(vectors.shape[0], float(env))
    if vectors.shape[1] == 0:
        return np.zeros(vectors.shape[0])
    if order == 1:
        return vectors @ env
    if order == 2:
        return np.einsum("ia,ia->i", vectors @ env, vectors)
    if order == 3:
        dim = env.shape[0]
        t = (vectors @ env.reshape(dim, dim * dim)).reshape(-1, dim, dim)
        return np.einsum("iab,ia,ib->i", t, vectors, vectors)
    raise ValueError("contraction only for order <= 3")


@dataclass
class Field:
    """Tensor ``sum_i s_i Bs_i^{(x)n}`` plus the facility scalars of its Euler derivative."""

    order: int
    tensor: np.ndarray
    euler: np.ndarray


@dataclass
class Term:
    """``coef * einsum(subscripts, *fields)`` - one building block of a moment."""

    coef: float
    fields: Sequence[Field]
    subscripts: Sequence[str]

    def value(self) -> float:
        expr = ",".join(self.subscripts) + "->"
        return self.coef * float(np.einsum(expr, *[f.tensor for f in self.fields], optimize=True))

    def euler(self, vectors: np.ndarray) -> np.ndarray:
        """``w_i d/dw_i`` of the term for every facility (product rule over slots)."""
        total = np.zeros(vectors.shape[0])
        for s, fs in enumerate(self.fields):
            others = [f.tensor for k, f in enumerate(self.fields) if k != s]
            subs = [sub for k, sub in enumerate(self.subscripts) if k != s]
            if others:
                env = np.einsum(",".join(subs) + "->" + self.subscripts[s], *others, optimize=True)
            else:
                env = np.ones(())
            total += fs.euler * contract_rank_one(np.asarray(env), vectors)
        return self.coef * total


def evaluate_terms(terms: Sequence[Term], vectors: np.ndarray) -> tuple[float, np.ndarray]:
    val = 0.0
    eul = np.zeros(vectors.shape[0])
    for t in terms:
        val += t.value()
        eul += t.euler(vectors)
    return val, eul


# --------------------------------------------------------------------------
# portfolio expansion


@dataclass(frozen=True)
class PortfolioTensors:
    """Unrotated coefficient tensors ``V^(n)`` for ``n = 1..order`` and ``E(V)``."""

    expected_value: float
    tensors: dict[int, SymmetricTensor]


@dataclass
class Expansion:
    """Facility-level expansion data, already expressed in the rotated basis."""

    weights: np.ndarray
    rhos: np.ndarray
    loadings: np.ndarray  # rotated, (I, N_f)
    raw_loadings: np.ndarray  # original basis
    vt: np.ndarray  # (I, N+1), rho^n/n! v^(n)
    wt: np.ndarray
    ut: np.ndarray
    rotation: Rotation
    onef_order: int = 30
    tensor_order: int = 3
    cond_cap: int = 8

    @property
    def n_facilities(self) -> int:
        return self.weights.size

    @property
    def c(self) -> np.ndarray:
        return self.weights[:, None] * self.vt

    @property
    def b0(self) -> np.ndarray:
        return self.loadings[:, 0]

    @property
    def bs(self) -> np.ndarray:
        return self.loadings[:, 1:]

    @property
    def coef_order(self) -> int:
        return self.vt.shape[1] - 1


def coefficient_arrays(portfolio, order: int, method: str = "exact", nodes: int = 128, cache=None):
    """Stack ``CoefficientSet`` arrays for all facilities (specs are de-duplicated)."""
    cache = {} if cache is None else cache
    v = np.empty((len(portfolio.facilities), order + 1))
    w = np.empty_like(v)
    u = np.empty_like(v)
    for i, f in enumerate(portfolio.facilities):
        key = (f.value, order, method, nodes)
        cs = cache.get(key)
        if cs is None:
            cs = cache[key] = facility_coefficients(f.value, order, method, nodes)
        v[i], w[i], u[i] = cs.v, cs.w, cs.u
    return v, w, u


def portfolio_tensors(portfolio=None, tensor_order: int = 3, *, weights=None, vt=None, loadings=None,
                      coef_method: str = "exact") -> PortfolioTensors:
    """``V^(n)_{k1..kn} = sum_i w_i rho_i^n/n! v_i^(n) beta_{i,k1}..beta_{i,kn}``.

    Accepts either a portfolio or the raw ``weights``/``vt``/``loadings`` arrays.
    Orders above 3 are allowed here (sorted storage keeps small factor counts
    cheap); the conditional-moment machinery itself stops at order 3.
    """
    if portfolio is not None:
        v, _, _ = coefficient_arrays(portfolio, tensor_order, coef_method)
        vt = scaled_coefficients(v, portfolio.rhos)
        weights = portfolio.weights
        loadings = portfolio.loading_matrix
    c = np.asarray(weights)[:, None] * np.asarray(vt)
    if c.shape[1] <= tensor_order:
        raise OrderOverflowError("not enough coefficients for the requested tensor order")
    tensors = {n: SymmetricTensor.from_rank_one_sum(c[:, n], loadings, n) for n in range(1, tensor_order + 1)}
    return PortfolioTensors(float(c[:, 0].sum()), tensors)


def expand_portfolio(
    portfolio,
    onef_order: int = 30,
    tensor_order: int = 3,
    cond_cap: int = 8,
    coef_order: int | None = None,
    coef_method: str = "exact",
    principal=None,
    coefficient_cache=None,
) -> Expansion:
    """Coefficients, principal factor and rotated loadings for a portfolio."""
    if tensor_order > MAX_TENSOR_ORDER or tensor_order < 1:
        raise OrderOverflowError(f"tensor order must be in [1, {MAX_TENSOR_ORDER}], got {tensor_order}")
    needed = max(onef_order, tensor_order + cond_cap)
    coef_order = needed if coef_order is None else max(coef_order, needed)
    v, w, u = coefficient_arrays(portfolio, coef_order, coef_method, cache=coefficient_cache)
    rhos = portfolio.rhos
    raw = portfolio.loading_matrix
    weights = portfolio.weights
    vt = scaled_coefficients(v, rhos)
    if principal is None:
        v1 = raw.T @ (weights * vt[:, 1])
        if not np.any(v1):
            # no first-order sensitivity: any basis will do, adjustments vanish
            y = np.eye(raw.shape[1])[0]
        else:
            y = principal_factor(v1)
    else:
        v1 = None
        y = principal_factor(principal)
    rot = build_rotation(y, source_v1=v1)
    return Expansion(
        weights=weights.copy(), rhos=rhos.copy(), loadings=raw @ rot.matrix.T, raw_loadings=raw,
        vt=vt, wt=scaled_coefficients(w, rhos), ut=scaled_coefficients(u, rhos), rotation=rot,
        onef_order=onef_order, tensor_order=tensor_order, cond_cap=cond_cap,
    )


# --------------------------------------------------------------------------
# tail split


@dataclass
class TailCoefficients:
    """Single-factor coefficients along the principal factor and the mf tables.

    ``mf[n]`` has shape ``(cond_cap + 1,) + (D,) * n``; slice ``j`` holds
    ``V^(n+j)_{0..0 k1..kn}`` (``j`` principal indices).
    """

    v1f: np.ndarray
    mf: dict[int, np.ndarray]
    expansion: Expansion

    def v1f_value(self, eta, deriv: int = 0):
        basis = he_all_derivs(self.v1f.size - 1, eta, deriv)
        return np.tensordot(self.v1f, basis, axes=(0, 0))

    def v1f_euler(self, eta: float, deriv: int = 0) -> np.ndarray:
        """``w_i d/dw_i V_1f^{(deriv)}(eta)`` for every facility."""
        e = self.expansion
        nmax = self.v1f.size - 1
        basis = he_all_derivs(nmax, eta, deriv)
        own = e.c[:, : nmax + 1] * e.b0[:, None] ** np.arange(nmax + 1)
        return own @ basis

    def mf_coefficient(self, n: int, eta1, deriv: int = 0) -> np.ndarray:
        """``V_mf^(n)(eta1)`` (or its derivative) as a dense tensor."""
        tab = self.mf[n]
        cap = tab.shape[0] - 1
        hd = he_all_derivs(cap, eta1, deriv)
        coef = np.array([binom(n + j, n) for j in range(cap + 1)]) * hd
        return np.tensordot(coef, tab, axes=(0, 0))

    def to_json_dict(self) -> dict:
        out = {"v1f": self.v1f.tolist(), "mf": {}}
        for n, tab in self.mf.items():
            out["mf"][str(n)] = {
                str(j): SymmetricTensor.from_dense(tab[j]).to_json_dict() for j in range(tab.shape[0])
            }
        return out


def tail_split(expansion: Expansion) -> TailCoefficients:
    e = expansion
    n1 = e.onef_order
    if e.coef_order < max(n1, e.tensor_order + e.cond_cap):
        raise OrderOverflowError("expansion coefficients too short for the requested orders")
    powers = e.b0[:, None] ** np.arange(e.coef_order + 1)
    v1f = (e.c * powers).sum(axis=0)[: n1 + 1]
    mf = {}
    bs = e.bs
    for n in range(1, e.tensor_order + 1):
        tabs = [rank_one_dense(e.c[:, n + j] * powers[:, j], bs, n) for j in range(e.cond_cap + 1)]
        mf[n] = np.stack(tabs) if bs.shape[1] else np.zeros((e.cond_cap + 1,) + (0,) * n)
    return TailCoefficients(v1f=v1f, mf=mf, expansion=e)


# --------------------------------------------------------------------------
# conditional moments of the multi-factor correction


@dataclass
class ConditionalTables:
    """Conditional coefficient tensors ``V_mf^(n,d)(eta1)`` with Euler scalars."""

    eta1: float
    fields: dict[tuple[int, int], Field]
    bs: np.ndarray

    def field(self, n: int, d: int = 0) -> Field:
        return self.fields[(n, d)]

    @property
    def tensor_order(self) -> int:
        return max(n for n, _ in self.fields)


def conditional_scalars(expansion: Expansion, n: int, eta1: float, deriv: int) -> np.ndarray:
    """``a_i = sum_j C(n+j, n) He_j^{(d)}(eta1) c_i^(n+j) b0_i^j``."""
    e = expansion
    cap = e.cond_cap
    hd = he_all_derivs(cap, eta1, deriv)
    j = np.arange(cap + 1)
    coef = np.array([binom(n + jj, n) for jj in j]) * hd
    return (e.c[:, n + j] * e.b0[:, None] ** j) @ coef


def conditional_tables(expansion: Expansion, eta1: float, max_deriv: int = 2) -> ConditionalTables:
    e = expansion
    bs = e.bs
    fields = {}
    for n in range(1, e.tensor_order + 1):
        for d in range(max_deriv + 1):
            a = conditional_scalars(e, n, eta1, d)
            fields[(n, d)] = Field(n, rank_one_dense(a, bs, n), a)
    return ConditionalTables(float(eta1), fields, bs)


_LETTERS = "abcdefgh"


def _self_subscripts(n: int) -> str:
    return _LETTERS[:n]


def mu2_terms(ct: ConditionalTables, deriv: int) -> list[Term]:
    """Terms of ``mu_2`` (deriv 0) or ``mu_2'`` (deriv 1)."""
    terms = []
    for n in range(1, ct.tensor_order + 1):
        s = _self_subscripts(n)
        if deriv == 0:
            terms.append(Term(FACTORIAL[n], [ct.field(n, 0), ct.field(n, 0)], [s, s]))
        elif deriv == 1:
            terms.append(Term(2.0 * FACTORIAL[n], [ct.field(n, 0), ct.field(n, 1)], [s, s]))
        elif deriv == 2:
            terms.append(Term(2.0 * FACTORIAL[n], [ct.field(n, 1), ct.field(n, 1)], [s, s]))
            terms.append(Term(2.0 * FACTORIAL[n], [ct.field(n, 0), ct.field(n, 2)], [s, s]))
        else:
            raise ValueError("mu2 derivatives only up to order 2")
    return terms


# (orders, contraction pattern, multinomial multiplicity); the Gaussian integral
# factor comes from triple_product_integral of the orders.
MU3_FAMILIES = {
    "standard": [
        ((1, 1, 2), ("a", "b", "ab"), 3),
        ((1, 2, 3), ("a", "bc", "abc"), 6),
        ((2, 2, 2), ("ab", "bc", "ca"), 1),
    ],
}
MU3_FAMILIES["complete"] = MU3_FAMILIES["standard"] + [((2, 3, 3), ("ab", "acd", "bcd"), 3)]


def _deriv_splits(d: int, slots: int):
    for combo in itertools.product(range(d + 1), repeat=slots):
        if sum(combo) == d:
            mult = FACTORIAL[d]
            for c in combo:
                mult /= FACTORIAL[c]
            yield combo, mult


def mu3_terms(ct: ConditionalTables, deriv: int, families: str = "standard") -> list[Term]:
    terms = []
    for orders, subs, multiplicity in MU3_FAMILIES[families]:
        if max(orders) > ct.tensor_order:
            continue
        base = multiplicity * triple_product_integral(*orders)
        for split, mult in _deriv_splits(deriv, 3):
            flds = [ct.field(n, d) for n, d in zip(orders, split)]
            terms.append(Term(base * mult, flds, subs))
    return terms


def conditional_mu2(ct: ConditionalTables) -> tuple[float, float]:
    """``(mu_2, mu_2')`` of the multi-factor correction at ``ct.eta1``."""
    return (
        sum(t.value() for t in mu2_terms(ct, 0)),
        sum(t.value() for t in mu2_terms(ct, 1)),
    )


def conditional_mu3(ct: ConditionalTables, families: str = "standard") -> tuple[float, float, float]:
    """``(mu_3, mu_3', mu_3'')`` from the listed triple-product families."""
    return tuple(sum(t.value() for t in mu3_terms(ct, d, families)) for d in range(3))


@dataclass
class ConditionalMoments:
    """Conditional central moments of the residual at one ``eta1``."""

    eta1: float
    mu2: float = 0.0
    mu2_prime: float = 0.0
    mu3: float = 0.0
    mu3_prime: float = 0.0
    mu3_second: float = 0.0

    def __add__(self, other: "ConditionalMoments") -> "ConditionalMoments":
        if abs(self.eta1 - other.eta1) > 1e-14:
            raise DomainError(f"moments evaluated at different eta1 ({self.eta1} vs {other.eta1})")
        return ConditionalMoments(
            self.eta1,
            self.mu2 + other.mu2,
            self.mu2_prime + other.mu2_prime,
            self.mu3 + other.mu3,
            self.mu3_prime + other.mu3_prime,
            self.mu3_second + other.mu3_second,
        )


MOMENT_FIELDS = ("mu2", "mu2_prime", "mu3", "mu3_prime", "mu3_second")


@dataclass
class MomentBundle:
    """Moments plus their per-facility Euler derivatives (same field names)."""

    moments: ConditionalMoments
    euler: dict[str, np.ndarray]


def systematic_moments(ct: ConditionalTables, families: str = "standard") -> MomentBundle:
    vals = {}
    eul = {}
    bs = ct.bs
    for name, terms in (
        ("mu2", mu2_terms(ct, 0)),
        ("mu2_prime", mu2_terms(ct, 1)),
        ("mu3", mu3_terms(ct, 0, families)),
        ("mu3_prime", mu3_terms(ct, 1, families)),
        ("mu3_second", mu3_terms(ct, 2, families)),
    ):
        vals[name], eul[name] = evaluate_terms(terms, bs)
    return MomentBundle(ConditionalMoments(ct.eta1, **vals), eul)


def euler_tensor_derivatives(tc: TailCoefficients, eta1: float, families: str = "standard") -> dict[str, np.ndarray]:
    """``w_i d/dw_i`` of ``V_1f', V_1f'', V_1f'''`` and of every conditional moment.

    Returns arrays over facilities keyed by ``v1f_1``, ``v1f_2``, ``v1f_3``,
    ``mu2``, ``mu2_prime``, ``mu3``, ``mu3_prime``, ``mu3_second``.
    """
    ct = conditional_tables(tc.expansion, eta1)
    bundle = systematic_moments(ct, families)
    out = {f"v1f_{d}": tc.v1f_euler(eta1, d) for d in (1, 2, 3)}
    out.update(bundle.euler)
    return out
