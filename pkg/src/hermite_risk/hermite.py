"""Probabilists' Hermite polynomials, Gaussian helpers and quadrature.

Everything here is pure and vectorised over the evaluation point. Orders are
capped at :data:`MAX_ORDER`; above that ``n!`` makes the downstream sums lose
too much precision to be useful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .exceptions import DomainError, OrderOverflowError

MAX_ORDER = 64

FACTORIAL = np.array([float(math.factorial(k)) for k in range(2 * MAX_ORDER + 2)])


def _check_order(n: int) -> None:
    if n < 0:
        raise DomainError(f"Hermite order must be non-negative, got {n}")
    if n > MAX_ORDER:
        raise OrderOverflowError(f"Hermite order {n} exceeds cap {MAX_ORDER}")


def he_all(nmax: int, x) -> np.ndarray:
    """Return ``He_0(x) .. He_nmax(x)`` stacked along the first axis.

    Uses the upward recurrence ``He_{n+1} = x He_n - n He_{n-1}``.
    """
    _check_order(nmax)
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape, dtype=float)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = x
    for n in range(1, nmax):
        out[n + 1] = x * out[n] - n * out[n - 1]
    return out


def he(n: int, x):
    """Probabilists' Hermite polynomial ``He_n(x)``."""
    vals = he_all(n, x)[n]
    return float(vals) if vals.ndim == 0 else vals


def he_derivative(n: int, x):
    """``d/dx He_n(x) = n He_{n-1}(x)``."""
    if n == 0:
        x = np.asarray(x, dtype=float)
        return 0.0 if x.ndim == 0 else np.zeros_like(x)
    return n * he(n - 1, x)


def he_all_derivs(nmax: int, x, deriv: int) -> np.ndarray:
    """``deriv``-th derivative of ``He_0 .. He_nmax`` at ``x``."""
    base = he_all(nmax, x)
    if deriv == 0:
        return base
    out = np.zeros_like(base)
    for n in range(deriv, nmax + 1):
        out[n] = (FACTORIAL[n] / FACTORIAL[n - deriv]) * base[n - deriv]
    return out


def factorial(n: int) -> float:
    return float(FACTORIAL[n])


@lru_cache(maxsize=None)
def binom(n: int, k: int) -> float:
    if k < 0 or k > n:
        return 0.0
    return float(math.comb(n, k))


def mehler_kernel(rho: float, eps, eta):
    """Closed form of ``sum_n He_n(eps) He_n(eta) rho^n / n!``."""
    if not abs(rho) < 1.0:
        raise DomainError(f"|rho| must be < 1, got {rho}")
    eps = np.asarray(eps, dtype=float)
    eta = np.asarray(eta, dtype=float)
    one_m = 1.0 - rho * rho
    val = np.exp((2.0 * rho * eps * eta - rho * rho * (eps ** 2 + eta ** 2)) / (2.0 * one_m))
    val = val / math.sqrt(one_m)
    return float(val) if val.ndim == 0 else val


def mehler_partial_sum(rho: float, eps, eta, order: int):
    """Truncated Mehler series, summed up to and including ``order``."""
    he_e = he_all(order, eps)
    he_h = he_all(order, eta)
    coef = rho ** np.arange(order + 1) / FACTORIAL[: order + 1]
    coef = coef.reshape((-1,) + (1,) * (he_e.ndim - 1))
    return (coef * he_e * he_h).sum(axis=0)


def product_linearization(n: int, m: int) -> dict[int, int]:
    """Coefficients of ``He_n He_m`` in the Hermite basis.

    >>> product_linearization(1, 1)
    {2: 1, 0: 1}
    """
    return {
        n + m - 2 * k: math.comb(n, k) * math.comb(m, k) * math.factorial(k)
        for k in range(min(n, m) + 1)
    }


def triple_product_integral(n: int, m: int, k: int) -> float:
    """Gaussian expectation of ``He_n He_m He_k``."""
    s = n + m + k
    if s % 2 or n > m + k or m > n + k or k > n + m:
        return 0.0
    half = s // 2
    return (
        FACTORIAL[n] * FACTORIAL[m] * FACTORIAL[k]
        / (FACTORIAL[half - n] * FACTORIAL[half - m] * FACTORIAL[half - k])
    )


@lru_cache(maxsize=None)
def _triple_table(kmax: int) -> np.ndarray:
    t = np.zeros((kmax + 1,) * 3)
    for a in range(kmax + 1):
        for b in range(kmax + 1):
            for c in range(kmax + 1):
                t[a, b, c] = triple_product_integral(a, b, c)
    t.setflags(write=False)
    return t


def triple_table(kmax: int) -> np.ndarray:
    """Dense read-only table ``T[a, b, c]`` of triple products for indices <= kmax."""
    return _triple_table(int(kmax))


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for integration against the standard normal density."""

    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


@lru_cache(maxsize=32)
def gauss_hermite_rule(m: int = 128) -> QuadratureRule:
    """Gauss-Hermite rule with ``m`` nodes for the standard normal measure.

    Weights are normalised to sum to one. For very large ``m`` the outermost
    weights underflow to zero in double precision.
    """
    if not 1 <= m <= 512:
        raise DomainError(f"node count must be in [1, 512], got {m}")
    x, w = special.roots_hermitenorm(m)
    w = w / w.sum()
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(nodes=x, weights=w)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    val = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(val) if val.ndim == 0 else val


def norm_cdf(x):
    val = special.ndtr(x)
    return float(val) if np.ndim(val) == 0 else val


def norm_inv_cdf(p):
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0.0) | (p_arr >= 1.0)):
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    val = special.ndtri(p_arr)
    return float(val) if val.ndim == 0 else val
