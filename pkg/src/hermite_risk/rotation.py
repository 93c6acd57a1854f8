"""Principal risk factor and the orthogonal change of factor basis."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import DegeneratePortfolioError, DomainError
from .portfolio import Facility, Portfolio

_PARALLEL_SKIP = 1.0 - 1e-8


@dataclass(frozen=True)
class Rotation:
    """Orthogonal matrix whose rows are the new basis; row 0 is the principal factor."""

    matrix: np.ndarray
    source_v1: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def principal(self) -> np.ndarray:
        return self.matrix[0]

    def to_json(self) -> str:
        return json.dumps({
            "matrix": self.matrix.tolist(),
            "source_v1": None if self.source_v1 is None else self.source_v1.tolist(),
        })

    @classmethod
    def identity(cls, dim: int) -> "Rotation":
        return cls(np.eye(dim))


def principal_factor(v1) -> np.ndarray:
    v1 = np.asarray(v1, dtype=float)
    norm = np.linalg.norm(v1)
    if not norm > 0.0:
        raise DegeneratePortfolioError("first-order coefficient vector is zero")
    return v1 / norm


def build_rotation(y, source_v1=None) -> Rotation:
    """Complete ``y`` to an orthonormal basis by modified Gram-Schmidt.

    Seed vectors are the standard basis in index order, minus the one most
    parallel to ``y``; each is orthogonalised twice against the rows so far.
    """
    y = np.asarray(y, dtype=float)
    if abs(np.linalg.norm(y) - 1.0) > 1e-10:
        raise DomainError("principal direction must be a unit vector")
    n = y.size
    rows = [y.copy()]
    skip = int(np.argmax(np.abs(y)))
    for k in range(n):
        if len(rows) == n:
            break
        if k == skip:
            continue
        vec = np.zeros(n)
        vec[k] = 1.0
        for _ in range(2):
            for r in rows:
                vec -= np.dot(r, vec) * r
        norm = np.linalg.norm(vec)
        if norm < 1.0 - _PARALLEL_SKIP:
            continue
        rows.append(vec / norm)
    mat = np.array(rows)
    if mat.shape != (n, n):
        raise DomainError("could not complete the basis")
    mat.setflags(write=False)
    return Rotation(mat, None if source_v1 is None else np.asarray(source_v1, dtype=float))


def rotate_loadings(loadings: np.ndarray, rotation: Rotation) -> np.ndarray:
    """Rotated dense loading matrix (one facility per row)."""
    if loadings.shape[1] != rotation.dim:
        raise DomainError(f"rotation of dimension {rotation.dim} applied to {loadings.shape[1]} factors")
    return loadings @ rotation.matrix.T


def rotate_portfolio(portfolio: Portfolio, rotation: Rotation) -> Portfolio:
    """Same facilities expressed in the rotated factor basis."""
    rotated = rotate_loadings(portfolio.loading_matrix, rotation)
    facs = tuple(
        Facility(f.id, f.weight, f.rho,
                 {k: float(rotated[i, k]) for k in range(rotation.dim) if rotated[i, k] != 0.0},
                 f.value)
        for i, f in enumerate(portfolio.facilities)
    )
    return Portfolio(facs, portfolio.factor_model)
