import numpy as np
import pytest

from hermite_risk.exceptions import DegeneratePortfolioError, DomainError
from hermite_risk.expansion import portfolio_tensors
from hermite_risk.measures import portfolio_sigma
from hermite_risk.rotation import (
    Rotation,
    build_rotation,
    principal_factor,
    rotate_loadings,
    rotate_portfolio,
)
from hermite_risk.portfolio import synthesize_benchmark

from conftest import random_portfolio


def test_principal_factor():
    assert np.allclose(principal_factor([3, 4]), [0.6, 0.8])
    assert np.allclose(principal_factor([0, 0, 5]), [0, 0, 1])
    with pytest.raises(DegeneratePortfolioError):
        principal_factor([0.0, 0.0])


def test_diversified_principal_is_equal_weight():
    p = synthesize_benchmark("diversified", (3, 4))
    t = portfolio_tensors(p, 1)
    y = principal_factor(t.tensors[1].to_dense())
    assert np.allclose(y, np.full(7, y[0]), atol=0) or np.allclose(y[:3], y[0]) and np.allclose(y[3:], y[3])
    # every loan is symmetric under factor relabelling within regions and within industries
    assert np.allclose(y[:3], y[0]) and np.allclose(y[3:], y[3])


def test_build_rotation_properties():
    assert np.array_equal(build_rotation(np.eye(4)[0]).matrix, np.eye(4))
    rng = np.random.default_rng(0)
    for _ in range(20):
        y = rng.normal(size=6)
        y /= np.linalg.norm(y)
        R = build_rotation(y).matrix
        assert np.max(np.abs(R @ R.T - np.eye(6))) < 1e-10
        assert np.allclose(R[0], y)
    with pytest.raises(DomainError):
        build_rotation([1.0, 1.0])


def test_near_parallel_seed_vector_is_skipped():
    y = np.array([1.0, 1e-9, 0.0])
    y /= np.linalg.norm(y)
    R = build_rotation(y).matrix
    assert np.max(np.abs(R @ R.T - np.eye(3))) < 1e-12


def test_rotate_portfolio():
    p = random_portfolio(8, 4)
    assert rotate_portfolio(p, Rotation.identity(4)).loading_matrix.tolist() == p.loading_matrix.tolist()
    t = portfolio_tensors(p, 1)
    rot = build_rotation(principal_factor(t.tensors[1].to_dense()))
    q = rotate_portfolio(p, rot)
    assert np.allclose(np.linalg.norm(q.loading_matrix, axis=1), 1.0, atol=1e-12)
    back = rotate_loadings(q.loading_matrix, Rotation(rot.matrix.T))
    assert np.max(np.abs(back - p.loading_matrix)) < 1e-12
    v1 = portfolio_tensors(q, 1).tensors[1].to_dense()
    assert abs(v1[0] - np.linalg.norm(t.tensors[1].to_dense())) < 1e-10
    assert np.max(np.abs(v1[1:])) < 1e-10
    with pytest.raises(DomainError):
        rotate_loadings(p.loading_matrix, Rotation.identity(3))


def test_rotation_invariance():
    p = random_portfolio(8, 4, seed=5)
    rot = build_rotation(principal_factor(np.arange(1.0, 5.0)))
    q = rotate_portfolio(p, rot)
    cp = (p.rhos[:, None] * p.rhos[None]) * (p.loading_matrix @ p.loading_matrix.T)
    cq = (q.rhos[:, None] * q.rhos[None]) * (q.loading_matrix @ q.loading_matrix.T)
    assert np.max(np.abs(cp - cq)) < 1e-12

    def sigma(port):
        t = portfolio_tensors(port, 3)
        from hermite_risk.expansion import coefficient_arrays, scaled_coefficients
        v, _, _ = coefficient_arrays(port, 3)
        c = port.weights[:, None] * scaled_coefficients(v, port.rhos)
        return portfolio_sigma(t.tensors, c, port.loading_matrix)[0]

    assert sigma(p) == pytest.approx(sigma(q), rel=1e-10)


def test_rotation_json():
    import json
    rot = build_rotation(np.array([0.6, 0.8]), source_v1=np.array([3.0, 4.0]))
    data = json.loads(rot.to_json())
    assert data["source_v1"] == [3.0, 4.0] and len(data["matrix"]) == 2
