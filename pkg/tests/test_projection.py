import numpy as np
import pytest

from oracles import hellinger_sq_quad

from aled.errors import ClassError, DegenerateError, ShapeError
from aled.projection import (UnivariateGaussian, assemble_projection,
                             class_centroids, hellinger_sq, project,
                             random_basis, rayleigh_quotient)
from aled.tensor_io import FeatureMatrix


def test_class_centroids_single_samples():
    Z = np.array([[0.0, 0.0], [2.0, 4.0]])
    mu0, mu1 = class_centroids(Z, np.array([0, 1]))
    np.testing.assert_array_equal(mu0, [0.0, 0.0])
    np.testing.assert_array_equal(mu1, [2.0, 4.0])


def test_class_centroids_mean():
    Z = np.array([[1.0, 1.0], [3.0, 3.0], [5.0, 5.0]])
    mu0, _ = class_centroids(Z, np.array([0, 0, 1]))
    np.testing.assert_array_equal(mu0, [2.0, 2.0])


def test_class_centroids_missing_class():
    with pytest.raises(ClassError):
        class_centroids(np.zeros((3, 2)), np.array([1, 1, 1]))


def test_random_basis_empty():
    assert random_basis(5, 0, 0).shape == (0, 5)


def test_random_basis_deterministic_and_unit():
    a = random_basis(64, 3, 123)
    b = random_basis(64, 3, 123)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)
    assert not np.array_equal(a, random_basis(64, 3, 124))


def test_random_basis_near_orthogonal():
    # Two random unit directions in R^1024 have |dot| ~ 1/32; 0.15 is ~5 sd.
    hits = 0
    for seed in range(1000):
        rows = random_basis(1024, 2, seed)
        if abs(float(rows[0] @ rows[1])) < 0.15:
            hits += 1
    assert hits >= 990


def test_assemble_projection_single_row():
    basis = assemble_projection(np.array([0.0, 0.0]), np.array([1.0, 0.0]),
                                np.empty((0, 2)))
    np.testing.assert_array_equal(basis.matrix, [[1.0, 0.0]])
    assert basis.r == 0


def test_assemble_projection_degenerate():
    mu = np.array([1.0, 2.0])
    with pytest.raises(DegenerateError):
        assemble_projection(mu, mu.copy(), np.empty((0, 2)))


def test_assemble_projection_shape():
    basis = assemble_projection(np.zeros(10), np.ones(10),
                                random_basis(10, 3, 0))
    assert basis.matrix.shape == (4, 10)


def test_project_identity_rows():
    basis = assemble_projection(np.zeros(2), np.array([1.0, 0.0]),
                                np.array([[0.0, 1.0]]))
    Z = np.array([[3.0, 9.0], [-1.0, 2.0]])
    np.testing.assert_allclose(project(basis, Z), Z)


def test_project_dot_product():
    basis = assemble_projection(np.zeros(2), np.array([1.0, 0.0]),
                                np.empty((0, 2)))
    out = project(basis, np.array([[3.0, 9.0]]))
    assert out[0, 0] == pytest.approx(3.0)


def test_project_shapes_and_type():
    Z = FeatureMatrix(np.random.default_rng(0).standard_normal((100, 512)))
    mu0, mu1 = np.zeros(512), np.ones(512)
    basis = assemble_projection(mu0, mu1, random_basis(512, 1, 5))
    out = project(basis, Z)
    assert isinstance(out, FeatureMatrix)
    assert out.data.shape == (100, 2)


def test_project_exactly_linear():
    rng = np.random.default_rng(8)
    basis = assemble_projection(np.zeros(6), rng.standard_normal(6),
                                random_basis(6, 2, 1))
    X = rng.standard_normal((10, 6))
    Y = rng.standard_normal((10, 6))
    np.testing.assert_allclose(project(basis, 2.0 * X + Y),
                               2.0 * project(basis, X) + project(basis, Y),
                               rtol=1e-12, atol=1e-12)


def test_project_dim_mismatch():
    basis = assemble_projection(np.zeros(3), np.ones(3), np.empty((0, 3)))
    with pytest.raises(ShapeError):
        project(basis, np.zeros((4, 5)))


def test_hellinger_identical_is_zero():
    g = UnivariateGaussian(1.5, 0.7)
    assert hellinger_sq(g, g) == pytest.approx(0.0, abs=1e-15)


def test_hellinger_closed_forms():
    # mu gap 10, unit sigmas: 1 - exp(-100/8)
    val = hellinger_sq(UnivariateGaussian(0.0, 1.0),
                       UnivariateGaussian(10.0, 1.0))
    assert val == pytest.approx(1.0 - np.exp(-12.5), abs=1e-12)
    # equal means, sigmas 1 and 2: 1 - sqrt(4/5)
    val = hellinger_sq(UnivariateGaussian(0.0, 1.0),
                       UnivariateGaussian(0.0, 2.0))
    assert val == pytest.approx(1.0 - np.sqrt(0.8), abs=1e-12)


def test_hellinger_matches_quadrature():
    rng = np.random.default_rng(2)
    for _ in range(10):
        mu1, mu2 = rng.uniform(-3, 3, size=2)
        s1, s2 = rng.uniform(0.3, 2.5, size=2)
        ours = hellinger_sq(UnivariateGaussian(mu1, s1),
                            UnivariateGaussian(mu2, s2))
        assert ours == pytest.approx(hellinger_sq_quad(mu1, s1, mu2, s2),
                                     abs=1e-6)


def test_hellinger_monotone_in_mean_gap():
    vals = [hellinger_sq(UnivariateGaussian(0.0, 1.3),
                         UnivariateGaussian(gap, 0.8))
            for gap in np.linspace(0.0, 6.0, 25)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_hellinger_sigma_validation():
    with pytest.raises(DegenerateError):
        UnivariateGaussian(0.0, 0.0)


def test_rayleigh_orthogonal_is_zero():
    sigma = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert rayleigh_quotient(np.array([0.0, 1.0]), np.array([1.0, 0.0]),
                             sigma) == pytest.approx(0.0)


def test_rayleigh_hand_value():
    v = np.array([3.0, 4.0])
    assert rayleigh_quotient(v, v, np.eye(2)) == pytest.approx(25.0)


def test_rayleigh_scale_invariant():
    rng = np.random.default_rng(6)
    for _ in range(20):
        q = 3
        A = rng.standard_normal((q + 2, q))
        sigma = A.T @ A + 0.2 * np.eye(q)
        x = rng.standard_normal(q)
        v = rng.standard_normal(q)
        r1 = rayleigh_quotient(x, v, sigma)
        r2 = rayleigh_quotient(7.0 * x, v, sigma)
        assert r2 == pytest.approx(r1, rel=1e-10)


def test_rayleigh_zero_vector():
    with pytest.raises(DegenerateError):
        rayleigh_quotient(np.zeros(2), np.ones(2), np.eye(2))


def test_rayleigh_isotropic_maximizer():
    rng = np.random.default_rng(13)
    v = rng.standard_normal(4)
    sigma = 1.7 * np.eye(4)
    best = rayleigh_quotient(v, v, sigma)
    for _ in range(2000):
        x = rng.standard_normal(4)
        assert rayleigh_quotient(x, v, sigma) <= best * (1.0 + 1e-10)


def test_rayleigh_general_maximizer():
    rng = np.random.default_rng(14)
    for q in (2, 3, 5):
        A = rng.standard_normal((q + 2, q))
        sigma = A.T @ A + 0.3 * np.eye(q)
        v = rng.standard_normal(q)
        x_star = np.linalg.solve(sigma, v)
        best = rayleigh_quotient(x_star, v, sigma)
        for _ in range(2000):
            x = rng.standard_normal(q)
            assert rayleigh_quotient(x, v, sigma) <= best * (1.0 + 1e-10)


def _pair_sq_dists(X):
    diff = X[:, None, :] - X[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    iu = np.triu_indices(X.shape[0], k=1)
    return d2[iu]


def test_random_projection_preserves_structure():
    # With r rows the squared-distance estimate is chi^2_r-concentrated:
    # P(|err| > 0.5) ~ 13% at r = 16 and ~0.5% at r = 64, so the fraction
    # of preserved pairs rises toward 1 as r grows.
    rng = np.random.default_rng(33)
    X = rng.standard_normal((50, 512))
    base = _pair_sq_dists(X)

    def preserved_fraction(r, seed):
        R = random_basis(512, r, seed)
        Y = np.sqrt(512.0 / r) * (X @ R.T)
        rel_err = np.abs(_pair_sq_dists(Y) - base) / base
        return float(np.mean(rel_err <= 0.5))

    assert preserved_fraction(16, 101) >= 0.75
    assert preserved_fraction(64, 101) >= 0.95
