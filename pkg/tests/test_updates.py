import numpy as np
import pytest

from enku import linalg
from enku.ensemble import Ensemble, moments, moments_from_blocks
from enku.errors import InsufficientSamplesError, InvalidInputError, NotPSDError
from enku.updates import (
    AffineConditioningMap,
    apply_map,
    eakf_svd_update,
    enku_map,
    etkf_transform,
    ld_map,
    lot_map,
)


def random_ensemble(rng, N=40, n=2, m=2):
    x = rng.standard_normal((N, n)) @ rng.standard_normal((n, n))
    y = x @ rng.standard_normal((n, m)) + rng.standard_normal((N, m))
    return Ensemble(x, y)


def scalar_moments(cov_x, cov_xy, cov_y):
    return moments_from_blocks([0.0], [0.0], [[cov_x]], [[cov_y]], [[cov_xy]])


def test_map_validation():
    with pytest.raises(InvalidInputError):
        AffineConditioningMap(np.eye(2), np.zeros((3, 1)), np.zeros(2))
    with pytest.raises(InvalidInputError):
        AffineConditioningMap(np.eye(1), np.zeros((1, 1)), [np.nan])
    cmap = AffineConditioningMap(np.eye(2), np.zeros((2, 1)), np.zeros(2))
    with pytest.raises(InvalidInputError):
        cmap(np.zeros((3, 2)), np.zeros((3, 2)))


def test_enku_zero_gain_is_identity():
    mom = moments_from_blocks([0, 0], [0], np.eye(2), [[1.0]], [[0.0], [0.0]])
    cmap = enku_map(mom, [3.0])
    np.testing.assert_array_equal(cmap.A, np.eye(2))
    np.testing.assert_array_equal(cmap.B, np.zeros((2, 1)))
    np.testing.assert_array_equal(cmap.c, np.zeros(2))


def test_enku_scalar_example():
    cmap = enku_map(scalar_moments(2.0, 1.0, 1.0), [0.4])
    np.testing.assert_allclose(cmap([[1.0], [2.0]], [[0.0], [1.0]]), [[1.4], [1.4]])


def test_enku_rejects_bad_y_star(rng):
    with pytest.raises(InvalidInputError):
        enku_map(moments(random_ensemble(rng)), [1.0, 2.0, 3.0])


def test_ld_scalar_example():
    cmap = ld_map(scalar_moments(2.0, 1.0, 1.0), [0.0])
    np.testing.assert_allclose(cmap.A, [[1.0 / np.sqrt(2.0)]])
    np.testing.assert_array_equal(cmap.B, [[0.0]])


def test_ld_and_lot_reduce_to_identity_without_information(rng):
    cov = np.array([[2.0, 0.3], [0.3, 1.0]])
    mom = moments_from_blocks([1.0, 2.0], [0.0], cov, [[1.0]], [[0.0], [0.0]])
    for build in (ld_map, lot_map):
        cmap = build(mom, [5.0])
        np.testing.assert_allclose(cmap.A, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(cmap.c, np.zeros(2), atol=1e-12)


def test_lot_on_singular_cov_x_gives_projector():
    v = np.array([[1.0], [2.0]])
    cov = v @ v.T
    mom = moments_from_blocks([0, 0], [0], cov, [[1.0]], [[0.0], [0.0]])
    np.testing.assert_allclose(lot_map(mom, [0.0]).A, linalg.col_projector(cov), atol=1e-10)


def test_lot_equals_ld_in_one_dimension():
    mom = scalar_moments(3.0, 1.2, 2.0)
    np.testing.assert_allclose(lot_map(mom, [0.1]).A, ld_map(mom, [0.1]).A, rtol=1e-14)


def test_lot_matrix_is_symmetric_psd_and_transports_covariance(rng):
    e = random_ensemble(rng)
    mom = moments(e)
    A = lot_map(mom, [0.0, 0.0]).A
    np.testing.assert_allclose(A, A.T, atol=1e-14)
    assert np.linalg.eigvalsh(A).min() >= -1e-12
    np.testing.assert_allclose(A @ mom.cov_x @ A.T, mom.cov_x_given_y, rtol=0, atol=1e-8 * np.abs(mom.cov_x_given_y).max())


def test_ld_raises_on_indefinite_conditional_covariance():
    mom = moments_from_blocks([0, 0], [0], np.eye(2), [[1.0]], [[0.0], [0.0]])
    bad = type(mom)(mom.m_x, mom.m_y, mom.cov_x, mom.cov_y, mom.cov_xy, -np.eye(2), mom.gain)
    with pytest.raises(NotPSDError):
        ld_map(bad, [0.0])


@pytest.mark.parametrize("build", [ld_map, lot_map])
def test_square_root_maps_match_moments(rng, build):
    e = random_ensemble(rng, N=30)
    mom = moments(e)
    ys = rng.standard_normal(2)
    out = apply_map(build(mom, ys), e).x
    np.testing.assert_allclose(out.mean(axis=0), mom.m_x + mom.gain @ (ys - mom.m_y), atol=1e-10)
    cov = np.cov(out, rowvar=False)
    assert np.linalg.norm(cov - mom.cov_x_given_y) <= 1e-8 * np.linalg.norm(mom.cov_x_given_y)


def test_enku_mean_contract(rng):
    e = random_ensemble(rng)
    mom = moments(e)
    ys = np.array([0.4, -0.2])
    out = apply_map(enku_map(mom, ys), e).x
    np.testing.assert_allclose(out.mean(axis=0), mom.m_x + mom.gain @ (ys - mom.m_y), atol=1e-10)


def test_maps_without_y_ignore_y_order(rng):
    e = random_ensemble(rng)
    cmap = ld_map(moments(e), [0.0, 0.0])
    shuffled = Ensemble(e.x, e.y[rng.permutation(e.size)])
    np.testing.assert_array_equal(apply_map(cmap, e).x, apply_map(cmap, shuffled).x)


def test_apply_map_commutes_with_permutation(rng):
    e = random_ensemble(rng)
    cmap = enku_map(moments(e), [0.1, 0.2])
    order = rng.permutation(e.size)
    np.testing.assert_allclose(apply_map(cmap, e.permuted(order)).x, apply_map(cmap, e).x[order])


def test_apply_map_rejects_dimension_mismatch(rng):
    e = random_ensemble(rng)
    cmap = AffineConditioningMap(np.eye(3), np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(InvalidInputError):
        apply_map(cmap, e)


def test_etkf_constant_y_gives_identity():
    e = Ensemble(np.arange(8.0).reshape(4, 2), np.ones((4, 1)))
    np.testing.assert_allclose(etkf_transform(e), np.eye(4), atol=1e-15)


def test_etkf_two_member_example():
    e = Ensemble([[0.0], [1.0]], [[1.0], [-1.0]])
    np.testing.assert_allclose(etkf_transform(e), np.eye(2) - 0.5 * np.array([[1, -1], [-1, 1]]), atol=1e-15)


@pytest.mark.parametrize("N", [3, 10, 50])
def test_etkf_matches_enku_anomaly_update(rng, N):
    e = random_ensemble(rng, N=N)
    T = etkf_transform(e)
    np.testing.assert_allclose(T @ T, T, atol=1e-12)
    xc = (e.x - e.x.mean(axis=0)).T
    yc = (e.y - e.y.mean(axis=0)).T
    lhs = xc @ T
    rhs = xc - moments(e).gain @ yc
    assert np.linalg.norm(lhs - rhs) < 1e-10


def test_etkf_needs_two_members():
    with pytest.raises(InsufficientSamplesError):
        etkf_transform(Ensemble([[1.0]], [[1.0]]))


def analysis_cov(cov_f, H, gamma):
    s = H @ cov_f @ H.T + gamma
    return cov_f - cov_f @ H.T @ np.linalg.solve(s, H @ cov_f)


@pytest.mark.parametrize("N, n, m", [(40, 2, 2), (5, 3, 2), (3, 4, 1)])
def test_eakf_matches_analysis_covariance(rng, N, n, m):
    x = rng.standard_normal((N, n)) @ rng.standard_normal((n, n))
    H = rng.standard_normal((m, n))
    g = rng.standard_normal((m, m))
    gamma = g @ g.T + np.eye(m)
    ys = rng.standard_normal(m)
    out = eakf_svd_update(x, H, gamma, ys).x
    cov_f = np.cov(x, rowvar=False)
    target = analysis_cov(cov_f, H, gamma)
    np.testing.assert_allclose(np.cov(out, rowvar=False), target, atol=1e-8 * np.abs(target).max())
    gain = cov_f @ H.T @ np.linalg.inv(H @ cov_f @ H.T + gamma)
    mf = x.mean(axis=0)
    np.testing.assert_allclose(out.mean(axis=0), mf + gain @ (ys - H @ mf), atol=1e-10)


def test_eakf_identity_observation_example(rng):
    x = rng.standard_normal((25, 2))
    out = eakf_svd_update(x, np.eye(2), np.eye(2), [0.3, 0.1]).x
    cov_f = np.cov(x, rowvar=False)
    np.testing.assert_allclose(np.cov(out, rowvar=False), analysis_cov(cov_f, np.eye(2), np.eye(2)), atol=1e-8)


def test_eakf_without_information_keeps_forecast(rng):
    x = rng.standard_normal((10, 2))
    np.testing.assert_allclose(eakf_svd_update(x, np.zeros((1, 2)), [[1.0]], [3.0]).x, x, atol=1e-12)
    weak = eakf_svd_update(x, np.eye(2), 1e8 * np.eye(2), [0.0, 0.0]).x
    np.testing.assert_allclose(weak, x, rtol=1e-3, atol=1e-3 * np.abs(x).max())


def test_eakf_handles_collapsed_ensemble():
    x = np.ones((4, 2))
    np.testing.assert_allclose(eakf_svd_update(x, np.eye(2), np.eye(2), [0.0, 0.0]).x, x)


def test_eakf_rejects_singular_gamma(rng):
    with pytest.raises(InvalidInputError):
        eakf_svd_update(rng.standard_normal((5, 2)), np.eye(2), np.diag([1.0, 0.0]), [0.0, 0.0])
    with pytest.raises(InsufficientSamplesError):
        eakf_svd_update(np.ones((1, 2)), np.eye(2), np.eye(2), [0.0, 0.0])
