import numpy as np
import pytest

from enku import generators as g
from enku import rng as streams
from enku.errors import InvalidInputError, NotPSDError
from enku.updates import apply_map, enku_map

SIGMA_Z = np.array([[10.0, -2.5], [-2.5, 1.0]])
SIGMA_Y = np.array([[1.0, 1.5], [1.5, 5.0]])
Y_STAR = np.array([0.4, -0.2])


def exp1_model():
    return g.JointModel(g.Gaussian([0, 0], SIGMA_Z), g.Gaussian([0, 0], SIGMA_Y), np.eye(2))


def test_streams_are_deterministic_and_distinct():
    a = streams.stream(5, streams.ROLE_Z, 1, 64).random(4)
    b = streams.stream(5, streams.ROLE_Z, 1, 64).random(4)
    c = streams.stream(5, streams.ROLE_Y, 1, 64).random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(InvalidInputError):
        streams.stream(-1, streams.ROLE_Z)
    with pytest.raises(InvalidInputError):
        streams.stream(1, 9)


def test_degenerate_gaussian_returns_mean(rng):
    x = g.sample(g.Gaussian([1.0, -2.0], np.zeros((2, 2))), 10, rng)
    np.testing.assert_array_equal(x, np.tile([1.0, -2.0], (10, 1)))


def test_gaussian_rejects_indefinite_covariance():
    with pytest.raises(NotPSDError):
        g.Gaussian([0, 0], [[1.0, 0.0], [0.0, -1.0]])


def test_experiment1_gaussian_covariance(rng):
    x = g.sample(g.Gaussian([0, 0], SIGMA_Z), 10**6, rng)
    np.testing.assert_allclose(np.cov(x, rowvar=False), SIGMA_Z, rtol=0.02)


def test_ring_concentration_limit(rng):
    spec = g.Ring(n_rings=1, n_modes=1, radius_min=1.0, radius_max=1.0, kappa=1e6, sigma=1e-6)
    x = g.sample(spec, 1000, rng)
    assert np.abs(x - [1.0, 0.0]).max() < 1e-2


def test_ring_modes_sit_at_their_centres(rng):
    spec = g.Ring()
    x = g.sample(spec, 10**5, rng)
    assert np.all(np.isfinite(x))
    theta = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
    for c in np.mod(spec.centers, 2 * np.pi):
        near = np.angle(np.exp(1j * (theta - c)))
        local = near[np.abs(near) < np.pi / spec.n_modes]
        hist, edges = np.histogram(local, bins=61, range=(-0.5, 0.5))
        peak = 0.5 * (edges[np.argmax(hist)] + edges[np.argmax(hist) + 1])
        assert abs(peak) < 0.05


def test_ring_population_moments(rng):
    spec = g.Ring()
    x = g.sample(spec, 4 * 10**5, rng)
    np.testing.assert_allclose(x.mean(axis=0), spec.population_mean(), atol=0.02)
    np.testing.assert_allclose(np.cov(x, rowvar=False), spec.population_cov(), atol=0.05)


def test_von_mises_matches_scipy_moments(rng):
    from scipy import stats
    t = g.von_mises(np.zeros(2 * 10**5), 2.0, rng)
    assert abs(np.mean(np.cos(t)) - stats.vonmises(2.0).expect(np.cos)) < 0.01
    assert abs(np.mean(np.sin(t))) < 0.01


def test_ring_validation():
    with pytest.raises(InvalidInputError):
        g.Ring(kappa=0.0)
    with pytest.raises(InvalidInputError):
        g.Ring(radius_min=2.0, radius_max=1.0)


def test_random_mixture_parameters(rng):
    spec = g.sample_random_mixture_params(rng)
    assert spec.weights.size == 6
    assert abs(spec.weights.sum() - 1.0) < 1e-12
    for c in spec.covs:
        assert np.linalg.eigvalsh(c).min() >= 1e-6 - 1e-12


def test_random_mixture_means_are_centred(rng):
    means = np.concatenate([g.sample_random_mixture_params(rng).means for _ in range(10**4)])
    assert np.all(np.abs(means.mean(axis=0)) < 0.2)


def test_mixture_population_moments(rng):
    spec = g.sample_random_mixture_params(rng)
    x = g.sample(spec, 4 * 10**5, rng)
    np.testing.assert_allclose(x.mean(axis=0), spec.population_mean(), atol=0.1)
    np.testing.assert_allclose(np.cov(x, rowvar=False), spec.population_cov(), rtol=0.03, atol=0.1)


def test_mixture_validation():
    with pytest.raises(InvalidInputError):
        g.GaussianMixture([0.5, 0.6], [[0.0], [1.0]], [[[1.0]], [[1.0]]])


def test_joint_with_zero_coupling_is_independent(rng):
    model = g.JointModel(g.Gaussian([0], [[1.0]]), g.Gaussian([0], [[1.0]]), [[0.0]])
    e = g.sample_joint(model, 10**4, rng)
    assert abs(np.corrcoef(e.x[:, 0], e.y[:, 0])[0, 1]) < 0.05


def test_joint_with_point_mass_y(rng):
    y0 = np.array([1.5, -3.0])
    model = g.JointModel(g.Gaussian([0, 0], SIGMA_Z), g.Gaussian(y0, np.zeros((2, 2))), np.eye(2))
    e = g.sample_joint(model, 50, rng)
    np.testing.assert_allclose(e.x, e.z + y0, atol=1e-12)


def test_experiment1_cross_covariance(rng):
    e = g.sample_joint(exp1_model(), 10**5, rng)
    cov = np.cov(np.hstack([e.x, e.y]), rowvar=False)
    np.testing.assert_allclose(cov[:2, 2:], SIGMA_Y, rtol=0.05, atol=0.05)


def test_joint_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        g.JointModel(g.Gaussian([0, 0], np.eye(2)), g.Gaussian([0], [[1.0]]), np.eye(2))


@pytest.mark.parametrize("spec", [
    g.Gaussian([0, 0], SIGMA_Y),
    g.sample_random_mixture_params(np.random.default_rng(3)),
])
def test_population_gain_reproduces_posterior_per_particle(rng, spec):
    model = g.JointModel(g.Gaussian([0, 0], SIGMA_Z), spec, np.eye(2))
    e = g.sample_joint(model, 1000, rng)
    out = apply_map(enku_map(model.population_moments(), Y_STAR), e).x
    assert np.abs(out - (e.z + Y_STAR)).max() < 1e-10


def test_posterior_examples(rng):
    model = exp1_model()
    np.testing.assert_allclose(g.sample_posterior(model, [0, 0], 5, np.random.default_rng(1)),
                               g.sample(model.z_spec, 5, np.random.default_rng(1)))
    point = g.JointModel(g.Gaussian([2.0, 1.0], np.zeros((2, 2))), g.Gaussian([0, 0], SIGMA_Y), np.eye(2))
    np.testing.assert_allclose(g.sample_posterior(point, Y_STAR, 4, rng), np.tile([2.4, 0.8], (4, 1)))
    draws = g.sample_posterior(model, Y_STAR, 10**6, rng)
    np.testing.assert_allclose(draws.mean(axis=0), Y_STAR, atol=0.02)


def test_sdec_examples(rng):
    y = g.Gaussian([0.0], [[1.0]])
    single = g.SdecSpec(0.0, [1.0], 2.0, y)
    assert single.truncation == 1
    np.testing.assert_allclose(g.sample_sdec_z(single, 5, np.random.default_rng(0))[:, 0],
                               2.0 + g.sample(y, 5, np.random.default_rng(0))[:, 0])
    np.testing.assert_array_equal(g.sample_sdec_z(g.SdecSpec(0.5, [0.0], 1.5, y), 4, rng), 1.5)
    half = g.SdecSpec(0.5, [1.0], 0.0, y)
    assert half.truncation == 40
    u = g.sample_sdec_z(half, 10**5, rng)
    assert abs(u.var() / (4.0 / 3.0) - 1.0) < 0.03
    with pytest.raises(InvalidInputError):
        g.SdecSpec(1.0, [1.0], 0.0, y)


def test_sdec_self_similarity(rng):
    # U and lam U' + b (1 - lam) + w (Y - E Y) have the same law.
    from scipy.stats import energy_distance
    y = g.Scalar1D("uniform", -1.0, 1.0)
    spec = g.SdecSpec(0.5, [1.0], 0.3, y)
    n = 10**5
    u = g.sample_sdec_z(spec, n, rng)[:, 0]
    v = 0.5 * g.sample_sdec_z(spec, n, rng)[:, 0] + 0.3 * 0.5 + g.sample(y, n, rng)[:, 0]
    assert energy_distance(u, v) < 0.01


def test_product_model_examples(rng):
    r = g.Scalar1D("uniform", 0.0, 1.0)
    one = g.sample_product_model(r, lambda y: 1.0, 100, rng)
    np.testing.assert_array_equal(one.x, one.z)
    zero = g.sample_product_model(r, lambda y: 0.0 * y, 100, rng)
    np.testing.assert_array_equal(zero.x, 0.0)
    e = g.sample_product_model(r, lambda y: 1.0 + y**2, 10**5, rng)
    assert abs(e.x.mean() / (2.0 / 3.0) - 1.0) < 0.02


def test_same_seed_same_samples():
    spec = g.Ring()
    a = g.sample(spec, 100, streams.stream(9, streams.ROLE_Z, 0, 100))
    b = g.sample(spec, 100, streams.stream(9, streams.ROLE_Z, 0, 100))
    np.testing.assert_array_equal(a, b)
