import numpy as np
import pytest

from enku import diagnostics as dg
from enku import generators as g
from enku.errors import InsufficientSamplesError, InvalidInputError


def test_rank_of_points_on_a_line(rng):
    x = np.column_stack([rng.normal(size=500), np.zeros(500)])
    assert dg.cov_rank_check(x)[1] == 1


def test_rank_of_gaussian_samples(rng):
    assert dg.cov_rank_check(rng.normal(size=(10**4, 2)))[1] == 2


def test_rank_of_linearly_dependent_coordinates(rng):
    z1 = rng.normal(size=1000)
    x = np.column_stack([z1, 3 * z1])
    smallest, rank = dg.cov_rank_check(x)
    lam_max = np.cov(x, rowvar=False).trace()
    assert rank == 1 and smallest < 1e-10 * lam_max


def test_rank_check_needs_two_samples():
    with pytest.raises(InsufficientSamplesError):
        dg.cov_rank_check([[1.0, 2.0]])


def test_cyclic_stat_rotation_invariant_gaussian(rng):
    assert dg.cyclic_symmetry_stat(rng.normal(size=(10**5, 2)), 4) < 0.02


def test_cyclic_stat_exactly_replicated_cloud(rng):
    c = rng.normal(size=(200, 2)) + [1.0, 0.5]
    R = dg.rotation(2 * np.pi / 3)
    cloud = np.vstack([c, c @ R.T, c @ R.T @ R.T])
    assert dg.cyclic_symmetry_stat(cloud, 3) < 1e-12


def test_cyclic_stat_point_mass_uncentred():
    val = dg.cyclic_symmetry_stat([[1.0, 0.0]], 2, grid=[[1.0, 0.0]], centered=False)
    assert val == pytest.approx(2 * np.sin(1.0), abs=1e-12)


def test_cyclic_stat_two_atoms_order_four():
    val = dg.cyclic_symmetry_stat([[1.0, 0.0], [-1.0, 0.0]], 4, grid=[[1.0, 0.0]])
    assert val == pytest.approx(1 - np.cos(1.0), abs=1e-12)
    # a two-atom law is symmetric under the half turn
    assert dg.cyclic_symmetry_stat([[1.0, 0.0], [-1.0, 0.0]], 2) < 1e-12


def test_cyclic_stat_order_one_and_permutation(rng):
    x = rng.normal(size=(300, 2)) * [3, 1]
    assert dg.cyclic_symmetry_stat(x, 1) == 0.0
    v = dg.cyclic_symmetry_stat(x, 4)
    assert 0 < v <= 2
    assert dg.cyclic_symmetry_stat(x[rng.permutation(300)], 4) == pytest.approx(v, abs=1e-12)


def test_ring_is_six_fold_symmetric(rng):
    x = g.sample(g.Ring(), 5 * 10**4, rng)
    assert dg.cyclic_symmetry_stat(x, 6) < 0.03
    assert dg.cyclic_symmetry_stat(x, 4) > 0.1


def test_cyclic_stat_errors(rng):
    x = rng.normal(size=(10, 2))
    with pytest.raises(InvalidInputError):
        dg.cyclic_symmetry_stat(x, 3, grid=np.zeros((0, 2)))
    with pytest.raises(InvalidInputError):
        dg.cyclic_symmetry_stat(x, 0)
    with pytest.raises(InvalidInputError):
        dg.cyclic_symmetry_stat(rng.normal(size=(10, 3)), 2)


def test_default_grid_shape():
    grid = dg.default_grid()
    assert grid.shape == (256, 2)
    np.testing.assert_allclose(sorted(set(np.round(np.linalg.norm(grid, axis=1), 12))), dg.DEFAULT_RADII)


def test_translation_residual_of_shifted_copy(rng):
    a = rng.normal(size=(400, 2))
    shift, res = dg.translation_residual(a, a + [1.0, -2.0])
    np.testing.assert_allclose(shift, [1.0, -2.0], atol=1e-12)
    assert res < 1e-7


def test_translation_residual_self_is_exactly_zero(rng):
    a = rng.normal(size=(50, 2))
    shift, res = dg.translation_residual(a, a)
    assert res == 0.0 and np.all(shift == 0.0)


def test_translation_residual_detects_scaling(rng):
    a = rng.normal(size=(300, 2))
    assert dg.translation_residual(a, 2 * a)[1] > 0.1


def test_translation_residual_shrinks_for_shift_family():
    model = g.JointModel(g.Ring(), g.Gaussian([0, 0], np.eye(2)), np.eye(2))

    def median_residual(n):
        vals = []
        for seed in range(10):
            r = np.random.default_rng(seed)
            a = g.sample_posterior(model, [0.4, -0.2], n, r)
            b = g.sample_posterior(model, [-1.0, 0.7], n, r)
            vals.append(dg.translation_residual(a, b)[1])
        return np.median(vals)

    assert median_residual(4096) < median_residual(256)


def test_symmetry_report_is_finite(rng):
    x = rng.normal(size=(500, 2))
    rep = dg.symmetry_report(x, orders=(2, 4), pair=x + 1.0)
    d = rep.to_dict()
    assert d["numerical_rank"] == 2 and set(d["cyc_statistic"]) == {"2", "4"}
    assert np.isfinite(d["translation_residual"])
