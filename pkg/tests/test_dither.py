import numpy as np
import pytest

from ltcrdp.dither import (
    coset_representatives,
    mod_lattice,
    nested_pair,
    sample_cell_uniform,
    sample_coset_uniform,
)
from ltcrdp.errors import ConfigError
from ltcrdp.lattice import build_lattice


def test_scalar_representatives():
    reps = coset_representatives(nested_pair(build_lattice("Z", 1), 2))
    np.testing.assert_array_equal(np.sort(reps[:, 0]), [-0.5, 0.0])


@pytest.mark.parametrize("family,n,gamma", [("Z", 2, 3), ("Dn", 4, 2), ("E8", 8, 2), ("E8", 8, 3), ("DnDual", 4, 3)])
def test_representatives_are_a_coset_system(family, n, gamma):
    coarse = build_lattice(family, n, 1.3)
    pair = nested_pair(coarse, gamma)
    reps = pair.representatives
    assert reps.shape == (gamma**n, n)
    # each lies in the coarse Voronoi cell and on the fine lattice
    np.testing.assert_allclose(coarse.quantize(reps), 0.0, atol=1e-12)
    pair.fine.coordinates(reps)
    # pairwise distinct modulo the coarse lattice
    keys = {tuple(np.round(r, 9)) for r in mod_lattice(coarse, reps + 1e-12)}
    assert len(keys) == gamma**n
    assert pair.shared_randomness_rate == pytest.approx(np.log2(gamma))


def test_gamma_one_is_trivial():
    pair = nested_pair(build_lattice("E8", 8), 1)
    np.testing.assert_array_equal(pair.representatives, np.zeros((1, 8)))
    g = np.random.default_rng(0)
    state = g.bit_generator.state
    idx, vec = sample_coset_uniform(pair, g, size=5)
    assert g.bit_generator.state == state
    assert np.all(idx == 0) and np.all(vec == 0)


def test_coset_cap():
    with pytest.raises(ConfigError):
        nested_pair(build_lattice("BW16", 16), 3)
    with pytest.raises(ConfigError):
        nested_pair(build_lattice("Z", 2), 0)


@pytest.mark.parametrize("family,n", [("Z", 3), ("Dn", 8), ("DnDual", 8), ("E8", 8), ("BW16", 16)])
def test_cell_uniform_samples_are_in_the_cell(family, n, rng):
    lat = build_lattice(family, n, 0.8)
    u = sample_cell_uniform(lat, rng, size=2000)
    np.testing.assert_allclose(lat.quantize(u), 0.0, atol=1e-12)
    assert sample_cell_uniform(lat, rng).shape == (n,)


def test_cell_uniform_mean_is_zero(rng):
    u = sample_cell_uniform(build_lattice("E8", 8), rng, size=50_000)
    se = u.std(axis=0) / np.sqrt(len(u))
    assert np.all(np.abs(u.mean(axis=0)) < 4 * se)


def test_coset_sampling_is_uniform(rng):
    pair = nested_pair(build_lattice("Z", 2), 3)
    idx, vec = sample_coset_uniform(pair, rng, size=90_000)
    counts = np.bincount(idx, minlength=9)
    assert counts.min() > 9000 and counts.max() < 11000
    np.testing.assert_array_equal(vec, pair.representatives[idx])
