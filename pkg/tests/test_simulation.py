import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radcine.baselines import it_sense
from radcine.encoding import make_encoding_op
from radcine.simulation import (PhantomConfig, make_coil_maps, make_dataset, make_phantom,
                                sample_seed, simulate_acquisition)
from radcine.trajectory import golden_angle_trajectory, nyquist_spoke_count

from conftest import rel_err


@pytest.fixture(scope="module")
def op16():
    return make_encoding_op(golden_angle_trajectory(16, 4, 6), make_coil_maps(16, 16, 3, seed=4))


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=10, deadline=None)
def test_phantom_magnitude_and_determinism(seed):
    cfg = PhantomConfig(24, 20, 8, seed=seed)
    x = make_phantom(cfg)
    assert x.shape == (24, 20, 8) and x.dtype == np.complex64
    assert np.abs(x).max() <= 1.0 + 1e-6
    np.testing.assert_array_equal(x, make_phantom(cfg))


def test_phantom_moves_and_is_complex():
    x = make_phantom(PhantomConfig(32, 32, 16, seed=2))
    mag = np.abs(x)
    assert np.ptp(mag.std(axis=2)) > 0.01                    # motion is spatially localised
    assert np.abs(np.angle(x[mag > 0.1])).std() > 0.01
    assert not np.array_equal(x, make_phantom(PhantomConfig(32, 32, 16, seed=3)))


@pytest.mark.parametrize("kw", [dict(n_x=0), dict(n_t=12), dict(n_y=-4)])
def test_phantom_config_validation(kw):
    with pytest.raises(ValueError):
        PhantomConfig(**kw)


@pytest.mark.parametrize("n_c", [1, 2, 5])
def test_coil_maps_sos_normalised(n_c):
    maps = make_coil_maps(20, 18, n_c, seed=7)
    assert maps.shape == (n_c, 20, 18)
    np.testing.assert_allclose(np.sqrt((np.abs(maps) ** 2).sum(0)), 1.0, atol=1e-5)
    np.testing.assert_array_equal(maps, make_coil_maps(20, 18, n_c, seed=7))
    if n_c == 1:
        np.testing.assert_allclose(np.abs(maps[0]), 1.0, atol=1e-6)
    with pytest.raises(ValueError):
        make_coil_maps(4, 4, 0)


def test_sigma_zero_is_exact(op16):
    x = make_phantom(PhantomConfig(16, 16, 4, seed=1))
    y, meta = simulate_acquisition(x, op16, sigma=0.0)
    assert rel_err(y, op16.A(x) / meta["scale"]) < 1e-6
    assert np.std(y) == pytest.approx(1.0, rel=1e-5)


def test_noise_std_monte_carlo(op16):
    # 3 coils x 4 frames x 6 spokes x 32 samples = 2304 complex draws per acquisition
    x = make_phantom(PhantomConfig(16, 16, 4, seed=1))
    clean, _ = simulate_acquisition(x, op16, sigma=0.0)
    noise = np.concatenate([(simulate_acquisition(x, op16, 0.02, seed=s)[0] - clean).ravel()
                            for s in range(3)])
    assert noise.size * 2 >= 10_000
    for part in (noise.real, noise.imag):
        assert part.std() == pytest.approx(0.02, rel=0.05)
        assert abs(part.mean()) < 0.02 * 5 / np.sqrt(part.size)


def test_per_coil_standardisation(op16):
    x = make_phantom(PhantomConfig(16, 16, 4, seed=1))
    y, meta = simulate_acquisition(x, op16, sigma=0.0, normalization="per_coil")
    for c in range(op16.coils.n_coils):
        assert abs(y[c].mean()) < 1e-5 and y[c].std() == pytest.approx(1.0, rel=1e-4)
    assert len(meta["coil_std"]) == op16.coils.n_coils
    with pytest.raises(ValueError):
        simulate_acquisition(x, op16, normalization="weird")
    with pytest.raises(ValueError):
        simulate_acquisition(x, op16, sigma=-0.1)


def test_dataset_splits_and_shapes(op16):
    ds = make_dataset(3, 2, 2, PhantomConfig(16, 16, 4, seed=5), op=op16, sigma=0.02)
    seeds = [s.seed for split in ("train", "val", "test") for s in ds[split]]
    assert len(set(seeds)) == 7
    assert seeds[0] == sample_seed(5, "train", 0)
    for s in ds["test"]:
        assert s.x_i.shape == s.x_gt.shape == op16.image_shape
        np.testing.assert_allclose(s.x_i, op16.A_sharp(s.y), atol=1e-6)
    again = make_dataset(3, 2, 2, PhantomConfig(16, 16, 4, seed=5), op=op16, sigma=0.02)
    np.testing.assert_array_equal(again["val"][1].y, ds["val"][1].y)
    with pytest.raises(ValueError):
        make_dataset(1, 1, 1, PhantomConfig(16, 16, 4))
    with pytest.raises(ValueError):
        make_dataset(100_000, 0, 0, op=op16)


def test_retrospective_consistency():
    # sigma = 0 with Nyquist-rate spokes: it-SENSE recovers the phantom (inverse crime)
    n = 32
    op = make_encoding_op(golden_angle_trajectory(n, 2, nyquist_spoke_count(n)),
                          make_coil_maps(n, n, 4, seed=1))
    ds = make_dataset(1, 0, 0, PhantomConfig(n, n, 2, seed=3), op=op, sigma=0.0)
    s = ds["train"][0]
    assert rel_err(it_sense(op, s.y, 30), s.x_gt) < 0.02
