"""Dataset generators, mode splits, balancing, CSV round trips."""
import numpy as np
import pytest

from utep.errors import ConfigError, ShapeError
from utep.synthdata import (DomainPair, Pool, balance_upsample,
                            blob_density_ratio, gen_gaussian_blobs,
                            gen_two_moons_shift, load_csv, make_splits,
                            save_csv)


def test_moons_shapes_and_labels():
    pair = gen_two_moons_shift(100, 30.0, seed=0)
    assert pair.source.x.shape == (100, 2)
    assert pair.target.x.shape == (100, 2)
    assert set(np.unique(pair.source.y)) == {0, 1}
    assert np.bincount(pair.source.y).tolist() == [50, 50]
    assert pair.num_classes == 2
    assert pair.source.domain == 1 and pair.target.domain == 0


def test_moons_rotation_preserves_centroid_distance():
    pair = gen_two_moons_shift(2000, 45.0, noise=0.0, seed=3)
    center = np.array([0.5, 0.25])
    rs = np.linalg.norm(pair.source.x - center, axis=1)
    rt = np.linalg.norm(pair.target.x - center, axis=1)
    # rotation about the centroid is an isometry of radii
    np.testing.assert_allclose(np.sort(rs), np.sort(rt), atol=1e-9)


def test_moons_zero_rotation_zero_noise_identical_geometry():
    pair = gen_two_moons_shift(60, 0.0, noise=0.0, seed=1)
    np.testing.assert_allclose(pair.source.x, pair.target.x, atol=1e-12)


def test_moons_translation_applied():
    base = gen_two_moons_shift(50, 0.0, noise=0.0, seed=2)
    moved = gen_two_moons_shift(50, 0.0, translation=(1.5, -0.5), noise=0.0,
                                seed=2)
    np.testing.assert_allclose(moved.target.x - base.target.x,
                               np.tile([1.5, -0.5], (50, 1)), atol=1e-12)


def test_moons_parameter_validation():
    with pytest.raises(ConfigError):
        gen_two_moons_shift(3, 30.0)
    with pytest.raises(ConfigError):
        gen_two_moons_shift(50, 91.0)
    with pytest.raises(ConfigError):
        gen_two_moons_shift(50, 30.0, noise=-0.1)


def test_moons_source_target_noise_streams_differ():
    pair = gen_two_moons_shift(50, 0.0, noise=0.1, seed=4)
    assert not np.allclose(pair.source.x, pair.target.x)


def test_blobs_shapes_counts_and_means():
    pair = gen_gaussian_blobs(3, 2, (2.0, 0.0), 0.5, 301, seed=0)
    assert pair.source.n == 301 and pair.target.n == 301
    assert np.bincount(pair.source.y).tolist() == [101, 100, 100]
    for c in range(3):
        mean_s = pair.source.x[pair.source.y == c].mean(axis=0)
        mean_t = pair.target.x[pair.target.y == c].mean(axis=0)
        np.testing.assert_allclose(mean_t - mean_s, [2.0, 0.0], atol=0.3)


def test_blobs_validation():
    with pytest.raises(ConfigError):
        gen_gaussian_blobs(1, 2, (0.0,), 1.0, 50)
    with pytest.raises(ConfigError):
        gen_gaussian_blobs(3, 1, (0.0,), 1.0, 50)
    with pytest.raises(ConfigError):
        gen_gaussian_blobs(3, 2, (0.0,), 1.0, 2)
    with pytest.raises(ShapeError):
        gen_gaussian_blobs(3, 2, (1.0, 1.0, 1.0), 1.0, 50)


def test_blob_density_ratio_matches_direct_mixture():
    pair = gen_gaussian_blobs(3, 2, (1.0, -0.5), 0.8, 90, seed=5)
    x = np.concatenate([pair.source.x[:20], pair.target.x[:20]])
    w = blob_density_ratio(pair, x)

    means_s = np.asarray(pair.meta["means"])
    means_t = means_s + np.asarray(pair.meta["delta"])
    sig = pair.meta["sigma"]

    def density(pts, means):
        d2 = ((pts[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-d2 / (2 * sig * sig)).sum(axis=1)

    np.testing.assert_allclose(w, density(x, means_t) / density(x, means_s),
                               rtol=1e-10)


def test_blob_density_ratio_no_shift_is_one():
    pair = gen_gaussian_blobs(2, 2, (0.0, 0.0), 1.0, 40, seed=6)
    w = blob_density_ratio(pair, pair.source.x)
    np.testing.assert_allclose(w, np.ones(40), atol=1e-12)


def test_blob_density_ratio_requires_blobs_kind():
    moons = gen_two_moons_shift(50, 10.0, seed=0)
    with pytest.raises(ConfigError):
        blob_density_ratio(moons, moons.source.x)


def test_uda_split_hides_all_target_labels():
    pair = make_splits(gen_two_moons_shift(40, 20.0, seed=0), "uda", seed=0)
    assert pair.source.labeled.all()
    assert not pair.target.labeled.any()


def test_ssda_split_fraction_and_shots():
    base = gen_gaussian_blobs(4, 2, (1.0,), 1.0, 400, seed=1)
    frac = make_splits(base, "ssda", seed=0, ssda_frac=0.01)
    per_class = max(1, round(0.01 * 400 / 4))
    assert frac.target.labeled.sum() == per_class * 4
    shots = make_splits(base, "ssda", seed=0, ssda_shots=3)
    assert shots.target.labeled.sum() == 12
    for c in range(4):
        assert (shots.target.y[shots.target.labeled] == c).sum() == 3


def test_ssda_too_many_shots_rejected():
    base = gen_gaussian_blobs(4, 2, (1.0,), 1.0, 20, seed=1)
    with pytest.raises(ConfigError):
        make_splits(base, "ssda", ssda_shots=10)


def test_ssl_split_restructures_single_domain():
    base = gen_gaussian_blobs(3, 2, (0.0,), 1.0, 90, seed=2)
    ssl = make_splits(base, "ssl", seed=0, ssl_shots=3)
    assert ssl.source.n == 9
    assert ssl.target.n == 81
    assert ssl.source.labeled.all() and not ssl.target.labeled.any()
    assert ssl.source.domain == 1 and ssl.target.domain == 0
    for c in range(3):
        assert (ssl.source.y == c).sum() == 3


def test_ssl_split_validation():
    base = gen_gaussian_blobs(3, 2, (0.0,), 1.0, 9, seed=2)
    with pytest.raises(ConfigError):
        make_splits(base, "ssl", ssl_shots=4)
    with pytest.raises(ConfigError):
        make_splits(base, "ssl", ssl_shots=0)


def test_unknown_mode_rejected():
    base = gen_two_moons_shift(40, 0.0, seed=0)
    with pytest.raises(ConfigError):
        make_splits(base, "open-set")


def test_balance_upsample_equal_pools_untouched():
    pair = gen_two_moons_shift(50, 10.0, seed=0)
    assert balance_upsample(pair, seed=1) is pair


def test_balance_upsample_grows_smaller_pool_keeping_originals():
    src = Pool(np.arange(10, dtype=float).reshape(5, 2),
               np.array([0, 1, 0, 1, 0]), np.ones(5, dtype=bool), domain=1)
    tgt = Pool(np.arange(16, dtype=float).reshape(8, 2),
               np.zeros(8, dtype=int), np.zeros(8, dtype=bool), domain=0)
    pair = DomainPair(src, tgt, 2, {"kind": "test"})
    bal = balance_upsample(pair, seed=0)
    assert bal.source.n == bal.target.n == 8
    np.testing.assert_array_equal(bal.source.x[:5], src.x)
    # extras are copies of originals
    orig = {tuple(r) for r in src.x}
    assert all(tuple(r) in orig for r in bal.source.x[5:])


def test_balance_upsample_deterministic():
    src = Pool(np.random.default_rng(0).normal(size=(5, 2)),
               np.zeros(5, dtype=int), np.ones(5, dtype=bool), domain=1)
    tgt = Pool(np.random.default_rng(1).normal(size=(9, 2)),
               np.zeros(9, dtype=int), np.zeros(9, dtype=bool), domain=0)
    pair = DomainPair(src, tgt, 2, {})
    a = balance_upsample(pair, seed=3)
    b = balance_upsample(pair, seed=3)
    assert a.source.x.tobytes() == b.source.x.tobytes()


def test_csv_roundtrip_bit_exact(tmp_path):
    pair = make_splits(gen_two_moons_shift(30, 25.0, seed=7), "uda")
    path = str(tmp_path / "data.csv")
    save_csv(pair, path)
    back = load_csv(path)
    assert back.source.x.tobytes() == pair.source.x.tobytes()
    assert back.target.x.tobytes() == pair.target.x.tobytes()
    np.testing.assert_array_equal(back.source.y, pair.source.y)
    np.testing.assert_array_equal(back.target.labeled, pair.target.labeled)
    path2 = str(tmp_path / "data2.csv")
    save_csv(back, path2)
    assert open(path).read() == open(path2).read()


def test_csv_header_and_field_errors(tmp_path):
    bad_header = tmp_path / "bad.csv"
    bad_header.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ConfigError, match="header"):
        load_csv(str(bad_header))

    short_row = tmp_path / "short.csv"
    short_row.write_text("x0,x1,y,domain,labeled\n1.0,2.0,0,1\n")
    with pytest.raises(ConfigError, match=":2"):
        load_csv(str(short_row))

    one_domain = tmp_path / "one.csv"
    one_domain.write_text("x0,x1,y,domain,labeled\n1.0,2.0,0,1,1\n")
    with pytest.raises(ConfigError, match="domain=0"):
        load_csv(str(one_domain))


def test_pool_shape_validation():
    with pytest.raises(ShapeError):
        Pool(np.zeros((3, 2)), np.zeros(2, dtype=int),
             np.ones(3, dtype=bool), domain=1)
