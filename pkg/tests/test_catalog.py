import math

import numpy as np
import pytest
from scipy.stats import chi2

from galaxy_settler.catalog import (
    DensityProfile,
    StarCatalog,
    StarRecord,
    ephemeris,
    generate_synthetic,
    load_catalog,
    speed_histogram,
    write_catalog,
)
from galaxy_settler.dynamics import RotationCurve
from galaxy_settler.errors import CatalogError


@pytest.fixture(scope="module")
def curve():
    return RotationCurve.default()


@pytest.fixture(scope="module")
def cat10k(curve):
    return generate_synthetic(10_000, seed=1, rotation_curve=curve)


# -- loading ----------------------------------------------------------


def test_load_minimal_sol(tmp_path, curve):
    p = tmp_path / "one.csv"
    p.write_text("id,r_kpc,incl_deg,node_deg,phase0_deg\n0,8.0,0,0,0\n")
    cat = load_catalog(p, curve)
    assert len(cat) == 1
    assert cat.record(0).r == 8.0


def test_load_rejects_radius_out_of_range(tmp_path, curve):
    p = tmp_path / "bad.csv"
    p.write_text("id,r_kpc,incl_deg,node_deg,phase0_deg\n5,1.0,0,0,0\n")
    with pytest.raises(CatalogError, match="bad.csv:2"):
        load_catalog(p, curve)


def test_load_rejects_duplicate_id(tmp_path, curve):
    p = tmp_path / "dup.csv"
    p.write_text("id,r_kpc,incl_deg,node_deg,phase0_deg\n0,8,0,0,0\n0,8,0,0,0\n")
    with pytest.raises(CatalogError, match="duplicate"):
        load_catalog(p, curve)


def test_load_rejects_bad_header(tmp_path, curve):
    p = tmp_path / "hdr.csv"
    p.write_text("id,radius\n0,8\n")
    with pytest.raises(CatalogError, match="header"):
        load_catalog(p, curve)


def test_load_reports_malformed_row_line(tmp_path, curve):
    p = tmp_path / "mal.csv"
    p.write_text("id,r_kpc,incl_deg,node_deg,phase0_deg\n0,8,0,0,0\n1,oops,0,0,0\n")
    with pytest.raises(CatalogError, match=":3"):
        load_catalog(p, curve)


def test_load_missing_file(curve, tmp_path):
    with pytest.raises(CatalogError):
        load_catalog(tmp_path / "nope.csv", curve)


def test_roundtrip_is_bitwise(tmp_path, curve):
    cat = generate_synthetic(200, seed=3, rotation_curve=curve)
    p = tmp_path / "cat.csv"
    write_catalog(cat, p)
    again = load_catalog(p, curve)
    assert len(again) == len(cat)
    for a, b in zip(cat, again):
        assert a == b  # dataclass equality, exact floats


# -- synthesis --------------------------------------------------------


def test_synthesis_deterministic(curve):
    a = generate_synthetic(100, seed=7, rotation_curve=curve)
    b = generate_synthetic(100, seed=7, rotation_curve=curve)
    assert all(x == y for x, y in zip(a, b))


def test_synthesis_sol_pinned(cat10k):
    sol = cat10k.record(0)
    assert sol.r == 8.0
    assert sol.incl == 0.0


def test_synthesis_radial_trend(cat10k):
    r = cat10k.r
    n_in = np.count_nonzero((2 <= r) & (r < 12))
    n_mid = np.count_nonzero((12 <= r) & (r < 22))
    n_out = np.count_nonzero((22 <= r) & (r <= 32))
    assert n_in > n_mid > n_out


def test_synthesis_angular_uniformity_chi_square(cat10k):
    # azimuth at the final epoch should carry no angular structure
    pos, _ = cat10k.states_at(90.0)
    az = np.mod(np.arctan2(pos[:, 1], pos[:, 0]), 2 * np.pi)
    counts, _ = np.histogram(az, bins=36, range=(0, 2 * np.pi))
    expect = len(cat10k) / 36
    stat = np.sum((counts - expect) ** 2 / expect)
    assert stat < chi2.ppf(0.999, df=35)


def test_synthesis_inclination_band(cat10k):
    incl = np.array([s.incl for s in cat10k])
    assert incl.min() >= 0.0
    assert incl.max() <= 15.0
    assert np.count_nonzero(incl > 10.0) > 0  # the 10-degree filter must bite


def test_synthesis_rejects_zero(curve):
    with pytest.raises(CatalogError):
        generate_synthetic(0, seed=1, rotation_curve=curve)


def test_profile_rejects_nondecreasing():
    with pytest.raises(CatalogError):
        DensityProfile(taper=30.0)


# -- kinematics -------------------------------------------------------


def test_sol_state_at_zero(curve):
    cat = generate_synthetic(5, seed=2, rotation_curve=curve)
    pos, vel = cat.star_state(0, 0.0)
    np.testing.assert_allclose(pos, [8.0, 0.0, 0.0], atol=1e-14)
    np.testing.assert_allclose(vel, [0.0, curve.speed(8.0), 0.0], atol=1e-12)


def test_quarter_turn_identity(curve):
    cat = StarCatalog([StarRecord(0, 8.0, 0.0, 0.0, 0.0)], curve)
    t_quarter = (math.pi / 2) / cat.omega[0]
    pos, vel = cat.star_state(0, t_quarter)
    np.testing.assert_allclose(pos, [0.0, 8.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(vel, [-curve.speed(8.0), 0.0, 0.0], atol=1e-10)


def test_state_invariants_random_stars(cat10k):
    rng = np.random.default_rng(11)
    for star_id in rng.choice(cat10k.ids[1:], size=25, replace=False):
        rec = cat10k.record(int(star_id))
        for t in rng.uniform(0, 90, 4):
            pos, vel = cat10k.star_state(int(star_id), float(t))
            assert np.linalg.norm(pos) == pytest.approx(rec.r, rel=1e-12)
            assert np.linalg.norm(vel) == pytest.approx(
                cat10k.curve.speed(rec.r), rel=1e-12)
            assert abs(np.dot(pos, vel)) < 1e-9 * rec.r


def test_angular_momentum_epoch_invariant(cat10k):
    # |r x v| = r v(r), direction fixed: circular orbits never precess
    rng = np.random.default_rng(5)
    ids = rng.choice(cat10k.ids, size=10, replace=False)
    L_ref = cat10k.angular_momenta()
    for star_id in ids:
        k = cat10k.index_of(int(star_id))
        for t in np.linspace(0, 90, 50):
            pos, vel = cat10k.star_state(int(star_id), float(t))
            np.testing.assert_allclose(np.cross(pos, vel), L_ref[k], rtol=1e-11, atol=1e-9)


def test_epoch_bounds_enforced(cat10k):
    with pytest.raises(CatalogError):
        cat10k.star_state(0, -0.5)
    with pytest.raises(CatalogError):
        cat10k.star_state(0, 90.5)
    with pytest.raises(CatalogError):
        cat10k.star_state(999_999, 1.0)


def test_states_at_matches_scalar(cat10k):
    pos, vel = cat10k.states_at(42.5)
    for k in (0, 17, 9999):
        p, v = cat10k.star_state(int(cat10k.ids[k]), 42.5)
        np.testing.assert_allclose(pos[k], p, rtol=0, atol=1e-13)
        np.testing.assert_allclose(vel[k], v, rtol=0, atol=1e-11)


# -- ephemeris --------------------------------------------------------


def test_ephemeris_grid_shape(curve):
    cat = generate_synthetic(1, seed=1, rotation_curve=curve)
    grid = ephemeris(cat)
    assert len(grid.t_grid) == 181
    assert grid.pos.shape == (181, 1, 3)
    assert grid.t_grid[1] - grid.t_grid[0] == 0.5


def test_ephemeris_endpoints_match_star_state(cat10k):
    grid = ephemeris(cat10k)
    for k, t in ((0, 0.0), (180, 90.0)):
        pos, vel = cat10k.states_at(t)
        np.testing.assert_allclose(grid.pos[k], pos, rtol=1e-13, atol=0)
        np.testing.assert_allclose(grid.vel[k], vel, rtol=1e-13, atol=0)


def test_ephemeris_cache_roundtrip(tmp_path, curve):
    cat = generate_synthetic(50, seed=9, rotation_curve=curve)
    g1 = ephemeris(cat, cache_dir=tmp_path)
    assert len(list(tmp_path.glob("ephemeris-*.npz"))) == 1
    g2 = ephemeris(cat, cache_dir=tmp_path)
    np.testing.assert_array_equal(g1.pos, g2.pos)


def test_epoch_index(cat10k):
    grid = ephemeris(generate_synthetic(3, seed=1))
    assert grid.epoch_index(0.0) == 0
    assert grid.epoch_index(42.5) == 85
    with pytest.raises(CatalogError):
        grid.epoch_index(42.3)


# -- speed histogram --------------------------------------------------


def test_speed_histogram_flat_curve():
    cat = generate_synthetic(500, seed=4, rotation_curve=RotationCurve.flat(200.0))
    for _, _, n, mean_v in speed_histogram(cat):
        assert n > 0
        assert mean_v == pytest.approx(200.0)


def test_speed_histogram_default_curve(cat10k):
    rows = speed_histogram(cat10k)
    best = max(rows, key=lambda row: row[3])
    assert 18.0 <= best[0] and best[1] <= 20.0
    # local dip near the 8 kpc circle
    sol_bin = next(row for row in rows if row[0] <= 8.0 < row[1])
    neighbours = [row[3] for row in rows if abs(row[0] - sol_bin[0]) <= 2.0]
    assert sol_bin[3] == pytest.approx(min(neighbours), abs=1.0)
