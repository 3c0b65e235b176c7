import math
import os
from datetime import datetime
from importlib import resources

import numpy as np
import pytest

from nmdetumble.attmath import IDENTITY_QUAT, quat_from_axis_angle, random_quat
from nmdetumble.dynamics import SimState, circular_orbit
from nmdetumble.geomag import (
    IGRF_RADIUS,
    BelowSurfaceError,
    GeoEpoch,
    IGRFParseError,
    InvalidModelError,
    dipole_model,
    field_body,
    field_ecef,
    field_eci,
    field_geocentric,
    load_coefficients,
    load_igrf13,
    read_field_points,
    sh_field_spherical,
    validate_points,
)

ppigrf = pytest.importorskip("ppigrf")
IGRF13_SHC = os.path.join(os.path.dirname(ppigrf.__file__), "IGRF13.shc")

# LEO test points: radius [km], geocentric latitude, east longitude [deg]
LEO_POINTS = [
    (6778.137, 40.0, 30.0),
    (6878.137, -60.0, 200.0),
    (6778.137, 0.0, 0.0),
    (6978.137, 80.0, -100.0),
    (6778.137, -30.0, 120.0),
    (6828.137, 12.5, 287.0),
]


def _raw_table():
    return resources.files("nmdetumble").joinpath("data/igrf13coeffs.txt").read_text()


def _oracle_ned(radius_km, lat, lon, when):
    br, bt, bp = (float(np.ravel(x)[0]) for x in ppigrf.igrf_gc(radius_km, 90.0 - lat, lon, when, coeff_fn=IGRF13_SHC))
    return np.array([-bt, bp, -br])


# --------------------------------------------------------------------------
# coefficient loading


def test_g10_2020():
    model = load_igrf13(max_degree=13)
    assert model.epochs[-1] == 2020.0
    assert model.g[-1, 1, 0] == -29404.8
    assert model.max_degree == 13


def test_degree_one_round_trip():
    model = load_igrf13()
    i = list(model.epochs).index(2015.0)
    assert (model.g[i, 1, 0], model.g[i, 1, 1], model.h[i, 1, 1]) == (-29441.46, -1501.77, 4795.99)


def test_default_truncation():
    assert load_igrf13().max_degree == 10


@pytest.mark.parametrize("text", ["", "\n\n", "# only a comment\n"])
def test_empty_input(text):
    with pytest.raises(IGRFParseError):
        load_coefficients(text)


def test_malformed_row_names_line():
    lines = _raw_table().splitlines()
    idx = next(i for i, line in enumerate(lines) if line.startswith("g  2  0"))
    lines[idx] = "g  2  0  not-a-number"
    with pytest.raises(IGRFParseError, match=f"line {idx + 1}"):
        load_coefficients("\n".join(lines))


def test_missing_degree_one():
    lines = [ln for ln in _raw_table().splitlines() if not ln.startswith("h  1  1")]
    with pytest.raises(InvalidModelError):
        load_coefficients("\n".join(lines))


def test_file_truncated_at_degree_eight():
    kept = []
    for line in _raw_table().splitlines():
        tok = line.split()
        if tok and tok[0] in ("g", "h") and int(tok[1]) > 8:
            continue
        kept.append(line)
    model = load_coefficients("\n".join(kept))
    assert model.max_degree == 8
    b = field_ecef(model, np.array([6.8e6, 1e5, 2e5]), GeoEpoch.from_iso("2020-01-01T00:00:00"))
    assert np.all(np.isfinite(b))


# --------------------------------------------------------------------------
# evaluation against independent references


def test_matches_reference_at_table_epoch():
    """At a tabulated epoch no time interpolation is involved."""
    model = load_igrf13(max_degree=13)
    for r_km, lat, lon in LEO_POINTS:
        ours = field_geocentric(model, r_km * 1e3, lat, lon, 2015.0)
        np.testing.assert_allclose(ours, _oracle_ned(r_km, lat, lon, datetime(2015, 1, 1)), atol=1e-6)


@pytest.mark.parametrize("r_km, lat, lon", LEO_POINTS)
def test_matches_reference_2024(r_km, lat, lon):
    model = load_igrf13(max_degree=13)
    ours = field_geocentric(model, r_km * 1e3, lat, lon, 2024.0)
    assert np.max(np.abs(ours - _oracle_ned(r_km, lat, lon, datetime(2024, 1, 1)))) < 5.0


def test_ecef_cartesian_matches_reference():
    model = load_igrf13(max_degree=13)
    r_km, lat, lon = LEO_POINTS[0]
    la, lo = math.radians(lat), math.radians(lon)
    r = r_km * 1e3 * np.array([math.cos(la) * math.cos(lo), math.cos(la) * math.sin(lo), math.sin(la)])
    n, e, d = _oracle_ned(r_km, lat, lon, datetime(2015, 1, 1))
    north = np.array([-math.sin(la) * math.cos(lo), -math.sin(la) * math.sin(lo), math.cos(la)])
    east = np.array([-math.sin(lo), math.cos(lo), 0.0])
    down = -r / np.linalg.norm(r)
    expected = (n * north + e * east + d * down) * 1e-9
    got = field_ecef(model, r, GeoEpoch.from_iso("2015-01-01T00:00:00"))
    np.testing.assert_allclose(got, expected, atol=1e-15)


def test_validate_points_file(tmp_path):
    lines = ["radius_km,lat_deg,lon_deg,year,B_north_nT,B_east_nT,B_down_nT"]
    for r_km, lat, lon in LEO_POINTS:
        n, e, d = _oracle_ned(r_km, lat, lon, datetime(2015, 1, 1))
        lines.append(f"{r_km},{lat},{lon},2015.0,{float(n)!r},{float(e)!r},{float(d)!r}")
    path = tmp_path / "pts.csv"
    path.write_text("\n".join(lines) + "\n")
    errors = validate_points(load_igrf13(13), read_field_points(path))
    assert errors.shape == (len(LEO_POINTS), 3)
    assert np.abs(errors).max() < 1e-6


def test_points_file_missing_column(tmp_path):
    path = tmp_path / "pts.csv"
    path.write_text("radius_km,lat_deg\n6800,10\n")
    with pytest.raises(ValueError, match="missing column"):
        read_field_points(path)


# --------------------------------------------------------------------------
# dipole checks

G10 = -29404.8


def test_dipole_polar_magnitude():
    model = dipole_model(G10)
    b = field_ecef(model, np.array([0.0, 0.0, IGRF_RADIUS]), GeoEpoch(0.0))
    assert np.linalg.norm(b) == pytest.approx(2 * abs(G10) * 1e-9, rel=1e-9)


def test_dipole_equatorial_magnitude():
    model = dipole_model(G10)
    b = field_ecef(model, np.array([IGRF_RADIUS, 0.0, 0.0]), GeoEpoch(0.0))
    assert np.linalg.norm(b) == pytest.approx(abs(G10) * 1e-9, rel=1e-9)


def test_truncated_igrf_is_dipole():
    model = load_igrf13().dipole()
    assert model.is_dipole
    assert model.g[-1, 1, 0] == G10


def test_tilted_dipole_components(rng):
    g10, g11, h11 = G10, -1450.9, 4652.5
    model = dipole_model(g10, g11, h11)
    g, h = model.coefficients(2000.0)
    for _ in range(200):
        r = IGRF_RADIUS * rng.uniform(1.0, 1.5)
        th = rng.uniform(0.01, math.pi - 0.01)
        ph = rng.uniform(-math.pi, math.pi)
        s = (IGRF_RADIUS / r) ** 3
        c = g11 * math.cos(ph) + h11 * math.sin(ph)
        expected = np.array(
            [
                2 * s * (g10 * math.cos(th) + c * math.sin(th)),
                s * (g10 * math.sin(th) - c * math.cos(th)),
                s * (g11 * math.sin(ph) - h11 * math.cos(ph)),
            ]
        )
        np.testing.assert_allclose(sh_field_spherical(r, th, ph, g, h), expected, rtol=1e-9, atol=1e-9 * abs(g10) * s)


# --------------------------------------------------------------------------
# frames and epochs


def test_gmst_at_j2000():
    # IAU-82 value at 2000-01-01 12:00 UT1
    assert math.degrees(GeoEpoch(0.0).gmst) == pytest.approx(280.46061837, abs=1e-6)


def test_gmst_advances_at_sidereal_rate():
    t0 = GeoEpoch.from_iso("2024-01-01T00:00:00")
    d = (t0 + 3600.0).gmst - t0.gmst
    assert d == pytest.approx(7.2921158553e-5 * 3600.0, rel=1e-6)


@pytest.mark.parametrize(
    "iso, year",
    [
        ("2024-01-01T00:00:00", 2024.0),
        ("2024-07-02T12:00:00", 2024.0 + 183.5 / 366.0),
        ("2023-12-31T23:59:59", 2023.0 + (365 * 86400 - 1) / (365 * 86400)),
    ],
)
def test_decimal_year(iso, year):
    assert GeoEpoch.from_iso(iso).decimal_year == pytest.approx(year, abs=1e-12)


def test_eci_is_rotated_ecef(igrf, epoch):
    r_eci = np.array([5.0e6, 3.0e6, 3.5e6])
    th = epoch.gmst
    rot = np.array([[math.cos(th), math.sin(th), 0], [-math.sin(th), math.cos(th), 0], [0, 0, 1]])
    b_ecef = field_ecef(igrf, rot @ r_eci, epoch)
    np.testing.assert_allclose(field_eci(igrf, r_eci, epoch), rot.T @ b_ecef, atol=1e-16)


def test_below_surface(igrf, epoch):
    with pytest.raises(BelowSurfaceError):
        field_eci(igrf, np.array([6.0e6, 0.0, 0.0]), epoch)


def test_deterministic(igrf, epoch):
    r = np.array([6.0e6, 2.0e6, 2.0e6])
    assert np.array_equal(field_eci(igrf, r, epoch), field_eci(igrf, r, epoch))


def test_leo_envelope(igrf, epoch):
    """|B| at 400 km stays in a sane LEO range along orbits of many planes."""
    mags = []
    for inc in np.radians([20, 51.6, 90, 98, 160]):
        for u in np.linspace(0, 2 * np.pi, 90, endpoint=False):
            r, _ = circular_orbit(6_778_137.0, inc, 0.7, u)
            mags.append(np.linalg.norm(field_eci(igrf, r, epoch)))
    assert 17e-6 <= min(mags) and max(mags) <= 65e-6


def _state(q, r=(6.778e6, 0.0, 0.0)):
    return SimState(0.0, np.array(r), np.zeros(3), np.asarray(q, dtype=float), np.zeros(3))


def test_body_identity(igrf, epoch):
    s = _state(IDENTITY_QUAT)
    np.testing.assert_array_equal(field_body(igrf, s, epoch), field_eci(igrf, s.r_eci, epoch))


def test_body_yaw_180(igrf, epoch):
    s = _state(quat_from_axis_angle([0, 0, 1], math.pi))
    b = field_eci(igrf, s.r_eci, epoch)
    np.testing.assert_allclose(field_body(igrf, s, epoch), [-b[0], -b[1], b[2]], atol=1e-18)


def test_body_isometry(igrf, epoch, rng):
    for _ in range(50):
        d = rng.standard_normal(3)
        s = _state(random_quat(rng), r=7.0e6 * d / np.linalg.norm(d))
        ratio = np.linalg.norm(field_body(igrf, s, epoch)) / np.linalg.norm(field_eci(igrf, s.r_eci, epoch))
        assert ratio == pytest.approx(1.0, abs=1e-12)
