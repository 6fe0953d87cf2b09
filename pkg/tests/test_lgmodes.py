"""Field rendering and petal analysis, anchored to 1-D scan oracles."""

import math

import numpy as np
import pytest

from hesim.errors import NumericalError
from hesim.jones import pump_state
from hesim.lgmodes import (
    AngularHistogram,
    FieldImage,
    LGMode,
    angular_maxima,
    angular_profile,
    circular_distance,
    default_annulus,
    default_extent,
    lg_amplitude,
    mode_stack,
    peak_radius,
    petal_fit,
    pixel_polar,
    read_pgm,
    render_projection,
    render_unprojected,
    write_histogram_csv,
    write_pgm,
)
from hesim.quantum import pol_ket

GRID = (256, default_extent(1.0, 3))


def scan_peak_oracle(l, w=1.0):
    # maximize r^(2|l|) exp(-2 r^2 / w^2) on a fine 1-D grid
    r = np.linspace(1e-6, 4 * w, 200001)
    return float(r[np.argmax(2 * abs(l) * np.log(r) - 2 * r**2 / w**2)])


def test_lg_amplitude_on_axis():
    g = LGMode(0, 1.0)
    center = lg_amplitude(np.array(0.0), np.array(0.0), g)
    assert center.imag == pytest.approx(0.0, abs=1e-15)
    assert center.real > 0
    off = lg_amplitude(np.array(0.7), np.array(0.3), g)
    assert abs(off) < abs(center)
    for l in (1, 2, 3):
        assert lg_amplitude(np.array(0.0), np.array(1.0), LGMode(l, 1.0)) == 0


def test_peak_radius_matches_scan_oracle():
    assert scan_peak_oracle(3) == pytest.approx(math.sqrt(1.5), abs=1e-3)
    assert peak_radius(LGMode(3, 1.0)) == pytest.approx(1.224744871391589, abs=1e-12)
    assert peak_radius(LGMode(3, 1.0)) == pytest.approx(scan_peak_oracle(3), abs=1e-3)
    assert peak_radius(LGMode(0, 1.0)) == 0.0


def test_mode_normalization_under_quadrature():
    n, extent = GRID
    r, theta = pixel_polar(n, extent)
    px_area = (extent / n) ** 2
    for l in (0, 1, 3):
        amp = lg_amplitude(r, theta, LGMode(l, 1.0))
        assert float(np.sum(np.abs(amp) ** 2) * px_area) == pytest.approx(1.0, abs=1e-3)


def test_mode_orthonormality_on_grid():
    n, extent = GRID
    px_area = (extent / n) ** 2
    stack = mode_stack((-2, 0, 1, 3), n, extent, 1.0)
    gram = np.einsum("aij,bij->ab", stack.conj(), stack) * px_area
    assert np.allclose(gram, np.eye(4), atol=1e-3)


def test_pixel_polar_orientation():
    r, theta = pixel_polar(16, 8.0)
    # rightmost pixel of the center row points along theta = 0
    assert abs(theta[7, 15]) < 0.2
    # top row points upward (theta near pi/2)
    assert abs(theta[0, 8] - np.pi / 2) < 0.2
    assert r[7, 7] == r[8, 8]


# -- projection images ----------------------------------------------------------


def test_project_h_gives_uniform_vortex_ring():
    img = render_projection(pump_state(1), pol_ket("H"), GRID, 1.0)
    # a single vortex is azimuthally uniform: no petal modulation survives the
    # fit, and the image inherits the full symmetry of the grid
    fit = petal_fit(angular_profile(img, 72, default_annulus(1.0, 1)), 1)
    assert fit.visibility < 1e-6
    assert np.allclose(img.pixels, img.pixels.T, atol=1e-12)
    assert np.allclose(img.pixels, img.pixels[::-1, :], atol=1e-12)
    # the field's own angular profile at the peak radius is flat
    theta = np.linspace(0, 2 * np.pi, 720, endpoint=False)
    rp = peak_radius(LGMode(1, 1.0))
    vals = np.abs(lg_amplitude(np.full_like(theta, rp), theta, LGMode(1, 1.0))) ** 2
    assert np.std(vals) / np.mean(vals) < 1e-6
    assert img.pixels.max() == pytest.approx(1.0, abs=1e-12)


def test_project_d_gives_six_petals_at_l3():
    img = render_projection(pump_state(3), pol_ket("D"), GRID, 1.0)
    hist = angular_profile(img, 72, default_annulus(1.0, 3))
    maxima = angular_maxima(hist)
    assert len(maxima) == 6
    spacing = np.diff(sorted(maxima))
    assert np.allclose(spacing, math.radians(60.0), atol=2 * 2 * np.pi / 72)


def test_zero_probability_projection_flagged_empty():
    # pump with alpha=1 has no V component at all
    img = render_projection(pump_state(1, alpha=1.0), pol_ket("V"), GRID, 1.0)
    assert img.empty
    assert not img.pixels.any()


def test_unprojected_pump_is_uniform_ring():
    img = render_unprojected(pump_state(1), GRID, 1.0)
    hist = angular_profile(img, 72, default_annulus(1.0, 1))
    fit = petal_fit(hist, 1)
    assert fit.visibility < 1e-6


# -- angular profiles -------------------------------------------------------------


def test_uniform_ring_bins_equal_within_pixelization():
    # constant-intensity annulus: bin sums track per-bin pixel area, which
    # evens out only once each wedge holds thousands of pixels
    n, extent = 2048, 2.4
    r, _ = pixel_polar(n, extent)
    ring = ((r >= 0.65) & (r <= 1.15)).astype(float)
    hist = angular_profile(FieldImage(ring, extent), 72, (0.65, 1.15))
    assert hist.bins.min() > 0
    assert (hist.bins.max() - hist.bins.min()) / hist.bins.max() < 0.02


def test_two_petal_profile_has_two_maxima():
    grid = (256, default_extent(1.0, 1))
    img = render_projection(pump_state(1), pol_ket("D"), grid, 1.0)
    hist = angular_profile(img, 72, default_annulus(1.0, 1))
    maxima = angular_maxima(hist)
    assert len(maxima) == 2
    gap = circular_distance(maxima[0], maxima[1], 2 * np.pi)
    assert gap == pytest.approx(np.pi, abs=2 * np.pi / 72 + 1e-9)


def test_empty_annulus_raises():
    img = render_projection(pump_state(1), pol_ket("H"), GRID, 1.0)
    with pytest.raises(ValueError):
        angular_profile(img, 72, (0.0001, 0.0002))


def test_histogram_validation():
    with pytest.raises(ValueError):
        AngularHistogram(np.ones(4), (0.5, 1.5))  # fewer than 8 bins


# -- petal fits --------------------------------------------------------------------


def synthetic_hist(l, theta0=0.0, background=0.0, nbins=72):
    centers = (np.arange(nbins) + 0.5) * 2 * np.pi / nbins
    vals = np.cos(l * (centers - theta0)) ** 2 + background
    return AngularHistogram(vals, (0.5, 1.5))


def test_petal_fit_self_consistency():
    fit = petal_fit(synthetic_hist(3), 3)
    assert fit.visibility == pytest.approx(1.0, abs=1e-6)
    assert min(fit.theta0, np.pi / 3 - fit.theta0) == pytest.approx(0.0, abs=1e-6)


def test_petal_fit_recovers_rotation():
    fit = petal_fit(synthetic_hist(3, theta0=math.radians(15.0)), 3)
    assert fit.theta0 == pytest.approx(math.radians(15.0), abs=1e-6)


def test_petal_fit_background_visibility():
    # cos^2 + 0.1 : (max - min)/(max + min) = 1/1.2 wait: max 1.1, min 0.1 -> 10/12
    fit = petal_fit(synthetic_hist(2, background=0.1), 2)
    assert fit.visibility == pytest.approx(1.0 / 1.2, abs=1e-9)


def test_petal_fit_mixture_background_visibility():
    # 0.9 cos^2 + 0.1 flat: V = 0.9 / 1.1
    nbins = 72
    centers = (np.arange(nbins) + 0.5) * 2 * np.pi / nbins
    vals = 0.9 * np.cos(3 * centers) ** 2 + 0.1
    fit = petal_fit(AngularHistogram(vals, (0.5, 1.5)), 3)
    assert fit.visibility == pytest.approx(9.0 / 11.0, abs=1e-9)


def test_petal_fit_flat_flags_degenerate():
    fit = petal_fit(AngularHistogram(np.full(72, 2.5), (0.5, 1.5)), 3)
    assert fit.degenerate
    assert fit.visibility == 0.0
    assert math.isnan(fit.theta0)


def test_petal_fit_argument_guards():
    with pytest.raises(ValueError):
        petal_fit(synthetic_hist(1, nbins=8), 3)  # needs >= 4l bins
    with pytest.raises(ValueError):
        petal_fit(synthetic_hist(1), 0)


def test_rotation_law_phase_to_angle():
    # adding phase phi on the -l amplitude rotates petals by phi / (2l)
    bin_width = 2 * np.pi / 72
    for l in (1, 2, 3):
        base = render_projection(pump_state(l, 0.0), pol_ket("D"), GRID, 1.0)
        t0 = petal_fit(angular_profile(base, 72, default_annulus(1.0, l)), l).theta0
        for phi in (np.pi / 4, np.pi / 2, np.pi):
            img = render_projection(pump_state(l, phi), pol_ket("D"), GRID, 1.0)
            fit = petal_fit(angular_profile(img, 72, default_annulus(1.0, l)), l)
            shift = circular_distance(fit.theta0, t0, np.pi / l)
            expected = phi / (2 * l)
            expected = min(expected % (np.pi / l), np.pi / l - expected % (np.pi / l))
            assert abs(shift - expected) <= bin_width


# -- serialization -----------------------------------------------------------------


def test_pgm_round_trip(tmp_path):
    img = render_projection(pump_state(1), pol_ket("D"), (64, 8.0), 1.0)
    path = tmp_path / "petals.pgm"
    write_pgm(img, path)
    data = read_pgm(path)
    assert data.shape == (64, 64)
    expected = np.rint(img.pixels / img.pixels.max() * 65535)
    assert np.array_equal(data, expected)


def test_pgm_header_format(tmp_path):
    img = FieldImage(np.ones((16, 16)), 4.0)
    path = tmp_path / "flat.pgm"
    write_pgm(img, path)
    head = path.read_text().split()[:4]
    assert head == ["P2", "16", "16", "65535"]


def test_histogram_csv_format(tmp_path):
    hist = synthetic_hist(1, nbins=8)
    path = tmp_path / "profile.csv"
    write_histogram_csv(hist, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "bin_center_deg,value"
    assert len(lines) == 9
    first_center = float(lines[1].split(",")[0])
    assert first_center == pytest.approx(22.5)


def test_render_determinism():
    a = render_projection(pump_state(2), pol_ket("L"), (128, 10.0), 1.0)
    b = render_projection(pump_state(2), pol_ket("L"), (128, 10.0), 1.0)
    assert np.array_equal(a.pixels, b.pixels)


def test_field_image_validation():
    with pytest.raises(ValueError):
        FieldImage(np.ones((8, 8)), 4.0)  # too small
    with pytest.raises(NumericalError):
        FieldImage(-np.ones((16, 16)), 4.0)
    with pytest.raises(NumericalError):
        FieldImage(np.full((16, 16), np.nan), 4.0)
