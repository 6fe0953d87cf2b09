"""Laguerre-Gauss p=0 modes, projection images, and petal-pattern analysis.

Geometry conventions (fixed, also used by the angular histogram):

* Images are square, pixels indexed (row, col). Pixel centers sit at
  x = (col - (N-1)/2) * extent/N and y = ((N-1)/2 - row) * extent/N,
  so row 0 is the top of the picture and +y points up.
* The polar angle is atan2(y, x) folded into [0, 2*pi); angular bin k of an
  nbins histogram covers [2*pi*k/nbins, 2*pi*(k+1)/nbins) and is reported
  by its center angle.
* Which lab direction is theta = 0 is a simulation convention; fitted petal
  orientations are only meaningful as differences between projections.

Rendering is a closed-form evaluation on the pixel grid (no stochastic
element, no evaluation-order dependence), so identical inputs give bit
identical images.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class LGMode:
    """Single-ring Laguerre-Gauss mode (radial order zero)."""

    l: int
    waist: float = 1.0

    def __post_init__(self):
        if self.waist <= 0:
            raise ValueError("waist must be positive")


def lg_amplitude(r, theta, mode: LGMode) -> np.ndarray:
    """Normalised transverse amplitude of a p=0 LG mode.

    A(r, theta) = C * (sqrt(2) r / w)^|l| * exp(-r^2/w^2) * exp(i l theta)
    with C = sqrt(2 / (pi |l|!)) / w so that the squared modulus integrates
    to one over the plane.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    w = mode.waist
    al = abs(int(mode.l))
    c = math.sqrt(2.0 / (math.pi * math.factorial(al))) / w
    radial = c * (np.sqrt(2.0) * r / w) ** al * np.exp(-(r * r) / (w * w))
    return radial * np.exp(1j * mode.l * theta)


def peak_radius(mode: LGMode) -> float:
    """Radius of maximum intensity, w * sqrt(|l|/2) (zero for l = 0)."""
    return mode.waist * math.sqrt(abs(mode.l) / 2.0)


def default_extent(waist: float, max_abs_l: int) -> float:
    # wide enough that the brightest ring and its tails fit with margin
    return 8.0 * waist * math.sqrt(max_abs_l / 2.0 + 1.0)


def default_annulus(waist: float, l: int) -> tuple:
    """Analysis annulus bracketing the petal ring at +-35%."""
    if l == 0:
        raise ValueError("a Gaussian mode has no petal ring to bracket")
    rp = waist * math.sqrt(abs(l) / 2.0)
    return (0.65 * rp, 1.35 * rp)


@dataclass
class FieldImage:
    """Pixel intensities plus the physical size they were sampled over."""

    pixels: np.ndarray
    extent: float
    meta: dict = field(default_factory=dict)
    empty: bool = False

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim != 2 or px.shape[0] != px.shape[1] or px.shape[0] < 16:
            raise ValueError(f"image must be square and at least 16x16, got {px.shape}")
        if not np.all(np.isfinite(px)) or np.any(px < 0):
            raise NumericalError("image has negative or non-finite pixels")
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        self.pixels = px

    @property
    def n(self) -> int:
        return self.pixels.shape[0]


def pixel_polar(n: int, extent: float):
    """(r, theta) arrays at the pixel centers of an n x n image."""
    step = extent / n
    c = (n - 1) / 2.0
    cols = (np.arange(n) - c) * step
    rows = (c - np.arange(n)) * step
    x = cols[None, :]
    y = rows[:, None]
    r = np.hypot(x, y)  # broadcasts to (n, n)
    theta = np.mod(np.arctan2(y, x), TWO_PI)
    return r, theta


def mode_stack(alphabet, n: int, extent: float, waist: float) -> np.ndarray:
    """Complex field of every mode in the OAM alphabet, shape (len, n, n)."""
    r, theta = pixel_polar(n, extent)
    return np.stack([lg_amplitude(r, theta, LGMode(l, waist)) for l in alphabet])


def render_from_density(rho_oam: np.ndarray, alphabet, grid, waist: float) -> np.ndarray:
    """Intensity of an OAM-space density operator on the pixel grid.

    rho_oam may be unnormalised (its trace carries the event rate); the
    returned array integrates to trace * (flux captured by this grid).
    """
    n, extent = int(grid[0]), float(grid[1])
    rho = np.asarray(rho_oam, dtype=complex)
    k = len(tuple(alphabet))
    if rho.shape != (k, k):
        raise ValueError(f"density block {rho.shape} does not match alphabet size {k}")
    fields = mode_stack(alphabet, n, extent, waist)
    intensity = np.einsum("ab,aij,bij->ij", rho, fields, fields.conj())
    out = np.real(intensity)
    out[out < 0] = 0.0  # rounding dust from the complex cross terms
    return out


def render_projection(state, pol, grid, waist: float) -> FieldImage:
    """Project a pol x OAM ket onto a polarization ket and image the rest.

    Zero-probability projections return an all-zero image flagged ``empty``
    instead of a normalised artifact. Pixels are max-normalised for display,
    matching how camera frames are usually shown.
    """
    from .quantum import project  # local import keeps module load order simple

    residual, prob = project(state, pol)
    n, extent = int(grid[0]), float(grid[1])
    meta = {"projection_probability": prob}
    if residual is None:
        return FieldImage(np.zeros((n, n)), extent, meta=meta, empty=True)
    alphabet = residual.subsystems[0].labels
    amp = residual.amplitudes
    intensity = render_from_density(np.outer(amp, amp.conj()), alphabet, grid, waist)
    peak = intensity.max()
    if peak > 0:
        intensity = intensity / peak
    return FieldImage(intensity, extent, meta=meta)


def render_unprojected(state, grid, waist: float) -> FieldImage:
    """Incoherent sum over an orthonormal polarization basis (no analyzer)."""
    from .quantum import partial_trace

    names = [s.name for s in state.subsystems]
    oam_name = names[-1]
    rho = partial_trace(state, keep=oam_name)
    alphabet = rho.subsystems[0].labels
    intensity = render_from_density(rho.matrix, alphabet, grid, waist)
    peak = intensity.max()
    if peak > 0:
        intensity = intensity / peak
    return FieldImage(intensity, float(grid[1]), meta={"projection": None})


# -- angular analysis --------------------------------------------------------


@dataclass
class AngularHistogram:
    """Counts (or intensity) summed per polar-angle bin inside an annulus."""

    bins: np.ndarray
    annulus: tuple

    def __post_init__(self):
        b = np.asarray(self.bins, dtype=float)
        if b.ndim != 1 or b.size < 8:
            raise ValueError("need at least 8 angular bins")
        if not np.all(np.isfinite(b)):
            raise NumericalError("histogram has non-finite bins")
        self.bins = b

    @property
    def nbins(self) -> int:
        return self.bins.size

    @property
    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.nbins) + 0.5) * TWO_PI / self.nbins


def angular_profile(img: FieldImage, nbins: int, annulus: tuple) -> AngularHistogram:
    """Sum image pixels into polar-angle bins restricted to an annulus."""
    r_min, r_max = float(annulus[0]), float(annulus[1])
    if not 0.0 <= r_min < r_max:
        raise ValueError(f"bad annulus ({r_min}, {r_max})")
    if nbins < 8:
        raise ValueError("need at least 8 angular bins")
    r, theta = pixel_polar(img.n, img.extent)
    mask = (r >= r_min) & (r <= r_max)
    if not mask.any():
        raise ValueError("annulus contains no pixels on this grid")
    idx = np.minimum((theta[mask] / TWO_PI * nbins).astype(int), nbins - 1)
    bins = np.bincount(idx, weights=img.pixels[mask], minlength=nbins)
    return AngularHistogram(bins, (r_min, r_max))


def angular_maxima(hist: AngularHistogram, min_prominence: float = 0.1) -> np.ndarray:
    """Bin-center angles of petal maxima.

    Bins get a one-bin circular smoothing, runs of equal values count as a
    single peak, and peaks whose prominence falls below min_prominence times
    the smoothed range are dropped. The pruning matters at N=256: per-bin
    pixel-area jitter puts percent-level wiggles on petal shoulders that a
    bare neighbor comparison would count as extra maxima. Returned angles are
    refined below one bin: a parabola through the peak and its neighbors, or
    the midpoint of an exactly tied plateau.
    """
    b = hist.bins
    n = b.size
    sm = (np.roll(b, 1) + b + np.roll(b, -1)) / 3.0
    rng = float(sm.max() - sm.min())
    if rng == 0.0:
        return hist.bin_centers[:0]
    # plateau-aware candidates: maximal circular runs of one value, strictly
    # above both sides, represented by the run's first bin
    candidates = []
    starts = np.nonzero(sm != np.roll(sm, 1))[0]
    if starts.size == 0:
        return hist.bin_centers[:0]
    for s in starts:
        v = sm[s]
        e = s
        while sm[(e + 1) % n] == v:
            e = (e + 1) % n
        if sm[(s - 1) % n] < v and sm[(e + 1) % n] < v:
            run = (e - s) % n + 1
            candidates.append((s, e, run, (s + (run - 1) // 2) % n))
    keep = []
    for s, e, run, idx in candidates:
        h = sm[idx]
        side_minima = []
        for step in (1, -1):
            lowest = h
            j = idx
            for _ in range(n - 1):
                j = (j + step) % n
                if sm[j] > h:
                    break
                lowest = min(lowest, sm[j])
            side_minima.append(lowest)
        if h - max(side_minima) >= min_prominence * rng:
            keep.append((s, run, idx))
    width = TWO_PI / n
    angles = []
    for s, run, idx in sorted(keep, key=lambda t: t[2]):
        if run > 1:
            # exact ties straddle the true peak; take the plateau midpoint
            frac = s + run / 2.0 - 0.5
        else:
            # sub-bin refinement: parabola through the peak and its neighbors
            ym, y0, yp = sm[(idx - 1) % n], sm[idx], sm[(idx + 1) % n]
            denom = ym - 2.0 * y0 + yp
            delta = 0.0 if denom == 0.0 else 0.5 * (ym - yp) / denom
            frac = idx + min(max(delta, -0.5), 0.5)
        angles.append(((frac + 0.5) * width) % TWO_PI)
    return np.array(angles)


@dataclass
class PetalFit:
    """Least-squares fit of B * (1 + V cos(2 l (theta - theta0))) / 2."""

    l: int
    theta0: float
    visibility: float
    base: float
    residual: float
    degenerate: bool = False

    def curve(self, theta) -> np.ndarray:
        return (
            self.base
            * (1.0 + self.visibility * np.cos(2 * self.l * (np.asarray(theta) - self.theta0)))
            / 2.0
        )


def _cosine_lsq(angles: np.ndarray, values: np.ndarray, freq: int):
    """Linear fit of m + a cos(f t) + b sin(f t); returns (m, amp, phase, rms)."""
    design = np.column_stack(
        [np.ones_like(angles), np.cos(freq * angles), np.sin(freq * angles)]
    )
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    m, a, b = coef
    resid = values - design @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    return float(m), float(np.hypot(a, b)), float(np.arctan2(b, a)), rms


def petal_fit(hist: AngularHistogram, l: int) -> PetalFit:
    """Fit the 2l-petal model to an angular histogram.

    theta0 is folded into [0, pi/l); visibility is clipped to [0, 1]. A flat
    histogram (no modulation to lock onto) comes back flagged degenerate
    with theta0 = nan.
    """
    l = int(l)
    if l < 1:
        raise ValueError("petal fit needs l >= 1")
    if hist.nbins < 4 * l:
        raise ValueError(f"need at least {4 * l} bins to resolve 2l={2 * l} petals")
    m, amp, phase, rms = _cosine_lsq(hist.bin_centers, hist.bins, 2 * l)
    period = np.pi / l
    if m <= 0 or amp / max(abs(m), 1e-300) < 1e-12:
        return PetalFit(l, float("nan"), 0.0, max(m, 0.0), rms, degenerate=True)
    theta0 = (phase / (2.0 * l)) % period
    vis = min(amp / m, 1.0)
    return PetalFit(l, float(theta0), float(vis), float(m), rms)


def circular_distance(a: float, b: float, period: float) -> float:
    """Shortest separation of two orientations on a circle of given period."""
    d = abs(a - b) % period
    return min(d, period - d)


# -- serialization -----------------------------------------------------------

PGM_MAXVAL = 65535


def write_pgm(img: FieldImage, path) -> None:
    """Plain-text 16-bit PGM, max-normalised, row-major from the top row."""
    px = img.pixels
    peak = px.max()
    scale = PGM_MAXVAL / peak if peak > 0 else 0.0
    quant = np.rint(px * scale).astype(int)
    lines = ["P2", f"{img.n} {img.n}", f"{PGM_MAXVAL}"]
    lines.extend(" ".join(str(v) for v in row) for row in quant)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    with open(path) as fh:
        tokens = fh.read().split()
    if tokens[0] != "P2":
        raise ValueError("only plain PGM (P2) is supported")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array(tokens[4:], dtype=int)
    if data.size != w * h:
        raise ValueError("pixel count does not match header")
    if data.max(initial=0) > maxval:
        raise ValueError("pixel exceeds declared maxval")
    return data.reshape(h, w)


def write_histogram_csv(hist: AngularHistogram, path) -> None:
    """Two columns: bin center in degrees, summed value."""
    lines = ["bin_center_deg,value"]
    for c, v in zip(hist.bin_centers, hist.bins):
        lines.append(f"{math.degrees(c):.12g},{v:.12g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
