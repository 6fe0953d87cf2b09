"""Fringe fits, CHSH, linear tomography, entanglement witness, bootstrap.

The two entanglement figures of merit each exist along two routes that are
kept deliberately separate:

* a desk-scale route that walks the full measurement chain (projection
  images or count tables, possibly Poisson-sampled), and
* an expectation route evaluated directly from Born probabilities, used to
  pin ideal values and to calibrate noise levels.

Collapsing one into the other would hide exactly the discretisation and
shot-noise effects this package exists to expose.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import detection, lgmodes
from .detection import (
    DetectorModel,
    SETTINGS,
    analyzer_state,
    coincidence_prob,
    conditional_oam,
    derived_seed,
    linear_analyzer_ket,
    sample_counts,
    thread_budget,
)
from .errors import ConfigError, NumericalError
from .lgmodes import AngularHistogram, PetalFit, circular_distance, petal_fit
from .quantum import DensityMatrix, Ket, pol_ket, pol_subsystem
from .spdc import SIGNAL_OAM

TWO_PI = 2.0 * np.pi
CHSH_SETTINGS_DEG = (0.0, 45.0, 22.5, 67.5)
BELL_VISIBILITY_BOUND = 1.0 / math.sqrt(2.0)


# -- sinusoidal visibility fits ----------------------------------------------


@dataclass
class VisibilityResult:
    """Fringe visibility with its fitted phase and a fit-derived stderr."""

    V: float
    theta0: float
    stderr: float
    flags: tuple = ()


def _weighted_cosine_fit(angles, values, freq):
    """m + a cos + b sin by plain least squares, with parameter covariance."""
    design = np.column_stack(
        [np.ones_like(angles), np.cos(freq * angles), np.sin(freq * angles)]
    )
    coef, _, rank, _ = np.linalg.lstsq(design, values, rcond=None)
    if rank < 3:
        raise NumericalError("angle set cannot resolve a fringe (rank-deficient fit)")
    resid = values - design @ coef
    dof = max(len(values) - 3, 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return coef, cov


def fit_visibility(series) -> VisibilityResult:
    """Fit C(theta) = B (1 + V cos(2(theta - theta0))) / 2 to a sweep.

    ``series`` is a sequence of (angle_rad, counts) pairs covering at least
    half a turn with 8 or more points. V is reported in [0, 1]; a value that
    had to be clipped, or a fringe too weak to orient, is flagged rather
    than silently repaired.
    """
    pts = [(float(a), float(v)) for a, v in series]
    if len(pts) < 8:
        raise ValueError("need at least 8 sweep points")
    angles = np.array([p[0] for p in pts])
    values = np.array([p[1] for p in pts])
    if angles.max() - angles.min() < np.pi - 1e-9:
        raise ValueError("sweep must span at least 180 degrees")

    coef, cov = _weighted_cosine_fit(angles, values, 2)
    m, a, b = coef
    amp = math.hypot(a, b)
    flags = []
    if m <= 0:
        return VisibilityResult(0.0, float("nan"), float("nan"), ("degenerate",))
    v_raw = amp / m
    if amp / m < 1e-12:
        theta0 = float("nan")
        flags.append("degenerate")
    else:
        theta0 = (math.atan2(b, a) / 2.0) % np.pi

    # delta method for V = sqrt(a^2 + b^2) / m
    if amp > 0:
        grad = np.array([-amp / m**2, a / (amp * m), b / (amp * m)])
    else:
        grad = np.array([0.0, 1.0 / m, 1.0 / m])
    stderr = float(np.sqrt(max(grad @ cov @ grad, 0.0)))

    v = v_raw
    if v > 1.0:
        v = 1.0
        if v_raw > 1.0 + 1e-9:  # genuine overshoot, not roundoff
            flags.append("clipped")
    if v - stderr < 0.0:
        flags.append("v_minus_sigma_subzero")
    return VisibilityResult(float(v), theta0, stderr, tuple(flags))


def sweep_series(
    state,
    idler,
    det: DetectorModel,
    l: int = 0,
    angles_deg=None,
    sampled: bool = True,
    tag: str = "sweep",
):
    """Coincidence counts against the signal-arm analyzer dial angle."""
    if angles_deg is None:
        angles_deg = np.arange(0.0, 360.0, 10.0)
    out = []
    for k, deg in enumerate(angles_deg):
        ang = math.radians(float(deg))
        prob = coincidence_prob(
            state, idler, linear_analyzer_ket(ang, "signal", name="signal_pol")
        )
        if sampled:
            counts = float(sample_counts(prob, det, l, tag=(tag, k)))
        else:
            counts = det.mean_counts(prob, l)
        out.append((ang, counts))
    return out


# -- CHSH ---------------------------------------------------------------------


def chsh_table(
    state,
    det: DetectorModel,
    settings_deg=CHSH_SETTINGS_DEG,
    l: int = 0,
    sampled: bool = True,
    tag: str = "chsh",
) -> np.ndarray:
    """4x4 coincidence-count table at the standard CHSH analyzer settings.

    Rows are the idler dial at (a, a+90, a', a'+90); columns the signal dial
    at (b, b+90, b', b'+90), each in its own arm frame.
    """
    a, ap, b, bp = (math.radians(float(x)) for x in settings_deg)
    idler_angles = (a, a + np.pi / 2, ap, ap + np.pi / 2)
    signal_angles = (b, b + np.pi / 2, bp, bp + np.pi / 2)
    table = np.zeros((4, 4))
    for i, ia in enumerate(idler_angles):
        ket_i = linear_analyzer_ket(ia, "idler", name="idler")
        for j, sa in enumerate(signal_angles):
            ket_s = linear_analyzer_ket(sa, "signal", name="signal_pol")
            prob = coincidence_prob(state, ket_i, ket_s)
            if sampled:
                table[i, j] = sample_counts(prob, det, l, tag=(tag, i, j))
            else:
                table[i, j] = det.mean_counts(prob, l)
    return table


def _correlation(block: np.ndarray):
    total = block.sum()
    if total <= 0:
        raise NumericalError("zero total counts in a correlation block")
    e = (block[0, 0] + block[1, 1] - block[0, 1] - block[1, 0]) / total
    var = max(1.0 - e * e, 0.0) / total  # Poisson propagation through the ratio
    return float(e), float(var)


def chsh(counts16) -> tuple:
    """S and its Poisson-propagated error from a 4x4 coincidence table.

    S = |E(a,b) - E(a,b') + E(a',b) + E(a',b')| where each E is read from
    the corresponding 2x2 sub-block of the table.
    """
    t = np.asarray(counts16, dtype=float)
    if t.shape != (4, 4) or np.any(t < 0):
        raise ValueError("expected a non-negative 4x4 count table")
    e = {}
    var = {}
    for bi, rows in enumerate((slice(0, 2), slice(2, 4))):
        for bj, cols in enumerate((slice(0, 2), slice(2, 4))):
            e[bi, bj], var[bi, bj] = _correlation(t[rows, cols])
    s = abs(e[0, 0] - e[0, 1] + e[1, 0] + e[1, 1])
    sigma = math.sqrt(sum(var.values()))
    return float(s), float(sigma)


# -- linear tomography ---------------------------------------------------------

# canonical 16-projection set; the first four form a complete basis and fix
# the count normalisation
TOMO_SETTINGS = (
    ("H", "H"), ("H", "V"), ("V", "V"), ("V", "H"),
    ("R", "H"), ("R", "V"), ("D", "V"), ("D", "H"),
    ("D", "R"), ("D", "D"), ("R", "D"), ("H", "D"),
    ("V", "D"), ("V", "L"), ("H", "L"), ("R", "L"),
)


def _tomo_design() -> np.ndarray:
    rows = []
    for li, ls in TOMO_SETTINGS:
        vi = pol_ket(li).amplitudes
        vs = pol_ket(ls).amplitudes
        v = np.kron(vi, vs)
        proj = np.outer(v, v.conj())
        rows.append(proj.T.reshape(-1))  # Tr(P rho) = vec(P^T) . vec(rho)
    return np.array(rows)


_TOMO_A = _tomo_design()


def tomography_counts(
    state, det: DetectorModel, l: int = 0, sampled: bool = True, tag: str = "tomo"
) -> np.ndarray:
    """Coincidence counts for the 16 canonical projection pairs."""
    counts = np.zeros(16)
    for k, (li, ls) in enumerate(TOMO_SETTINGS):
        prob = coincidence_prob(state, SETTINGS[li], SETTINGS[ls])
        if sampled:
            counts[k] = sample_counts(prob, det, l, tag=(tag, k))
        else:
            counts[k] = det.mean_counts(prob, l)
    return counts


def tomography_linear(counts16) -> DensityMatrix:
    """Linear inversion of the 16 canonical counts to a two-qubit matrix.

    The result is Hermitian with unit trace by construction; positivity is
    reported through ``psd_flag`` and never enforced here. Use
    ``clip_to_physical`` downstream if a physical matrix is required.
    """
    n = np.asarray(counts16, dtype=float).reshape(-1)
    if n.size != 16 or np.any(n < 0):
        raise ValueError("expected 16 non-negative counts")
    total = n[:4].sum()
    if total <= 0:
        raise NumericalError("no counts in the normalising basis")
    p = n / total
    rho_vec = np.linalg.solve(_TOMO_A, p.astype(complex))
    mat = rho_vec.reshape(4, 4)
    mat = 0.5 * (mat + mat.conj().T)
    subs = (pol_subsystem("idler"), pol_subsystem("signal_pol"))
    return DensityMatrix(subs, mat)


# -- entanglement witness -------------------------------------------------------


# Petal orientation of each idler basis relative to the A maximum, in units of
# one petal period pi/l. Only the value mod a half period matters downstream,
# so a swapped R/L or mirrored D convention reads out identically.
_BASIS_OFFSETS = {"A": 0.0, "D": 0.5, "R": 0.25, "L": 0.75}


def pair_visibility(fit_x: PetalFit, fit_y: PetalFit, anchor=None) -> float:
    """Correlation contrast of two conjugate heralded petal curves.

    Both fitted curves are read at the anchor orientation and a quarter
    petal-period away; the four values form a normalised difference. For a
    hybrid entangled state the curves are complementary and the contrast
    equals the fringe visibility; for an idler-separable state the heralded
    pattern cannot depend on the idler basis and the contrast collapses.

    The anchor defaults to the first curve's own maximum, which is fine for
    a lone pair. A witness summing two basis pairs must pass anchors a rigid
    45/l degrees apart instead: if each pair re-centres on its own best
    orientation, a separable state with a petal-shaped signal marginal can
    push the sum above one.
    """
    if fit_x.l != fit_y.l:
        raise ValueError("petal fits disagree on l")
    l = fit_x.l
    if anchor is None:
        anchor = fit_x.theta0 if not fit_x.degenerate else 0.0
    t1 = float(anchor)
    t2 = t1 + np.pi / (2 * l)
    cx1, cx2 = float(fit_x.curve(t1)), float(fit_x.curve(t2))
    cy1, cy2 = float(fit_y.curve(t1)), float(fit_y.curve(t2))
    denom = cx1 + cx2 + cy1 + cy2
    if denom <= 1e-30:
        return 0.0
    return abs(cx1 + cy2 - cx2 - cy1) / denom


def witness(v_rl: VisibilityResult, v_da: VisibilityResult) -> tuple:
    """W = V_R/L + V_D/A with errors combined in quadrature.

    W <= 1 for every idler-separable state; the ideal hybrid state reaches 2.
    """
    w = v_rl.V + v_da.V
    sigma = math.sqrt(v_rl.stderr**2 + v_da.stderr**2)
    return float(w), float(sigma)


@dataclass
class AngularScan:
    """Everything the petal pipeline produced for one state and l."""

    l: int
    fits: dict
    histograms: dict
    images: dict
    pair_vis: dict
    W: float


def angular_basis_scan(
    state,
    l: int,
    det: DetectorModel,
    grid,
    waist: float,
    annulus=None,
    nbins: int = 72,
    bases=("A", "D", "R", "L"),
    signal_pol: str = "D",
    sampled: bool = True,
    tag: str = "scan",
) -> AngularScan:
    """Heralded image -> angular profile -> petal fit, per idler basis."""
    if annulus is None:
        annulus = lgmodes.default_annulus(waist, l)
    fits, hists, images = {}, {}, {}
    for basis in bases:
        img = detection.heralded_image(
            state,
            SETTINGS[basis],
            SETTINGS[signal_pol],
            grid,
            waist,
            det,
            l,
            sampled=sampled,
            tag=(tag, basis),
        )
        hist = lgmodes.angular_profile(img, nbins, annulus)
        fits[basis] = petal_fit(hist, l)
        hists[basis] = hist
        images[basis] = img
    ref = _scan_reference(fits, l)
    pair_vis = {}
    if "D" in fits and "A" in fits:
        pair_vis["DA"] = pair_visibility(fits["A"], fits["D"], anchor=ref)
    if "R" in fits and "L" in fits:
        pair_vis["RL"] = pair_visibility(
            fits["R"], fits["L"], anchor=ref + np.pi / (4 * l)
        )
    w = sum(pair_vis.values()) if len(pair_vis) == 2 else float("nan")
    return AngularScan(l, fits, hists, images, pair_vis, w)


def _scan_reference(fits: dict, l: int) -> float:
    """Orientation of the A-basis maximum, shared by both witness pairs.

    Recovered from whichever basis fit is usable, by backing out that
    basis's known offset. Keeping one reference is what makes the witness
    a fixed observable; how the reference noise enters cancels to first
    order because every read-out sits at a stationary point of its curve.
    """
    period = np.pi / l
    for basis in ("A", "D", "R", "L"):
        fit = fits.get(basis)
        if fit is not None and not fit.degenerate:
            return fit.theta0 - _BASIS_OFFSETS[basis] * period
    return 0.0


def _oam_curve_params(block: np.ndarray, alphabet, l: int):
    """(baseline, amplitude, theta0) of the exact angular density.

    Valid when the only coherence in the block links -l and +l; any other
    off-diagonal weight would add angular frequencies the two-point readout
    below does not model, so it is rejected.
    """
    alphabet = list(alphabet)
    ip, im = alphabet.index(+l), alphabet.index(-l)
    off = block.copy()
    off[ip, im] = off[im, ip] = 0.0
    np.fill_diagonal(off, 0.0)
    if np.max(np.abs(off)) > 1e-10:
        raise NumericalError("state carries OAM coherences outside the +-l pair")
    base = float(np.real(np.trace(block)))
    coh = complex(block[ip, im])  # <+l| rho |-l>, multiplies exp(+2 i l theta)
    amp = 2.0 * abs(coh)
    theta0 = (-np.angle(coh) / (2.0 * l)) % (np.pi / l) if amp > 0 else float("nan")
    return base, amp, theta0


def witness_expectation(state, l: int, signal_pol: str = "D") -> dict:
    """Witness from exact Born-level angular densities (no grid, no noise).

    Serves as the oracle the desk-scale image route is checked against.
    """
    l = int(l)
    if l < 1:
        raise ValueError("hybrid witness needs l >= 1")
    alphabet = state.subsystems[state.axis(SIGNAL_OAM)].labels
    params = {}
    for basis in ("A", "D", "R", "L"):
        block, _ = conditional_oam(state, SETTINGS[basis], SETTINGS[signal_pol])
        params[basis] = _oam_curve_params(block, alphabet, l)

    def val(basis, t):
        b, a, t0 = params[basis]
        if not math.isfinite(t0):
            return b
        return b + a * math.cos(2 * l * (t - t0))

    ref = 0.0
    for basis in ("A", "D", "R", "L"):
        _, amp, t0 = params[basis]
        if amp > 0 and math.isfinite(t0):
            ref = t0 - _BASIS_OFFSETS[basis] * (np.pi / l)
            break

    def contrast(x, y, t1):
        # both witness pairs read at orientations tied to the one reference
        t2 = t1 + np.pi / (2 * l)
        cx1, cx2 = val(x, t1), val(x, t2)
        cy1, cy2 = val(y, t1), val(y, t2)
        denom = cx1 + cx2 + cy1 + cy2
        if denom <= 1e-30:
            return 0.0
        return abs(cx1 + cy2 - cx2 - cy1) / denom

    v_da = contrast("A", "D", ref)
    v_rl = contrast("R", "L", ref + np.pi / (4 * l))
    return {
        "V_DA": v_da,
        "V_RL": v_rl,
        "W": v_da + v_rl,
        "theta0": {b: params[b][2] for b in params},
        "baseline": {b: params[b][0] for b in params},
    }


# -- bootstrap ------------------------------------------------------------------


@dataclass
class BootstrapResult:
    samples: dict
    n_iter: int

    def sigma(self, name: str) -> float:
        vals = self.samples[name]
        if len(vals) < 2:
            return float("nan")  # one repetition cannot estimate spread
        return float(np.std(vals, ddof=1))

    def mean(self, name: str) -> float:
        return float(np.mean(self.samples[name]))


def bootstrap_errors(pipeline, n_iter: int, seed: int) -> BootstrapResult:
    """Parametric bootstrap: rerun a sampled pipeline with derived seeds.

    ``pipeline`` maps an integer seed to a {statistic: value} dict. Each
    iteration gets a seed that is a pure function of (seed, iteration), so
    the result is reproducible for any worker count (workers are capped by
    HE_SIM_THREADS).
    """
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    seeds = [derived_seed(seed, "bootstrap", i) for i in range(n_iter)]
    workers = min(thread_budget(), n_iter)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(pipeline, seeds))
    else:
        results = [pipeline(s) for s in seeds]
    names = results[0].keys()
    samples = {k: np.array([r[k] for r in results], dtype=float) for k in names}
    return BootstrapResult(samples, n_iter)


# -- report ----------------------------------------------------------------------

SCHEMA_VERSION = 1


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return None
        return float(f"{x:.12g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    return obj


@dataclass
class AnalysisReport:
    """Serializable summary of one simulated experiment."""

    kind: str
    S: float | None = None
    S_sigma: float | None = None
    W: float | None = None
    W_sigma: float | None = None
    fidelity: float | None = None
    rho: DensityMatrix | None = None
    visibilities: dict = field(default_factory=dict)
    petals: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def violation_sigmas(self) -> dict:
        """Distance above the classical bounds, recomputed on demand."""
        out = {}
        if self.S is not None and self.S_sigma and self.S_sigma > 0:
            out["chsh"] = (self.S - 2.0) / self.S_sigma
        if self.W is not None and self.W_sigma and self.W_sigma > 0:
            out["witness"] = (self.W - 1.0) / self.W_sigma
        return out

    def bell_bound_flag(self) -> bool | None:
        """True when both sweep visibilities clear 1/sqrt(2)."""
        if "H" not in self.visibilities or "D" not in self.visibilities:
            return None
        return bool(
            self.visibilities["H"].V > BELL_VISIBILITY_BOUND
            and self.visibilities["D"].V > BELL_VISIBILITY_BOUND
        )

    def to_dict(self) -> dict:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "violation_sigmas": self.violation_sigmas(),
            "config": self.config,
        }
        if self.S is not None:
            doc["chsh"] = {"S": self.S, "sigma": self.S_sigma}
        if self.W is not None:
            doc["witness"] = {"W": self.W, "sigma": self.W_sigma}
        if self.fidelity is not None:
            doc["fidelity"] = self.fidelity
        if self.rho is not None:
            doc["rho"] = {
                "re": np.real(self.rho.matrix).tolist(),
                "im": np.imag(self.rho.matrix).tolist(),
                "psd": self.rho.psd_flag,
            }
        if self.visibilities:
            flag = self.bell_bound_flag()
            doc["visibilities"] = {
                k: {
                    "V": v.V,
                    "theta0_deg": math.degrees(v.theta0)
                    if math.isfinite(v.theta0)
                    else None,
                    "stderr": v.stderr,
                    "flags": list(v.flags),
                }
                for k, v in self.visibilities.items()
            }
            if flag is not None:
                doc["bell_bound_flag"] = flag
        if self.petals:
            doc["petals"] = self.petals
        return _json_ready(doc)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"
