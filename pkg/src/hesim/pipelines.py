"""End-to-end experiment drivers: source, measurement chain, files, report.

Three benches share one configured source:

* pump_gallery images the structured pump itself through a polarization
  analyzer, the classical check that the non-separable beam is prepared.
* polarization_bell runs with the mode-transfer plate removed (the pump
  carries no OAM) and tests the two-photon polarization state: fringe
  sweeps, CHSH, and tomography.
* hybrid_witness keeps the plate in, heralds the signal photon on idler
  polarization choices, and reads the petal rotation out of the heralded
  images into the witness W.
"""

import dataclasses
import json
import math
import os

import numpy as np

from . import analysis, detection, lgmodes
from .analysis import (
    AnalysisReport,
    angular_basis_scan,
    bootstrap_errors,
    chsh,
    chsh_table,
    fit_visibility,
    sweep_series,
    tomography_counts,
    tomography_linear,
    witness_expectation,
)
from .config import RunConfig
from .detection import SETTINGS, DetectorModel
from .errors import ConfigError
from .jones import pump_state
from .quantum import Ket, fidelity, oam_subsystem, pol_ket, project
from .spdc import CrystalPairConfig, apply_noise, down_convert


def detector_from_config(cfg: RunConfig) -> DetectorModel:
    d = cfg.detector
    return DetectorModel(
        pair_rate=d.pair_rate,
        accidental_rate=d.accidental_rate,
        integration_time=d.integration_time,
        rate_scale_per_l=dict(d.rate_scale_per_l),
        seed=d.seed,
    )


def _grid(cfg: RunConfig, l: int):
    extent = cfg.grid.extent
    if extent is None:
        extent = lgmodes.default_extent(cfg.grid.waist, max(abs(l), 1))
    return (cfg.grid.n, extent)


def _alphabet(l: int) -> tuple:
    m = max(abs(int(l)), 1)
    return tuple(range(-m, m + 1))


def build_source(cfg: RunConfig, l: int | None = None):
    """Pump -> paired crystals -> optional white noise, as one state."""
    if l is None:
        l = cfg.pump.l
    pump = pump_state(l, cfg.pump.phi, cfg.pump.alpha, _alphabet(l))
    psi = down_convert(pump, CrystalPairConfig())
    return apply_noise(psi, cfg.noise.p_white, space=cfg.noise.space)


ALL_FORMATS = frozenset({"pgm", "csv", "json"})


def _formats(formats) -> frozenset:
    chosen = ALL_FORMATS if formats is None else frozenset(formats)
    unknown = chosen - ALL_FORMATS
    if unknown:
        raise ConfigError(f"unknown output formats {sorted(unknown)}")
    return chosen


def _write_json(doc: dict, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_sweep_csv(series, path: str) -> None:
    lines = ["angle_deg,counts"]
    for ang, val in series:
        lines.append(f"{math.degrees(ang):.12g},{val:.12g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# -- bench 1: classical pump gallery -----------------------------------------

GALLERY_BASES = ("H", "A", "R", "V", "D", "L")


def run_pump_gallery(cfg: RunConfig, outdir: str, formats=None) -> dict:
    """Image the pump behind each analyzer setting and with none at all.

    Writes one PGM per projection plus a manifest with the projection
    probabilities and, for l >= 1, the fitted petal orientation of each
    structured image. ``formats`` filters which artifact kinds are written
    (any of "pgm", "csv", "json"; default all).
    """
    fmt = _formats(formats)
    os.makedirs(outdir, exist_ok=True)
    l = cfg.pump.l
    pump = pump_state(l, cfg.pump.phi, cfg.pump.alpha, _alphabet(l))
    grid = _grid(cfg, l)
    waist = cfg.grid.waist
    annulus = cfg.analysis.annulus
    if annulus is None and l >= 1:
        annulus = lgmodes.default_annulus(waist, l)

    manifest = {
        "kind": "pump_gallery",
        "l": l,
        "grid": {"n": grid[0], "extent": grid[1], "waist": waist},
        "images": {},
    }
    for label in GALLERY_BASES:
        img = lgmodes.render_projection(pump, pol_ket(label), grid, waist)
        fname = f"pump_{label}.pgm"
        if "pgm" in fmt:
            lgmodes.write_pgm(img, os.path.join(outdir, fname))
        entry = {
            "file": fname,
            "projection_probability": img.meta.get("projection_probability"),
            "empty": img.empty,
        }
        if l >= 1 and not img.empty:
            hist = lgmodes.angular_profile(img, cfg.analysis.nbins, annulus)
            fit = lgmodes.petal_fit(hist, l)
            entry["petals"] = {
                "theta0_deg": None if fit.degenerate else math.degrees(fit.theta0),
                "visibility": fit.visibility,
                "n_maxima": int(len(lgmodes.angular_maxima(hist))),
                "degenerate": fit.degenerate,
            }
        manifest["images"][label] = entry

    img = lgmodes.render_unprojected(pump, grid, waist)
    if "pgm" in fmt:
        lgmodes.write_pgm(img, os.path.join(outdir, "pump_none.pgm"))
    manifest["images"]["none"] = {"file": "pump_none.pgm", "empty": img.empty}

    if "json" in fmt:
        _write_json(
            analysis._json_ready(manifest), os.path.join(outdir, "manifest.json")
        )
    return manifest


# -- bench 2: two-photon polarization tests -----------------------------------


def run_polarization_bell(cfg: RunConfig, outdir: str, formats=None) -> AnalysisReport:
    """Fringe sweeps, CHSH, and tomography on the polarization pair.

    The mode-transfer plate is out for this bench, so the source is built
    at l = 0 regardless of the configured pump charge; phi, alpha, and the
    noise settings still apply.
    """
    fmt = _formats(formats)
    os.makedirs(outdir, exist_ok=True)
    state = build_source(cfg, l=0)
    det = detector_from_config(cfg)
    sampled = cfg.detector.sampled

    angles_deg = np.arange(0.0, 360.0, cfg.analysis.sweep_step_deg)
    visibilities = {}
    for basis in ("H", "D"):
        series = sweep_series(
            state, SETTINGS[basis], det, l=0,
            angles_deg=angles_deg, sampled=sampled, tag=f"sweep_{basis}",
        )
        if "csv" in fmt:
            _write_sweep_csv(series, os.path.join(outdir, f"sweep_{basis}.csv"))
        visibilities[basis] = fit_visibility(series)

    table = chsh_table(
        state, det, cfg.analysis.chsh_settings, l=0, sampled=sampled, tag="chsh"
    )
    if "csv" in fmt:
        np.savetxt(
            os.path.join(outdir, "chsh_counts.csv"), table, fmt="%.12g", delimiter=","
        )
    s_val, s_sigma = chsh(table)

    counts = tomography_counts(state, det, l=0, sampled=sampled, tag="tomo")
    rho = tomography_linear(counts)
    # noiseless reference: same source, OAM register projected off (it is
    # trivially |0> here, so this is exact, not a post-selection)
    ideal_full = down_convert(
        pump_state(0, cfg.pump.phi, cfg.pump.alpha, (0,)), CrystalPairConfig()
    )
    oam0 = Ket.basis_state((oam_subsystem((0,), name="signal_oam"),), 0)
    ideal, _ = project(ideal_full, oam0, subsystem="signal_oam")
    fid = fidelity(rho, ideal)

    report = AnalysisReport(
        kind="polarization_bell",
        S=s_val,
        S_sigma=s_sigma,
        fidelity=fid,
        rho=rho,
        visibilities=visibilities,
        config=cfg.to_dict(),
    )
    if "json" in fmt:
        with open(os.path.join(outdir, "report.json"), "w") as fh:
            fh.write(report.to_json())
    return report


# -- bench 3: hybrid witness ----------------------------------------------------


def run_hybrid_witness(cfg: RunConfig, outdir: str, formats=None) -> AnalysisReport:
    """Heralded petal images in four idler bases, witness W with bootstrap.

    Alongside the image route the Born-level expectation of the same
    witness is recorded, so discretisation and shot noise stay visible as
    the difference between the two.
    """
    fmt = _formats(formats)
    os.makedirs(outdir, exist_ok=True)
    l = cfg.pump.l
    if l < 1:
        raise ConfigError("hybrid witness needs a pump charge l >= 1")
    state = build_source(cfg)
    det = detector_from_config(cfg)
    sampled = cfg.detector.sampled
    grid = _grid(cfg, l)
    waist = cfg.grid.waist
    annulus = cfg.analysis.annulus or lgmodes.default_annulus(waist, l)

    scan = angular_basis_scan(
        state, l, det, grid, waist,
        annulus=annulus, nbins=cfg.analysis.nbins, sampled=sampled, tag="scan",
    )
    if "pgm" in fmt:
        for basis, img in scan.images.items():
            lgmodes.write_pgm(img, os.path.join(outdir, f"heralded_{basis}.pgm"))
    if "csv" in fmt:
        for basis, hist in scan.histograms.items():
            lgmodes.write_histogram_csv(
                hist, os.path.join(outdir, f"profile_{basis}.csv")
            )
    img_none = detection.heralded_image(
        state, None, SETTINGS["D"], grid, waist, det, l,
        sampled=sampled, tag=("scan", "none"),
    )
    if "pgm" in fmt:
        lgmodes.write_pgm(img_none, os.path.join(outdir, "heralded_none.pgm"))

    expected = witness_expectation(state, l)

    w_sigma = None
    boot = None
    if sampled and cfg.analysis.n_bootstrap >= 2:

        def one(seed: int) -> dict:
            det_i = dataclasses.replace(det, seed=seed)
            sc = angular_basis_scan(
                state, l, det_i, grid, waist,
                annulus=annulus, nbins=cfg.analysis.nbins, sampled=True, tag="scan",
            )
            return {
                "W": sc.W,
                "V_DA": sc.pair_vis.get("DA", float("nan")),
                "V_RL": sc.pair_vis.get("RL", float("nan")),
            }

        boot = bootstrap_errors(one, cfg.analysis.n_bootstrap, det.seed)
        w_sigma = boot.sigma("W")

    petals = {
        basis: {
            "theta0_deg": None if fit.degenerate else math.degrees(fit.theta0),
            "visibility": fit.visibility,
            "n_maxima": int(len(lgmodes.angular_maxima(scan.histograms[basis]))),
            "degenerate": fit.degenerate,
        }
        for basis, fit in scan.fits.items()
    }
    petals["pair_visibility"] = dict(scan.pair_vis)
    petals["expectation"] = {
        "W": expected["W"],
        "V_DA": expected["V_DA"],
        "V_RL": expected["V_RL"],
    }
    if boot is not None:
        petals["bootstrap"] = {
            "n": boot.n_iter,
            "W_mean": boot.mean("W"),
            "V_DA_sigma": boot.sigma("V_DA"),
            "V_RL_sigma": boot.sigma("V_RL"),
        }

    report = AnalysisReport(
        kind="hybrid_witness",
        W=scan.W,
        W_sigma=w_sigma,
        petals=petals,
        config=cfg.to_dict(),
    )
    if "json" in fmt:
        with open(os.path.join(outdir, "report.json"), "w") as fh:
            fh.write(report.to_json())
    return report
