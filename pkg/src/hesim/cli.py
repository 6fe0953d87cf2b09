"""Command line entry point.

Exit codes: 0 success, 2 configuration problem, 3 numerical failure
inside the simulation, 4 I/O failure (unwritable output, unreadable
input). Anything else crashing out of a run exits 1.
"""

import argparse
import json
import sys

from .config import RunConfig
from .errors import ConfigError, NumericalError
from .pipelines import run_hybrid_witness, run_polarization_bell, run_pump_gallery


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (default out/<command>)")
    p.add_argument("--seed", type=int, help="override the detector RNG seed")
    p.add_argument("--l", type=int, dest="charge", help="override the pump OAM charge")
    p.add_argument(
        "--noise", type=float, help="override the white-noise weight p in [0, 1]"
    )
    p.add_argument(
        "--expected",
        action="store_true",
        help="record expected means instead of Poisson-sampled counts",
    )
    p.add_argument(
        "--format",
        action="append",
        choices=("pgm", "csv", "json"),
        dest="formats",
        help="write only these artifact kinds (repeatable; default all)",
    )
    p.add_argument(
        "--dry-run",
        action="store_true",
        help="print the resolved configuration and exit without running",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hesim",
        description=(
            "Simulate transferring a structured classical pump into a hybrid "
            "entangled photon pair and run the measurement chain on it."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser(
        "pump-gallery", help="image the classical pump behind each analyzer"
    )
    _add_common(p)
    p = sub.add_parser(
        "polarization-bell",
        help="fringe sweeps, CHSH, and tomography of the polarization pair",
    )
    _add_common(p)
    p = sub.add_parser(
        "hybrid-witness",
        help="heralded petal images and the hybrid entanglement witness",
    )
    _add_common(p)
    return parser


def _resolve(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig.from_dict({})
    if args.seed is not None:
        cfg.detector.seed = int(args.seed)
    if args.charge is not None:
        cfg.pump = type(cfg.pump)(l=args.charge, phi=cfg.pump.phi, alpha=cfg.pump.alpha)
    if args.noise is not None:
        cfg.noise = type(cfg.noise)(p_white=args.noise, space=cfg.noise.space)
    if args.expected:
        cfg.detector.sampled = False
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        outdir = args.out or f"out/{args.command}"
        if args.dry_run:
            print(json.dumps(cfg.to_dict(), sort_keys=True, indent=2))
            return 0
        if args.command == "pump-gallery":
            manifest = run_pump_gallery(cfg, outdir, formats=args.formats)
            n = len(manifest["images"])
            print(f"wrote {n} pump images to {outdir}")
        elif args.command == "polarization-bell":
            report = run_polarization_bell(cfg, outdir, formats=args.formats)
            vh = report.visibilities["H"].V
            vd = report.visibilities["D"].V
            print(
                f"V_H={vh:.4f} V_D={vd:.4f} "
                f"S={report.S:.4f}+-{report.S_sigma:.4f} F={report.fidelity:.4f}"
            )
            print(f"report written to {outdir}/report.json")
        elif args.command == "hybrid-witness":
            report = run_hybrid_witness(cfg, outdir, formats=args.formats)
            if report.W_sigma is None:
                print(f"W={report.W:.4f} (expected-value run, no bootstrap)")
            else:
                print(f"W={report.W:.4f}+-{report.W_sigma:.4f}")
            print(f"report written to {outdir}/report.json")
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
