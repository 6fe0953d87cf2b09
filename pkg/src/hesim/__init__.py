"""Desk-scale simulator of a polarization-OAM hybrid entangled photon pair.

A classical pump whose polarization and orbital angular momentum are
non-separable is handed to a paired-crystal down-conversion source; the
resulting two-photon state carries the same structure as entanglement
between the idler's polarization and the signal's spatial mode. The
package walks the whole bench: pump preparation, the transfer rules,
analyzers and heralded imaging, fringe and petal fits, CHSH, tomography,
and the two-basis witness, with deterministic Poisson statistics on top.
"""

from .analysis import (
    AnalysisReport,
    VisibilityResult,
    chsh,
    chsh_table,
    fit_visibility,
    pair_visibility,
    tomography_counts,
    tomography_linear,
    witness,
    witness_expectation,
)
from .config import RunConfig
from .detection import SETTINGS, AnalyzerSetting, DetectorModel, analyzer_state
from .errors import ConfigError, NumericalError
from .jones import SagnacConfig, prepare_pump, pump_state
from .lgmodes import FieldImage, LGMode, lg_amplitude, peak_radius, petal_fit
from .pipelines import run_hybrid_witness, run_polarization_bell, run_pump_gallery
from .quantum import (
    DensityMatrix,
    InvalidCompositionError,
    Ket,
    Subsystem,
    fidelity,
    oam_subsystem,
    partial_trace,
    pol_ket,
    pol_subsystem,
    project,
    state_fidelity,
    tensor,
)
from .spdc import CrystalPairConfig, apply_noise, down_convert, herald

__version__ = "0.1.0"

__all__ = [
    "AnalysisReport",
    "AnalyzerSetting",
    "ConfigError",
    "CrystalPairConfig",
    "DensityMatrix",
    "DetectorModel",
    "FieldImage",
    "InvalidCompositionError",
    "Ket",
    "LGMode",
    "NumericalError",
    "RunConfig",
    "SETTINGS",
    "SagnacConfig",
    "Subsystem",
    "VisibilityResult",
    "analyzer_state",
    "apply_noise",
    "chsh",
    "chsh_table",
    "down_convert",
    "fidelity",
    "fit_visibility",
    "herald",
    "lg_amplitude",
    "oam_subsystem",
    "pair_visibility",
    "partial_trace",
    "peak_radius",
    "petal_fit",
    "pol_ket",
    "pol_subsystem",
    "prepare_pump",
    "project",
    "pump_state",
    "run_hybrid_witness",
    "run_polarization_bell",
    "run_pump_gallery",
    "state_fidelity",
    "tensor",
    "tomography_counts",
    "tomography_linear",
    "witness",
    "witness_expectation",
]
