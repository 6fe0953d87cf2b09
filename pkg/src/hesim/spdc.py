"""Two-photon state generation from a pair of crossed type-I crystals.

The first crystal converts the H-polarized pump component into a VV pair,
the second converts V into HH. With the pump carrying orbital angular
momentum l and the idler post-selected into the Gaussian (l = 0) mode by
its single-mode fiber, conservation puts all of the pump charge on the
signal photon:

    |H, l>_pump  ->  s |V>_idler |V, l>_signal
    |V, l>_pump  ->    |H>_idler |H, l>_signal

The relative conversion coefficient s between the two crystals is a unit
complex number, -1 by default, which turns the diagonal Gaussian pump into
(|HH> - |VV>)/sqrt(2).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .quantum import (
    DensityMatrix,
    Ket,
    Subsystem,
    partial_trace,
    pol_subsystem,
    project,
)

IDLER = "idler"
SIGNAL_POL = "signal_pol"
SIGNAL_OAM = "signal_oam"


@dataclass(frozen=True)
class CrystalPairConfig:
    """Relative amplitude of the H->VV conversion against V->HH."""

    h_pump_sign: complex = -1.0

    def __post_init__(self):
        s = complex(self.h_pump_sign)
        if abs(abs(s) - 1.0) > 1e-12:
            raise ConfigError(f"h_pump_sign must be a unit complex number, got {s}")
        object.__setattr__(self, "h_pump_sign", s)


def down_convert(pump: Ket, cfg: CrystalPairConfig = CrystalPairConfig()) -> Ket:
    """Map a pol x OAM pump ket onto the post-selected two-photon ket.

    The output lives on (idler pol) x (signal pol) x (signal OAM) and keeps
    the pump's OAM alphabet. The map is an isometry: amplitudes transfer
    unchanged (up to the s coefficient), so inner products between pump
    states are preserved exactly.
    """
    if pump.names() != ("pol", "oam"):
        raise ConfigError(f"pump must live on (pol, oam), got {pump.names()}")
    oam = pump.subsystem("oam")
    n = oam.dim
    s = cfg.h_pump_sign

    pump_amp = pump.amplitudes.reshape(2, n)  # rows H, V
    out = np.zeros((2, 2, n), dtype=complex)  # (idler, signal_pol, signal_oam)
    out[1, 1, :] = s * pump_amp[0, :]  # H pump -> |V V, l>
    out[0, 0, :] = pump_amp[1, :]  # V pump -> |H H, l>

    subsystems = (
        pol_subsystem(IDLER),
        pol_subsystem(SIGNAL_POL),
        Subsystem(SIGNAL_OAM, oam.labels),
    )
    # fix_phase=False: the transfer must stay an isometry, not just agree
    # up to a state-dependent global phase
    return Ket(subsystems, out.reshape(-1), fix_phase=False)


def herald(state, idler_pol: Ket):
    """Condition the signal on an idler polarization detection.

    Returns (signal_state, probability) where the signal keeps both its
    polarization and OAM registers; a null outcome returns (None, p).
    The idler projector may be given on any single 2-dim subsystem, it is
    re-labeled onto the idler register here.
    """
    if len(idler_pol.subsystems) != 1 or idler_pol.dim != 2:
        raise ConfigError("idler projection must be a single polarization ket")
    proj = Ket((pol_subsystem(IDLER),), idler_pol.amplitudes, fix_phase=False)
    return project(state, proj, subsystem=IDLER)


def _occupied_oam(state) -> list:
    """Indices of OAM labels that carry any population."""
    if isinstance(state, Ket):
        dm_oam = np.sum(
            np.abs(state.amplitudes.reshape(state.dims)) ** 2, axis=(0, 1)
        )
    else:
        dm_oam = np.real(np.diagonal(partial_trace(state, keep=SIGNAL_OAM).matrix))
    return [i for i, w in enumerate(dm_oam) if w > 1e-12]


def apply_noise(state, p: float, space: str = "postselected"):
    """Mix in white noise of weight p.

    space = "postselected": identity over idler x signal_pol x the occupied
    OAM pair (the subspace the experiment actually post-selects), embedded
    in the declared alphabet.
    space = "polarization": noise acts on the two polarization qubits only;
    the OAM register keeps its reduced state.
    p = 0 returns the input unchanged (same type).
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"noise weight p={p} outside [0, 1]")
    if p == 0.0:
        return state
    names = state.names()
    if names != (IDLER, SIGNAL_POL, SIGNAL_OAM):
        raise ConfigError(f"expected a two-photon state, got subsystems {names}")
    dm = state if isinstance(state, DensityMatrix) else DensityMatrix.from_ket(state)
    n = dm.dims[2]

    if space == "postselected":
        occ = _occupied_oam(state)
        if not occ:
            raise ConfigError("state has no OAM population")
        diag = np.zeros(n)
        diag[occ] = 1.0
        noise = np.kron(np.eye(4), np.diag(diag)) / (4.0 * len(occ))
    elif space == "polarization":
        rho_oam = partial_trace(dm, keep=SIGNAL_OAM).matrix
        noise = np.kron(np.eye(4) / 4.0, rho_oam)
    else:
        raise ConfigError(f"unknown noise space {space!r}")

    mat = (1.0 - p) * dm.matrix + p * noise
    return DensityMatrix(dm.subsystems, mat)
