"""State algebra over named polarization/OAM subsystems.

Conventions, fixed once and used everywhere:

* Basis order is the declaration order of the subsystems. Within a
  subsystem, polarization runs H before V and OAM charges ascend, so a
  pol x OAM ket with alphabet {-1, 0, +1} is laid out
  (H,-1) (H,0) (H,+1) (V,-1) (V,0) (V,+1).
* Circular polarization handedness: R = (H - iV)/sqrt(2), L = (H + iV)/sqrt(2).
* Ket constructors renormalise and rotate the global phase so the first
  nonzero amplitude is a non-negative real. That makes equality of states
  directly testable on the amplitude arrays.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

NORM_TOL = 1e-12
HERM_TOL = 1e-12
PSD_TOL = 1e-9
NULL_TOL = 1e-15

DEFAULT_OAM_ALPHABET = tuple(range(-3, 4))
POL_LABELS = ("H", "V")


class InvalidCompositionError(ValueError):
    """Composition of states whose subsystem names collide or mismatch."""


@dataclass(frozen=True)
class Subsystem:
    """A named tensor factor with a fixed, ordered label alphabet."""

    name: str
    labels: tuple

    def __post_init__(self):
        if not self.name:
            raise ValueError("subsystem needs a name")
        if len(self.labels) < 1 or len(set(self.labels)) != len(self.labels):
            raise ValueError(f"bad label alphabet for {self.name!r}: {self.labels}")

    @property
    def dim(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"label {label!r} not in subsystem {self.name!r}") from None


def pol_subsystem(name: str = "pol") -> Subsystem:
    return Subsystem(name, POL_LABELS)


def oam_subsystem(alphabet=DEFAULT_OAM_ALPHABET, name: str = "oam") -> Subsystem:
    alphabet = tuple(int(l) for l in alphabet)
    if tuple(sorted(alphabet)) != alphabet:
        raise ValueError("OAM alphabet must be ascending")
    return Subsystem(name, alphabet)


def _check_subsystems(subsystems):
    subsystems = tuple(subsystems)
    names = [s.name for s in subsystems]
    if len(set(names)) != len(names):
        raise InvalidCompositionError(f"duplicate subsystem names: {names}")
    return subsystems


def _fix_global_phase(amp: np.ndarray) -> np.ndarray:
    # rotate so the first amplitude above threshold is real and >= 0
    for a in amp:
        if abs(a) > 1e-12:
            return amp * np.exp(-1j * np.angle(a))
    return amp


class Ket:
    """Normalised pure state over an ordered tuple of subsystems."""

    __slots__ = ("_subsystems", "_amp")

    def __init__(self, subsystems, amplitudes, fix_phase: bool = True):
        self._subsystems = _check_subsystems(subsystems)
        amp = np.asarray(amplitudes, dtype=complex).reshape(-1)
        dim = int(np.prod([s.dim for s in self._subsystems]))
        if amp.size != dim:
            raise ValueError(f"expected {dim} amplitudes, got {amp.size}")
        norm = np.linalg.norm(amp)
        if norm < 1e-15:
            raise ValueError("zero state has no direction")
        amp = amp / norm
        if fix_phase:
            amp = _fix_global_phase(amp)
        amp.setflags(write=False)
        self._amp = amp

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_terms(cls, subsystems, terms: dict, fix_phase: bool = True) -> "Ket":
        """Build from {label-tuple: amplitude}; labels of single subsystems may be bare."""
        subsystems = _check_subsystems(subsystems)
        dims = [s.dim for s in subsystems]
        amp = np.zeros(int(np.prod(dims)), dtype=complex)
        for label, value in terms.items():
            if not isinstance(label, tuple):
                label = (label,)
            if len(label) != len(subsystems):
                raise ValueError(f"label {label!r} does not address {len(subsystems)} subsystems")
            idx = np.ravel_multi_index(
                tuple(s.index(l) for s, l in zip(subsystems, label)), dims
            )
            amp[idx] += value
        return cls(subsystems, amp, fix_phase=fix_phase)

    @classmethod
    def basis_state(cls, subsystems, label) -> "Ket":
        return cls.from_terms(subsystems, {label: 1.0})

    # -- structure ---------------------------------------------------------

    @property
    def subsystems(self) -> tuple:
        return self._subsystems

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amp

    @property
    def dims(self) -> tuple:
        return tuple(s.dim for s in self._subsystems)

    @property
    def dim(self) -> int:
        return self._amp.size

    def names(self):
        return tuple(s.name for s in self._subsystems)

    def axis(self, name: str) -> int:
        for i, s in enumerate(self._subsystems):
            if s.name == name:
                return i
        raise KeyError(f"no subsystem named {name!r}")

    def subsystem(self, name: str) -> Subsystem:
        return self._subsystems[self.axis(name)]

    def basis_labels(self):
        return list(itertools.product(*(s.labels for s in self._subsystems)))

    def amplitude(self, label) -> complex:
        if not isinstance(label, tuple):
            label = (label,)
        idx = np.ravel_multi_index(
            tuple(s.index(l) for s, l in zip(self._subsystems, label)), self.dims
        )
        return complex(self._amp[idx])

    def amplitude_map(self) -> dict:
        return {lab: complex(a) for lab, a in zip(self.basis_labels(), self._amp)}

    def isclose(self, other: "Ket", atol: float = 1e-9) -> bool:
        return (
            self._subsystems == other._subsystems
            and bool(np.allclose(self._amp, other._amp, atol=atol))
        )

    def __repr__(self):
        terms = ", ".join(
            f"{lab}: {a:.4g}" for lab, a in self.amplitude_map().items() if abs(a) > 1e-9
        )
        return f"Ket({terms})"


def pol_ket(label: str, name: str = "pol") -> Ket:
    """Standard polarization states on a single 2-dim subsystem."""
    s2 = 1.0 / np.sqrt(2.0)
    table = {
        "H": (1.0, 0.0),
        "V": (0.0, 1.0),
        "D": (s2, s2),
        "A": (s2, -s2),
        "R": (s2, -1j * s2),
        "L": (s2, 1j * s2),
    }
    try:
        amp = table[label]
    except KeyError:
        raise KeyError(f"unknown polarization label {label!r}") from None
    return Ket((pol_subsystem(name),), amp)


class DensityMatrix:
    """Hermitian, unit-trace operator over named subsystems.

    Positivity is diagnosed, not enforced: ``psd_flag`` reports whether the
    spectrum is non-negative to within PSD_TOL. Callers that need a physical
    matrix after noisy reconstruction must opt in via ``clip_to_physical``.
    """

    __slots__ = ("_subsystems", "_mat", "_eigvals")

    def __init__(self, subsystems, matrix):
        self._subsystems = _check_subsystems(subsystems)
        mat = np.asarray(matrix, dtype=complex)
        dim = int(np.prod([s.dim for s in self._subsystems]))
        if mat.shape != (dim, dim):
            raise ValueError(f"expected {dim}x{dim} matrix, got {mat.shape}")
        herm_defect = np.max(np.abs(mat - mat.conj().T)) if dim else 0.0
        if herm_defect > HERM_TOL:
            raise ValueError(f"matrix is not Hermitian (defect {herm_defect:.3e})")
        tr = mat.trace()
        if abs(tr - 1.0) > 1e-10:
            raise ValueError(f"trace must be 1, got {tr}")
        mat = mat / tr.real  # remove residual float drift
        mat.setflags(write=False)
        self._mat = mat
        self._eigvals = np.linalg.eigvalsh(mat)

    @classmethod
    def from_ket(cls, psi: Ket) -> "DensityMatrix":
        return cls(psi.subsystems, np.outer(psi.amplitudes, psi.amplitudes.conj()))

    @property
    def subsystems(self) -> tuple:
        return self._subsystems

    @property
    def matrix(self) -> np.ndarray:
        return self._mat

    @property
    def dims(self) -> tuple:
        return tuple(s.dim for s in self._subsystems)

    @property
    def dim(self) -> int:
        return self._mat.shape[0]

    @property
    def psd_flag(self) -> bool:
        return bool(self._eigvals[0] >= -PSD_TOL)

    def eigenvalues(self) -> np.ndarray:
        return self._eigvals.copy()

    def names(self):
        return tuple(s.name for s in self._subsystems)

    def axis(self, name: str) -> int:
        for i, s in enumerate(self._subsystems):
            if s.name == name:
                return i
        raise KeyError(f"no subsystem named {name!r}")

    def purity(self) -> float:
        return float(np.real(np.trace(self._mat @ self._mat)))

    def clip_to_physical(self) -> "DensityMatrix":
        """Project onto the PSD cone (clip negative eigenvalues, renormalise)."""
        vals, vecs = np.linalg.eigh(self._mat)
        vals = np.clip(vals, 0.0, None)
        total = vals.sum()
        if total < 1e-15:
            raise NumericalError("matrix has no positive weight to keep")
        mat = (vecs * (vals / total)) @ vecs.conj().T
        mat = 0.5 * (mat + mat.conj().T)
        return DensityMatrix(self._subsystems, mat)

    def isclose(self, other: "DensityMatrix", atol: float = 1e-9) -> bool:
        return (
            self._subsystems == other._subsystems
            and bool(np.allclose(self._mat, other._mat, atol=atol))
        )

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, purity={self.purity():.4f}, psd={self.psd_flag})"


# -- composition and measurement -------------------------------------------


def tensor(a: Ket, b: Ket) -> Ket:
    """Tensor product; fails if the two states share a subsystem name."""
    shared = set(a.names()) & set(b.names())
    if shared:
        raise InvalidCompositionError(f"subsystem name collision: {sorted(shared)}")
    amp = np.kron(a.amplitudes, b.amplitudes)
    return Ket(a.subsystems + b.subsystems, amp)


def _single_subsystem_proj(proj: Ket, target: Subsystem):
    if len(proj.subsystems) != 1:
        raise InvalidCompositionError("projection ket must live on a single subsystem")
    ps = proj.subsystems[0]
    if ps.labels != target.labels:
        raise InvalidCompositionError(
            f"projection alphabet {ps.labels} does not match subsystem "
            f"{target.name!r} with {target.labels}"
        )
    return proj.amplitudes


def project(state, proj: Ket, subsystem: str | None = None):
    """Project one named subsystem onto ``proj``.

    Returns ``(residual, probability)`` where residual is the normalised
    conditional state of the remaining subsystems. A null outcome
    (probability below NULL_TOL) or a projection that consumes every
    subsystem returns residual ``None``.
    """
    if subsystem is None:
        subsystem = proj.subsystems[0].name
    if isinstance(state, Ket):
        ax = state.axis(subsystem)
        v = _single_subsystem_proj(proj, state.subsystems[ax])
        t = state.amplitudes.reshape(state.dims)
        res = np.tensordot(v.conj(), t, axes=([0], [ax]))
        p = float(np.sum(np.abs(res) ** 2))
        remaining = state.subsystems[:ax] + state.subsystems[ax + 1 :]
        if p < NULL_TOL or not remaining:
            return None, p
        return Ket(remaining, res.reshape(-1) / np.sqrt(p)), p
    if isinstance(state, DensityMatrix):
        ax = state.axis(subsystem)
        v = _single_subsystem_proj(proj, state.subsystems[ax])
        k = len(state.subsystems)
        t = state.matrix.reshape(state.dims + state.dims)
        # contract ket index with <proj| and bra index with |proj>
        t = np.tensordot(v.conj(), t, axes=([0], [ax]))
        t = np.tensordot(t, v, axes=([k - 1 + ax], [0]))
        remaining = state.subsystems[:ax] + state.subsystems[ax + 1 :]
        d_rem = int(np.prod([s.dim for s in remaining])) if remaining else 1
        mat = t.reshape(d_rem, d_rem)
        p = float(np.real(np.trace(mat)))
        if p < NULL_TOL or not remaining:
            return None, max(p, 0.0)
        mat = mat / p
        mat = 0.5 * (mat + mat.conj().T)
        return DensityMatrix(remaining, mat), p
    raise TypeError(f"cannot project a {type(state).__name__}")


def joint_probability(state, projections: dict) -> float:
    """Born probability for simultaneous projections {subsystem: ket}."""
    if not projections:
        raise ValueError("need at least one projection")
    if isinstance(state, Ket):
        t = state.amplitudes.reshape(state.dims)
        # contract from the highest axis down so earlier indices stay valid
        order = sorted(((state.axis(n), n) for n in projections), reverse=True)
        for ax, name in order:
            v = _single_subsystem_proj(projections[name], state.subsystems[ax])
            t = np.tensordot(v.conj(), np.moveaxis(t, ax, 0), axes=([0], [0]))
        return float(np.sum(np.abs(t) ** 2))
    if isinstance(state, DensityMatrix):
        p_total = 1.0
        current = state
        for name in list(projections):
            if current is None:
                return 0.0
            residual, p = project(current, projections[name], subsystem=name)
            p_total *= p
            if p < NULL_TOL:
                return 0.0
            current = residual
        return p_total
    raise TypeError(f"cannot measure a {type(state).__name__}")


def partial_trace(state, keep) -> DensityMatrix:
    """Reduced density matrix on the named subsystems in ``keep``."""
    dm = state if isinstance(state, DensityMatrix) else DensityMatrix.from_ket(state)
    keep = [keep] if isinstance(keep, str) else list(keep)
    names = list(dm.names())
    if not keep or any(n not in names for n in keep):
        raise KeyError(f"keep={keep} must name a subset of {names}")
    k = len(names)
    ket_ix = [chr(97 + i) for i in range(k)]
    bra_ix = [ket_ix[i] if names[i] not in keep else chr(97 + k + i) for i in range(k)]
    kept = [i for i in range(k) if names[i] in keep]
    out = "".join(ket_ix[i] for i in kept) + "".join(bra_ix[i] for i in kept)
    t = dm.matrix.reshape(dm.dims + dm.dims)
    red = np.einsum("".join(ket_ix) + "".join(bra_ix) + "->" + out, t)
    sub = tuple(dm.subsystems[i] for i in kept)
    d = int(np.prod([s.dim for s in sub]))
    mat = red.reshape(d, d)
    mat = 0.5 * (mat + mat.conj().T)
    return DensityMatrix(sub, mat)


def fidelity(rho, target: Ket) -> float:
    """Overlap <target|rho|target>; accepts a Ket in place of rho."""
    if isinstance(rho, Ket):
        if rho.subsystems != target.subsystems:
            raise InvalidCompositionError("states live on different subsystems")
        return float(np.abs(np.vdot(target.amplitudes, rho.amplitudes)) ** 2)
    if rho.subsystems != target.subsystems:
        raise InvalidCompositionError("states live on different subsystems")
    v = target.amplitudes
    val = np.vdot(v, rho.matrix @ v)
    if abs(val.imag) > 1e-10:
        raise NumericalError(f"fidelity came out complex: {val}")
    out = float(val.real)
    if out < -1e-9 or out > 1.0 + 1e-9:
        raise NumericalError(f"fidelity {out} outside [0, 1]")
    return min(max(out, 0.0), 1.0)


def state_fidelity(a, b) -> float:
    """Uhlmann fidelity; either argument may be a Ket or a DensityMatrix.

    For a pure argument this reduces to the overlap returned by
    ``fidelity``; for two mixed states it is (tr sqrt(sqrt(a) b sqrt(a)))^2.
    """
    if isinstance(b, Ket):
        return fidelity(a, b)
    if isinstance(a, Ket):
        return fidelity(b, a)
    if a.subsystems != b.subsystems:
        raise InvalidCompositionError("states live on different subsystems")
    w, u = np.linalg.eigh(a.matrix)
    w = np.clip(w, 0.0, None)
    sqrt_a = (u * np.sqrt(w)) @ u.conj().T
    m = sqrt_a @ b.matrix @ sqrt_a
    ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    root = float(np.sqrt(np.clip(ev, 0.0, None)).sum())
    out = root * root
    if out > 1.0 + 1e-9:
        raise NumericalError(f"fidelity {out} outside [0, 1]")
    return min(out, 1.0)


def white_noise_mix(psi: Ket, p: float) -> DensityMatrix:
    """(1-p) |psi><psi| + p I/dim over psi's full declared space."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise weight p={p} outside [0, 1]")
    d = psi.dim
    mat = (1.0 - p) * np.outer(psi.amplitudes, psi.amplitudes.conj())
    mat += (p / d) * np.eye(d)
    return DensityMatrix(psi.subsystems, mat)
