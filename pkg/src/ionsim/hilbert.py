"""Dense linear algebra on the truncated spin-1/2 (x) harmonic-oscillator space.

Basis ordering is spin-major: ``index = s * (n_max + 1) + n`` with ``s = 0``
for spin down and ``s = 1`` for spin up.  Units use hbar = 1, so every
Hamiltonian is an angular frequency and ``exp(-i H t)`` is the propagator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

DOWN = 0
UP = 1

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10
NORM_TOL = 1e-12
DEFAULT_TRUNCATION_TOL = 1e-10


class DimensionError(ValueError):
    """Operands live on incompatible spaces."""


class NotHermitianError(ValueError):
    pass


class TruncationError(RuntimeError):
    """Population reached the top of the retained Fock ladder."""

    def __init__(self, leaked: float, tol: float, where: str = ""):
        self.leaked = leaked
        self.tol = tol
        msg = f"truncation guard violated: {leaked:.3e} population in top two Fock levels (tol {tol:.1e})"
        if where:
            msg += f" during {where}"
        super().__init__(msg)


@dataclass(frozen=True)
class HilbertSpace:
    """Spin-1/2 tensored with Fock levels ``0..n_max`` (inclusive)."""

    n_max: int

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max!r}")

    @property
    def n_levels(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1)

    def index(self, spin: int, n: int) -> int:
        if spin not in (DOWN, UP):
            raise ValueError(f"spin must be 0 (down) or 1 (up), got {spin!r}")
        if not 0 <= n <= self.n_max:
            raise ValueError(f"Fock level {n} outside 0..{self.n_max}")
        return spin * self.n_levels + n

    def basis_state(self, spin: int, n: int) -> "StateVector":
        amps = np.zeros(self.dim, dtype=complex)
        amps[self.index(spin, n)] = 1.0
        return StateVector(self, amps)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state on a :class:`HilbertSpace`."""

    space: HilbertSpace
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = _readonly(self.amplitudes)
        if amps.shape != (self.space.dim,):
            raise DimensionError(f"expected {self.space.dim} amplitudes, got shape {amps.shape}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (sum |c|^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, space: HilbertSpace, amplitudes, normalize: bool = True) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex)
        if normalize:
            nrm = np.linalg.norm(amps)
            if nrm == 0:
                raise ValueError("cannot normalize the zero vector")
            amps = amps / nrm
        return cls(space, amps)

    @classmethod
    def from_components(cls, space: HilbertSpace, down, up, normalize: bool = True) -> "StateVector":
        """Build from the (c_down_n) and (c_up_n) coefficient lists; missing levels are zero."""
        amps = np.zeros(space.dim, dtype=complex)
        down = np.asarray(down, dtype=complex)
        up = np.asarray(up, dtype=complex)
        if len(down) > space.n_levels or len(up) > space.n_levels:
            raise DimensionError("more coefficients than retained Fock levels")
        amps[: len(down)] = down
        amps[space.n_levels : space.n_levels + len(up)] = up
        return cls.from_amplitudes(space, amps, normalize=normalize)

    def populations(self) -> np.ndarray:
        """``|c|^2`` reshaped to ``(2, n_max + 1)``: rows are spin down, spin up."""
        return (np.abs(self.amplitudes) ** 2).reshape(2, self.space.n_levels)

    def overlap(self, other: "StateVector") -> complex:
        if other.space != self.space:
            raise DimensionError("states live on different spaces")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense operator with tri-state hermitian/unitary flags (``None`` = unknown).

    ``space`` is ``None`` for factor operators (2x2 spin matrices or
    motional ``(n_max+1)``-square matrices) that have not been embedded.
    """

    matrix: np.ndarray = field(repr=False)
    space: Optional[HilbertSpace] = None
    hermitian: Optional[bool] = None
    unitary: Optional[bool] = None

    def __post_init__(self):
        m = _readonly(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"operator must be square, got shape {m.shape}")
        if self.space is not None and m.shape[0] != self.space.dim:
            raise DimensionError(f"matrix size {m.shape[0]} does not match space dim {self.space.dim}")
        if self.hermitian and not is_hermitian(m):
            raise NotHermitianError(f"hermitian flag set but max|M - M^H| = {np.abs(m - m.conj().T).max():.3e}")
        if self.unitary and not is_unitary(m):
            raise ValueError(f"unitary flag set but max|U^H U - I| = {_unitary_defect(m):.3e}")
        object.__setattr__(self, "matrix", m)

    @property
    def shape(self):
        return self.matrix.shape

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.matrix.conj().T, self.space, self.hermitian, self.unitary)

    def _combine_space(self, other: "OperatorMatrix"):
        if self.shape != other.shape:
            raise DimensionError(f"shape mismatch {self.shape} vs {other.shape}")
        if self.space is not None and other.space is not None and self.space != other.space:
            raise DimensionError("operators live on different spaces")
        return self.space if self.space is not None else other.space

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        space = self._combine_space(other)
        unitary = True if (self.unitary and other.unitary) else None
        return OperatorMatrix(self.matrix @ other.matrix, space, None, unitary)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        space = self._combine_space(other)
        herm = True if (self.hermitian and other.hermitian) else None
        return OperatorMatrix(self.matrix + other.matrix, space, herm)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        space = self._combine_space(other)
        herm = True if (self.hermitian and other.hermitian) else None
        return OperatorMatrix(self.matrix - other.matrix, space, herm)

    def __neg__(self) -> "OperatorMatrix":
        return OperatorMatrix(-self.matrix, self.space, self.hermitian)

    def scale(self, c: complex) -> "OperatorMatrix":
        herm = self.hermitian if np.isreal(c) else None
        return OperatorMatrix(self.matrix * c, self.space, herm)

    def __mul__(self, c):
        if isinstance(c, OperatorMatrix):
            return NotImplemented
        return self.scale(c)

    __rmul__ = __mul__

    def apply(self, psi: StateVector) -> np.ndarray:
        """Raw (unnormalized) image ``M @ psi``."""
        if self.space is not None and psi.space != self.space:
            raise DimensionError("operator and state live on different spaces")
        if self.shape[0] != psi.space.dim:
            raise DimensionError(f"operator size {self.shape[0]} vs state dim {psi.space.dim}")
        return self.matrix @ psi.amplitudes

    def power(self, k: int) -> "OperatorMatrix":
        return OperatorMatrix(np.linalg.matrix_power(self.matrix, k), self.space)

    def with_flags(self, hermitian=None, unitary=None) -> "OperatorMatrix":
        return OperatorMatrix(self.matrix, self.space, hermitian, unitary)


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(m)
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    return float(np.abs(m - m.conj().T).max(initial=0.0)) <= tol * scale


def _unitary_defect(m: np.ndarray) -> float:
    return float(np.abs(m.conj().T @ m - np.eye(m.shape[0])).max(initial=0.0))


def is_unitary(m: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    return _unitary_defect(np.asarray(m)) <= tol


def commutator(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    return a @ b - b @ a


# -- operator construction ---------------------------------------------------


def lowering_op(space: HilbertSpace) -> OperatorMatrix:
    """Motional annihilation operator, ``<n-1|a|n> = sqrt(n)``."""
    return OperatorMatrix(np.diag(np.sqrt(np.arange(1, space.n_levels)), k=1).astype(complex))


def raising_op(space: HilbertSpace) -> OperatorMatrix:
    return lowering_op(space).dag()


def number_op(space: HilbertSpace) -> OperatorMatrix:
    return OperatorMatrix(np.diag(np.arange(space.n_levels)).astype(complex), hermitian=True)


def motional_identity(space: HilbertSpace) -> OperatorMatrix:
    return OperatorMatrix(np.eye(space.n_levels, dtype=complex), hermitian=True, unitary=True)


_SPIN_MATRICES = {
    # rows/cols ordered (down, up)
    "identity": np.eye(2),
    "sigma_plus": np.array([[0, 0], [2, 0]]),  # sigma_x + i sigma_y = 2 |up><down|
    "sigma_minus": np.array([[0, 2], [0, 0]]),
    "sigma_z": np.diag([-1.0, 1.0]),
    "raise": np.array([[0, 0], [1, 0]]),  # elementary |up><down|
    "lower": np.array([[0, 1], [0, 0]]),
    "sigma_x": np.array([[0, 1], [1, 0]]),
    "sigma_y": np.array([[0, 1j], [-1j, 0]]),
    "proj_down": np.diag([1.0, 0.0]),
    "proj_up": np.diag([0.0, 1.0]),
}

_SPIN_ALIASES = {"I": "identity", "SP": "sigma_plus", "SM": "sigma_minus", "SZ": "sigma_z"}


def spin_op(kind: str) -> OperatorMatrix:
    """2x2 spin operator in (down, up) order.

    ``sigma_plus``/``sigma_minus`` follow the ``sigma_x +/- i sigma_y``
    convention and are therefore twice the elementary ``|up><down|``; the
    elementary matrices are available as ``raise``/``lower``.
    """
    kind = _SPIN_ALIASES.get(kind, kind)
    try:
        m = _SPIN_MATRICES[kind]
    except KeyError:
        raise ValueError(f"unknown spin operator {kind!r}") from None
    herm = kind in ("identity", "sigma_z", "sigma_x", "sigma_y", "proj_down", "proj_up")
    return OperatorMatrix(np.asarray(m, dtype=complex), hermitian=herm or None)


def embed(spin: OperatorMatrix, motion: OperatorMatrix, space: Optional[HilbertSpace] = None) -> OperatorMatrix:
    """Tensor product ``spin (x) motion`` in spin-major ordering."""
    if spin.shape != (2, 2):
        raise DimensionError(f"spin factor must be 2x2, got {spin.shape}")
    if space is None:
        space = HilbertSpace(motion.shape[0] - 1)
    if motion.shape != (space.n_levels, space.n_levels):
        raise DimensionError(f"motional factor {motion.shape} does not match n_max={space.n_max}")
    herm = True if (spin.hermitian and motion.hermitian) else None
    return OperatorMatrix(np.kron(spin.matrix, motion.matrix), space, herm)


def identity(space: HilbertSpace) -> OperatorMatrix:
    return OperatorMatrix(np.eye(space.dim, dtype=complex), space, True, True)


def projector_down(space: HilbertSpace) -> OperatorMatrix:
    """``|down><down| (x) I`` -- the ion population read out as ``n_a``."""
    return embed(spin_op("proj_down"), motional_identity(space), space)


# -- dynamics ----------------------------------------------------------------


def _require_hermitian(H: OperatorMatrix):
    if H.hermitian is False or (H.hermitian is None and not is_hermitian(H.matrix)):
        raise NotHermitianError("evolution requires a Hermitian generator")


def propagator(H: OperatorMatrix, t: float) -> OperatorMatrix:
    """``exp(-i H t)`` from the Hermitian eigendecomposition of ``H``."""
    _require_hermitian(H)
    if t == 0:
        return OperatorMatrix(np.eye(H.shape[0], dtype=complex), H.space, None, True)
    w, v = np.linalg.eigh(H.matrix)
    u = (v * np.exp(-1j * w * t)) @ v.conj().T
    return OperatorMatrix(u, H.space, None, True)


def evolve(H: OperatorMatrix, t: float, psi: StateVector) -> StateVector:
    """Apply ``exp(-i H t)`` to ``psi``."""
    U = propagator(H, t)
    return apply(U, psi)


def apply(U: OperatorMatrix, psi: StateVector) -> StateVector:
    """Apply a unitary to a state."""
    return StateVector(psi.space, U.apply(psi))


def expectation(op: OperatorMatrix, psi: StateVector) -> complex:
    val = complex(np.vdot(psi.amplitudes, op.apply(psi)))
    if op.hermitian:
        val = complex(val.real, 0.0) if abs(val.imag) <= 1e-12 * max(1.0, abs(val)) else val
    return val


class TruncationCheck(NamedTuple):
    ok: bool
    leaked: float


def truncation_guard(psi: StateVector, tol: float = DEFAULT_TRUNCATION_TOL) -> TruncationCheck:
    """Population in the top two Fock levels (both spins); ``ok`` iff it is <= tol."""
    pops = psi.populations()
    leaked = float(pops[:, -2:].sum())
    return TruncationCheck(leaked <= tol, leaked)


def enforce_truncation(psi: StateVector, tol: float = DEFAULT_TRUNCATION_TOL, where: str = "") -> StateVector:
    check = truncation_guard(psi, tol)
    if not check.ok:
        raise TruncationError(check.leaked, tol, where)
    return psi
