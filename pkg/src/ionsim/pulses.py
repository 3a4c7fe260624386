"""Native resonant laser interactions of a single trapped ion.

A pulse with spin-flip flag ``epsilon`` and sideband order ``l`` generates

    H = Omega e^{i phi} S M + h.c.,

with ``S = |up><down|`` for ``epsilon = 1`` (identity for ``epsilon = 0``),
``M = (i eta a^dag)^l / l!`` for ``l > 0`` and ``M = (i eta a)^|l| / |l|!``
for ``l < 0``.  Positive ``l`` with ``epsilon = 1`` is the blue sideband,
coupling ``|down, n>`` to ``|up, n + l>``; ``l = 0`` is the carrier.

The spin coupling uses the elementary raising matrix, so ``Omega`` is the
literal Rabi matrix element and a pi/2 pulse obeys ``Omega_eff t = pi/4``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy import constants

from .hilbert import (
    HilbertSpace,
    OperatorMatrix,
    StateVector,
    embed,
    expectation,
    lowering_op,
    motional_identity,
    number_op,
    propagator,
    spin_op,
)

SUPPORTED_ORDERS = (0, 1, 2, 3)
LAMB_DICKE_WARN = 0.25

BE9_MASS = 9.0121831 * constants.atomic_mass


@dataclass(frozen=True)
class TrapConfig:
    """Trap and laser geometry.

    ``eta`` is derived as ``delta_k * z0`` when ``mu``, ``delta_k`` and
    ``omega_z`` are all given; ``eta_override`` sets it directly.  ``omega_0``
    and ``mu`` are informational apart from that derivation.
    """

    omega_z: float = 2 * math.pi * 3.63e6
    omega_0: Optional[float] = None
    mu: Optional[float] = None
    delta_k: Optional[float] = None
    eta_override: Optional[float] = 0.35

    def __post_init__(self):
        if self.omega_z <= 0:
            raise ValueError(f"omega_z must be positive, got {self.omega_z}")
        if self.mu is not None and self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        derived = self._derived_eta()
        if derived is None and self.eta_override is None:
            raise ValueError("eta undetermined: give eta_override or all of mu, delta_k, omega_z")
        if derived is not None and self.eta_override is not None:
            if abs(derived - self.eta_override) > 1e-9 * abs(derived):
                raise ValueError(
                    f"eta_override={self.eta_override} disagrees with delta_k*z0={derived}"
                )
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")

    @property
    def z0(self) -> Optional[float]:
        """Ground-state extent sqrt(hbar / (2 mu omega_z)) in metres."""
        if self.mu is None:
            return None
        return math.sqrt(constants.hbar / (2 * self.mu * self.omega_z))

    def _derived_eta(self) -> Optional[float]:
        if self.mu is None or self.delta_k is None:
            return None
        return self.delta_k * self.z0

    @property
    def eta(self) -> float:
        derived = self._derived_eta()
        return derived if derived is not None else float(self.eta_override)

    @classmethod
    def beryllium9(cls, eta: float = 0.35, omega_z: float = 2 * math.pi * 3.63e6) -> "TrapConfig":
        """9Be+ in a 3.63 MHz trap, with delta_k chosen to give ``eta``."""
        z0 = math.sqrt(constants.hbar / (2 * BE9_MASS * omega_z))
        return cls(omega_z=omega_z, mu=BE9_MASS, delta_k=eta / z0, eta_override=None)


@dataclass(frozen=True)
class PulseSpec:
    epsilon: int
    l: int
    omega: float
    phi: float = 0.0
    duration: float = 0.0
    extended: bool = False

    def __post_init__(self):
        if self.epsilon not in (0, 1):
            raise ValueError(f"epsilon must be 0 or 1, got {self.epsilon!r}")
        if int(self.l) != self.l:
            raise ValueError(f"sideband order must be an integer, got {self.l!r}")
        if self.epsilon == 0 and self.l == 0:
            raise ValueError("(epsilon, l) = (0, 0) is not an interaction")
        if not self.extended and abs(self.l) not in SUPPORTED_ORDERS:
            raise ValueError(f"|l| = {abs(self.l)} unsupported (max 3 unless extended=True)")
        if not self.omega > 0:
            raise ValueError(f"coupling strength must be positive, got {self.omega}")
        if self.duration < 0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")

    @property
    def label(self) -> str:
        return f"H{self.epsilon}{self.l}"

    def with_duration(self, duration: float) -> "PulseSpec":
        return PulseSpec(self.epsilon, self.l, self.omega, self.phi, duration, self.extended)

    def reversed(self) -> "PulseSpec":
        """Same pulse with the generator negated (phase advanced by pi)."""
        return PulseSpec(self.epsilon, self.l, self.omega, wrap_phase(self.phi + math.pi), self.duration, self.extended)


def wrap_phase(phi: float) -> float:
    """Map a phase into [0, 2 pi)."""
    w = math.fmod(phi, 2 * math.pi)
    if w < 0:
        w += 2 * math.pi
    if w >= 2 * math.pi:
        w = 0.0
    return w


def _motional_factor(l: int, eta: float, space: HilbertSpace) -> np.ndarray:
    k = abs(l)
    a = lowering_op(space).matrix
    base = a.conj().T if l > 0 else a
    return np.linalg.matrix_power(1j * eta * base, k) / math.factorial(k)


def native_hamiltonian(spec: PulseSpec, trap: TrapConfig, space: HilbertSpace) -> OperatorMatrix:
    """Hermitian generator of one native interaction."""
    if space.n_max < abs(spec.l) + 2:
        raise ValueError(f"n_max={space.n_max} too small for |l|={abs(spec.l)} (need >= {abs(spec.l) + 2})")
    spin = spin_op("raise") if spec.epsilon == 1 else spin_op("identity")
    motion = OperatorMatrix(_motional_factor(spec.l, trap.eta, space))
    x = spec.omega * np.exp(1j * spec.phi) * embed(spin, motion, space).matrix
    return OperatorMatrix(x + x.conj().T, space, hermitian=True)


def rabi_frequency(spec: PulseSpec, trap: TrapConfig, n: int) -> float:
    """Matrix element Omega_{n, n+|l|} = Omega eta^|l| sqrt((n+|l|)!/n!) / |l|!."""
    if n < 0:
        raise ValueError("Fock level must be >= 0")
    k = abs(spec.l)
    ratio = math.exp(0.5 * (math.lgamma(n + k + 1) - math.lgamma(n + 1)))
    return spec.omega * trap.eta**k * ratio / math.factorial(k)


def pi_over_2_duration(spec: PulseSpec, trap: TrapConfig) -> float:
    """First time at which half the population has left the motional ground state.

    With transfer probability ``sin^2(Omega_eff t)`` this is
    ``(pi/4) / Omega_{0,|l|}``, giving ``t(l)/t(1) = sqrt(l!) eta^(1-l)``.
    """
    if spec.epsilon != 1:
        raise ValueError("pi/2 duration is defined only for spin-flip (epsilon=1) pulses")
    return (math.pi / 4) / rabi_frequency(spec, trap, 0)


@lru_cache(maxsize=4096)
def pulse_unitary(spec: PulseSpec, trap: TrapConfig, space: HilbertSpace) -> OperatorMatrix:
    """exp(-i H_{epsilon l} duration)."""
    H = native_hamiltonian(spec, trap, space)
    return propagator(H, spec.duration).with_flags(unitary=True)


class LambDickeCheck(NamedTuple):
    value: float
    ok: bool


def lamb_dicke_check(psi: StateVector, trap: TrapConfig, threshold: float = LAMB_DICKE_WARN) -> LambDickeCheck:
    """eta^2 <(a + a^dag)^2>, flagged when above ``threshold``."""
    space = psi.space
    a = lowering_op(space).matrix
    # normal-ordered form stays exact at the top of the truncated ladder
    x2 = a @ a + a.conj().T @ a.conj().T + 2 * number_op(space).matrix + np.eye(space.n_levels)
    op = embed(spin_op("identity"), OperatorMatrix(x2, hermitian=True), space)
    value = trap.eta**2 * expectation(op, psi).real
    return LambDickeCheck(float(value), value <= threshold)
