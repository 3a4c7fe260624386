"""Map Hermitian expression pieces onto single native interactions."""

from __future__ import annotations

import cmath
import math
from typing import Optional

from ..pulses import PulseSpec, TrapConfig, wrap_phase
from .expr import Key, OperatorExpr, representative
from .program import FreeEvolution, ProgramMeta, Pulse, PulseProgram

# Representatives of the natively realizable ``c K + c* K^dag`` families.
NATIVE_KEYS = (
    ("I", 1, 0), ("I", 2, 0), ("I", 3, 0),  # coherent, squeeze, cubic drives
    ("I", 1, 1),  # trap-frequency shift
    ("SP", 0, 0),  # carrier
    ("SP", 1, 0), ("SP", 2, 0), ("SP", 3, 0),  # blue sidebands
    ("SP", 0, 1), ("SP", 0, 2), ("SP", 0, 3),  # red sidebands
    ("SZ", 0, 0),  # carrier-conjugated sigma_y rotation
)


class NotNativeError(ValueError):
    pass


def is_native(key: Key) -> bool:
    return representative(key) in NATIVE_KEYS


def _sideband(epsilon: int, l: int, target: complex, duration: float, eta: float) -> Pulse:
    # Omega e^{i phi} (i eta)^|l| / |l|! must equal ``target``
    k = abs(l)
    amp = target * math.factorial(k) / (1j * eta) ** k
    return Pulse(PulseSpec(epsilon, l, abs(amp), wrap_phase(cmath.phase(amp)), duration))


def native_pair_program(key: Key, coeff: complex, duration: float, trap: TrapConfig) -> PulseProgram:
    """Program for ``exp(-i (c K + c* K^dag) duration)`` (``c K`` alone if K is self-adjoint).

    ``key`` must be a representative from ``NATIVE_KEYS``; negative
    durations give the inverse program.
    """
    if key not in NATIVE_KEYS:
        raise NotNativeError(f"monomial {key} has no native realization")
    if duration < 0:
        return native_pair_program(key, coeff, -duration, trap).inverse()
    if coeff == 0 or duration == 0:
        return PulseProgram()
    spin, p, q = key
    eta = trap.eta
    if spin == "I" and (p, q) == (1, 1):
        steps = (FreeEvolution(coeff.real, duration),)
    elif spin == "I":
        steps = (_sideband(0, p, coeff, duration, eta),)
    elif spin == "SP":
        # SP = 2 |up><down| while the pulse couples with |up><down|
        l = p if p > 0 else -q
        steps = (_sideband(1, l, 2 * coeff, duration, eta),)
    else:
        theta = coeff.real * duration
        omega = abs(coeff.real)
        quarter = (math.pi / 4) / omega
        mid_phase = 3 * math.pi / 2 if theta > 0 else math.pi / 2
        steps = (
            Pulse(PulseSpec(1, 0, omega, math.pi, quarter)),
            Pulse(PulseSpec(1, 0, omega, mid_phase, duration)),
            Pulse(PulseSpec(1, 0, omega, 0.0, quarter)),
        )
    return PulseProgram(steps, ProgramMeta(depth=0))


def single_pair(expr: OperatorExpr) -> Optional[tuple]:
    pairs = [(k, c) for k, c in expr.hermitian_pairs() if k != ("I", 0, 0)]
    if not pairs:
        return None
    if len(pairs) > 1:
        raise NotNativeError(f"expression has {len(pairs)} independent terms; a native pulse realizes one")
    return pairs[0]


def native_program(expr: OperatorExpr, duration: float, trap: TrapConfig) -> PulseProgram:
    """Single native interaction realizing ``exp(-i expr duration)``."""
    pair = single_pair(expr)
    if pair is None:
        return PulseProgram()
    return native_pair_program(pair[0], pair[1], duration, trap)
