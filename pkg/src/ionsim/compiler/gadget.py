"""Four-pulse commutator gadget and generator diagnostics.

The gadget ``U_A(dt) U_B(dt) U_A(-dt) U_B(-dt)`` (operator product, so the
rightmost factor acts first) with ``U_X(tau) = exp(-i X tau)`` equals
``exp(GADGET_SIGN * [A, B] dt^2) + O(dt^3)``.  Negative durations are
realized by advancing the laser phase by pi.
"""

from __future__ import annotations

from typing import Union

import numpy as np
from scipy.linalg import logm

from ..hilbert import HilbertSpace, OperatorMatrix, propagator
from ..pulses import PulseSpec, TrapConfig, native_hamiltonian
from .expr import OperatorExpr
from .native import native_program, NotNativeError
from .program import ProgramMeta, Pulse, PulseProgram

# Fixed by calibrate_gadget_sign(); asserted in the test suite.
GADGET_SIGN = -1

Operand = Union[PulseSpec, OperatorExpr, PulseProgram]


class NonRealizableOperand(ValueError):
    pass


def gadget_unitary(HA: OperatorMatrix, HB: OperatorMatrix, delta_t: float) -> OperatorMatrix:
    """Dense ``U_A(dt) U_B(dt) U_A(-dt) U_B(-dt)``."""
    ua, ub = propagator(HA, delta_t).matrix, propagator(HB, delta_t).matrix
    u = ua @ ub @ ua.conj().T @ ub.conj().T
    return OperatorMatrix(u, HA.space, None, True)


def effective_generator(U: OperatorMatrix | np.ndarray) -> np.ndarray:
    """Hermitian ``G`` with ``U = exp(-i G)`` on the principal branch."""
    u = U.matrix if isinstance(U, OperatorMatrix) else np.asarray(U)
    g = 1j * logm(u)
    return (g + g.conj().T) / 2


def gadget_leading_generator(A: np.ndarray, B: np.ndarray, delta_t: float) -> np.ndarray:
    """``G`` such that the gadget is ``exp(-i G)`` to second order: ``i s [A, B] dt^2``."""
    return 1j * GADGET_SIGN * (A @ B - B @ A) * delta_t**2


def calibrate_gadget_sign(omega: float = 1.0, delta_t: float = 1e-3) -> int:
    """Recover the BCH sign numerically from two carrier pulses (phases 0 and pi/2)."""
    space = HilbertSpace(2)
    trap = TrapConfig()
    A = native_hamiltonian(PulseSpec(1, 0, omega, 0.0), trap, space)
    B = native_hamiltonian(PulseSpec(1, 0, omega, np.pi / 2), trap, space)
    log_u = logm(gadget_unitary(A, B, delta_t).matrix)
    comm = (A.matrix @ B.matrix - B.matrix @ A.matrix) * delta_t**2
    errs = {s: np.abs(log_u - s * comm).max() for s in (+1, -1)}
    best = min(errs, key=errs.get)
    if errs[best] > 0.1 * np.abs(comm).max():
        raise RuntimeError(f"gadget sign calibration inconclusive: {errs}")
    return best


def _operand_program(X: Operand, delta_t: float, trap: TrapConfig) -> PulseProgram:
    if isinstance(X, PulseProgram):
        return X
    if isinstance(X, PulseSpec):
        return PulseProgram((Pulse(X.with_duration(delta_t)),))
    if isinstance(X, OperatorExpr):
        try:
            return native_program(X, delta_t, trap)
        except NotNativeError as exc:
            raise NonRealizableOperand(str(exc)) from exc
    raise NonRealizableOperand(f"cannot realize operand of type {type(X).__name__}")


def commutator_gadget(A: Operand, B: Operand, delta_t: float, trap: TrapConfig | None = None) -> PulseProgram:
    """Pulse program for ``exp(GADGET_SIGN [A, B] dt^2) + O(dt^3)``.

    Pulse specs and natively realizable expressions are run for ``delta_t``;
    already compiled programs stand for ``U_X(dt)`` as given.
    """
    if not delta_t > 0:
        raise ValueError(f"delta_t must be positive, got {delta_t}")
    trap = trap or TrapConfig()
    pa = _operand_program(A, delta_t, trap)
    pb = _operand_program(B, delta_t, trap)
    # time order: U_B(-dt), U_A(-dt), U_B(dt), U_A(dt)
    prog = pb.inverse() + pa.inverse() + pb + pa
    return prog.with_meta(target="commutator gadget", delta_t=delta_t, depth=max(pa.meta.depth, pb.meta.depth) + 1)
