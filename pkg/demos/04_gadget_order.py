"""
Error of the four-pulse commutator gadget
=========================================

U_A(dt) U_B(dt) U_A(-dt) U_B(-dt) approximates exp(-[A, B] dt^2); the error
falls as dt^3.
"""

import math

import numpy as np
from scipy.linalg import expm

from ionsim.compiler.gadget import GADGET_SIGN, calibrate_gadget_sign, gadget_unitary
from ionsim.hilbert import HilbertSpace
from ionsim.pulses import PulseSpec, TrapConfig, native_hamiltonian

trap = TrapConfig()
space = HilbertSpace(10)
print("calibrated sign:", calibrate_gadget_sign(), "(library constant", GADGET_SIGN, ")")

A = native_hamiltonian(PulseSpec(0, 2, 1.0), trap, space)  # squeeze
B = native_hamiltonian(PulseSpec(0, 3, 1.0), trap, space)  # cubic drive
comm = A.matrix @ B.matrix - B.matrix @ A.matrix

dts = np.logspace(-3, -1, 5)
errs = []
for dt in dts:
    err = np.linalg.norm(gadget_unitary(A, B, dt).matrix - expm(GADGET_SIGN * comm * dt**2), 2)
    errs.append(err)
    print(f"dt={dt:.1e}  error={err:.3e}")
print("log-log slope:", round(float(np.polyfit(np.log(dts), np.log(errs), 1)[0]), 3))
