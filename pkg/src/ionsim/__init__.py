"""Spin (x) harmonic-oscillator simulator for trapped-ion analog quantum computing.

Subpackages and modules:

* :mod:`ionsim.hilbert` -- truncated state space, operators, evolution.
* :mod:`ionsim.pulses` -- native laser interactions ``H_{epsilon l}``.
* :mod:`ionsim.compiler` -- operator expressions, commutator gadgets, synthesis.
* :mod:`ionsim.interferometer` -- n-th order Mach-Zehnder fringes.
* :mod:`ionsim.noise` -- projection noise, Allan variance, phase sensitivity.
"""

from .hilbert import (
    HilbertSpace,
    OperatorMatrix,
    StateVector,
    TruncationError,
    truncation_guard,
)
from .pulses import PulseSpec, TrapConfig, native_hamiltonian, pi_over_2_duration, pulse_unitary
from .interferometer import InterferometerConfig, FringeDataset, run_point, sweep, fit_fringe
from .noise import AllanResult, ShotRecord, allan_scan, allan_variance, sample_shots

__version__ = "0.1.0"
