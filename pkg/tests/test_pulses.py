import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ionsim.hilbert import HilbertSpace, StateVector, is_hermitian
from ionsim.pulses import (
    LAMB_DICKE_WARN,
    PulseSpec,
    TrapConfig,
    lamb_dicke_check,
    native_hamiltonian,
    pi_over_2_duration,
    pulse_unitary,
    rabi_frequency,
)
from oracles import blue_sideband, evolve_dense, half_transfer_time

TRAP = TrapConfig()  # eta = 0.35
# frozen from oracles.half_transfer_time (expm + brentq)
T2_OVER_T1 = 4.040610178208851
T3_OVER_T1 = 19.995834634964716


def test_trap_defaults_and_derived_eta():
    assert TRAP.eta == 0.35
    assert math.isclose(TRAP.omega_z, 2 * math.pi * 3.63e6)
    be = TrapConfig.beryllium9()
    assert be.eta == 0.35
    with pytest.raises(ValueError):
        TrapConfig(eta_override=0.0)


def test_pulse_spec_validation():
    with pytest.raises(ValueError):
        PulseSpec(0, 0, 1.0)
    with pytest.raises(ValueError):
        PulseSpec(1, 4, 1.0)
    PulseSpec(1, 4, 1.0, extended=True)
    with pytest.raises(ValueError):
        PulseSpec(1, 1, 0.0)
    with pytest.raises(ValueError):
        PulseSpec(1, 1, 1.0, duration=-1)


def test_carrier_elements_motion_independent():
    sp = HilbertSpace(5)
    H = native_hamiltonian(PulseSpec(1, 0, 2.0), TRAP, sp).matrix
    for n in range(sp.n_levels):
        assert abs(abs(H[sp.index(1, n), sp.index(0, n)]) - 2.0) < 1e-14


def test_first_blue_sideband_element():
    sp = HilbertSpace(4)
    H = native_hamiltonian(PulseSpec(1, 1, 1.0), TRAP, sp).matrix
    assert abs(abs(H[sp.index(1, 1), sp.index(0, 0)]) - 0.35) < 1e-15


def test_squeeze_element_spin_independent():
    sp = HilbertSpace(6)
    H = native_hamiltonian(PulseSpec(0, 2, 1.0), TRAP, sp).matrix
    for s in (0, 1):
        for n in range(sp.n_max - 1):
            expect = 0.35**2 * math.sqrt((n + 2) * (n + 1)) / 2
            assert abs(abs(H[sp.index(s, n + 2), sp.index(s, n)]) - expect) < 1e-14
    nl = sp.n_levels
    assert np.all(H[:nl, nl:] == 0)


def test_blue_sideband_matches_element_oracle():
    sp = HilbertSpace(7)
    for l in (1, 2, 3):
        H = native_hamiltonian(PulseSpec(1, l, 1.3, 0.4), TRAP, sp).matrix
        np.testing.assert_allclose(H, blue_sideband(sp.n_levels, l, 1.3, 0.35, 0.4), atol=1e-14)


def test_red_sideband_lowers_motion():
    sp = HilbertSpace(5)
    H = native_hamiltonian(PulseSpec(1, -1, 1.0), TRAP, sp).matrix
    assert abs(H[sp.index(1, 0), sp.index(0, 1)]) > 0
    assert H[sp.index(1, 1), sp.index(0, 0)] == 0


def test_space_too_small():
    with pytest.raises(ValueError):
        native_hamiltonian(PulseSpec(1, 3, 1.0), TRAP, HilbertSpace(4))


@pytest.mark.parametrize(
    "l,n,expected",
    [(1, 0, 0.35), (3, 0, 0.017503645453638125), (2, 1, 0.35**2 * math.sqrt(6) / 2)],
)
def test_rabi_frequency_examples(l, n, expected):
    assert math.isclose(rabi_frequency(PulseSpec(1, l, 1.0), TRAP, n), expected, rel_tol=1e-13)


@pytest.mark.parametrize("l", [1, 2, 3])
def test_rabi_frequency_equals_matrix_element(l):
    sp = HilbertSpace(9)
    spec = PulseSpec(1, l, 1.7)
    H = native_hamiltonian(spec, TRAP, sp).matrix
    for n in range(sp.n_max - l + 1):
        assert abs(abs(H[sp.index(1, n + l), sp.index(0, n)]) - rabi_frequency(spec, TRAP, n)) < 1e-12


def test_pi_over_2_ratios():
    t = [pi_over_2_duration(PulseSpec(1, l, 1.0), TRAP) for l in (1, 2, 3)]
    assert abs(t[1] / t[0] / T2_OVER_T1 - 1) < 1e-12
    assert abs(t[2] / t[0] / T3_OVER_T1 - 1) < 1e-12
    scaled = [ti * 0.35**l / math.sqrt(math.factorial(l)) for ti, l in zip(t, (1, 2, 3))]
    assert max(scaled) - min(scaled) < 1e-6 * max(scaled)
    with pytest.raises(ValueError):
        pi_over_2_duration(PulseSpec(0, 1, 1.0), TRAP)


def test_frozen_ratios_match_oracle():
    t1, t2, t3 = (half_transfer_time(l) for l in (1, 2, 3))
    assert abs(t2 / t1 - T2_OVER_T1) < 1e-9
    assert abs(t3 / t1 - T3_OVER_T1) < 1e-9


def test_pulse_unitary_zero_duration():
    sp = HilbertSpace(4)
    np.testing.assert_array_equal(pulse_unitary(PulseSpec(1, 1, 1.0), TRAP, sp).matrix, np.eye(sp.dim))


@pytest.mark.parametrize("l", [1, 2, 3])
def test_pi_over_2_pulse_splits_and_pi_pulse_transfers(l):
    sp = HilbertSpace(l + 5)
    spec = PulseSpec(1, l, 1.0)
    spec = spec.with_duration(pi_over_2_duration(spec, TRAP))
    U = pulse_unitary(spec, TRAP, sp)
    assert U.unitary
    psi = U.apply(sp.basis_state(0, 0))
    p = np.abs(psi) ** 2
    assert abs(p[sp.index(0, 0)] - 0.5) < 1e-10 and abs(p[sp.index(1, l)] - 0.5) < 1e-10
    psi2 = U.matrix @ psi
    assert abs(abs(psi2[sp.index(1, l)]) ** 2 - 1) < 1e-6


@given(st.sampled_from([1, 2, 3]), st.floats(0, 50), st.floats(0, 2 * math.pi))
def test_two_level_rabi_law_and_confinement(l, t, phi):
    sp = HilbertSpace(l + 4)
    spec = PulseSpec(1, l, 1.0, phi, t)
    psi = pulse_unitary(spec, TRAP, sp).apply(sp.basis_state(0, 0))
    p = np.abs(psi) ** 2
    w = rabi_frequency(spec, TRAP, 0)
    assert abs(p[sp.index(1, l)] - math.sin(w * t) ** 2) < 1e-10
    assert abs(p[sp.index(1, l)] + p[sp.index(0, 0)] - 1) < 1e-10


@given(st.sampled_from([1, 2, 3, -1, -2]), st.floats(0, 20), st.integers(0, 2**32 - 1))
def test_motional_pulses_conserve_spin(l, t, seed):
    sp = HilbertSpace(8)
    rng = np.random.default_rng(seed)
    psi = StateVector.from_amplitudes(sp, rng.normal(size=sp.dim) + 1j * rng.normal(size=sp.dim))
    out = StateVector.from_amplitudes(sp, pulse_unitary(PulseSpec(0, l, 1.0, 0.3, t), TRAP, sp).apply(psi))
    np.testing.assert_allclose(out.populations().sum(axis=1), psi.populations().sum(axis=1), atol=1e-12)


def test_pulse_unitary_matches_expm_oracle():
    sp = HilbertSpace(6)
    spec = PulseSpec(1, 2, 1.0, 0.9, 3.0)
    psi0 = sp.basis_state(0, 1).amplitudes
    ref = evolve_dense(blue_sideband(sp.n_levels, 2, 1.0, 0.35, 0.9), 3.0, psi0)
    np.testing.assert_allclose(pulse_unitary(spec, TRAP, sp).matrix @ psi0, ref, atol=1e-12)


def test_hamiltonians_hermitian():
    sp = HilbertSpace(6)
    for eps in (0, 1):
        for l in (-3, -2, -1, 0, 1, 2, 3):
            if (eps, l) == (0, 0):
                continue
            assert is_hermitian(native_hamiltonian(PulseSpec(eps, l, 2.0, 1.1), TRAP, sp).matrix)


def test_lamb_dicke_examples():
    sp = HilbertSpace(6)
    c0 = lamb_dicke_check(sp.basis_state(0, 0), TRAP)
    assert abs(c0.value - 0.1225) < 1e-12 and c0.ok
    c3 = lamb_dicke_check(sp.basis_state(0, 3), TRAP)
    assert abs(c3.value - 0.8575) < 1e-12 and not c3.ok
    assert LAMB_DICKE_WARN == 0.25
    tiny = lamb_dicke_check(sp.basis_state(1, 5), TrapConfig(eta_override=1e-9))
    assert tiny.value < 1e-15 and tiny.ok
