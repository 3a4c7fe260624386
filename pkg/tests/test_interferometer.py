import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ionsim.hilbert import HilbertSpace, StateVector, embed, expectation, number_op, projector_down, spin_op, truncation_guard
from ionsim.interferometer import (
    FringeDataset,
    FringePoint,
    InsufficientSpanError,
    InterferometerConfig,
    apply_contrast,
    beamsplitter,
    calibrate_phases,
    fit_fringe,
    fringe_model,
    phase_segment,
    prepare_input,
    run_point,
    run_state,
    sweep,
)
from oracles import fringe_closed_form

DWZ = 2 * math.pi * 20e3


def cfg(n=1, **kw):
    return InterferometerConfig(order=n, delta_omega_z=DWZ, **kw)


def t_of(phi):
    return phi / DWZ


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(0)
    with pytest.raises(ValueError):
        cfg(4)
    with pytest.raises(ValueError):
        cfg(1, contrast=1.2)
    with pytest.raises(ValueError):
        cfg(2, space=HilbertSpace(5))
    assert cfg(3).space.n_max == 12
    assert cfg(4, extended=True).space.n_max == 14


def test_prepare_input():
    sp = HilbertSpace(8)
    psi = prepare_input(sp)
    assert expectation(projector_down(sp), psi).real == 1
    assert expectation(embed(spin_op("identity"), number_op(sp), sp), psi).real == 0
    assert truncation_guard(psi, 1e-15).ok


@pytest.mark.parametrize("n", [1, 2, 3])
def test_beamsplitter_balanced(n):
    c = cfg(n)
    sp = c.space
    psi = beamsplitter(c, "first").apply(prepare_input(sp))
    p = np.abs(psi) ** 2
    assert abs(p[sp.index(0, 0)] - 0.5) < 1e-10
    assert abs(p[sp.index(1, n)] - 0.5) < 1e-10
    twice = beamsplitter(c, "first").matrix @ psi
    assert np.abs(twice[: sp.n_levels]).max() ** 2 < 1e-6


def test_beamsplitter_which():
    with pytest.raises(ValueError):
        beamsplitter(cfg(), "third")


def test_phase_segment():
    sp = HilbertSpace(8)
    np.testing.assert_array_equal(phase_segment(DWZ, 0.0, sp).matrix, np.eye(sp.dim))
    for n in (1, 2, 3):
        psi = sp.basis_state(1, n).amplitudes
        np.testing.assert_allclose(phase_segment(DWZ, t_of(2 * math.pi / n), sp).matrix @ psi, psi, atol=1e-12)
    down = np.zeros(sp.n_levels)
    down[0] = 1
    up = np.zeros(sp.n_levels)
    up[2] = 1
    psi = StateVector.from_components(sp, down, up)
    out = phase_segment(DWZ, t_of(math.pi / 4), sp).matrix @ psi.amplitudes
    rel = np.angle(out[sp.index(1, 2)] / out[sp.index(0, 0)])
    assert abs(abs(rel) - math.pi / 2) < 1e-12


@pytest.mark.parametrize("n,phi,expected", [(1, 0.0, 0.0), (2, 0.0, 0.0), (3, 0.0, 0.0), (2, math.pi / 2, 1.0), (3, math.pi / 6, 0.5)])
def test_run_point_examples(n, phi, expected):
    assert abs(run_point(cfg(n), t_of(phi)) - expected) < 1e-6


def test_run_point_negative_time():
    with pytest.raises(ValueError):
        run_point(cfg(), -1.0)


def test_apply_contrast():
    assert apply_contrast(0.37, 1.0) == 0.37
    assert apply_contrast(1.0, 0.92) == 0.92
    assert apply_contrast(0.0, 0.5) == 0.0
    with pytest.raises(ValueError):
        apply_contrast(1.1, 0.5)


@given(st.sampled_from([1, 2, 3]), st.floats(0, 4 * math.pi))
def test_subspace_confinement(n, phi):
    c = cfg(n)
    sp = c.space
    for psi in run_state(c, t_of(phi)):
        p = np.abs(psi.amplitudes) ** 2
        outside = 1 - p[sp.index(0, 0)] - p[sp.index(1, n)]
        assert outside < 1e-8


@pytest.mark.parametrize("n", [1, 2, 3])
def test_fringe_law_dense(n):
    c = cfg(n)
    worst = max(abs(run_point(c, t_of(phi)) - fringe_closed_form(n, phi)) for phi in np.linspace(0, 2 * math.pi, 200))
    assert worst < 1e-6


@given(st.sampled_from([1, 2, 3]), st.floats(0, 2 * math.pi))
def test_periodicity_and_sign(n, phi):
    c = cfg(n)
    p = run_point(c, t_of(phi))
    assert abs(run_point(c, t_of(phi + 2 * math.pi / n)) - p) < 1e-9
    flipped = replace(c, delta_omega_z=-DWZ)
    assert abs(run_point(flipped, t_of(phi)) - p) < 1e-12


def test_calibration_repairs_bright_port():
    good = cfg(2)
    assert calibrate_phases(good) is good
    bad = cfg(2, pulse_phases=(0.0, math.pi))
    assert run_point(bad, 0.0) > 0.99
    fixed = calibrate_phases(bad)
    assert run_point(fixed, 0.0) < 1e-9


def test_sweep_frequency_from_fft():
    c = cfg(1)
    N = 256
    t = np.arange(N) * t_of(4 * math.pi) / N
    data = sweep(c, t)
    assert data.mode == "statevector"
    spec = np.abs(np.fft.rfft(data.p_est - data.p_est.mean()))
    freqs = 2 * math.pi * np.fft.rfftfreq(N, t[1] - t[0])
    assert math.isclose(freqs[np.argmax(spec)], DWZ, rel_tol=1e-9)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_sweep_fit_frequency(n):
    c = cfg(n)
    data = sweep(c, np.linspace(0, t_of(4 * math.pi), 80))
    fit = fit_fringe(data)
    assert abs(fit.frequency / (n * DWZ) - 1) < 1e-3
    assert np.all(data.phi == DWZ * data.t)


def test_sweep_analytic_mode_agrees():
    c = cfg(2, contrast=0.7)
    t = np.linspace(0, t_of(2 * math.pi), 30)
    a, b = sweep(c, t, analytic=True), sweep(c, t)
    assert a.mode == "analytic"
    np.testing.assert_allclose(a.p_est, b.p_est, atol=1e-9)


def test_sampled_sweep_consistent_with_noiseless():
    c = cfg(1, contrast=0.9)
    t = np.linspace(0, t_of(2 * math.pi), 9)
    exact = sweep(c, t)
    shots = 10**6
    noisy = sweep(c, t, shots, seed=11)
    assert noisy.mode == "montecarlo" and set(noisy.shots) == {shots}
    sd = np.sqrt(np.maximum(exact.p_est * (1 - exact.p_est), 1e-12) / shots)
    assert np.all(np.abs(noisy.p_est - exact.p_est) <= 3 * sd + 1e-12)


def test_sweep_deterministic_and_order_independent():
    c = cfg(1)
    t = np.linspace(0, t_of(2 * math.pi), 10)
    a = sweep(c, t, 500, seed=3)
    b = sweep(c, t, 500, seed=3)
    assert a.to_csv() == b.to_csv()
    # each point owns its random stream: a sub-grid reproduces its own points
    first = sweep(c, t[:4], 500, seed=3)
    assert first.points == a.points[:4]
    with pytest.raises(ValueError):
        sweep(c, t, 10)


def test_csv_round_trip():
    data = sweep(cfg(2, contrast=0.8), np.linspace(0, t_of(math.pi), 12), 100, seed=1)
    text = data.to_csv(["comment line"])
    assert text.splitlines()[1] == "t_s,phi_rad,p_est,shots"
    back = FringeDataset.from_csv(text, "montecarlo")
    assert back.points == data.points


def synthetic(omega, C, theta, n_pts=60, span=None):
    span = span or 3 * 2 * math.pi / omega
    t = np.linspace(0, span, n_pts)
    p = fringe_model(t, omega, C, theta)
    return FringeDataset(tuple(FringePoint(ti, DWZ * ti, pi, 0) for ti, pi in zip(t, p)), "analytic", DWZ)


def test_fit_round_trip():
    fit = fit_fringe(synthetic(2 * DWZ, 0.8, 0.0))
    assert abs(fit.frequency / (2 * DWZ) - 1) < 1e-6
    assert abs(fit.contrast - 0.8) < 1e-6
    assert abs(fit.phase_offset) < 1e-6
    assert fit.residual_norm < 1e-9
    omega, C, theta = fit
    assert C == fit.contrast


@given(st.floats(0.2, 1.0), st.floats(-3.0, 3.0), st.sampled_from([1, 2, 3]))
def test_fit_recovers_parameters(C, theta, n):
    fit = fit_fringe(synthetic(n * DWZ, C, theta))
    assert abs(fit.frequency / (n * DWZ) - 1) < 1e-6
    assert abs(fit.contrast - C) < 1e-6
    assert abs(math.remainder(fit.phase_offset - theta, 2 * math.pi)) < 1e-5


@given(st.floats(0.0, 1.0), st.sampled_from([1, 2, 3]))
def test_contrast_scaling(C0, n):
    data = sweep(cfg(n, contrast=C0), np.linspace(0, t_of(4 * math.pi), 60))
    fit = fit_fringe(data)
    if C0 < 1e-12:
        assert fit.indeterminate and fit.contrast == 0
    else:
        assert abs(fit.contrast - C0) < 1e-6


def test_fit_degenerate_and_insufficient():
    t = np.linspace(0, 1e-4, 20)
    flat = FringeDataset(tuple(FringePoint(x, DWZ * x, 0.0, 0) for x in t), "analytic", DWZ)
    fit = fit_fringe(flat)
    assert fit.contrast == 0 and fit.indeterminate and math.isnan(fit.frequency)
    with pytest.raises(InsufficientSpanError):
        fit_fringe(synthetic(DWZ, 1.0, 0.0, n_pts=5))
    with pytest.raises(InsufficientSpanError):
        fit_fringe(synthetic(DWZ, 1.0, 0.3, span=0.4 * 2 * math.pi / DWZ))


def test_fit_noisy_contrast_within_three_standard_errors():
    C = 0.92
    data = sweep(cfg(1, contrast=C), np.linspace(0, t_of(4 * math.pi), 60), 10**4, seed=2024)
    fit = fit_fringe(data)
    assert abs(fit.contrast - C) < 3 * fit.stderr[1]
    assert abs(fit.frequency / DWZ - 1) < 3 * fit.stderr[0] / DWZ + 1e-12
