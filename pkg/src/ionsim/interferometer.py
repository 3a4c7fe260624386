"""n-th order Mach-Zehnder interferometer on the spin (x) motion system.

The spin plays mode ``a`` (``|1>_a`` is spin-down, ``|0>_a`` spin-up), the
motion plays mode ``b``.  A beamsplitter is a pi/2 pulse on the n-th blue
sideband, the phase shift is a trap-frequency step ``dwz`` held for ``t``.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from .hilbert import (
    DEFAULT_TRUNCATION_TOL,
    HilbertSpace,
    OperatorMatrix,
    StateVector,
    enforce_truncation,
    expectation,
    projector_down,
)
from .noise import ShotRecord, max_slope_phase, sample_shots, spawn_seeds
from .compiler.program import FreeEvolution, free_evolution_unitary
from .pulses import PulseSpec, TrapConfig, pi_over_2_duration, pulse_unitary, wrap_phase

MODES = ("analytic", "statevector", "montecarlo")

DEFAULT_OMEGA_PULSE = 2 * math.pi * 100e3
DEFAULT_DELTA_OMEGA_Z = 2 * math.pi * 20e3


def default_space(order: int) -> HilbertSpace:
    return HilbertSpace(2 * order + 6)


@dataclass(frozen=True)
class InterferometerConfig:
    order: int = 1
    trap: TrapConfig = field(default_factory=TrapConfig)
    omega_pulse: float = DEFAULT_OMEGA_PULSE
    pulse_phases: Tuple[float, float] = (0.0, 0.0)
    delta_omega_z: float = DEFAULT_DELTA_OMEGA_Z
    contrast: float = 1.0
    space: Optional[HilbertSpace] = None
    extended: bool = False

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be an integer >= 1, got {self.order!r}")
        if self.order > 3 and not self.extended:
            raise ValueError(f"order {self.order} > 3 requires extended=True")
        if not 0.0 <= self.contrast <= 1.0:
            raise ValueError(f"contrast must lie in [0, 1], got {self.contrast}")
        if not self.omega_pulse > 0:
            raise ValueError(f"omega_pulse must be positive, got {self.omega_pulse}")
        if len(self.pulse_phases) != 2:
            raise ValueError("pulse_phases must be a pair (phi1, phi2)")
        object.__setattr__(self, "pulse_phases", tuple(float(p) for p in self.pulse_phases))
        if self.space is None:
            object.__setattr__(self, "space", default_space(self.order))
        if self.space.n_max < self.order + 4:
            raise ValueError(f"n_max={self.space.n_max} must be >= order + 4 = {self.order + 4}")

    def pulse(self, which: str) -> PulseSpec:
        idx = {"first": 0, "second": 1}.get(which)
        if idx is None:
            raise ValueError(f"which must be 'first' or 'second', got {which!r}")
        spec = PulseSpec(1, self.order, self.omega_pulse, wrap_phase(self.pulse_phases[idx]), extended=self.extended)
        return spec.with_duration(pi_over_2_duration(spec, self.trap))

    def time_for_phase(self, phi: float) -> float:
        """Non-negative hold time whose accumulated phase has magnitude ``|phi|``."""
        if self.delta_omega_z == 0:
            raise ValueError("delta_omega_z = 0: no phase accumulates")
        return abs(phi / self.delta_omega_z)


def prepare_input(space: HilbertSpace) -> StateVector:
    """``|1>_a |0>_b``: spin down, motional ground state."""
    return space.basis_state(0, 0)


def beamsplitter(config: InterferometerConfig, which: str) -> OperatorMatrix:
    return pulse_unitary(config.pulse(which), config.trap, config.space)


def phase_segment(delta_omega_z: float, t: float, space: HilbertSpace) -> OperatorMatrix:
    """exp(-i dwz t a^dag a)."""
    return free_evolution_unitary(FreeEvolution(delta_omega_z, t), space)


def run_state(config: InterferometerConfig, t: float, tol: float = DEFAULT_TRUNCATION_TOL) -> List[StateVector]:
    """States after each stage: input, first beamsplitter, phase, second beamsplitter."""
    space = config.space
    psi = prepare_input(space)
    states = [psi]
    for where, U in (
        ("first beamsplitter", beamsplitter(config, "first")),
        ("phase segment", phase_segment(config.delta_omega_z, t, space)),
        ("second beamsplitter", beamsplitter(config, "second")),
    ):
        psi = enforce_truncation(StateVector.from_amplitudes(space, U.apply(psi)), tol, where)
        states.append(psi)
    return states


def run_point(config: InterferometerConfig, t: float, tol: float = DEFAULT_TRUNCATION_TOL) -> float:
    """<n_a> at the output, from full state-vector evolution."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    psi = run_state(config, t, tol)[-1]
    p = expectation(projector_down(config.space), psi).real
    return min(1.0, max(0.0, p))


def analytic_point(config: InterferometerConfig, t: float) -> float:
    return 0.5 * (1 - math.cos(config.order * config.delta_omega_z * t))


def apply_contrast(p_ideal: float, C: float) -> float:
    if not 0.0 <= p_ideal <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p_ideal}")
    if not 0.0 <= C <= 1.0:
        raise ValueError(f"contrast must lie in [0, 1], got {C}")
    return C * p_ideal


def calibrate_phases(config: InterferometerConfig, tol: float = 1e-6) -> InterferometerConfig:
    """Fix the second pulse phase so the output vanishes at zero phase.

    Equal pulse phases already give the dark port at ``phi = 0``; if a
    convention change ever produced the bright port instead, the second
    phase is shifted by pi.
    """
    p0 = run_point(config, 0.0)
    if p0 <= tol:
        return config
    phi1, phi2 = config.pulse_phases
    fixed = replace(config, pulse_phases=(phi1, wrap_phase(phi2 + math.pi)))
    if run_point(fixed, 0.0) > tol:
        raise RuntimeError(f"no pulse-phase calibration gives a dark port at zero phase (p0={p0:.3g})")
    return fixed


@dataclass(frozen=True)
class FringePoint:
    t: float
    phi: float
    p_est: float
    shots: int


@dataclass(frozen=True)
class FringeDataset:
    points: Tuple[FringePoint, ...]
    mode: str
    delta_omega_z: float = float("nan")

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for pt in self.points:
            if not 0.0 <= pt.p_est <= 1.0:
                raise ValueError(f"p_est out of range at t={pt.t}: {pt.p_est}")
            if not math.isnan(self.delta_omega_z) and not math.isclose(pt.phi, self.delta_omega_z * pt.t, rel_tol=1e-12, abs_tol=1e-12):
                raise ValueError(f"phi != delta_omega_z * t at t={pt.t}")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def t(self) -> np.ndarray:
        return np.array([p.t for p in self.points])

    @property
    def phi(self) -> np.ndarray:
        return np.array([p.phi for p in self.points])

    @property
    def p_est(self) -> np.ndarray:
        return np.array([p.p_est for p in self.points])

    @property
    def shots(self) -> np.ndarray:
        return np.array([p.shots for p in self.points], dtype=int)

    def to_csv(self, comments: Iterable[str] = ()) -> str:
        buf = io.StringIO()
        for c in comments:
            buf.write(f"# {c}\n")
        buf.write("t_s,phi_rad,p_est,shots\n")
        for p in self.points:
            buf.write(f"{p.t!r},{p.phi!r},{p.p_est!r},{p.shots}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, mode: str = "statevector") -> "FringeDataset":
        lines = [l for l in text.splitlines() if l and not l.startswith("#")]
        if not lines or lines[0] != "t_s,phi_rad,p_est,shots":
            raise ValueError("missing CSV header t_s,phi_rad,p_est,shots")
        pts = []
        for l in lines[1:]:
            t, phi, p, n = l.split(",")
            pts.append(FringePoint(float(t), float(phi), float(p), int(n)))
        return cls(tuple(pts), mode)


def sweep(
    config: InterferometerConfig,
    t_grid: Sequence[float],
    shots_per_point: int = 0,
    seed=None,
    analytic: bool = False,
) -> FringeDataset:
    """Fringe over a grid of hold times.

    ``shots_per_point = 0`` gives noiseless probabilities (state-vector, or
    the closed form when ``analytic``).  Otherwise each point draws its
    Bernoulli sample from its own child of ``SeedSequence(seed)``.
    """
    t_grid = [float(t) for t in t_grid]
    if not t_grid:
        raise ValueError("t_grid is empty")
    if shots_per_point < 0:
        raise ValueError("shots_per_point must be >= 0")
    if shots_per_point > 0 and seed is None:
        raise ValueError("a seed is required for sampled sweeps")
    seeds = spawn_seeds(seed, len(t_grid)) if shots_per_point else [None] * len(t_grid)
    points = []
    for t, ss in zip(t_grid, seeds):
        ideal = analytic_point(config, t) if analytic else run_point(config, t)
        p = apply_contrast(ideal, config.contrast)
        if shots_per_point:
            p = sample_shots(p, shots_per_point, ss).mean()
        points.append(FringePoint(t, config.delta_omega_z * t, p, shots_per_point))
    mode = "montecarlo" if shots_per_point else ("analytic" if analytic else "statevector")
    return FringeDataset(tuple(points), mode, config.delta_omega_z)


def shot_record(config: InterferometerConfig, M: int, seed, phi: Optional[float] = None) -> ShotRecord:
    """``M`` shots at a fixed phase; defaults to the maximum-slope point ``n phi = pi/2``."""
    phi = max_slope_phase(config.order) if phi is None else phi
    t = config.time_for_phase(phi)
    p = apply_contrast(run_point(config, t), config.contrast)
    snapshot = {"order": config.order, "contrast": config.contrast, "delta_omega_z": config.delta_omega_z}
    return sample_shots(p, M, seed, config.delta_omega_z * t, snapshot)


# -- fitting -------------------------------------------------------------------


class FitError(RuntimeError):
    pass


class InsufficientSpanError(ValueError):
    pass


@dataclass(frozen=True)
class FringeFit:
    frequency: float
    contrast: float
    phase_offset: float
    residual_norm: float
    stderr: Tuple[float, float, float] = (float("nan"),) * 3
    indeterminate: bool = False

    def __iter__(self):
        return iter((self.frequency, self.contrast, self.phase_offset))


def fringe_model(t, omega, C, theta):
    return 0.5 * C * (1 - np.cos(omega * np.asarray(t) + theta))


def _wrap_pm(theta: float) -> float:
    w = math.remainder(theta, 2 * math.pi)
    return math.pi if w == -math.pi else w


def _periodogram_peak(t: np.ndarray, y: np.ndarray) -> Tuple[float, complex]:
    span = t[-1] - t[0]
    n = len(t)
    dt = np.median(np.diff(t))
    # oversampled grid from a quarter cycle per span up to the Nyquist rate
    omegas = np.linspace(0.5 * math.pi / span, math.pi / dt, 16 * n)
    amps = np.exp(-1j * np.outer(omegas, t)) @ (y - y.mean())
    k = int(np.argmax(np.abs(amps)))
    return float(omegas[k]), complex(amps[k])


def fit_fringe(dataset: FringeDataset) -> FringeFit:
    """Least-squares fit of ``(C/2)(1 - cos(omega t + theta))``."""
    order = np.argsort(dataset.t)
    t = dataset.t[order]
    y = dataset.p_est[order]
    if len(t) < 8:
        raise InsufficientSpanError(f"need at least 8 points, got {len(t)}")
    if np.ptp(y) <= 1e-12:
        if abs(y[0]) <= 1e-12:
            return FringeFit(float("nan"), 0.0, float("nan"), 0.0, indeterminate=True)
        raise FitError("constant nonzero dataset has no fringe")
    span = t[-1] - t[0]
    w0, amp = _periodogram_peak(t, y)
    if w0 * span < 2 * math.pi * (1 - 1e-9):
        raise InsufficientSpanError(f"data span {span:.3g} s covers less than one fringe period")
    C0 = min(1.0, float(np.ptp(y)))
    theta0 = float(np.angle(-amp))

    def resid(x):
        return fringe_model(t, *x) - y

    res = least_squares(
        resid,
        [w0, C0, theta0],
        x_scale=[w0, 1.0, 1.0],
        bounds=([0.0, 0.0, -np.inf], [np.inf, np.inf, np.inf]),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=2000,
    )
    if not res.success and res.status <= 0:
        raise FitError(f"fringe fit did not converge: {res.message}")
    omega, C, theta = (float(v) for v in res.x)
    dof = len(t) - 3
    stderr = (float("nan"),) * 3
    if dof > 0:
        s2 = float(res.fun @ res.fun) / dof
        try:
            cov = np.linalg.inv(res.jac.T @ res.jac) * s2
            stderr = tuple(float(math.sqrt(max(v, 0.0))) for v in np.diag(cov))
        except np.linalg.LinAlgError:
            warnings.warn("singular fit Jacobian; standard errors unavailable")
    return FringeFit(omega, C, _wrap_pm(theta), float(np.linalg.norm(res.fun)), stderr)
