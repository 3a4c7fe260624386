"""Pulse schedules: ordered native pulses and free-evolution segments."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np

from ..hilbert import HilbertSpace, OperatorMatrix, StateVector, enforce_truncation, DEFAULT_TRUNCATION_TOL
from ..pulses import PulseSpec, TrapConfig, pulse_unitary


@dataclass(frozen=True)
class Pulse:
    spec: PulseSpec

    @property
    def duration(self) -> float:
        return self.spec.duration

    def inverse(self) -> "Pulse":
        return Pulse(self.spec.reversed())

    def to_text(self) -> str:
        s = self.spec
        return f"PULSE eps={s.epsilon} l={s.l} omega={s.omega!r} phi={s.phi!r} t={s.duration!r}"


@dataclass(frozen=True)
class FreeEvolution:
    """Trap frequency shifted by ``delta_omega_z`` for time ``t``: exp(-i dwz t a^dag a)."""

    delta_omega_z: float
    t: float

    def __post_init__(self):
        if self.t < 0:
            raise ValueError(f"free-evolution time must be >= 0, got {self.t}")

    @property
    def duration(self) -> float:
        return self.t

    def inverse(self) -> "FreeEvolution":
        return FreeEvolution(-self.delta_omega_z, self.t)

    def to_text(self) -> str:
        return f"FREE dwz={self.delta_omega_z!r} t={self.t!r}"


Step = Union[Pulse, FreeEvolution]


def free_evolution_unitary(step: FreeEvolution, space: HilbertSpace) -> OperatorMatrix:
    phases = np.exp(-1j * step.delta_omega_z * step.t * np.arange(space.n_levels))
    return OperatorMatrix(np.diag(np.tile(phases, 2)), space, None, True)


def step_unitary(step: Step, trap: TrapConfig, space: HilbertSpace) -> OperatorMatrix:
    if isinstance(step, Pulse):
        return pulse_unitary(step.spec, trap, space)
    return free_evolution_unitary(step, space)


@dataclass(frozen=True)
class ProgramMeta:
    target: str = ""
    delta_t: Optional[float] = None
    depth: int = 0


@dataclass(frozen=True)
class PulseProgram:
    steps: Tuple[Step, ...] = ()
    meta: ProgramMeta = field(default_factory=ProgramMeta)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    @property
    def duration(self) -> float:
        return math.fsum(s.duration for s in self.steps)

    def then(self, other: "PulseProgram") -> "PulseProgram":
        """``other`` runs after ``self``."""
        return PulseProgram(self.steps + other.steps, self.meta)

    def __add__(self, other: "PulseProgram") -> "PulseProgram":
        return self.then(other)

    def inverse(self) -> "PulseProgram":
        return PulseProgram(tuple(s.inverse() for s in reversed(self.steps)), self.meta)

    def repeated(self, r: int) -> "PulseProgram":
        return PulseProgram(self.steps * r, self.meta)

    def with_meta(self, **kw) -> "PulseProgram":
        base = self.meta
        meta = ProgramMeta(
            target=kw.get("target", base.target),
            delta_t=kw.get("delta_t", base.delta_t),
            depth=kw.get("depth", base.depth),
        )
        return PulseProgram(self.steps, meta)

    def unitary(self, trap: TrapConfig, space: HilbertSpace) -> OperatorMatrix:
        """Composed propagator; the first step acts first."""
        u = np.eye(space.dim, dtype=complex)
        for step in self.steps:
            u = step_unitary(step, trap, space).matrix @ u
        return OperatorMatrix(u, space)

    def run(self, psi: StateVector, trap: TrapConfig, tol: float = DEFAULT_TRUNCATION_TOL, guard: bool = True) -> StateVector:
        """Propagate a state step by step, enforcing the truncation guard."""
        amps = psi.amplitudes
        for i, step in enumerate(self.steps):
            amps = step_unitary(step, trap, psi.space).matrix @ amps
            if guard:
                enforce_truncation(StateVector(psi.space, amps / np.linalg.norm(amps)), tol, f"step {i}")
        return StateVector.from_amplitudes(psi.space, amps)

    def to_text(self) -> str:
        lines = []
        if self.meta.target:
            lines.append(f"# target: {self.meta.target}")
        if self.meta.delta_t is not None:
            lines.append(f"# delta_t: {self.meta.delta_t!r}")
        lines.append(f"# depth: {self.meta.depth}")
        lines.extend(s.to_text() for s in self.steps)
        return "\n".join(lines) + "\n"


_PULSE_RE = re.compile(
    r"^PULSE\s+eps=(?P<eps>[01])\s+l=(?P<l>-?\d+)\s+omega=(?P<omega>\S+)\s+phi=(?P<phi>\S+)\s+t=(?P<t>\S+)$"
)
_FREE_RE = re.compile(r"^FREE\s+dwz=(?P<dwz>\S+)\s+t=(?P<t>\S+)$")


def parse_program(text: str) -> PulseProgram:
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _PULSE_RE.match(line)
        if m:
            spec = PulseSpec(
                int(m["eps"]), int(m["l"]), float(m["omega"]), float(m["phi"]), float(m["t"]), extended=abs(int(m["l"])) > 3
            )
            steps.append(Pulse(spec))
            continue
        m = _FREE_RE.match(line)
        if m:
            steps.append(FreeEvolution(float(m["dwz"]), float(m["t"])))
            continue
        raise ValueError(f"line {lineno}: unrecognised step {raw!r}")
    return PulseProgram(tuple(steps))
