"""Projection noise, bin averaging, two-sample Allan variance and phase sensitivity."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

# Random streams: numpy PCG64 seeded through SeedSequence; per-point streams
# come from SeedSequence.spawn, so results do not depend on evaluation order.


class ZeroSlopeError(ValueError):
    """Operating point sits on a fringe extremum."""


def make_rng(seed) -> np.random.Generator:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(ss))


def spawn_seeds(seed, n: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


@dataclass(frozen=True)
class ShotRecord:
    """Sequence of single-shot outcomes of the ``|1>_a`` projector."""

    outcomes: np.ndarray = field(repr=False)
    operating_point: float = float("nan")
    config: Optional[dict] = None
    seed: Optional[int] = None

    def __post_init__(self):
        out = np.array(self.outcomes, dtype=np.uint8, copy=True)
        if out.ndim != 1:
            raise ValueError("outcomes must be one-dimensional")
        if out.size and out.max() > 1:
            raise ValueError("outcomes must be 0 or 1")
        out.setflags(write=False)
        object.__setattr__(self, "outcomes", out)

    @property
    def M(self) -> int:
        return int(self.outcomes.size)

    def mean(self) -> float:
        return float(self.outcomes.mean())

    def to_text(self) -> str:
        """Plain-text form: ``#`` header lines, then the outcomes as 0/1 characters, 80 per line."""
        buf = io.StringIO()
        buf.write(f"# M={self.M}\n# operating_point={self.operating_point!r}\n# seed={self.seed!r}\n")
        chars = "".join("1" if x else "0" for x in self.outcomes)
        for i in range(0, len(chars), 80):
            buf.write(chars[i : i + 80] + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ShotRecord":
        meta = {}
        bits = []
        for line in text.splitlines():
            line = line.strip()
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
            elif line:
                if set(line) - {"0", "1"}:
                    raise ValueError(f"invalid shot line {line!r}")
                bits.extend(int(ch) for ch in line)
        if "M" in meta and int(meta["M"]) != len(bits):
            raise ValueError(f"header says M={meta['M']} but {len(bits)} outcomes found")
        seed = meta.get("seed", "None")
        return cls(
            np.array(bits, dtype=np.uint8),
            float(meta.get("operating_point", "nan")),
            seed=None if seed == "None" else int(seed),
        )


def sample_shots(p: float, M: int, seed=None, operating_point: float = float("nan"), config: Optional[dict] = None) -> ShotRecord:
    """``M`` independent Bernoulli(``p``) projective measurements."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    rng = make_rng(seed)
    outcomes = (rng.random(M) < p).astype(np.uint8)
    return ShotRecord(outcomes, operating_point, config, seed if isinstance(seed, (int, np.integer)) else None)


def bin_means(record: Union[ShotRecord, Sequence[int], np.ndarray], N_b: int) -> np.ndarray:
    """Means of consecutive, non-overlapping bins of ``N_b`` shots.

    Requires ``2 < N_b < M/2``; a trailing partial bin is dropped.
    """
    x = record.outcomes if isinstance(record, ShotRecord) else np.asarray(record)
    M = x.size
    if not (2 < N_b < M / 2):
        raise ValueError(f"N_b={N_b} outside the allowed range 2 < N_b < M/2 (M={M})")
    K = M // N_b
    return x[: K * N_b].reshape(K, N_b).mean(axis=1)


def allan_variance(means: Sequence[float]) -> float:
    """Two-sample variance ``sum (m_{i+1} - m_i)^2 / (2 (K - 1))`` over ``K`` bin means."""
    m = np.asarray(means, dtype=float)
    if m.size < 2:
        raise ValueError("need at least two bin means")
    d = np.diff(m)
    return float(np.dot(d, d) / (2 * (m.size - 1)))


def allan_deviation(means: Sequence[float]) -> float:
    return math.sqrt(allan_variance(means))


def allan_relative_stderr(num_bins: int) -> float:
    """Relative standard error of :func:`allan_variance` for i.i.d. Gaussian bin means.

    Consecutive differences share one bin, so they are correlated (-1/2);
    summing the covariances gives ``Var = v^2 (3K - 4) / (K - 1)^2``.
    """
    K = num_bins
    if K < 2:
        raise ValueError("need at least two bins")
    return math.sqrt(3 * K - 4) / (K - 1)


def fringe_slope(config, phi: float) -> float:
    """d<n_a>/dphi of ``(C/2)(1 - cos(n phi))``.

    ``config`` is anything with ``order`` and ``contrast`` attributes,
    normally an :class:`~ionsim.interferometer.InterferometerConfig`.
    """
    n = config.order
    return 0.5 * config.contrast * n * math.sin(n * phi)


def sensitivity(sigma: float, slope: float) -> float:
    """Phase uncertainty ``sigma / |slope|``."""
    if slope == 0:
        raise ZeroSlopeError("zero fringe slope: operating point is at a fringe extremum")
    return sigma / abs(slope)


def sql_curve(N_b: Union[int, np.ndarray]):
    """Linear-interferometer limit: (0.5 / sqrt(N_b)) / 0.5."""
    n = np.asarray(N_b, dtype=float)
    if np.any(n < 1):
        raise ValueError("N_b must be >= 1")
    out = 0.5 / np.sqrt(n) / 0.5
    return float(out) if out.ndim == 0 else out


def max_slope_phase(order: int, k: int = 1) -> float:
    """Operating point with ``n phi = k pi / 2`` (k odd)."""
    if k % 2 == 0:
        raise ValueError("k must be odd")
    return k * math.pi / (2 * order)


@dataclass(frozen=True)
class AllanRow:
    N_b: int
    sigma: float
    delta_phi: float


@dataclass(frozen=True)
class AllanResult:
    rows: tuple
    slope_used: float

    @property
    def N_b(self) -> np.ndarray:
        return np.array([r.N_b for r in self.rows])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([r.sigma for r in self.rows])

    @property
    def delta_phi(self) -> np.ndarray:
        return np.array([r.delta_phi for r in self.rows])

    def to_csv(self, with_sql: bool = False, comments: Iterable[str] = ()) -> str:
        buf = io.StringIO()
        for c in comments:
            buf.write(f"# {c}\n")
        buf.write("N_b,sigma,delta_phi" + (",sql" if with_sql else "") + "\n")
        for r in self.rows:
            line = f"{r.N_b},{r.sigma!r},{r.delta_phi!r}"
            if with_sql:
                line += f",{sql_curve(r.N_b)!r}"
            buf.write(line + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, slope_used: float = float("nan")) -> "AllanResult":
        lines = [l for l in text.splitlines() if l and not l.startswith("#")]
        header = lines[0].split(",")
        if header[:3] != ["N_b", "sigma", "delta_phi"]:
            raise ValueError(f"unexpected header {lines[0]!r}")
        rows = []
        for l in lines[1:]:
            f = l.split(",")
            rows.append(AllanRow(int(f[0]), float(f[1]), float(f[2])))
        return cls(tuple(rows), slope_used)


def allan_scan(record: ShotRecord, config, N_b_list: Iterable[int], phi: Optional[float] = None) -> AllanResult:
    """Allan deviation and phase sensitivity for each bin size.

    The slope is the analytic fringe derivative at the record's operating
    point (or ``phi`` if given).
    """
    phi = record.operating_point if phi is None else phi
    if math.isnan(phi):
        raise ValueError("record has no operating point; pass phi")
    slope = fringe_slope(config, phi)
    rows = []
    for N_b in N_b_list:
        sigma = allan_deviation(bin_means(record, int(N_b)))
        rows.append(AllanRow(int(N_b), sigma, sensitivity(sigma, slope)))
    return AllanResult(tuple(rows), slope)
