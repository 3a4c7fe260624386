"""Lower Hermitian operator expressions to native pulse programs.

Native families become single pulses.  Anything else is built from
commutator gadgets of realizable operands, searched recursively up to
``max_depth`` nesting levels.  Whatever a gadget produces besides the wanted
term (its "lower orders") is compiled separately and subtracted, and
independent terms are combined by first-order splitting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from ..hilbert import (
    DEFAULT_TRUNCATION_TOL,
    HilbertSpace,
    OperatorMatrix,
    TruncationError,
    propagator,
)
from ..pulses import TrapConfig
from .expr import Key, OperatorExpr, commutator, expr_to_matrix, is_self_adjoint_key, representative
from .gadget import GADGET_SIGN
from .native import NATIVE_KEYS, is_native, native_pair_program
from .program import FreeEvolution, ProgramMeta, Pulse, PulseProgram, step_unitary

Target = Union[OperatorExpr, PulseProgram]


class UnreachableTarget(ValueError):
    """No gadget construction reaches ``monomial`` within the depth budget."""

    def __init__(self, monomial: Key, depth: int):
        self.monomial = monomial
        self.depth = depth
        spin, p, q = monomial
        super().__init__(f"monomial {spin}*(a+)^{p} a^{q} unreachable within max_depth={depth}")


@dataclass(frozen=True)
class CompileReport:
    measured_error: float
    step_count: int
    depth: int
    delta_t: Optional[float]
    predicted_error: Optional[float] = None
    gadget_count: int = 0
    trotter_steps: int = 1

    def __post_init__(self):
        if self.measured_error < 0:
            raise ValueError("measured_error must be non-negative")

    def to_text(self) -> str:
        lines = [
            f"measured_error {self.measured_error!r}",
            f"predicted_error {self.predicted_error!r}",
            f"step_count {self.step_count}",
            f"gadget_count {self.gadget_count}",
            f"trotter_steps {self.trotter_steps}",
            f"depth {self.depth}",
            f"delta_t {self.delta_t!r}",
        ]
        return "\n".join(lines) + "\n"


def pair_expr(key: Key, coeff: complex) -> OperatorExpr:
    """``c K + c* K^dag``, or ``Re(c) K`` for a self-adjoint ``K``."""
    if is_self_adjoint_key(key):
        return OperatorExpr.term(*key, complex(coeff).real)
    return OperatorExpr.term(*key, coeff, hermitize=True)


def leading_generator(op1: Key, x: complex, op2: Key, y: complex) -> OperatorExpr:
    """Second-order gadget generator ``i s [X, Y]`` for unit step (``dt = 1``)."""
    return commutator(pair_expr(op1, x), pair_expr(op2, y)).scale(1j * GADGET_SIGN).simplify()


def _pieces(expr: OperatorExpr) -> List[Tuple[Key, complex]]:
    return [(k, c) for k, c in expr.simplify(1e-12).hermitian_pairs() if k != ("I", 0, 0)]


def _all_keys(max_degree: int) -> List[Key]:
    keys = set()
    for spin in ("I", "SP", "SZ"):
        for p in range(max_degree + 1):
            for q in range(max_degree + 1 - p):
                keys.add(representative((spin, p, q)))
    keys.discard(("I", 0, 0))
    return sorted(keys, key=lambda k: (k[1] + k[2], k))


@dataclass(frozen=True)
class GadgetDesign:
    """Operand families and the linear map ``y -> target coefficient`` at ``x = 1``."""

    target: Key
    op1: Key
    op2: Key
    col_real: complex
    col_imag: Optional[complex]
    byproducts: Tuple[Key, ...]

    def solve(self, w: complex) -> complex:
        """``y`` (at ``x = 1``) putting coefficient ``w`` on the target key."""
        if self.col_imag is None:
            y = (w.real / self.col_real.real) if is_self_adjoint_key(self.target) else w / self.col_real
            return complex(y.real if isinstance(y, complex) else y, 0.0)
        if is_self_adjoint_key(self.target):
            a = np.array([[self.col_real.real, self.col_imag.real]])
            b = np.array([w.real])
        else:
            a = np.array([[self.col_real.real, self.col_imag.real], [self.col_real.imag, self.col_imag.imag]])
            b = np.array([w.real, w.imag])
        sol, *_ = np.linalg.lstsq(a, b, rcond=None)
        return complex(sol[0], sol[1])


class Synthesizer:
    """Stateful helper for one compilation (memoizes the design search)."""

    def __init__(self, trap: TrapConfig, delta_t: float, strength: float):
        if not delta_t > 0:
            raise ValueError(f"delta_t must be positive, got {delta_t}")
        if not strength > 0:
            raise ValueError(f"operand strength must be positive, got {strength}")
        self.trap = trap
        self.delta_t = delta_t
        self.strength = strength
        self.gadget_count = 0
        self.max_trotter = 1
        # local error contributions: key -> (kind, payload, multiplicity)
        self.local_terms: Dict[tuple, list] = {}
        self._mult = 1
        self._designs: Dict[Tuple[Key, int], Optional[GadgetDesign]] = {}

    # -- search ------------------------------------------------------------

    def realizable(self, key: Key, depth: int) -> bool:
        key = representative(key)
        return is_native(key) or (depth >= 1 and self.design(key, depth) is not None)

    def _pool(self, depth: int, max_degree: int) -> List[Key]:
        pool = list(NATIVE_KEYS)
        if depth >= 1:
            pool += [k for k in _all_keys(max_degree) if not is_native(k) and self.realizable(k, depth)]
        return pool

    def design(self, key: Key, depth: int) -> Optional[GadgetDesign]:
        key = representative(key)
        if (key, depth) in self._designs:
            return self._designs[(key, depth)]
        self._designs[(key, depth)] = None  # guards against re-entry
        result = None
        if depth >= 1:
            result = self._search(key, depth)
        self._designs[(key, depth)] = result
        return result

    def _search(self, key: Key, depth: int) -> Optional[GadgetDesign]:
        deg = key[1] + key[2]
        pool = self._pool(depth - 1, deg)
        for i, op1 in enumerate(pool):
            for op2 in pool[i:]:
                if (op1[1] + op1[2]) + (op2[1] + op2[2]) - 2 < deg:
                    continue
                d = self._try(key, deg, depth, op1, op2)
                if d is not None:
                    return d
        return None

    def _try(self, key, deg, depth, op1, op2) -> Optional[GadgetDesign]:
        if is_self_adjoint_key(op2) and not is_self_adjoint_key(op1):
            # the free complex coefficient sits on op2
            op1, op2 = op2, op1
        g_real = leading_generator(op1, 1.0, op2, 1.0)
        c_real = g_real.coefficient(*key)
        g_imag, c_imag = None, None
        if not is_self_adjoint_key(op2):
            g_imag = leading_generator(op1, 1.0, op2, 1j)
            c_imag = g_imag.coefficient(*key)
        if is_self_adjoint_key(key):
            rank_ok = abs(c_real.real) > 1e-12 or (c_imag is not None and abs(c_imag.real) > 1e-12)
        elif c_imag is None:
            rank_ok = abs(c_real) > 1e-12
        else:
            det = c_real.real * c_imag.imag - c_imag.real * c_real.imag
            rank_ok = abs(det) > 1e-12
        if not rank_ok:
            return None
        by = set()
        for g in (g_real, g_imag):
            if g is None:
                continue
            for k, _ in _pieces(g):
                if k != key:
                    by.add(k)
        for k in by:
            if is_native(k):
                continue
            if k[1] + k[2] >= deg or not self.realizable(k, depth):
                return None
        if c_imag is None and not is_self_adjoint_key(key):
            # a real y only reaches one real direction of a complex coefficient
            return None
        return GadgetDesign(key, op1, op2, c_real, c_imag, tuple(sorted(by)))

    # -- realization -------------------------------------------------------

    def realize(self, pieces: Sequence[Tuple[Key, complex]], tau: float, depth: int) -> PulseProgram:
        """Program approximating ``exp(-i H tau)`` with ``H`` the sum of Hermitian pieces."""
        pieces = [(representative(k), c) for k, c in pieces if k != ("I", 0, 0) and c != 0]
        if not pieces or tau == 0:
            return PulseProgram()
        if len(pieces) == 1 and is_native(pieces[0][0]):
            return native_pair_program(pieces[0][0], pieces[0][1], tau, self.trap)
        k = max(1, math.ceil(abs(tau) / self.delta_t - 1e-9))
        self.max_trotter = max(self.max_trotter, k)
        sigma = tau / k
        outer = self._mult
        self._mult = outer * k
        try:
            slice_prog = PulseProgram()
            for key, c in pieces:
                slice_prog = slice_prog + self.realize_one(key, c, sigma, depth)
            if len(pieces) > 1:
                self._record("split", tuple(pair_expr(key, c * sigma) for key, c in pieces), self._mult)
        finally:
            self._mult = outer
        return slice_prog.repeated(k)

    def _record(self, kind: str, payload, mult: int):
        entry = self.local_terms.setdefault((kind, payload), [kind, payload, 0])
        entry[2] += mult

    def realize_one(self, key: Key, c: complex, sigma: float, depth: int) -> PulseProgram:
        if is_native(key):
            return native_pair_program(key, c, sigma, self.trap)
        if sigma < 0:
            return self.realize_one(key, c, -sigma, depth).inverse()
        design = self.design(key, depth) if depth >= 1 else None
        if design is None:
            raise UnreachableTarget(key, depth)
        dt = self.delta_t
        y1 = design.solve(complex(c) * sigma / dt**2)
        r = max(1, math.ceil(abs(y1) / self.strength**2 - 1e-9))
        y_r = y1 / r
        x = math.sqrt(abs(y_r))
        y = y_r / x
        outer = self._mult
        self._mult = outer * 2 * r
        try:
            op_a = self.realize([(design.op1, x)], dt, depth - 1)
            op_b = self.realize([(design.op2, y)], dt, depth - 1)
        finally:
            self._mult = outer
        gadget = op_b.inverse() + op_a.inverse() + op_b + op_a
        self.gadget_count += r * outer
        per_gadget = leading_generator(design.op1, x, design.op2, y).scale(dt**2)
        self._record("gadget", (gadget, per_gadget), r * outer)
        produced = per_gadget.scale(r)
        byproduct = produced - pair_expr(key, complex(c) * sigma)
        cancel = [(k, -b / sigma) for k, b in _pieces(byproduct) if k != key]
        if cancel:
            self._record("split", (produced, -byproduct), outer)
        return gadget.repeated(r) + self.realize(cancel, sigma, depth)

    def predicted_error(self, space: HilbertSpace, padding: int, margin: int = 2) -> float:
        """Sum of local errors times their multiplicities.

        Each gadget is compared with the exponential of its second-order
        generator, and each splitting with the exponential of the summed
        generators; the total is the triangle-inequality accumulation over
        the states of ``space`` widened by ``margin`` Fock levels.
        """
        big = HilbertSpace(space.n_max + padding)
        cols = [big.index(s, n) for s in (0, 1) for n in range(min(space.n_levels + margin, big.n_levels))]
        total = 0.0
        for kind, payload, mult in self.local_terms.values():
            if kind == "gadget":
                prog, gen = payload
                u = prog.unitary(self.trap, big).matrix
                v = propagator(expr_to_matrix(gen, big, check_order=False), 1.0).matrix
            else:
                u = np.eye(big.dim, dtype=complex)
                for gen in payload:
                    u = propagator(expr_to_matrix(gen, big, check_order=False), 1.0).matrix @ u
                total_gen = payload[0]
                for gen in payload[1:]:
                    total_gen = total_gen + gen
                v = propagator(expr_to_matrix(total_gen, big, check_order=False), 1.0).matrix
            total += mult * float(np.linalg.norm((u - v)[:, cols], 2))
        return total


def trotter(
    targets: Sequence[Target],
    total_time: float,
    k: int,
    trap: Optional[TrapConfig] = None,
) -> PulseProgram:
    """First-order splitting ``(U_1(t/k) U_2(t/k) ...)^k``.

    Expression targets must each be a single native family.  A program
    target is taken to already realize its own ``t/k`` slice.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    trap = trap or TrapConfig()
    tau = total_time / k
    slice_prog = PulseProgram()
    for t in targets:
        if isinstance(t, PulseProgram):
            slice_prog = slice_prog + t
            continue
        pieces = _pieces(t)
        for key, c in pieces:
            if not is_native(key):
                raise UnreachableTarget(key, 0)
            slice_prog = slice_prog + native_pair_program(key, c, tau, trap)
    return slice_prog.repeated(k).with_meta(target="trotter", delta_t=tau, depth=0)


AUTO_PADDING_TRIES = 3


def default_padding(target: OperatorExpr, program: PulseProgram) -> int:
    reach = max([target.degree] + [abs(s.spec.l) for s in program.steps if isinstance(s, Pulse)] + [1])
    return 10 * reach + 10


def _phase_min_distance(up: np.ndarray, ue: np.ndarray) -> float:
    def dist(theta):
        return float(np.linalg.norm(up - np.exp(1j * theta) * ue, 2))

    theta0 = float(np.angle(np.trace(ue.conj().T @ up)))
    res = minimize_scalar(dist, bounds=(theta0 - 0.5, theta0 + 0.5), method="bounded", options={"xatol": 1e-12})
    return min(dist(theta0), float(res.fun))


def verify(
    program: PulseProgram,
    target: OperatorExpr,
    time: float,
    space: HilbertSpace,
    trap: Optional[TrapConfig] = None,
    padding: Optional[int] = None,
    tol: float = DEFAULT_TRUNCATION_TOL,
    predicted_error: Optional[float] = None,
) -> CompileReport:
    """Spectral-norm distance between the program and ``exp(-i H time)``.

    Both propagators are built on a space padded by ``padding`` Fock levels
    and compared on the states of ``space`` (columns), up to a global
    phase.  Population reaching the top two padded levels, from any state of
    ``space`` at any step, raises :class:`TruncationError`.
    """
    trap = trap or TrapConfig()
    if padding is None:
        padding = default_padding(target, program)
    big = HilbertSpace(max(space.n_max + padding, target.order + 2))
    cols = [big.index(s, n) for s in (0, 1) for n in range(space.n_levels)]
    top = [big.index(s, n) for s in (0, 1) for n in (big.n_max - 1, big.n_max)]

    def guard(u_cols: np.ndarray, where: str):
        leaked = float((np.abs(u_cols[top, :]) ** 2).sum(axis=0).max())
        if leaked > tol:
            raise TruncationError(leaked, tol, where)

    u = np.eye(big.dim, dtype=complex)[:, cols]
    for i, step in enumerate(program.steps):
        u = step_unitary(step, trap, big).matrix @ u
        guard(u, f"program step {i}")
    H = expr_to_matrix(target, big)
    ue = propagator(H, time).matrix[:, cols] if not target.is_zero else np.eye(big.dim, dtype=complex)[:, cols]
    guard(ue, "exact evolution")
    err = _phase_min_distance(u, ue)
    return CompileReport(
        measured_error=err,
        step_count=len(program),
        depth=program.meta.depth,
        delta_t=program.meta.delta_t,
        predicted_error=predicted_error,
    )


def synthesize(
    target: OperatorExpr,
    time: float,
    delta_t: float,
    max_depth: int,
    trap: Optional[TrapConfig] = None,
    space: Optional[HilbertSpace] = None,
    strength: Optional[float] = None,
    padding: Optional[int] = None,
    verify_result: bool = True,
) -> Tuple[PulseProgram, Optional[CompileReport]]:
    """Compile ``exp(-i target time)`` into native pulses and measure the error.

    ``strength`` caps the monomial coefficient magnitude of gadget operands
    (default: the largest target coefficient); gadget operands run for
    ``delta_t`` each, so the residual error shrinks linearly in ``delta_t``.
    Without an explicit ``padding`` the verification margin is doubled (up
    to twice) when the truncation guard trips.
    """
    if max_depth < 1:
        raise ValueError(f"max_depth must be >= 1, got {max_depth}")
    if not target.is_hermitian():
        raise ValueError("target expression is not Hermitian")
    trap = trap or TrapConfig()
    pieces = _pieces(target)
    if strength is None:
        strength = max((abs(c) for _, c in pieces), default=1.0)
    synth = Synthesizer(trap, delta_t, strength)
    program = synth.realize(pieces, time, max_depth)
    depth = _program_depth(synth, pieces, max_depth)
    program = program.with_meta(target=target.describe(), delta_t=delta_t, depth=depth)
    if not verify_result:
        return program, None
    if space is None:
        space = HilbertSpace(max(target.order + 2, 2))
    if padding is None:
        # transient excursions of strong nested operands can outrun the
        # default margin; widen it a few times before giving up
        padding = default_padding(target, program)
        for attempt in range(AUTO_PADDING_TRIES):
            try:
                report = verify(program, target, time, space, trap, padding)
                break
            except TruncationError:
                if attempt == AUTO_PADDING_TRIES - 1:
                    raise
                padding *= 2
    else:
        report = verify(program, target, time, space, trap, padding)
    predicted = synth.predicted_error(space, padding)
    report = CompileReport(
        measured_error=report.measured_error,
        step_count=report.step_count,
        depth=depth,
        delta_t=delta_t,
        predicted_error=predicted,
        gadget_count=synth.gadget_count,
        trotter_steps=synth.max_trotter,
    )
    return program, report


def _program_depth(synth: Synthesizer, pieces, max_depth: int) -> int:
    def depth_of(key: Key) -> int:
        if is_native(key):
            return 0
        for d in range(1, max_depth + 1):
            des = synth.design(key, d)
            if des is not None:
                inner = max(depth_of(des.op1), depth_of(des.op2)) + 1
                return max([inner] + [depth_of(b) for b in des.byproducts])
        return max_depth

    return max((depth_of(k) for k, _ in pieces), default=0)

