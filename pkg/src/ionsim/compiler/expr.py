"""Operator-expression IR: sums of ``coeff * spin * (a^dag)^p a^q``.

Spin factors are ``I``, ``SP``, ``SM``, ``SZ`` with ``SP = sigma_x + i sigma_y``
(twice the elementary raising matrix).  All monomials are kept normal-ordered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from ..hilbert import HilbertSpace, OperatorMatrix, embed, lowering_op, spin_op

SPINS = ("I", "SP", "SM", "SZ")
SPIN_ADJOINT = {"I": "I", "SP": "SM", "SM": "SP", "SZ": "SZ"}

Key = Tuple[str, int, int]

_SPIN_MATS = {s: spin_op(s).matrix for s in SPINS}


def _decompose_spin(m: np.ndarray) -> Dict[str, complex]:
    # m in (down, up) ordering; SP = 2|up><down|
    out = {
        "I": (m[0, 0] + m[1, 1]) / 2,
        "SZ": (m[1, 1] - m[0, 0]) / 2,
        "SP": m[1, 0] / 2,
        "SM": m[0, 1] / 2,
    }
    return {k: complex(v) for k, v in out.items() if v != 0}


_SPIN_PRODUCT = {(s, t): _decompose_spin(_SPIN_MATS[s] @ _SPIN_MATS[t]) for s in SPINS for t in SPINS}


def monomial_product(p: int, q: int, r: int, s: int) -> Dict[Tuple[int, int], int]:
    """Normal-ordered ``(a^dag)^p a^q (a^dag)^r a^s`` as ``{(p', q'): integer coeff}``."""
    out = {}
    for k in range(min(q, r) + 1):
        c = math.comb(q, k) * math.comb(r, k) * math.factorial(k)
        out[(p + r - k, q + s - k)] = c
    return out


def is_self_adjoint_key(key: Key) -> bool:
    spin, p, q = key
    return SPIN_ADJOINT[spin] == spin and p == q


def adjoint_key(key: Key) -> Key:
    spin, p, q = key
    return (SPIN_ADJOINT[spin], q, p)


def representative(key: Key) -> Key:
    """Canonical member of the ``{key, adjoint_key}`` pair."""
    adj = adjoint_key(key)
    order = {"SP": 0, "I": 1, "SZ": 2, "SM": 3}
    k1 = (order[key[0]], -key[1], key[2])
    k2 = (order[adj[0]], -adj[1], adj[2])
    return key if k1 <= k2 else adj


@dataclass(frozen=True)
class Term:
    spin: str
    p: int
    q: int
    coeff: complex

    def __post_init__(self):
        if self.spin not in SPINS:
            raise ValueError(f"spin factor must be one of {SPINS}, got {self.spin!r}")
        if int(self.p) != self.p or int(self.q) != self.q or self.p < 0 or self.q < 0:
            raise ValueError(f"monomial powers must be non-negative integers, got ({self.p}, {self.q})")
        object.__setattr__(self, "coeff", complex(self.coeff))

    @property
    def key(self) -> Key:
        return (self.spin, int(self.p), int(self.q))


@dataclass(frozen=True)
class OperatorExpr:
    """``sum(terms)`` (plus its Hermitian conjugate when ``hermitize``)."""

    terms: Tuple[Term, ...] = ()
    hermitize: bool = False
    max_order: Optional[int] = None

    def __post_init__(self):
        terms = tuple(t if isinstance(t, Term) else Term(*t) for t in self.terms)
        object.__setattr__(self, "terms", terms)
        if self.max_order is not None:
            for t in terms:
                if max(t.p, t.q) > self.max_order:
                    raise ValueError(f"term {t.key} exceeds declared max order {self.max_order}")

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, coeffs: Dict[Key, complex]) -> "OperatorExpr":
        return cls(tuple(Term(s, p, q, c) for (s, p, q), c in sorted(coeffs.items()) if c != 0))

    @classmethod
    def term(cls, spin: str, p: int, q: int, coeff: complex = 1.0, hermitize: bool = False) -> "OperatorExpr":
        return cls((Term(spin, p, q, coeff),), hermitize=hermitize)

    # -- canonical form ----------------------------------------------------

    def canonical(self) -> Dict[Key, complex]:
        """Full operator (conjugate included) as ``{key: coeff}``, zeros dropped."""
        out: Dict[Key, complex] = {}
        for t in self.terms:
            out[t.key] = out.get(t.key, 0) + t.coeff
            if self.hermitize:
                k = adjoint_key(t.key)
                out[k] = out.get(k, 0) + t.coeff.conjugate()
        return {k: complex(v) for k, v in sorted(out.items()) if v != 0}

    def normalized(self) -> "OperatorExpr":
        return OperatorExpr.from_dict(self.canonical())

    def simplify(self, tol: float = 1e-13) -> "OperatorExpr":
        c = self.canonical()
        scale = max((abs(v) for v in c.values()), default=0.0)
        return OperatorExpr.from_dict({k: v for k, v in c.items() if abs(v) > tol * scale})

    @property
    def is_zero(self) -> bool:
        return not self.canonical()

    @property
    def degree(self) -> int:
        return max((p + q for (_, p, q) in self.canonical()), default=0)

    @property
    def order(self) -> int:
        return max((max(p, q) for (_, p, q) in self.canonical()), default=0)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        c = self.canonical()
        scale = max((abs(v) for v in c.values()), default=0.0)
        for k, v in c.items():
            if abs(c.get(adjoint_key(k), 0) - v.conjugate()) > tol * max(scale, 1.0):
                return False
        return True

    def hermitian_pairs(self) -> List[Tuple[Key, complex]]:
        """Split a Hermitian expression into ``c K + c* K^dag`` pieces.

        Self-adjoint keys carry a real ``c`` and stand alone.
        """
        if not self.is_hermitian():
            raise ValueError("expression is not Hermitian")
        c = self.canonical()
        out = []
        seen = set()
        for k in sorted(c, key=lambda k: representative(k)):
            rep = representative(k)
            if rep in seen:
                continue
            seen.add(rep)
            val = c.get(rep, 0)
            if val == 0:
                continue
            if is_self_adjoint_key(rep):
                val = complex(val.real, 0.0)
            out.append((rep, val))
        return out

    # -- algebra -----------------------------------------------------------

    def __add__(self, other: "OperatorExpr") -> "OperatorExpr":
        a, b = self.canonical(), other.canonical()
        for k, v in b.items():
            a[k] = a.get(k, 0) + v
        return OperatorExpr.from_dict(a)

    def __neg__(self) -> "OperatorExpr":
        return self.scale(-1)

    def __sub__(self, other: "OperatorExpr") -> "OperatorExpr":
        return self + (-other)

    def scale(self, c: complex) -> "OperatorExpr":
        return OperatorExpr.from_dict({k: v * c for k, v in self.canonical().items()})

    def __mul__(self, c):
        if isinstance(c, OperatorExpr):
            return NotImplemented
        return self.scale(c)

    __rmul__ = __mul__

    def __matmul__(self, other: "OperatorExpr") -> "OperatorExpr":
        out: Dict[Key, complex] = {}
        for (s1, p, q), c1 in self.canonical().items():
            for (s2, r, s), c2 in other.canonical().items():
                for spin, cs in _SPIN_PRODUCT[(s1, s2)].items():
                    for (pp, qq), cm in monomial_product(p, q, r, s).items():
                        key = (spin, pp, qq)
                        out[key] = out.get(key, 0) + c1 * c2 * cs * cm
        return OperatorExpr.from_dict(out)

    def adjoint(self) -> "OperatorExpr":
        return OperatorExpr.from_dict({adjoint_key(k): v.conjugate() for k, v in self.canonical().items()})

    def coefficient(self, spin: str, p: int, q: int) -> complex:
        return self.canonical().get((spin, p, q), 0j)

    def __iter__(self) -> Iterator[Term]:
        return iter(self.terms)

    def describe(self) -> str:
        parts = []
        for (s, p, q), c in self.canonical().items():
            mono = "".join(["a+" if p == 1 else (f"a+^{p}" if p else ""), "a" if q == 1 else (f"a^{q}" if q else "")])
            parts.append(f"({c.real:.6g}{c.imag:+.6g}j){s}{'*' + mono if mono else ''}")
        return " + ".join(parts) if parts else "0"


def commutator(a: OperatorExpr, b: OperatorExpr) -> OperatorExpr:
    return (a @ b) - (b @ a)


def _monomial_matrix(p: int, q: int, space: HilbertSpace) -> np.ndarray:
    a = lowering_op(space).matrix
    return np.linalg.matrix_power(a.conj().T, p) @ np.linalg.matrix_power(a, q)


def expr_to_matrix(expr: OperatorExpr, space: HilbertSpace, check_order: bool = True) -> OperatorMatrix:
    """Dense matrix of ``expr`` in the spin-major basis of ``space``."""
    c = expr.canonical()
    if check_order and c and space.n_max < expr.order + 2:
        raise ValueError(f"n_max={space.n_max} too small for monomial order {expr.order} (need >= {expr.order + 2})")
    m = np.zeros((space.dim, space.dim), dtype=complex)
    cache: Dict[Tuple[int, int], np.ndarray] = {}
    for (spin, p, q), coeff in c.items():
        if (p, q) not in cache:
            cache[(p, q)] = _monomial_matrix(p, q, space)
        m += coeff * np.kron(_SPIN_MATS[spin], cache[(p, q)])
    herm = expr.is_hermitian() or None
    if herm:
        m = (m + m.conj().T) / 2
    return OperatorMatrix(m, space, herm)


def monomial_element(p: int, q: int, k: int) -> float:
    """``<k - q + p| (a^dag)^p a^q |k>``."""
    if k < q:
        return 0.0
    lg = math.lgamma
    return math.exp(0.5 * (lg(k + 1) - lg(k - q + 1)) + 0.5 * (lg(k - q + p + 1) - lg(k - q + 1)))


def project_monomials(
    G: OperatorMatrix | np.ndarray,
    space: HilbertSpace,
    max_degree: int,
    fit_max: Optional[int] = None,
    spins: Iterable[str] = SPINS,
    tol: float = 0.0,
) -> Dict[Key, complex]:
    """Least-squares expansion of a matrix in normal-ordered monomials.

    Only matrix elements between Fock levels ``<= fit_max`` enter the fit,
    which keeps truncation artefacts at the top of the ladder out of the
    result.  ``fit_max`` defaults to ``n_max - max_degree``.
    """
    g = G.matrix if isinstance(G, OperatorMatrix) else np.asarray(G)
    nl = space.n_levels
    if fit_max is None:
        fit_max = space.n_max - max_degree
    if fit_max < 1:
        raise ValueError("fit window is empty; enlarge the space")
    dd, uu = g[:nl, :nl], g[nl:, nl:]
    blocks = {"I": (dd + uu) / 2, "SZ": (uu - dd) / 2, "SP": g[nl:, :nl] / 2, "SM": g[:nl, nl:] / 2}
    out: Dict[Key, complex] = {}
    for spin in spins:
        block = blocks[spin]
        for d in range(-max_degree, max_degree + 1):
            monos = [(p, p - d) for p in range(max(0, d), max_degree + 1) if p - d >= 0 and 2 * p - d <= max_degree]
            if not monos:
                continue
            ks = [k for k in range(max(0, -d), fit_max + 1) if k + d <= fit_max]
            if len(ks) < len(monos):
                raise ValueError(f"fit window too small for shift {d}: {len(ks)} rows, {len(monos)} unknowns")
            A = np.array([[monomial_element(p, q, k) for (p, q) in monos] for k in ks])
            b = np.array([block[k + d, k] for k in ks])
            sol, *_ = np.linalg.lstsq(A, b, rcond=None)
            for (p, q), v in zip(monos, sol):
                if abs(v) > tol:
                    out[(spin, p, q)] = complex(v)
    return out


class ExprParseError(ValueError):
    def __init__(self, line: int, column: int, message: str):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


def parse_expr(text: str) -> OperatorExpr:
    """Parse the line format ``SPIN p q RE IM`` with optional ``HERMITIZE``.

    Blank lines and ``#`` comments are ignored.  ``MAXORDER N`` declares the
    maximum monomial order.
    """
    terms = []
    hermitize = False
    max_order = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        tokens = [(m_start, tok) for m_start, tok in _tokenize(line)]
        if not tokens:
            continue
        col0, head = tokens[0]
        if head.upper() == "HERMITIZE":
            if len(tokens) != 1:
                raise ExprParseError(lineno, tokens[1][0], "HERMITIZE takes no arguments")
            hermitize = True
            continue
        if head.upper() == "MAXORDER":
            if len(tokens) != 2:
                raise ExprParseError(lineno, col0, "MAXORDER expects one integer")
            max_order = _parse_int(tokens[1], lineno)
            continue
        if head not in SPINS:
            raise ExprParseError(lineno, col0, f"unknown spin factor {head!r} (expected one of {', '.join(SPINS)})")
        if len(tokens) != 5:
            col = tokens[-1][0] + len(tokens[-1][1]) + 1 if len(tokens) < 5 else tokens[5][0]
            raise ExprParseError(lineno, col, f"expected 'SPIN p q RE IM', got {len(tokens)} fields")
        p = _parse_int(tokens[1], lineno)
        q = _parse_int(tokens[2], lineno)
        re_ = _parse_float(tokens[3], lineno)
        im_ = _parse_float(tokens[4], lineno)
        terms.append(Term(head, p, q, complex(re_, im_)))
    try:
        return OperatorExpr(tuple(terms), hermitize=hermitize, max_order=max_order)
    except ValueError as exc:
        raise ExprParseError(0, 0, str(exc)) from exc


def format_expr(expr: OperatorExpr) -> str:
    lines = []
    if expr.max_order is not None:
        lines.append(f"MAXORDER {expr.max_order}")
    for t in expr.terms:
        lines.append(f"{t.spin} {t.p} {t.q} {t.coeff.real!r} {t.coeff.imag!r}")
    if expr.hermitize:
        lines.append("HERMITIZE")
    return "\n".join(lines) + "\n"


def _tokenize(line: str):
    col = 0
    n = len(line)
    while col < n:
        while col < n and line[col].isspace():
            col += 1
        if col >= n:
            break
        start = col
        while col < n and not line[col].isspace():
            col += 1
        yield start + 1, line[start:col]


def _parse_int(tok, lineno: int) -> int:
    col, s = tok
    try:
        v = int(s)
    except ValueError:
        raise ExprParseError(lineno, col, f"expected a non-negative integer, got {s!r}") from None
    if v < 0:
        raise ExprParseError(lineno, col, f"power must be non-negative, got {v}")
    return v


def _parse_float(tok, lineno: int) -> float:
    col, s = tok
    try:
        v = float(s)
    except ValueError:
        raise ExprParseError(lineno, col, f"expected a number, got {s!r}") from None
    if not math.isfinite(v):
        raise ExprParseError(lineno, col, f"coefficient must be finite, got {s!r}")
    return v
