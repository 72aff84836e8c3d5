"""Polynomial phase-space symbols and their exact reordering calculus.

A symbol is a finite sum of monomials ``c * conj(z)^i z^j`` over multi-indices
``i, j`` in N^d.  Coefficients stay exact (Gaussian rationals) whenever the
inputs are rational, and fall back to Python complex otherwise.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from functools import lru_cache
from typing import Mapping

import numpy as np

from .errors import ArgumentError, ClassSViolation


@dataclass(frozen=True)
class QQi:
    """Exact complex rational re + i*im."""

    re: Fraction
    im: Fraction = Fraction(0)

    @classmethod
    def coerce(cls, x):
        if isinstance(x, QQi):
            return x
        if isinstance(x, (int, Fraction)):
            return cls(Fraction(x))
        if isinstance(x, Decimal):
            return cls(Fraction(x))
        return None

    def __add__(self, other):
        o = QQi.coerce(other)
        if o is None:
            return complex(self) + other
        return QQi(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self):
        return QQi(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = QQi.coerce(other)
        if o is None:
            return complex(self) * other
        return QQi(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def conjugate(self):
        return QQi(self.re, -self.im)

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __eq__(self, other):
        o = QQi.coerce(other)
        if o is None:
            try:
                return complex(self) == complex(other)
            except TypeError:
                return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def is_zero(self):
        return self.re == 0 and self.im == 0

    def __repr__(self):
        if self.im == 0:
            return str(self.re)
        return f"({self.re}{'+' if self.im >= 0 else '-'}{abs(self.im)}i)"


def _coef(x):
    """Normalize a coefficient: exact when possible, complex otherwise."""
    q = QQi.coerce(x)
    if q is not None:
        return q
    if isinstance(x, float) and x.is_integer():
        return QQi(Fraction(int(x)))
    return complex(x)


def _is_zero(c) -> bool:
    return c.is_zero() if isinstance(c, QQi) else c == 0


def _conj(c):
    return c.conjugate()


Key = tuple  # ((i_1..i_d), (j_1..j_d))


class PolySymbol:
    """sum_{i,j} c_{ij} conj(z)^i z^j on C^d."""

    __slots__ = ("d", "terms")

    def __init__(self, d: int, terms: Mapping[Key, object] | None = None):
        self.d = int(d)
        clean = {}
        for (i, j), c in (terms or {}).items():
            i, j = tuple(int(x) for x in i), tuple(int(x) for x in j)
            if len(i) != self.d or len(j) != self.d or min(i + j, default=0) < 0:
                raise ArgumentError(f"bad multi-index pair {(i, j)} for d={self.d}")
            c = _coef(c)
            prev = clean.get((i, j))
            c = c if prev is None else prev + c
            clean[(i, j)] = c
        self.terms = {k: v for k, v in sorted(clean.items()) if not _is_zero(v)}

    # constructors
    @classmethod
    def monomial(cls, i, j, coef=1) -> "PolySymbol":
        i, j = tuple(i), tuple(j)
        return cls(len(i), {(i, j): coef})

    @classmethod
    def constant(cls, d: int, c=1) -> "PolySymbol":
        return cls(d, {((0,) * d, (0,) * d): c})

    @classmethod
    def norm_power(cls, d: int, p: int, coef=1) -> "PolySymbol":
        """coef * |z|^{2p}, expanded by the multinomial theorem."""
        terms = {}
        for ks in itertools.product(range(p + 1), repeat=d):
            if sum(ks) != p:
                continue
            mult = math.factorial(p)
            for k in ks:
                mult //= math.factorial(k)
            terms[(ks, ks)] = _coef(coef) * mult
        return cls(d, terms)

    @classmethod
    def real_part(cls, d: int, mode: int = 0) -> "PolySymbol":
        e = tuple(1 if m == mode else 0 for m in range(d))
        zero = (0,) * d
        half = QQi(Fraction(1, 2))
        return cls(d, {(zero, e): half, (e, zero): half})

    @classmethod
    def from_literals(cls, d: int, items) -> "PolySymbol":
        """Build from a list of {i: [...], j: [...], re: x, im: y} records."""
        terms = {}
        for rec in items:
            try:
                i, j = tuple(rec["i"]), tuple(rec["j"])
            except (KeyError, TypeError) as exc:
                raise ArgumentError(f"symbol literal needs 'i' and 'j': {rec!r}") from exc
            re = _exact(rec.get("re", 0))
            im = _exact(rec.get("im", 0))
            if isinstance(re, Fraction) and isinstance(im, Fraction):
                c = QQi(re, im)
            else:
                c = complex(float(re), float(im))
            terms[(i, j)] = terms.get((i, j), 0) + c
        return cls(d, terms)

    def to_literals(self) -> list[dict]:
        out = []
        for (i, j), c in self.terms.items():
            cc = complex(c)
            out.append({"i": list(i), "j": list(j), "re": cc.real, "im": cc.imag})
        return out

    # algebra
    def __add__(self, other: "PolySymbol") -> "PolySymbol":
        if not isinstance(other, PolySymbol):
            other = PolySymbol.constant(self.d, other)
        self._check(other)
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms[k] + v if k in terms else v
        return PolySymbol(self.d, terms)

    __radd__ = __add__

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-other if isinstance(other, PolySymbol) else -_coef(other))

    def __mul__(self, other) -> "PolySymbol":
        if isinstance(other, PolySymbol):
            self._check(other)
            terms = {}
            for (i1, j1), c1 in self.terms.items():
                for (i2, j2), c2 in other.terms.items():
                    k = (tuple(a + b for a, b in zip(i1, i2)), tuple(a + b for a, b in zip(j1, j2)))
                    terms[k] = terms[k] + c1 * c2 if k in terms else c1 * c2
            return PolySymbol(self.d, terms)
        s = _coef(other)
        return PolySymbol(self.d, {k: v * s for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, PolySymbol):
            return NotImplemented
        return self.d == other.d and (self - other).is_zero()

    def __hash__(self):
        return hash((self.d, tuple((k, complex(v)) for k, v in self.terms.items())))

    def _check(self, other):
        if other.d != self.d:
            raise ArgumentError(f"mode mismatch: {self.d} vs {other.d}")

    def conj(self) -> "PolySymbol":
        """Symbol of the complex-conjugate function."""
        return PolySymbol(self.d, {(j, i): _conj(c) for (i, j), c in self.terms.items()})

    # predicates
    def is_zero(self) -> bool:
        return not self.terms

    def is_hermitian(self) -> bool:
        return all(
            (j, i) in self.terms and self.terms[(j, i)] == _conj(c) for (i, j), c in self.terms.items()
        )

    def is_number_conserving(self) -> bool:
        return all(i == j for i, j in self.terms)

    def is_exact(self) -> bool:
        return all(isinstance(c, QQi) for c in self.terms.values())

    def degree(self) -> int:
        return max((sum(i) + sum(j) for i, j in self.terms), default=0)

    def homogeneous_part(self, degree: int) -> "PolySymbol":
        return PolySymbol(self.d, {k: v for k, v in self.terms.items() if sum(k[0]) + sum(k[1]) == degree})

    # evaluation
    def __call__(self, z) -> np.ndarray:
        """Evaluate on points of shape (d,) or (K, d)."""
        z = np.asarray(z, dtype=complex)
        single = z.ndim == 1
        pts = z.reshape(-1, self.d)
        zc = pts.conj()
        out = np.zeros(pts.shape[0], dtype=complex)
        for (i, j), c in self.terms.items():
            term = np.full(pts.shape[0], complex(c))
            for m in range(self.d):
                if i[m]:
                    term = term * zc[:, m] ** i[m]
                if j[m]:
                    term = term * pts[:, m] ** j[m]
            out += term
        return out[0] if single else out

    def evaluate_pair(self, zbar_at, z_at) -> np.ndarray:
        """Evaluate with conj(z) replaced by conj(zbar_at), for off-diagonal kernels."""
        a = np.asarray(zbar_at, dtype=complex).reshape(-1, self.d).conj()
        b = np.asarray(z_at, dtype=complex).reshape(-1, self.d)
        out = np.zeros(np.broadcast_shapes(a.shape[:1], b.shape[:1]), dtype=complex)
        for (i, j), c in self.terms.items():
            term = complex(c)
            for m in range(self.d):
                if i[m]:
                    term = term * a[:, m] ** i[m]
                if j[m]:
                    term = term * b[:, m] ** j[m]
            out = out + term
        return out

    def pretty(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for (i, j), c in self.terms.items():
            factors = []
            for m in range(self.d):
                zb = f"zb{m}" if self.d > 1 else "zb"
                zz = f"z{m}" if self.d > 1 else "z"
                if i[m]:
                    factors.append(zb if i[m] == 1 else f"{zb}^{i[m]}")
                if j[m]:
                    factors.append(zz if j[m] == 1 else f"{zz}^{j[m]}")
            parts.append(f"{c!r}" + ("*" + "*".join(factors) if factors else ""))
        return " + ".join(parts)

    def __repr__(self):
        return f"PolySymbol(d={self.d}, {self.pretty()})"


def _exact(x):
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, Decimal):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(Decimal(x))
    if isinstance(x, float):
        # floats from JSON/TOML keep their shortest decimal spelling exactly
        return Fraction(Decimal(repr(x)))
    return x


# reordering calculus -------------------------------------------------------


def _falling(n: int, k: int) -> int:
    return math.perm(n, k)


def poisson_bracket_power(i, j, k) -> tuple[int, tuple, tuple]:
    """(1/k!) {conj(z)^i, z^j}^k restricted to one multi-index k.

    The k-th power of the bidifferential operator sum_m d/dzb_m (x) d/dz_m,
    divided by k!, splits over multi-indices kappa with |kappa| = k with weight
    1/kappa!.  Returns (integer coefficient, i - kappa, j - kappa).
    """
    coef = 1
    for im, jm, km in zip(i, j, k):
        if km > min(im, jm):
            return 0, (), ()
        coef *= _falling(im, km) * _falling(jm, km) // math.factorial(km)
    return coef, tuple(a - b for a, b in zip(i, k)), tuple(a - b for a, b in zip(j, k))


@lru_cache(maxsize=None)
def _upper_monomial(i: tuple, j: tuple) -> tuple:
    """Upper symbol of Wick(conj(z)^i z^j) as ((power, i', j', int coef), ...).

    Anti-Wick(conj(z)^i z^j) = a^j a*^i, and normal ordering gives
    a^j a*^i = sum_kappa (1/kappa!){.,.}^kappa eps^|kappa| a*^(i-kappa) a^(j-kappa),
    so Wick(conj(z)^i z^j) = antiWick(conj(z)^i z^j) minus the reordering terms,
    each of which is expanded recursively.
    """
    out = {(0, i, j): 1}
    ranges = [range(min(a, b) + 1) for a, b in zip(i, j)]
    for kappa in itertools.product(*ranges):
        if not any(kappa):
            continue
        coef, i2, j2 = poisson_bracket_power(i, j, kappa)
        if coef == 0:
            continue
        shift = sum(kappa)
        for power, i3, j3, c3 in _upper_monomial(i2, j2):
            key = (power + shift, i3, j3)
            out[key] = out.get(key, 0) - coef * c3
    return tuple((p, a, b, c) for (p, a, b), c in sorted(out.items()) if c != 0)


class SymbolExpansion:
    """base + sum_k eps^k corrections[k], exact in eps."""

    def __init__(self, base: PolySymbol, corrections: Mapping[int, PolySymbol]):
        self.base = base
        self.d = base.d
        self.corrections = {k: v for k, v in sorted(corrections.items()) if not v.is_zero()}

    def at(self, eps: float) -> PolySymbol:
        out = self.base
        for k, sym in self.corrections.items():
            out = out + sym * (eps**k)
        return out

    def __call__(self, z, eps: float):
        val = self.base(z)
        for k, sym in self.corrections.items():
            val = val + eps**k * sym(z)
        return val

    def correction_bound(self, z) -> np.ndarray:
        """P(z) = sum_k |correction_k(z)|, so |up(z) - base(z)| <= eps * P(z) for eps <= 1."""
        z = np.asarray(z, dtype=complex)
        total = np.zeros(z.reshape(-1, self.d).shape[0])
        for sym in self.corrections.values():
            total = total + np.abs(np.atleast_1d(sym(z)))
        return total if z.ndim > 1 else total[0]

    def __repr__(self):
        parts = [self.base.pretty()] + [f"eps^{k}*({s.pretty()})" for k, s in self.corrections.items()]
        return "SymbolExpansion(" + " + ".join(parts) + ")"


def upper_symbol(sym: PolySymbol) -> SymbolExpansion:
    """Exact upper symbol of Wick(sym) as a polynomial in eps."""
    buckets: dict[int, dict] = {}
    for (i, j), c in sym.terms.items():
        for power, i2, j2, k in _upper_monomial(i, j):
            bucket = buckets.setdefault(power, {})
            bucket[(i2, j2)] = bucket.get((i2, j2), 0) + c * k
    base = PolySymbol(sym.d, buckets.pop(0, {}))
    return SymbolExpansion(base, {k: PolySymbol(sym.d, t) for k, t in buckets.items()})


# class S ------------------------------------------------------------------


def _tensor_form_symbol(d: int, p: int, mat: np.ndarray) -> PolySymbol:
    """<z^{(x)p} | A z^{(x)p}> as a polynomial symbol."""
    terms = {}
    for I in itertools.product(range(d), repeat=p):
        iv = tuple(I.count(m) for m in range(d))
        row = np.ravel_multi_index(I, (d,) * p) if p else 0
        for J in itertools.product(range(d), repeat=p):
            a = mat[row, np.ravel_multi_index(J, (d,) * p) if p else 0]
            if a == 0:
                continue
            jv = tuple(J.count(m) for m in range(d))
            terms[(iv, jv)] = terms.get((iv, jv), 0) + complex(a)
    return PolySymbol(d, terms)


class SymbolClassS:
    """h = sum_p <z^p | h_p z^p> + V with h_p >= 0, h_{p_max} > 0, deg V < 2 p_max.

    Each ``h0_terms`` entry maps p to either a nonnegative scalar (the radial
    case lambda |z|^{2p}) or a Hermitian matrix on (C^d)^{(x)p}.
    """

    def __init__(self, d: int, h0_terms: Mapping[int, object], V: PolySymbol | None = None):
        self.d = int(d)
        if not h0_terms:
            raise ClassSViolation("class S needs at least one h0 term")
        self.h0_terms = dict(sorted(h0_terms.items()))
        self.p_max = max(self.h0_terms)
        self.V = V if V is not None else PolySymbol(self.d)
        if self.V.d != self.d:
            raise ClassSViolation("V has the wrong number of modes")
        self._validate()
        h0 = PolySymbol(self.d)
        for p, op in self.h0_terms.items():
            h0 = h0 + self._block_symbol(p, op)
        self.h0 = h0
        self.symbol = h0 + self.V

    @classmethod
    def radial(cls, d: int, coefs: Mapping[int, object], V: PolySymbol | None = None):
        return cls(d, dict(coefs), V)

    def _block_symbol(self, p, op):
        if np.isscalar(op) or isinstance(op, (Fraction, Decimal, QQi)):
            return PolySymbol.norm_power(self.d, p, op)
        return _tensor_form_symbol(self.d, p, np.asarray(op))

    def _eigmin(self, p, op) -> float:
        if isinstance(op, QQi):
            if op.im != 0:
                raise ClassSViolation(f"scalar h_{p} must be real, got {op!r}")
            return float(op.re)
        if np.isscalar(op) or isinstance(op, (Fraction, Decimal)):
            return float(op)
        mat = np.asarray(op, dtype=complex)
        if mat.shape != (self.d**p, self.d**p):
            raise ClassSViolation(f"h_{p} must be {self.d**p}x{self.d**p}, got {mat.shape}")
        if np.abs(mat - mat.conj().T).max() > 1e-12 * max(1.0, np.abs(mat).max()):
            raise ClassSViolation(f"h_{p} is not Hermitian")
        return float(np.linalg.eigvalsh(mat).min())

    def _validate(self):
        for p, op in self.h0_terms.items():
            if p < 1:
                raise ClassSViolation(f"h0 block index must be >= 1, got {p}")
            lo = self._eigmin(p, op)
            if lo < -1e-12:
                raise ClassSViolation(f"h_{p} is not positive semidefinite (min eig {lo:.3e})")
            if p == self.p_max and lo <= 0:
                raise ClassSViolation(f"leading block h_{p} must be positive definite")
        if self.V.degree() >= 2 * self.p_max and not self.V.is_zero():
            raise ClassSViolation(
                f"deg V = {self.V.degree()} must be strictly below 2 p_max = {2 * self.p_max}"
            )
        if not self.V.is_hermitian():
            raise ClassSViolation("V is not real-valued (coefficients not Hermitian)")

    def leading_min(self) -> float:
        """min of the leading homogeneous form on the unit sphere (lower bound)."""
        return self._eigmin(self.p_max, self.h0_terms[self.p_max])

    def __call__(self, z):
        return self.symbol(z).real

    def upper(self) -> SymbolExpansion:
        return upper_symbol(self.symbol)

    def is_number_conserving(self) -> bool:
        return self.symbol.is_number_conserving()

    def __repr__(self):
        return f"SymbolClassS(d={self.d}, p_max={self.p_max}, h={self.symbol.pretty()})"
