"""Wick and anti-Wick quantization, lower symbols, growth bounds."""
from __future__ import annotations

import math

import numpy as np

from .errors import ArgumentError, ClassSViolation, ConvergenceError, TruncationError
from .fock import (
    DEFICIT_TOL,
    FockSpec,
    OperatorMatrix,
    _ladder,
    coherent_matrix,
    coherent_vector,
)
from .quadrature import QuadratureGrid, gauss_hermite_grid, uniform_grid
from .symbols import PolySymbol, SymbolClassS, SymbolExpansion


def _single_mode_term(spec: FockSpec, i: int, j: int) -> np.ndarray:
    a = _ladder(spec.n_max, spec.eps)
    return np.linalg.matrix_power(a.conj().T, i) @ np.linalg.matrix_power(a, j)


def wick_diagonal(sym: PolySymbol, spec: FockSpec) -> np.ndarray:
    """Diagonal of Wick(sym) for a number-conserving symbol."""
    if not sym.is_number_conserving():
        raise ArgumentError("symbol is not number conserving; its Wick quantization is not diagonal")
    occ = spec.occupations
    out = np.zeros(spec.dim, dtype=complex)
    for (i, _), c in sym.terms.items():
        term = np.full(spec.dim, complex(c))
        for m, im in enumerate(i):
            n = occ[:, m].astype(float)
            for t in range(im):
                term = term * (spec.eps * (n - t))
        out += term
    return out


def wick_quantize(sym: PolySymbol, spec: FockSpec, diagonal: bool | None = None) -> OperatorMatrix:
    """Normal-ordered operator sum c_ij a*^i a^j.

    Number-conserving symbols give a diagonal operator unless ``diagonal`` is
    False.  Normal ordering makes the truncated matrix equal to the compression
    of the exact operator.
    """
    if sym.d != spec.d:
        raise ArgumentError(f"symbol has {sym.d} modes, Fock space has {spec.d}")
    herm = sym.is_hermitian()
    if diagonal is None:
        diagonal = sym.is_number_conserving()
    if diagonal:
        diag = wick_diagonal(sym, spec)
        return OperatorMatrix(diag.real if herm else diag, hermitian=herm)
    cache = {}
    out = np.zeros((spec.dim, spec.dim), dtype=complex)
    for (i, j), c in sym.terms.items():
        mat = np.ones((1, 1), dtype=complex)
        for m in range(spec.d):
            key = (i[m], j[m])
            if key not in cache:
                cache[key] = _single_mode_term(spec, *key)
            mat = np.kron(mat, cache[key])
        out += complex(c) * mat
    if herm:
        out = (out + out.conj().T) / 2
    return OperatorMatrix(out, hermitian=herm)


def coherent_grid(spec: FockSpec, degree: int = 0, center=None) -> QuadratureGrid:
    """Gauss-Hermite grid exact for <m|z><z|n> times a polynomial of the given degree."""
    n = spec.n_max + degree // 2 + 2
    return gauss_hermite_grid(spec.d, n, math.sqrt(spec.eps), center=center)


def _symbol_values(f, spec: FockSpec, nodes) -> np.ndarray:
    if isinstance(f, SymbolExpansion):
        return np.asarray(f.at(spec.eps)(nodes))
    if isinstance(f, (PolySymbol,)):
        return np.asarray(f(nodes))
    if isinstance(f, SymbolClassS):
        return np.asarray(f.symbol(nodes))
    if callable(f):
        return np.asarray(f(nodes))
    raise ArgumentError(f"cannot anti-Wick quantize {type(f).__name__}")


def _anti_wick_on(f, spec: FockSpec, grid: QuadratureGrid, chunk: int = 4096) -> np.ndarray:
    out = np.zeros((spec.dim, spec.dim), dtype=complex)
    for s in range(0, grid.size, chunk):
        nodes = grid.nodes[s : s + chunk]
        raw = f[s : s + chunk] if isinstance(f, np.ndarray) else _symbol_values(f, spec, nodes)
        vals = raw * grid.weights[s : s + chunk]
        V = coherent_matrix(spec, nodes)
        out += V.T @ (vals[:, None] * V.conj())
    return out / (math.pi * spec.eps) ** spec.d


def anti_wick_quantize(f, spec: FockSpec, grid: QuadratureGrid | None = None, tol: float | None = None, max_levels: int = 4) -> OperatorMatrix:
    """Quadrature of f(z) |z><z| dz / (pi eps)^d.

    ``f`` may be a callable on (K, d) nodes, a PolySymbol, or an upper-symbol
    expansion (evaluated at spec.eps).  Without a grid, polynomial symbols use
    a Gauss-Hermite rule that is exact on the truncated space.  With ``tol``
    the grid is refined until the max-norm change drops below tol.
    """
    if grid is None:
        if isinstance(f, (PolySymbol, SymbolExpansion)):
            deg = f.degree() if isinstance(f, PolySymbol) else f.base.degree()
            grid = coherent_grid(spec, deg)
        else:
            raise ArgumentError("a quadrature grid is required for non-polynomial symbols")
    mat = _anti_wick_on(f, spec, grid)
    if tol is not None:
        for _ in range(max_levels):
            grid = grid.refined()
            nxt = _anti_wick_on(f, spec, grid)
            change = float(np.abs(nxt - mat).max())
            mat = nxt
            if change <= tol:
                break
        else:
            raise ConvergenceError(f"anti-Wick quadrature did not settle to {tol:g} (last change {change:.3e})")
    sample = _symbol_values(f, spec, grid.nodes[:64])
    herm = bool(np.all(np.abs(np.imag(sample)) <= 1e-14 * max(1.0, np.abs(sample).max())))
    if herm:
        mat = (mat + mat.conj().T) / 2
    return OperatorMatrix(mat, hermitian=herm)


def lower_symbol(A: OperatorMatrix, spec: FockSpec, z, tol: float = DEFICIT_TOL) -> complex:
    """<z|A|z>; refuses points whose coherent vector leaks past the cutoff."""
    v = coherent_vector(spec, z)
    if v.deficit > tol:
        raise TruncationError(
            f"coherent deficit {v.deficit:.3e} at z={v.meta['z']} exceeds {tol:g}",
            suggested_n_max=2 * spec.n_max,
        )
    return complex(np.vdot(v.entries, A.apply(v.entries)))


def symbol_growth_bound(h: SymbolClassS, grid: QuadratureGrid | None = None) -> tuple[float, float]:
    """Certified (C, C~) with h(z) >= C |z|^{2 p_max} - C~ everywhere.

    The leading form is bounded below by the smallest eigenvalue c0 of its
    block.  When every other term is a nonnegative h0 block, C = c0 and
    C~ = 0.  Otherwise C = c0/2; beyond the radius where (c0/2)|z|^{2p}
    dominates the coefficient bound of V the difference is nonnegative, and
    inside it the maximum of C|z|^{2p} - h is taken on a grid plus a curvature
    margin for the spacing.
    """
    if not isinstance(h, SymbolClassS):
        raise ClassSViolation("growth bounds are certified only for class-S symbols")
    p = h.p_max
    c0 = h.leading_min()
    if h.V.is_zero():
        return c0, 0.0
    C = c0 / 2
    by_degree = {}
    for (i, j), c in h.V.terms.items():
        deg = sum(i) + sum(j)
        by_degree[deg] = by_degree.get(deg, 0.0) + abs(complex(c))
    # smallest R >= 1 with C R^{2p} >= sum_k b_k R^k (all k < 2p)
    R = 1.0
    while C * R ** (2 * p) < sum(b * R**k for k, b in by_degree.items()):
        R *= 1.25
    if grid is None:
        grid = uniform_grid(h.d, R, R / (64 if h.d == 1 else 10))
    pts = grid.nodes[np.linalg.norm(grid.nodes, axis=1) <= R]
    r = np.linalg.norm(pts, axis=1)
    gap = C * r ** (2 * p) - h(pts)
    spacing = grid.params.get("spacing", R / 10)
    # any positive maximum is interior (the gap is <= 0 on |z| = R), so the
    # gradient vanishes there and the grid misses it by at most L2 delta^2 / 2
    hess = 2 * p * (2 * p - 1) * C * R ** (2 * p - 2)
    hess += sum(k * max(k - 1, 0) * b * R ** max(k - 2, 0) for k, b in by_degree.items())
    for q, op in h.h0_terms.items():
        if np.ndim(op) == 0:
            lam = abs(complex(op))
        else:
            lam = float(np.abs(np.linalg.eigvalsh(np.asarray(op, dtype=complex))).max())
        hess += 2 * q * (2 * q - 1) * lam * R ** (2 * q - 2)
    delta = spacing * math.sqrt(2 * h.d) / 2
    margin = 2 * hess * delta**2 / 2
    Ct = max(0.0, float(gap.max(initial=0.0)) + margin)
    return C, Ct
