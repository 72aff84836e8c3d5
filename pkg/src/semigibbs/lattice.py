"""Dyadic lattices, orthonormalized coherent systems and lattice states.

Lattice points are real: the i-th coordinate of every point is a multiple of
2^-M in [-M, M] with zero imaginary part, which reproduces the point count
(2 M 2^M + 1)^d.  The density f defining a lattice state is a density on
R^d evaluated at those points.
"""
from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DegenerateBasisError, ResourceError, TruncationError
from .fock import (
    FockSpec,
    coherent_cutoff,
    coherent_deficit,
    coherent_matrix,
    coherent_overlap,
    weyl_coherent_element,
)
from .states import DensityMatrix, calibrate_kappa, relative_entropy_vn

log = logging.getLogger(__name__)

MAX_POINTS = 20_000
ADMISSIBILITY_TOL = 1e-8
DEPENDENCE_TOL = 1e-6


class AdmissibilityWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class DyadicLattice:
    M: int
    d: int
    points: np.ndarray  # (K, d) complex, imaginary part zero
    levels: np.ndarray  # level at which each point first appears

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def spacing(self) -> float:
        return 2.0 ** (-self.M)

    @property
    def extent(self) -> int:
        return self.M

    def prefix(self, M: int) -> np.ndarray:
        """Points of the coarser lattice Lambda_M, which form a prefix here."""
        return self.points[self.levels <= M]


def lattice_size(M: int, d: int) -> int:
    return (2 * M * 2**M + 1) ** d


def _level_points(M: int, d: int) -> set:
    """Integer coordinates of Lambda_M in units of 2^-M."""
    ks = range(-M * 2**M, M * 2**M + 1)
    return set(itertools.product(ks, repeat=d))


def build_lattice(M: int, d: int = 1, max_points: int = MAX_POINTS) -> DyadicLattice:
    """Nested enumeration: points of Lambda_0, then new points of Lambda_1, and so on."""
    if M < 0 or d < 1 or int(M) != M or int(d) != d:
        raise ArgumentError(f"need integers M >= 0 and d >= 1, got M={M!r}, d={d!r}")
    if lattice_size(M, d) > max_points:
        raise ResourceError(f"|Lambda_{M}| = {lattice_size(M, d)} in d={d} exceeds the cap {max_points}")
    seen: set = set()
    pts, lev = [], []
    scale = 2**M
    for L in range(M + 1):
        step = 2 ** (M - L)  # Lambda_L in units of 2^-M
        here = {tuple(step * k for k in pt) for pt in _level_points(L, d)}
        new = sorted(here - seen)
        for p in new:
            seen.add(p)
            pts.append(p)
            lev.append(L)
    points = np.asarray(pts, dtype=float).reshape(-1, d) / scale
    return DyadicLattice(int(M), int(d), points.astype(complex), np.asarray(lev))


@dataclass(frozen=True, eq=False)
class CoherentONS:
    """Orthonormalized coherent vectors; ``R`` holds the Gram-Schmidt coefficients.

    The coherent matrix C (columns |z_m>) factors as C = E R with E the ONS and
    R upper triangular, so E = C R^{-1}.  ``gram_norms`` is the diagonal of R.
    """

    spec: FockSpec
    points: np.ndarray
    vectors: np.ndarray  # (dim, K)
    R: np.ndarray
    flagged: tuple = ()

    @property
    def gram_norms(self) -> np.ndarray:
        return np.abs(np.diag(self.R))

    def gram_defect(self) -> float:
        G = self.vectors.conj().T @ self.vectors
        return float(np.abs(G - np.eye(G.shape[0])).max())

    def coefficients(self) -> np.ndarray:
        """R^{-1}: column m expresses e(z_m) in the coherent vectors."""
        return np.linalg.solve(self.R, np.eye(self.R.shape[0]))


def admissibility(M: int, d: int, eps: float) -> float:
    """|Lambda_M|^2 exp(-2^{-2M-1}/eps), the bound on the Gram normalization defect."""
    return lattice_size(M, d) ** 2 * math.exp(-(2.0 ** (-2 * M - 1)) / eps)


def minimal_admissible_eps(M: int, d: int, tol: float = ADMISSIBILITY_TOL) -> float:
    return 2.0 ** (-2 * M - 1) / math.log(lattice_size(M, d) ** 2 / tol)


def gram_schmidt_coherent(lattice: DyadicLattice | np.ndarray, spec: FockSpec, deficit_tol: float = 1e-10,
                          dependence_tol: float = DEPENDENCE_TOL, strict: bool = True) -> CoherentONS:
    """Modified Gram-Schmidt with one reorthogonalization pass, in enumeration order."""
    points = lattice.points if isinstance(lattice, DyadicLattice) else np.asarray(lattice, dtype=complex).reshape(-1, spec.d)
    worst = max(coherent_deficit(spec, z) for z in points)
    if worst > deficit_tol:
        raise TruncationError(f"coherent deficit {worst:.3e} exceeds {deficit_tol:g} at the lattice",
                              suggested_n_max=2 * spec.n_max)
    C = coherent_matrix(spec, points).T.copy()  # (dim, K)
    K = C.shape[1]
    E = np.zeros_like(C)
    R = np.zeros((K, K), dtype=complex)
    flagged = []
    for m in range(K):
        v = C[:, m].copy()
        for _ in range(2):
            for k in range(m):
                r = np.vdot(E[:, k], v)
                v -= r * E[:, k]
                R[k, m] += r
        nrm = np.linalg.norm(v)
        R[m, m] = nrm
        if nrm < dependence_tol:
            flagged.append(m)
            continue
        E[:, m] = v / nrm
    if flagged and strict:
        raise DegenerateBasisError(f"near-dependent coherent vectors at indices {flagged}", indices=flagged)
    return CoherentONS(spec, points, E, R, tuple(flagged))


def gram_closed_form(points, eps: float) -> np.ndarray:
    """Exact overlaps <z_k|z_l> of untruncated coherent vectors."""
    pts = np.asarray(points, dtype=complex)
    K = pts.shape[0]
    G = np.empty((K, K), dtype=complex)
    for k in range(K):
        for l in range(K):
            G[k, l] = coherent_overlap(pts[k], pts[l], eps)
    return G


@dataclass(frozen=True, eq=False)
class LatticeState:
    rho: DensityMatrix
    M: int
    eps: float
    weights: np.ndarray
    N_M: float
    f_values: np.ndarray
    ons: CoherentONS
    admissible: bool = True
    meta: dict = field(default_factory=dict)


def _density_values(f, points) -> np.ndarray:
    fn = f.func if hasattr(f, "func") and f.func is not None else f
    if not callable(fn):
        raise ArgumentError("lattice states need a density callable at lattice points")
    vals = np.asarray(fn(points.real), dtype=float).reshape(-1)
    if vals.min(initial=0.0) < 0:
        raise ArgumentError("density is negative at a lattice point")
    return vals


def lattice_spec(M: int, d: int, eps: float, n_max: int | None = None, tol: float = 1e-10) -> FockSpec:
    need = coherent_cutoff(M * math.sqrt(d) if M > 0 else 1.0, eps, tol, d)
    return FockSpec(d, max(need, n_max or 0), eps)


def lattice_state(f, M: int, eps: float, d: int = 1, spec: FockSpec | None = None, strict: bool = False,
                  lattice: DyadicLattice | None = None) -> LatticeState:
    """rho = sum_m f(z_m) / (2^{dM} N_M) |e(z_m)><e(z_m)| with N_M = sum f / 2^{dM}.

    ``f`` is a callable on (K, d) real points (or a density with ``func``).
    If eps misses the admissibility bound, ``strict`` raises; otherwise a
    warning is issued and the state is flagged.
    """
    lat = lattice if lattice is not None else build_lattice(M, d)
    adm = admissibility(M, d, eps)
    ok = adm < ADMISSIBILITY_TOL
    if not ok:
        msg = (f"eps={eps:.4g} misses the admissibility bound at M={M} "
               f"({adm:.3e} >= {ADMISSIBILITY_TOL:g}); minimal admissible eps is {minimal_admissible_eps(M, d):.4g}")
        if strict:
            raise ArgumentError(msg)
        warnings.warn(msg, AdmissibilityWarning, stacklevel=2)
    spec = spec if spec is not None else lattice_spec(M, d, eps)
    ons = gram_schmidt_coherent(lat, spec)
    fv = _density_values(f, lat.points)
    N_M = float(fv.sum()) / 2 ** (d * M)
    if not N_M > 0:
        raise ArgumentError("density vanishes on the whole lattice")
    w = fv / (2 ** (d * M) * N_M)
    w = w / w.sum()
    rho = DensityMatrix(spec, w, ons.vectors, None, {"M": M, "eps": eps})
    return LatticeState(rho, M, eps, w, N_M, fv, ons, ok, {"admissibility": adm})


def lattice_entropy(state: LatticeState) -> tuple[float, float, dict]:
    """(S_vN, S_vN - dM log 2, details).

    S_vN is computed from the spectrum of W^{1/2} E*E W^{1/2}, using the
    computed ONS, and compared with the closed formula in the weights.
    """
    d, M = state.rho.spec.d, state.M
    E = state.ons.vectors
    sw = np.sqrt(state.weights)
    G = (E.conj().T @ E) * np.outer(sw, sw)
    lam = np.clip(np.linalg.eigvalsh((G + G.conj().T) / 2), 0.0, None)
    spectral = float(-np.sum(np.where(lam > 0, lam * np.log(np.where(lam > 0, lam, 1.0)), 0.0)))
    f, N, scale = state.f_values, state.N_M, 2 ** (d * M)
    flogf = np.where(f > 0, f * np.log(np.where(f > 0, f, 1.0)), 0.0)
    formula = float(-np.sum(flogf) / (scale * N) + math.log(N) + d * M * math.log(2))
    if abs(spectral - formula) > 1e-8:
        log.warning("lattice entropy mismatch: spectral %.12g vs formula %.12g", spectral, formula)
    return spectral, spectral - d * M * math.log(2), {"formula": formula, "spectral": spectral}


def lattice_characteristic(state: LatticeState, zeta) -> complex:
    """Tr(rho W(zeta)) through the Gram-Schmidt coefficients and closed-form <z_k|W|z_l>."""
    pts = state.ons.points
    eps = state.eps
    K = pts.shape[0]
    Wg = np.empty((K, K), dtype=complex)
    for k in range(K):
        for l in range(K):
            Wg[k, l] = weyl_coherent_element(pts[k], pts[l], zeta, eps)
    Cinv = state.ons.coefficients()
    diag = np.einsum("km,kl,lm->m", Cinv.conj(), Wg, Cinv)
    return complex(np.dot(state.weights, diag))


def real_line_characteristic(f, zeta, d: int = 1, kappa: float | None = None, half_width: float = 12.0, n: int = 4001) -> complex:
    """int exp(i kappa Re<zeta|x>) f(x) dx over R^d (d = 1 only)."""
    if d != 1:
        raise ArgumentError("real-line characteristic implemented for d = 1")
    kappa = calibrate_kappa() if kappa is None else kappa
    fn = f.func if hasattr(f, "func") and f.func is not None else f
    x = np.linspace(-half_width, half_width, n)
    vals = np.asarray(fn(x[:, None].astype(complex)), dtype=float).reshape(-1)
    zeta = complex(np.atleast_1d(zeta)[0])
    phase = np.exp(1j * kappa * (np.conj(zeta) * x).real)
    return complex(np.trapezoid(phase * vals, x))


def gram_correction_check(ons: CoherentONS, zeta) -> np.ndarray:
    """Per point: |N^2 <e|W|e> - <z|W|z>| minus m sum_{j<m} exp(-|z_m - z_j|^2/2eps) (1-based m).

    Nonpositive entries mean the bound holds.
    """
    pts, eps = ons.points, ons.spec.eps
    K = pts.shape[0]
    Cinv = ons.coefficients()
    Wg = np.array([[weyl_coherent_element(pts[k], pts[l], zeta, eps) for l in range(K)] for k in range(K)])
    out = np.empty(K)
    norms2 = ons.gram_norms**2
    for m in range(K):
        c = Cinv[:, m]
        ee = np.vdot(c, Wg @ c)
        lhs = abs(norms2[m] * ee - Wg[m, m])
        dist2 = np.sum(np.abs(pts[:m] - pts[m]) ** 2, axis=1)
        bound = (m + 1) * np.sum(np.exp(-dist2 / (2 * eps)))
        out[m] = lhs - bound
    return out


def divergence_experiment(f, delta: float, M_list, h=None, beta: float = 1.0, d: int = 1,
                          max_dim: int = 60_000, S_B: float | None = None) -> dict:
    """Growth of S_vN(rho_{M,eps(M)} || Gamma_{beta,eps(M)}) in M with eps(M) = 2^{-(2+delta)M}/pi.

    Infeasible levels (cutoff above ``max_dim``) are dropped with a warning.
    Returns the per-M rows, the fitted slope and intercept, and the expected
    slope d(1+delta) log 2.
    """
    from .free_energy import initial_cutoff
    from .quantize import wick_quantize
    from .states import gibbs_state
    from .symbols import SymbolClassS

    h = h if h is not None else SymbolClassS(d, {1: 1})
    rows = []
    dropped = []
    for M in M_list:
        eps = 2.0 ** (-(2 + delta) * M) / math.pi
        n_needed = max(lattice_spec(M, d, eps).n_max, initial_cutoff(h, beta, eps))
        if (n_needed + 1) ** d > max_dim:
            dropped.append(M)
            continue
        n_max = n_needed
        while True:
            spec = FockSpec(d, n_max, eps)
            H = wick_quantize(h.symbol, spec)
            try:
                gamma, Z = gibbs_state(H, beta, spec)
                break
            except TruncationError:
                n_max = int(1.5 * n_max)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AdmissibilityWarning)
            st = lattice_state(f, M, eps, d=d, spec=spec)
        s_vn, renorm, info = lattice_entropy(st)
        s_rel = relative_entropy_vn(st.rho, gamma)
        rows.append({
            "M": M, "eps": eps, "n_max": spec.n_max, "S_vN": s_vn, "S_rel": s_rel, "renormalized": renorm,
            "formula": info["formula"], "gram_defect": st.ons.gram_defect(),
            "admissible": st.admissible, "energy": st.rho.expect(H).real,
        })
        log.info("M=%d eps=%.4g n_max=%d S_rel=%.10g", M, eps, spec.n_max, s_rel)
    if not rows:
        raise ResourceError(f"every level in {list(M_list)} needs a cutoff beyond {max_dim} states")
    if dropped:
        warnings.warn(f"levels {dropped} need a cutoff beyond {max_dim} states and were dropped", RuntimeWarning, stacklevel=2)
    Ms = np.array([r["M"] for r in rows], dtype=float)
    S = np.array([r["S_rel"] for r in rows])
    slope, intercept = (np.polyfit(Ms, S, 1) if len(rows) >= 2 else (math.nan, math.nan))
    return {
        "rows": rows,
        "slope": float(slope),
        "intercept": float(intercept),
        "expected_slope": d * (1 + delta) * math.log(2),
        "dropped": dropped,
        "S_B": S_B,
    }


__all__ = [
    "DyadicLattice",
    "CoherentONS",
    "LatticeState",
    "AdmissibilityWarning",
    "lattice_size",
    "build_lattice",
    "admissibility",
    "minimal_admissible_eps",
    "gram_schmidt_coherent",
    "gram_closed_form",
    "lattice_spec",
    "lattice_state",
    "lattice_entropy",
    "lattice_characteristic",
    "real_line_characteristic",
    "gram_correction_check",
    "divergence_experiment",
]
