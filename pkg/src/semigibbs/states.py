"""Quantum Gibbs states, entropies, Husimi functions, characteristic functions.

A density matrix is stored in spectral form: weights ``w`` and, unless the
state is diagonal in the occupation basis, orthonormal columns ``U`` with
rho = U diag(w) U*.  This keeps Gibbs states of number-conserving
Hamiltonians and low-rank states on large truncated spaces cheap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy import stats
from scipy.special import logsumexp

from .errors import ArgumentError, ResourceError, TruncationError
from .fock import (
    FockSpec,
    OperatorMatrix,
    coherent_deficit,
    coherent_matrix,
    weyl_coherent_element,
    weyl_operator,
)
from .quadrature import LOG_FLOOR, ClassicalDensity, QuadratureGrid, integrate

TOP_SECTOR_TOL = 1e-10
EIG_CLAMP = 1e-10
DENSE_LIMIT = 8000


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Unit-trace positive operator in spectral form.

    ``vectors`` is None for states diagonal in the occupation basis, in which
    case ``weights`` has length spec.dim.  ``log_weights`` may carry exact
    logarithms (Gibbs states) so entropies avoid cancellation.
    """

    spec: FockSpec
    weights: np.ndarray
    vectors: np.ndarray | None = None
    log_weights: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.min(initial=0.0) < -EIG_CLAMP:
            raise ArgumentError(f"negative eigenvalue {w.min():.3e} in density matrix")
        tr = w.sum()
        if abs(tr - 1) > 1e-10:
            raise ArgumentError(f"trace {tr:.12g} differs from 1")
        object.__setattr__(self, "weights", np.clip(w, 0.0, None))
        if self.vectors is None:
            if w.shape != (self.spec.dim,):
                raise ArgumentError("diagonal weights must have length spec.dim")
        elif self.vectors.shape != (self.spec.dim, w.size):
            raise ArgumentError(f"vectors must be ({self.spec.dim}, {w.size}), got {self.vectors.shape}")

    @classmethod
    def diagonal(cls, spec: FockSpec, p, log_p=None, meta=None) -> "DensityMatrix":
        return cls(spec, np.asarray(p, dtype=float), None, log_p, meta or {})

    @classmethod
    def from_matrix(cls, spec: FockSpec, mat, meta=None) -> "DensityMatrix":
        if isinstance(mat, OperatorMatrix):
            if mat.is_diagonal:
                return cls.diagonal(spec, mat.entries.real, meta=meta)
            mat = mat.entries
        mat = np.asarray(mat, dtype=complex)
        if np.abs(mat - mat.conj().T).max() > 1e-10:
            raise ArgumentError("density matrix is not Hermitian")
        lam, u = hermitian_eigh((mat + mat.conj().T) / 2)
        lam = np.where(np.abs(lam) <= EIG_CLAMP, np.clip(lam, 0.0, None), lam)
        return cls(spec, lam[::-1], u[:, ::-1], None, meta or {})

    @classmethod
    def pure(cls, spec: FockSpec, v, meta=None) -> "DensityMatrix":
        v = np.asarray(v, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(spec, np.ones(1), v[:, None], None, meta or {})

    @property
    def is_diagonal(self) -> bool:
        return self.vectors is None

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.weights > 0))

    @property
    def eigen(self) -> tuple[np.ndarray, np.ndarray | None]:
        """Eigenvalues in descending order and matching eigenvectors (None if diagonal)."""
        order = np.argsort(-self.weights, kind="stable")
        vecs = None if self.vectors is None else self.vectors[:, order]
        return self.weights[order], vecs

    @property
    def matrix(self) -> OperatorMatrix:
        if self.vectors is None:
            return OperatorMatrix(self.weights.copy(), hermitian=True)
        if self.spec.dim > DENSE_LIMIT:
            raise ResourceError(f"refusing to densify a {self.spec.dim}-dimensional state")
        u = self.vectors
        return OperatorMatrix((u * self.weights) @ u.conj().T, hermitian=True)

    def diagonal_entries(self) -> np.ndarray:
        """<n|rho|n> in the occupation basis."""
        if self.vectors is None:
            return self.weights
        return (np.abs(self.vectors) ** 2) @ self.weights

    def expect(self, A: OperatorMatrix) -> complex:
        """Tr(A rho)."""
        if A.is_diagonal:
            return complex(np.dot(A.entries, self.diagonal_entries()))
        if self.vectors is None:
            return complex(np.dot(np.diag(A.entries), self.weights))
        av = A.apply(self.vectors)
        return complex(np.einsum("ij,ij,j->", self.vectors.conj(), av, self.weights))

    def trace_distance(self, other: "DensityMatrix") -> float:
        diff = self.matrix.dense() - other.matrix.dense()
        return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


@dataclass(frozen=True)
class HusimiField:
    """Values of <z|rho|z> on a grid.  Dividing by (pi eps)^d gives a density."""

    grid: QuadratureGrid
    values: np.ndarray
    eps: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.min(initial=0.0) < -1e-12 or v.max(initial=0.0) > 1 + 1e-10:
            raise ArgumentError(f"Husimi values outside [0, 1]: [{v.min():.3e}, {v.max():.3e}]")
        object.__setattr__(self, "values", np.clip(v, 0.0, None))

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def scale(self) -> float:
        return (math.pi * self.eps) ** self.d

    @property
    def normalization_check(self) -> float:
        return float(integrate(self.values, self.grid)) / self.scale

    def density(self) -> ClassicalDensity:
        return ClassicalDensity(self.grid, self.values / self.scale, meta={"eps": self.eps})


def hermitian_eigh(mat: np.ndarray):
    """eigh that drops to real arithmetic when the matrix has no imaginary part."""
    if np.iscomplexobj(mat) and not np.any(mat.imag):
        lam, u = scipy.linalg.eigh(mat.real, driver="evd")
        return lam, u.astype(complex)
    return scipy.linalg.eigh(mat, driver="evd")


def _spectrum(H: OperatorMatrix):
    if H.is_diagonal:
        return H.entries.real.astype(float), None
    if H.hermiticity_defect() > 1e-10:
        raise ArgumentError("Hamiltonian is not Hermitian")
    mat = H.entries
    return hermitian_eigh((mat + mat.conj().T) / 2)


def top_sector_weight(rho: DensityMatrix) -> float:
    mask = rho.spec.top_sector_mask()
    return float(rho.diagonal_entries()[mask].sum())


def gibbs_state(H: OperatorMatrix, beta: float, spec: FockSpec, check: bool = True, tol: float = TOP_SECTOR_TOL):
    """(e^{-beta H}/Z, Z) from the spectral decomposition of H.

    With ``check`` the Gibbs weight carried by basis states at the cutoff must
    stay below ``tol``; otherwise the cutoff is reported as inadequate.
    """
    if not beta > 0:
        raise ArgumentError(f"beta must be positive, got {beta!r}")
    if H.dim != spec.dim:
        raise ArgumentError(f"operator dimension {H.dim} does not match spec ({spec.dim})")
    lam, u = _spectrum(H)
    expo = -beta * lam
    log_z = float(logsumexp(expo))
    log_p = expo - log_z
    p = np.exp(log_p)
    p = p / p.sum()
    rho = DensityMatrix(spec, p, u, log_p, meta={"log_Z": log_z, "beta": beta})
    if check:
        top = top_sector_weight(rho)
        rho.meta["top_weight"] = top
        if top > tol:
            raise TruncationError(
                f"Gibbs weight {top:.3e} at the cutoff n_max={spec.n_max} exceeds {tol:g}",
                suggested_n_max=2 * spec.n_max,
            )
    return rho, math.exp(log_z)


def _log_eigs(rho: DensityMatrix) -> np.ndarray:
    if rho.log_weights is not None:
        return np.asarray(rho.log_weights)
    w = rho.weights
    return np.log(np.maximum(w, LOG_FLOOR))


def von_neumann_entropy(rho: DensityMatrix) -> float:
    w = rho.weights
    lw = _log_eigs(rho)
    return float(-np.sum(np.where(w > 0, w * lw, 0.0)))


def relative_entropy_vn(rho: DensityMatrix, sigma: DensityMatrix, support_tol: float = 1e-13) -> float:
    """Tr rho (log rho - log sigma); +inf if rho leaves the support of sigma.

    Eigenvalues of sigma below ``support_tol`` times its largest eigenvalue
    count as zero unless exact logarithms are attached to sigma.
    """
    if rho.spec != sigma.spec:
        raise ArgumentError("states live on different Fock spaces")
    s = sigma.weights
    if sigma.log_weights is not None:
        log_s = np.asarray(sigma.log_weights)
        null = np.zeros(s.shape, dtype=bool)
    else:
        null = s <= support_tol * s.max()
        log_s = np.log(np.maximum(s, LOG_FLOOR))
    if sigma.vectors is None:
        overlap_diag = rho.diagonal_entries()
        if np.any(overlap_diag[null] > support_tol):
            return math.inf
        cross = float(np.dot(overlap_diag[~null], log_s[~null]))
    else:
        if rho.vectors is None:
            mix = np.abs(sigma.vectors) ** 2  # (dim, r_sigma): |<n|v_j>|^2
            weight = rho.weights @ mix
        else:
            ov = np.abs(rho.vectors.conj().T @ sigma.vectors) ** 2
            weight = rho.weights @ ov
        if np.any(weight[null] > support_tol):
            return math.inf
        # a low-rank sigma only lists its support
        if weight.sum() < 1 - 1e-8:
            return math.inf
        cross = float(np.dot(weight[~null], log_s[~null]))
    return -von_neumann_entropy(rho) - cross


def _husimi_diagonal(rho: DensityMatrix, nodes: np.ndarray, chunk: int) -> np.ndarray:
    spec = rho.spec
    p = rho.weights.reshape((spec.levels,) * spec.d)
    n = np.arange(spec.levels)
    out = np.empty(nodes.shape[0])
    if spec.d == 1:
        # the value depends on |z|^2 only
        lam = np.abs(nodes[:, 0]) ** 2 / spec.eps
        uniq, inv = np.unique(np.round(lam, 13), return_inverse=True)
        vals = np.empty(uniq.size)
        for s in range(0, uniq.size, chunk):
            pmf = stats.poisson.pmf(n[None, :], uniq[s : s + chunk, None])
            vals[s : s + chunk] = pmf @ p
        return vals[inv.ravel()]
    for s in range(0, nodes.shape[0], chunk):
        blk = nodes[s : s + chunk]
        lam = np.abs(blk) ** 2 / spec.eps
        acc = np.broadcast_to(p, (blk.shape[0],) + p.shape)
        for j in range(spec.d):
            pmf = stats.poisson.pmf(n[None, :], lam[:, j, None])
            acc = np.einsum("kn,kn...->k...", pmf, acc)
        out[s : s + chunk] = acc
    return out


def husimi(rho: DensityMatrix, grid: QuadratureGrid, deficit_tol: float | None = None, chunk: int = 2048,
           weight_floor: float = 1e-18) -> HusimiField:
    """f(z) = <z_eps|rho|z_eps> at every grid node.

    rho lives in the truncated space, so the value is exact whatever the
    coherent deficit.  Passing ``deficit_tol`` enforces that every node's
    coherent vector is resolved by the cutoff anyway.  Eigenvectors with
    weight below ``weight_floor`` times the largest are dropped (the error
    in f is at most their total weight).
    """
    spec = rho.spec
    if grid.d != spec.d:
        raise ArgumentError(f"grid has {grid.d} modes, state has {spec.d}")
    nodes = np.asarray(grid.nodes, dtype=complex)
    if deficit_tol is not None:
        worst = max(coherent_deficit(spec, z) for z in nodes[np.argsort(-np.abs(nodes).max(axis=1))[:32]])
        if worst > deficit_tol:
            raise TruncationError(
                f"coherent deficit {worst:.3e} on the grid exceeds {deficit_tol:g}",
                suggested_n_max=2 * spec.n_max,
            )
    if rho.vectors is None:
        vals = _husimi_diagonal(rho, nodes, chunk)
    else:
        # each eigenvector adds at most its weight to f, so negligible ones are skipped
        keep = rho.weights > weight_floor * rho.weights.max()
        vecs, w = rho.vectors[:, keep].conj(), rho.weights[keep]
        vals = np.empty(nodes.shape[0])
        for s in range(0, nodes.shape[0], chunk):
            V = coherent_matrix(spec, nodes[s : s + chunk])
            amp = np.abs(V @ vecs) ** 2
            vals[s : s + chunk] = amp @ w
    return HusimiField(grid, vals, spec.eps)


def wehrl_entropy(field: HusimiField, norm_tol: float | None = 1e-6) -> float:
    """-int f log f dz / (pi eps)^d."""
    if norm_tol is not None and abs(field.normalization_check - 1) > norm_tol:
        raise ArgumentError(f"Husimi field not normalized on this grid ({field.normalization_check:.10g})")
    f = field.values
    integrand = np.where(f > 0, -f * np.log(np.maximum(f, LOG_FLOOR)), 0.0)
    return float(integrate(integrand, field.grid)) / field.scale


def wehrl_relative_entropy(rho: DensityMatrix, sigma: DensityMatrix, grid: QuadratureGrid) -> float:
    """Classical relative entropy of the two Husimi probability measures."""
    fr = husimi(rho, grid).values
    fs = husimi(sigma, grid).values
    if np.any((fr > 0) & (fs <= 0)):
        return math.inf
    integrand = np.where(fr > 0, fr * (np.log(np.maximum(fr, LOG_FLOOR)) - np.log(np.maximum(fs, LOG_FLOOR))), 0.0)
    return float(integrate(integrand, grid)) / (math.pi * rho.spec.eps) ** rho.spec.d


def coherent_expectation(H: OperatorMatrix, beta: float, z, spec: FockSpec) -> np.ndarray:
    """g(z) = <z_eps| e^{-beta H} |z_eps> at one point (d,) or many (K, d)."""
    z = np.asarray(z, dtype=complex)
    single = z.ndim == 1
    nodes = z.reshape(-1, spec.d)
    lam, u = _spectrum(H)
    V = coherent_matrix(spec, nodes)
    if u is None:
        vals = (np.abs(V) ** 2) @ np.exp(-beta * lam)
    else:
        vals = (np.abs(V @ u.conj()) ** 2) @ np.exp(-beta * lam)
    return vals[0] if single else vals


def _diag_weyl_single(n_max: int, x: float) -> np.ndarray:
    """<n|D|n> = e^{-x/2} L_n(x) for n = 0..n_max, by the three-term recurrence."""
    out = np.empty(n_max + 1)
    l0, l1 = 1.0, 1.0 - x
    out[0] = l0
    if n_max >= 1:
        out[1] = l1
    for n in range(1, n_max):
        l0, l1 = l1, ((2 * n + 1 - x) * l1 - n * l0) / (n + 1)
        out[n + 1] = l1
    return out * math.exp(-x / 2)


def characteristic_function(rho: DensityMatrix, zeta) -> complex:
    """Tr(rho W_eps(zeta)), exact on the truncated space."""
    spec = rho.spec
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    if zeta.shape != (spec.d,):
        raise ArgumentError(f"zeta must have shape ({spec.d},)")
    if rho.vectors is None:
        x = np.abs(zeta) ** 2 * spec.eps / 2  # |alpha|^2 / eps
        p = rho.weights.reshape((spec.levels,) * spec.d)
        for j in range(spec.d):
            p = np.tensordot(_diag_weyl_single(spec.n_max, float(x[j])), p, axes=(0, 0))
        return complex(p)
    if spec.dim > DENSE_LIMIT:
        raise ResourceError(f"dense Weyl operator on a {spec.dim}-dimensional space")
    W = weyl_operator(spec, zeta)
    return complex(np.einsum("ij,ij,j->", rho.vectors.conj(), W.apply(rho.vectors), rho.weights))


@lru_cache(maxsize=None)
def calibrate_kappa(eps_list: tuple = (1.0, 0.25, 1 / 16)) -> float:
    """Constant in exp(i kappa Re<zeta|z>) fixed by the coherent family.

    <w|W(zeta)|w> has phase kappa Re<zeta|w> for every eps; the value is read
    off at a few reference points and checked for consistency.
    """
    w = np.array([0.37 - 0.21j])
    zeta = np.array([0.8 + 0.45j])
    reals = float(np.vdot(zeta, w).real)
    ks = [math.atan2(c.imag, c.real) / reals for c in (weyl_coherent_element(w, w, zeta, e) for e in eps_list)]
    if max(ks) - min(ks) > 1e-12:
        raise ArgumentError(f"coherent phase is not eps independent: {ks}")
    return float(np.mean(ks))


def classical_characteristic(mu: ClassicalDensity, zeta, kappa: float | None = None) -> complex:
    """int exp(i kappa Re<zeta|z>) dmu(z) on the density's grid."""
    kappa = calibrate_kappa() if kappa is None else kappa
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    phase = np.exp(1j * kappa * (mu.grid.nodes @ zeta.conj()).real)
    return complex(integrate(phase * mu.values, mu.grid))


def assumption_A_norm(H: OperatorMatrix, beta: float, k: int, spec: FockSpec) -> float:
    """|| (N + eps)^{k/2} e^{-beta H} (N + eps)^{k/2} ||."""
    if k < 0:
        raise ArgumentError("k must be nonnegative")
    lam, u = _spectrum(H)
    logn = k * np.log(spec.eps * (spec.total_number() + 1.0))
    if u is None:
        return float(np.exp(np.max(logn - beta * lam)))
    shift = beta * lam.min()
    B = (u * np.exp(-beta * lam + shift)) @ u.conj().T
    s = np.exp(logn / 2)
    B = s[:, None] * B * s[None, :]
    return float(np.linalg.eigvalsh((B + B.conj().T) / 2).max()) * math.exp(-shift)


def husimi_tail_constant(H: OperatorMatrix, beta: float, k: int, spec: FockSpec) -> float:
    """C with <z|e^{-beta H}|z> <= C / prod_j |z_j|^{2k}, for number-conserving H.

    prod_j |z_j|^{2k} <z|T|z> = <z| prod a_j*^k T prod a_j^k |z>, whose norm is
    bounded by (k!)^d max_n prod_j (eps (n_j + 1))^k T_n.
    """
    if not H.is_diagonal:
        raise ArgumentError("tail constant implemented for diagonal Hamiltonians")
    occ = spec.occupations
    logt = -beta * H.entries.real + k * np.log(spec.eps * (occ + 1.0)).sum(axis=1)
    return float(math.factorial(k) ** spec.d * np.exp(logt.max()))


def random_density_matrix(spec: FockSpec, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Ginibre-distributed state; full rank unless ``rank`` is given."""
    r = spec.dim if rank is None else rank
    g = rng.standard_normal((spec.dim, r)) + 1j * rng.standard_normal((spec.dim, r))
    m = g @ g.conj().T
    return DensityMatrix.from_matrix(spec, m / np.trace(m).real)


def harmonic_closed_forms(beta: float, eps: float) -> dict:
    """Closed forms for h = |z|^2 in one mode, q = e^{-beta eps}."""
    q = math.exp(-beta * eps)
    s_vn = -math.log1p(-q) - q * math.log(q) / (1 - q)
    return {
        "q": q,
        "Z": 1 / (1 - q),
        "Z_scaled": math.pi * eps / (1 - q),
        "S_vN": s_vn,
        "S_W": 1 - math.log1p(-q),
        "S_vN_renorm": s_vn + math.log(math.pi * eps),
        "S_W_renorm": 1 - math.log1p(-q) + math.log(math.pi * eps),
        "S_B": 1 + math.log(math.pi / beta),
    }


__all__ = [
    "DensityMatrix",
    "HusimiField",
    "gibbs_state",
    "top_sector_weight",
    "von_neumann_entropy",
    "relative_entropy_vn",
    "husimi",
    "wehrl_entropy",
    "wehrl_relative_entropy",
    "coherent_expectation",
    "characteristic_function",
    "classical_characteristic",
    "calibrate_kappa",
    "assumption_A_norm",
    "husimi_tail_constant",
    "random_density_matrix",
    "harmonic_closed_forms",
]
