"""Truncated Fock representation of the eps-scaled CCR algebra.

Basis states are multi-indices ``(n_1, ..., n_d)`` with ``0 <= n_j <= n_max``,
enumerated lexicographically with mode 0 varying slowest.  Operators are dense
complex matrices, except for operators that are diagonal in the occupation
basis, which are stored as their diagonal only.  Modes are indexed from 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats
from scipy.special import eval_genlaguerre, gammaln

from .errors import ArgumentError

DEFICIT_TOL = 1e-10


@dataclass(frozen=True)
class FockSpec:
    d: int
    n_max: int
    eps: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ArgumentError(f"d must be a positive integer, got {self.d!r}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ArgumentError(f"n_max must be an integer >= 1, got {self.n_max!r}")
        if not self.eps > 0:
            raise ArgumentError(f"eps must be positive, got {self.eps!r}")

    @property
    def dim(self) -> int:
        return (self.n_max + 1) ** self.d

    @property
    def levels(self) -> int:
        return self.n_max + 1

    @cached_property
    def occupations(self) -> np.ndarray:
        """(dim, d) array of occupation numbers in basis order."""
        grids = np.indices((self.levels,) * self.d).reshape(self.d, -1)
        return grids.T.copy()

    def total_number(self) -> np.ndarray:
        return self.occupations.sum(axis=1)

    def top_sector_mask(self) -> np.ndarray:
        """Basis states touching the cutoff in at least one mode."""
        return (self.occupations == self.n_max).any(axis=1)

    def interior_mask(self) -> np.ndarray:
        return (self.occupations <= self.n_max - 1).all(axis=1)

    def with_n_max(self, n_max: int) -> "FockSpec":
        return FockSpec(self.d, int(n_max), self.eps)

    def with_eps(self, eps: float) -> "FockSpec":
        return FockSpec(self.d, self.n_max, eps)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Operator on a truncated Fock space.

    ``entries`` is either a (dim, dim) matrix or a length-dim vector holding
    the diagonal of an operator that is diagonal in the occupation basis.
    """

    entries: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        arr = np.asarray(self.entries)
        if arr.ndim == 2 and arr.shape[0] != arr.shape[1]:
            raise ArgumentError(f"operator matrix must be square, got {arr.shape}")
        if arr.ndim not in (1, 2):
            raise ArgumentError("entries must be a vector (diagonal) or a square matrix")
        object.__setattr__(self, "entries", arr)
        if self.hermitian:
            defect = self.hermiticity_defect()
            if defect > 1e-12:
                raise ArgumentError(f"operator flagged hermitian has defect {defect:.3e}")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self.entries.ndim == 1

    def dense(self) -> np.ndarray:
        if self.is_diagonal:
            return np.diag(self.entries)
        return self.entries

    def diagonal(self) -> np.ndarray:
        return self.entries if self.is_diagonal else np.diagonal(self.entries)

    def adjoint(self) -> "OperatorMatrix":
        if self.is_diagonal:
            return OperatorMatrix(np.conj(self.entries), self.hermitian)
        return OperatorMatrix(self.entries.conj().T, self.hermitian)

    def hermiticity_defect(self) -> float:
        """max |A - A*| relative to max |A| (0 for the zero operator)."""
        scale = float(np.max(np.abs(self.entries), initial=0.0))
        if scale == 0.0:
            return 0.0
        if self.is_diagonal:
            diff = np.abs(self.entries.imag)
        else:
            diff = np.abs(self.entries - self.entries.conj().T)
        return float(diff.max()) / scale

    def apply(self, v) -> np.ndarray:
        v = v.entries if isinstance(v, StateVector) else np.asarray(v)
        if self.is_diagonal:
            return self.entries * v if v.ndim == 1 else self.entries[:, None] * v
        return self.entries @ v

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            if self.is_diagonal and other.is_diagonal:
                return OperatorMatrix(self.entries * other.entries)
            if self.is_diagonal:
                return OperatorMatrix(self.entries[:, None] * other.entries)
            if other.is_diagonal:
                return OperatorMatrix(self.entries * other.entries[None, :])
            return OperatorMatrix(self.entries @ other.entries)
        return self.apply(other)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        if self.is_diagonal and other.is_diagonal:
            return OperatorMatrix(self.entries + other.entries)
        return OperatorMatrix(self.dense() + other.dense())

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return self + other * (-1)

    def __mul__(self, scalar) -> "OperatorMatrix":
        return OperatorMatrix(self.entries * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class StateVector:
    entries: np.ndarray
    deficit: float = 0.0
    truncated: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))


def _ladder(n_max: int, eps: float) -> np.ndarray:
    n = np.arange(1, n_max + 1)
    return np.diag(np.sqrt(eps * n), k=1).astype(complex)


def _embed(spec: FockSpec, mode: int, single: np.ndarray) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    eye = np.eye(spec.levels)
    for j in range(spec.d):
        out = np.kron(out, single if j == mode else eye)
    return out


def _check_mode(spec: FockSpec, mode: int) -> None:
    if not isinstance(mode, (int, np.integer)) or not 0 <= mode < spec.d:
        raise ArgumentError(f"mode must be an integer in [0, {spec.d - 1}], got {mode!r}")


def annihilator(spec: FockSpec, mode: int = 0) -> OperatorMatrix:
    """a_j with a|n> = sqrt(eps n)|n-1> on mode j, identity on the others."""
    _check_mode(spec, mode)
    return OperatorMatrix(_embed(spec, mode, _ladder(spec.n_max, spec.eps)))


def creator(spec: FockSpec, mode: int = 0) -> OperatorMatrix:
    return annihilator(spec, mode).adjoint()


def number_operator(spec: FockSpec) -> OperatorMatrix:
    return OperatorMatrix(spec.eps * spec.total_number().astype(float), hermitian=True)


def coherent_amplitudes(z, n_max: int, eps: float) -> np.ndarray:
    """Single-mode coherent amplitudes for each entry of ``z``.

    Returns an array of shape ``z.shape + (n_max + 1,)`` holding
    exp(-|z|^2 / 2eps) z^n / sqrt(eps^n n!).
    """
    z = np.asarray(z, dtype=complex)
    n = np.arange(n_max + 1)
    r = np.abs(z)[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.where(n == 0, 0.0, n * np.log(r))
    logmag = -(r**2) / (2 * eps) + logr - 0.5 * (n * np.log(eps) + gammaln(n + 1))
    phase = np.exp(1j * n * np.angle(z)[..., None])
    return np.exp(logmag) * phase


def coherent_mass(z, n_max: int, eps: float) -> np.ndarray:
    """Squared norm of the truncated single-mode coherent vector."""
    return stats.poisson.cdf(n_max, np.abs(np.asarray(z)) ** 2 / eps)


def _as_point(spec: FockSpec, z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if z.shape != (spec.d,):
        raise ArgumentError(f"expected a point in C^{spec.d}, got shape {z.shape}")
    return z


def coherent_deficit(spec: FockSpec, z) -> float:
    """1 - ||v||^2 of the truncated coherent vector at ``z``."""
    z = _as_point(spec, z)
    tails = stats.poisson.logcdf(spec.n_max, np.abs(z) ** 2 / spec.eps)
    return float(-np.expm1(np.sum(tails)))


def coherent_deficits(spec: FockSpec, nodes) -> np.ndarray:
    """Vectorized coherent_deficit over (K, d) nodes."""
    nodes = np.asarray(nodes, dtype=complex).reshape(-1, spec.d)
    tails = stats.poisson.logcdf(spec.n_max, np.abs(nodes) ** 2 / spec.eps)
    return -np.expm1(tails.sum(axis=1))


def coherent_vector(spec: FockSpec, z, tol: float = DEFICIT_TOL) -> StateVector:
    z = _as_point(spec, z)
    v = np.ones(1, dtype=complex)
    for zj in z:
        v = np.kron(v, coherent_amplitudes(zj, spec.n_max, spec.eps))
    deficit = coherent_deficit(spec, z)
    return StateVector(v, deficit=deficit, truncated=deficit > tol, meta={"z": z.tolist()})


def coherent_matrix(spec: FockSpec, nodes) -> np.ndarray:
    """Rows are truncated coherent vectors at the given (K, d) nodes."""
    nodes = np.asarray(nodes, dtype=complex).reshape(-1, spec.d)
    rows = coherent_amplitudes(nodes[:, 0], spec.n_max, spec.eps)
    for j in range(1, spec.d):
        amp = coherent_amplitudes(nodes[:, j], spec.n_max, spec.eps)
        rows = (rows[:, :, None] * amp[:, None, :]).reshape(nodes.shape[0], -1)
    return rows


def coherent_overlap(z, w, eps: float) -> complex:
    """<z_eps|w_eps> = exp(-(|z|^2 + |w|^2)/2eps + <z|w>/eps)."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    expo = -(np.vdot(z, z).real + np.vdot(w, w).real) / (2 * eps) + np.vdot(z, w) / eps
    return complex(np.exp(expo))


def weyl_coherent_element(z, w, zeta, eps: float) -> complex:
    """<z_eps| W_eps(zeta) |w_eps> in closed form.

    W_eps(zeta) is the displacement by alpha = i eps zeta / sqrt(2), and
    D(alpha)|w> = exp((<w|alpha> - <alpha|w>) / 2eps) |w + alpha>.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    alpha = 1j * eps * np.atleast_1d(np.asarray(zeta, dtype=complex)) / np.sqrt(2)
    phase = (np.vdot(w, alpha) - np.vdot(alpha, w)) / (2 * eps)
    return complex(np.exp(phase)) * coherent_overlap(z, w + alpha, eps)


def _displacement_single(n_max: int, eps: float, alpha: complex) -> np.ndarray:
    """<m|D(alpha)|n> for one mode, from the associated Laguerre closed form."""
    a = complex(alpha) / np.sqrt(eps)
    x = abs(a) ** 2
    n = np.arange(n_max + 1)
    m_idx, n_idx = np.meshgrid(n, n, indexing="ij")
    lo = np.minimum(m_idx, n_idx)
    gap = np.abs(m_idx - n_idx)
    lag = eval_genlaguerre(lo, gap, x)
    with np.errstate(divide="ignore"):
        logmag = 0.5 * (gammaln(lo + 1) - gammaln(lo + gap + 1)) - x / 2
        logmag = logmag + np.where(gap == 0, 0.0, gap * np.log(abs(a)) if a != 0 else -np.inf)
    ph = np.where(m_idx >= n_idx, np.exp(1j * gap * np.angle(a)), (-1.0) ** gap * np.exp(-1j * gap * np.angle(a)))
    return np.exp(logmag) * lag * ph


def weyl_operator(spec: FockSpec, zeta) -> OperatorMatrix:
    """Compression of W_eps(zeta) = D(i eps zeta / sqrt2) to the truncated space.

    Matrix elements come from the closed form, so every entry equals the
    corresponding entry of the untruncated operator.
    """
    zeta = _as_point(spec, zeta)
    out = np.ones((1, 1), dtype=complex)
    for j in range(spec.d):
        alpha = 1j * spec.eps * zeta[j] / np.sqrt(2)
        out = np.kron(out, _displacement_single(spec.n_max, spec.eps, alpha))
    return OperatorMatrix(out)


def ccr_defect(spec: FockSpec, restricted: bool = True, modes=None) -> float:
    """Largest entry of [a_j, a*_k] - eps delta_jk.

    With ``restricted`` the check is limited to basis states strictly below
    the cutoff in every mode, where the truncated algebra is exact.
    """
    pairs = modes if modes is not None else [(j, k) for j in range(spec.d) for k in range(spec.d)]
    keep = spec.interior_mask() if restricted else np.ones(spec.dim, dtype=bool)
    worst = 0.0
    for j, k in pairs:
        a = annihilator(spec, j).entries
        ad = creator(spec, k).entries
        comm = a @ ad - ad @ a
        if j == k:
            comm = comm - spec.eps * np.eye(spec.dim)
        worst = max(worst, float(np.abs(comm[np.ix_(keep, keep)]).max(initial=0.0)))
    return worst


def coherent_cutoff(radius: float, eps: float, tol: float = DEFICIT_TOL, d: int = 1) -> int:
    """Smallest n_max whose coherent deficit at |z_j| <= radius is below tol."""
    lam = radius**2 / eps
    per_mode = tol / d
    n = int(stats.poisson.isf(per_mode, lam)) if lam > 0 else 0
    n = max(n, 1)
    while stats.poisson.sf(n, lam) >= per_mode:
        n += 1
    return n


def dump_json(obj) -> str:
    """Serialize an operator or vector as JSON with row-major (re, im) pairs."""
    if isinstance(obj, OperatorMatrix):
        data = np.asarray(obj.entries, dtype=complex)
        kind = "diagonal" if obj.is_diagonal else "operator"
    elif isinstance(obj, StateVector):
        data, kind = np.asarray(obj.entries, dtype=complex), "vector"
    else:
        raise ArgumentError(f"cannot dump {type(obj).__name__}")
    flat = data.ravel(order="C")
    payload = {
        "kind": kind,
        "dim": int(data.shape[0]),
        "data": [[float(x.real), float(x.imag)] for x in flat],
    }
    return json.dumps(payload)


def load_json(text: str):
    payload = json.loads(text)
    pairs = np.asarray(payload["data"], dtype=float).reshape(-1, 2)
    flat = pairs[:, 0] + 1j * pairs[:, 1]
    dim = int(payload["dim"])
    kind = payload["kind"]
    if kind == "operator":
        return OperatorMatrix(flat.reshape(dim, dim))
    if kind == "diagonal":
        return OperatorMatrix(flat)
    if kind == "vector":
        return StateVector(flat)
    raise ArgumentError(f"unknown dump kind {kind!r}")
