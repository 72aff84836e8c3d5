"""Phase-space quadrature on C^d = R^{2d} and classical Gibbs quantities."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .errors import ArgumentError, ConvergenceError, InvalidDensityError

LOG_FLOOR = 1e-300
MAX_NODES = 4_000_000


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    d: int
    scheme: str
    radius: float
    nodes: np.ndarray  # (K, d) complex
    weights: np.ndarray  # (K,)
    level: int = 0
    params: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def refined(self) -> "QuadratureGrid":
        """Next level: doubles radius and node density, refines the spacing alone at fixed radius, or doubles the Gauss-Hermite count."""
        p = self.params
        if self.scheme == "uniform-tensor":
            if p.get("fixed_radius"):
                radius, spacing = p["radius"], p["spacing"] / 1.5
            else:
                radius, spacing = 2 * p["radius"], p["spacing"] / 2
            return uniform_grid(self.d, radius, spacing, center=p["center"], level=self.level + 1,
                                fixed_radius=p.get("fixed_radius", False))
        return gauss_hermite_grid(self.d, 2 * p["n"], p["scale"], center=p["center"], level=self.level + 1)


def _center(d, center):
    c = np.zeros(d, dtype=complex) if center is None else np.atleast_1d(np.asarray(center, dtype=complex))
    if c.shape != (d,):
        raise ArgumentError(f"center must be a point in C^{d}")
    return c


def uniform_grid(d: int, radius: float, spacing: float, center=None, level: int = 0,
                 fixed_radius: bool = False) -> QuadratureGrid:
    """Cubic lattice of the given spacing, clipped to the ball of given radius.

    ``fixed_radius`` keeps the radius under refinement, for integrands whose
    tail is already negligible outside the ball.
    """
    if radius <= 0 or spacing <= 0:
        raise ArgumentError("radius and spacing must be positive")
    c = _center(d, center)
    m = int(math.floor(radius / spacing))
    axis = spacing * np.arange(-m, m + 1)
    count = axis.size ** (2 * d)
    if count > MAX_NODES * 4:
        raise ConvergenceError(f"uniform grid with {count} lattice points exceeds the node budget")
    mesh = np.stack(np.meshgrid(*([axis] * (2 * d)), indexing="ij"), axis=-1).reshape(-1, 2 * d)
    keep = np.einsum("ij,ij->i", mesh, mesh) <= radius**2 * (1 + 1e-12)
    mesh = mesh[keep]
    nodes = mesh[:, 0::2] + 1j * mesh[:, 1::2] + c
    weights = np.full(nodes.shape[0], spacing ** (2 * d))
    params = {"radius": radius, "spacing": spacing, "center": c, "fixed_radius": fixed_radius}
    return QuadratureGrid(d, "uniform-tensor", radius, nodes, weights, level, params)


def gauss_hermite_grid(d: int, n: int, scale: float, center=None, level: int = 0) -> QuadratureGrid:
    """Tensor Gauss-Hermite rule with weights rescaled to integrate g dz directly.

    Exact for g = exp(-|z - c|^2 / scale^2) * polynomial of degree < 2n per axis.
    """
    if n < 1 or scale <= 0:
        raise ArgumentError("n must be >= 1 and scale positive")
    if n ** (2 * d) > MAX_NODES:
        raise ConvergenceError(f"Gauss-Hermite grid with {n ** (2 * d)} nodes exceeds the node budget")
    c = _center(d, center)
    t, w = hermgauss(n)
    axis_w = scale * np.exp(np.log(w) + t**2)
    axis_x = scale * t
    mesh_x = np.stack(np.meshgrid(*([axis_x] * (2 * d)), indexing="ij"), axis=-1).reshape(-1, 2 * d)
    mesh_w = np.stack(np.meshgrid(*([axis_w] * (2 * d)), indexing="ij"), axis=-1).reshape(-1, 2 * d)
    nodes = mesh_x[:, 0::2] + 1j * mesh_x[:, 1::2] + c
    weights = np.prod(mesh_w, axis=1)
    radius = float(np.abs(nodes - c).max()) if d == 1 else float(np.linalg.norm(nodes - c, axis=1).max())
    params = {"n": n, "scale": scale, "center": c}
    return QuadratureGrid(d, "gauss-hermite-tensor", radius, nodes, weights, level, params)


def _values(g, grid: QuadratureGrid) -> np.ndarray:
    if callable(g):
        return np.asarray(g(grid.nodes))
    vals = np.asarray(g)
    if vals.shape != (grid.size,):
        raise ArgumentError(f"expected {grid.size} node values, got shape {vals.shape}")
    return vals


def integrate(g, grid: QuadratureGrid):
    """sum_k w_k g(z_k); g is a callable on (K, d) nodes or an array of node values."""
    vals = _values(g, grid)
    out = np.sum(grid.weights * vals)
    return complex(out) if np.iscomplexobj(out) else float(out)


class Certified(NamedTuple):
    value: float
    grid: QuadratureGrid
    history: list


def refine_until(g, grid: QuadratureGrid, rel_tol: float = 1e-8, max_levels: int = 5, abs_tol: float = 0.0) -> Certified:
    """Refine until two successive levels agree to rel_tol.

    Raises ConvergenceError if no agreement after ``max_levels`` refinements
    or if the integrand is not finite on the grid.
    """
    history = []
    prev = None
    current = grid
    for _ in range(max_levels + 1):
        val = integrate(g, current)
        history.append((current.level, current.size, val))
        if not np.isfinite(val):
            raise ConvergenceError("integral is not finite on the grid", history)
        if prev is not None and abs(val - prev) <= rel_tol * abs(val) + abs_tol:
            return Certified(val, current, history)
        prev = val
        try:
            current = current.refined()
        except ConvergenceError as exc:
            raise ConvergenceError(f"refinement budget exhausted: {exc}", history) from exc
    raise ConvergenceError(f"no convergence to rel_tol={rel_tol} after {max_levels} refinements", history)


# symbol helpers -------------------------------------------------------------


def as_function(h, eps: float | None = None) -> Callable:
    """Real-valued callable on (K, d) nodes for symbols, expansions or callables."""
    from .symbols import PolySymbol, SymbolClassS, SymbolExpansion

    if isinstance(h, SymbolExpansion):
        if eps is None:
            raise ArgumentError("evaluating an upper-symbol expansion needs eps")
        sym = h.at(eps)
        return lambda z: np.real(sym(np.asarray(z).reshape(-1, sym.d)))
    if isinstance(h, SymbolClassS):
        return lambda z: np.real(h.symbol(np.asarray(z).reshape(-1, h.d)))
    if isinstance(h, PolySymbol):
        return lambda z: np.real(h(np.asarray(z).reshape(-1, h.d)))
    if callable(h):
        return h
    raise ArgumentError(f"cannot evaluate {type(h).__name__} as a phase-space function")


def gibbs_radius(h, beta: float, tail: float = 1e-16) -> float:
    """R with exp(-beta (C R^{2p} - C~)) < tail, from the certified growth bound."""
    from .quantize import symbol_growth_bound

    C, Ct = symbol_growth_bound(h)
    return ((math.log(1 / tail) + beta * Ct) / (beta * C)) ** (1 / (2 * h.p_max))


def default_grid(h, beta: float, level0_points: int = 16) -> QuadratureGrid:
    """Starting grid for exp(-beta h): Gauss-Hermite when the leading term is radial quadratic."""
    from .symbols import SymbolClassS

    if not isinstance(h, SymbolClassS):
        raise ArgumentError("default grids need a class-S symbol")
    lead = h.h0_terms[h.p_max]
    if h.p_max == 1 and np.isscalar(lead):
        return gauss_hermite_grid(h.d, 8, 1 / math.sqrt(beta * float(lead)))
    R = gibbs_radius(h, beta)
    if h.d == 1:
        return uniform_grid(h.d, R / 2, R / level0_points)
    # the radius already bounds the tail, so only the spacing is refined
    return uniform_grid(h.d, R, R / 6, fixed_radius=True)


# classical densities ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClassicalDensity:
    grid: QuadratureGrid
    values: np.ndarray
    func: Callable | None = None
    log_func: Callable | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.min(initial=0.0) < -1e-12:
            raise InvalidDensityError(f"density is negative at a node ({vals.min():.3e})")
        object.__setattr__(self, "values", np.clip(vals, 0.0, None))

    @classmethod
    def from_function(cls, func, grid: QuadratureGrid, log_func=None, normalize: bool = False, meta=None):
        meta = dict(meta or {})
        vals = np.asarray(func(grid.nodes), dtype=float)
        if normalize:
            Z = integrate(vals, grid)
            f0, lf0 = func, log_func
            func = lambda z: f0(z) / Z  # noqa: E731
            log_func = None if lf0 is None else (lambda z: lf0(z) - math.log(Z))
            vals = vals / Z
            meta["Z"] = Z
        return cls(grid, vals, func, log_func, meta)

    @property
    def normalization(self) -> float:
        return integrate(self.values, self.grid)

    def log_values(self) -> np.ndarray | None:
        if self.log_func is None:
            return None
        return np.asarray(self.log_func(self.grid.nodes), dtype=float)

    def on(self, grid: QuadratureGrid) -> "ClassicalDensity":
        if grid is self.grid:
            return self
        if self.func is None:
            raise ArgumentError("a sampled density cannot be moved to another grid")
        return ClassicalDensity(grid, self.func(grid.nodes), self.func, self.log_func, dict(self.meta))

    def to_csv(self, path) -> None:
        write_density_csv(self, path)


def write_density_csv(mu: ClassicalDensity, path) -> None:
    d = mu.grid.d
    header = [f"z_re{j}" for j in range(d)] + [f"z_im{j}" for j in range(d)] + ["f"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for z, f in zip(mu.grid.nodes, mu.values):
            w.writerow([format(x, ".17g") for x in (*z.real, *z.imag, f)])


def _check_normalized(mu: ClassicalDensity, tol: float):
    norm = mu.normalization
    if abs(norm - 1) > tol:
        raise InvalidDensityError(f"density integrates to {norm:.12g}, not 1 (tol {tol:g})")


def boltzmann_entropy(mu: ClassicalDensity, grid: QuadratureGrid | None = None, norm_tol: float = 1e-6) -> float:
    """-int f log f dz with 0 log 0 = 0."""
    if grid is not None:
        mu = mu.on(grid)
    _check_normalized(mu, norm_tol)
    logf = mu.log_values()
    f = mu.values
    if logf is None:
        with np.errstate(divide="ignore"):
            logf = np.where(f > 0, np.log(np.maximum(f, LOG_FLOOR)), 0.0)
    return float(-np.sum(mu.grid.weights * np.where(f > 0, f * logf, 0.0)))


def relative_entropy_classical(mu: ClassicalDensity, nu: ClassicalDensity, grid: QuadratureGrid | None = None, norm_tol: float = 1e-6) -> float:
    """int log(dmu/dnu) dmu, or +inf when mu charges a region where nu vanishes."""
    if grid is None:
        grid = mu.grid
    mu, nu = mu.on(grid), nu.on(grid)
    _check_normalized(mu, norm_tol)
    _check_normalized(nu, norm_tol)
    f, g = mu.values, nu.values
    lf, lg = mu.log_values(), nu.log_values()
    if lf is None:
        lf = np.log(np.maximum(f, LOG_FLOOR))
    if lg is None:
        if np.any((g <= LOG_FLOOR) & (f > LOG_FLOOR)):
            return math.inf
        lg = np.log(np.maximum(g, LOG_FLOOR))
    return float(np.sum(grid.weights * np.where(f > 0, f * (lf - lg), 0.0)))


def classical_partition(h, beta: float, grid: QuadratureGrid | None = None, rel_tol: float = 1e-10, max_levels: int = 5) -> Certified:
    """Z = int exp(-beta h) dz, certified by refinement."""
    if not beta > 0:
        raise ArgumentError("beta must be positive")
    hf = as_function(h)
    if grid is None:
        grid = default_grid(h, beta)
    return refine_until(lambda z: np.exp(-beta * hf(z)), grid, rel_tol, max_levels)


def classical_gibbs(h, beta: float, grid: QuadratureGrid | None = None, eps: float | None = None, rel_tol: float = 1e-10) -> ClassicalDensity:
    """Normalized exp(-beta h)/Z on a grid (h may be an upper-symbol expansion with eps).

    With an explicit grid, Z is the quadrature on that grid; otherwise the grid
    is refined until Z is certified to rel_tol.
    """
    from .symbols import SymbolClassS

    hf = as_function(h, eps)
    history = []
    if grid is None:
        base = h if isinstance(h, SymbolClassS) else None
        if base is None:
            raise ArgumentError("classical_gibbs needs a grid unless h is a class-S symbol")
        cert = refine_until(lambda z: np.exp(-beta * hf(z)), default_grid(base, beta), rel_tol)
        grid, Z, history = cert.grid, cert.value, cert.history
    else:
        Z = integrate(lambda z: np.exp(-beta * hf(z)), grid)
    logZ = math.log(Z)

    def func(z):
        return np.exp(-beta * hf(z) - logZ)

    def log_func(z):
        return -beta * hf(z) - logZ

    return ClassicalDensity(grid, func(grid.nodes), func, log_func, {"Z": Z, "beta": beta, "history": history})
