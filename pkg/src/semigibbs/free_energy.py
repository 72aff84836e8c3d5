"""Free energies, Gibbs variational identities and the eps-sweep experiments."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ArgumentError, ConvergenceError, ResourceError, TruncationError
from .fock import FockSpec, OperatorMatrix, coherent_cutoff, coherent_deficits
from .quadrature import (
    LOG_FLOOR,
    ClassicalDensity,
    QuadratureGrid,
    as_function,
    boltzmann_entropy,
    classical_gibbs,
    gibbs_radius,
    integrate,
    relative_entropy_classical,
    uniform_grid,
)
from .quantize import _anti_wick_on, wick_quantize
from .states import (
    DENSE_LIMIT,
    DensityMatrix,
    HusimiField,
    assumption_A_norm,
    coherent_expectation,
    gibbs_state,
    husimi,
    relative_entropy_vn,
    von_neumann_entropy,
    wehrl_entropy,
)
from .symbols import SymbolClassS

log = logging.getLogger(__name__)

IDENTITY_TOL = 1e-8


@dataclass
class FreeEnergyReport:
    kind: str  # boltzmann | vN | wehrl
    value: float
    relative_value: float
    beta: float
    eps: float | None = None
    renormalized: bool = False
    log_partition: float = 0.0
    identity_defect: float = 0.0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.relative_value < -1e-9:
            raise ConvergenceError(f"{self.kind} relative free energy is negative ({self.relative_value:.3e})")


@dataclass
class ConvergenceRow:
    eps: float
    n_max: int
    Z_scaled: float
    S_vN_renorm: float
    S_W_renorm: float
    S_B_target: float
    err_vN: float
    err_W: float
    F_vN_renorm: float
    F_W_renorm: float
    F_B_target: float
    extras: dict = field(default_factory=dict)

    CSV_FIELDS = (
        "eps", "n_max", "Z_scaled", "S_vN_renorm", "S_W_renorm", "S_B_target",
        "err_vN", "err_W", "F_vN_renorm", "F_W_renorm", "F_B_target",
    )

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("extras")
        return out


def _identity(kind: str, defect: float, tol: float):
    if not defect <= tol:
        raise ConvergenceError(f"{kind} free-energy identity off by {defect:.3e} (tol {tol:g})")


def renorm_shift(d: int, eps: float) -> float:
    """d log(pi eps): added to quantum entropies to compare with S_B."""
    return d * math.log(math.pi * eps)


def classical_free_energy(mu: ClassicalDensity, h, beta: float, grid: QuadratureGrid | None = None, tol: float = IDENTITY_TOL) -> FreeEnergyReport:
    """int h dmu - S_B(mu)/beta together with the relative form S_B(mu||gamma)/beta."""
    grid = mu.grid if grid is None else grid
    mu = mu.on(grid)
    hf = as_function(h)
    gamma = classical_gibbs(h, beta, grid)
    energy = integrate(hf(grid.nodes) * mu.values, grid)
    value = energy - boltzmann_entropy(mu) / beta
    rel = relative_entropy_classical(mu, gamma) / beta
    log_z = math.log(gamma.meta["Z"])
    defect = abs(value - rel + log_z / beta)
    _identity("classical", defect, tol)
    return FreeEnergyReport("boltzmann", value, rel, beta, None, False, log_z, defect, {"energy": energy})


def vn_free_energy(rho: DensityMatrix, H: OperatorMatrix, beta: float, gibbs: tuple | None = None,
                   renormalize: bool = False, tol: float = IDENTITY_TOL) -> FreeEnergyReport:
    """Tr(H rho) - S_vN/beta and S_vN(rho||Gamma)/beta."""
    spec = rho.spec
    gamma, Z = gibbs if gibbs is not None else gibbs_state(H, beta, spec)
    log_z = gamma.meta.get("log_Z", math.log(Z))
    energy = rho.expect(H).real
    value = energy - von_neumann_entropy(rho) / beta
    rel = relative_entropy_vn(rho, gamma) / beta
    defect = abs(value - rel + log_z / beta)
    _identity("von Neumann", defect, tol)
    if renormalize:
        value -= renorm_shift(spec.d, spec.eps) / beta
    return FreeEnergyReport("vN", value, rel, beta, spec.eps, renormalize, log_z, defect, {"energy": energy})


def _upper_values(h: SymbolClassS, eps: float, nodes) -> np.ndarray:
    return np.real(h.upper().at(eps)(nodes))


def wehrl_free_energy(rho: DensityMatrix, h: SymbolClassS, beta: float, spec: FockSpec | None = None,
                      grid: QuadratureGrid | None = None, field_: HusimiField | None = None,
                      renormalize: bool = False, tol: float = IDENTITY_TOL) -> FreeEnergyReport:
    """Wehrl free energy through the upper symbol, and its relative form.

    value = int h_up phi - S_B(phi)/beta + (d/beta) log(pi eps), with phi the
    Husimi density; relative = S_B(phi || gamma_up)/beta where gamma_up is the
    Gibbs density of h_up.
    """
    spec = rho.spec if spec is None else spec
    if field_ is None:
        if grid is None:
            raise ArgumentError("wehrl_free_energy needs a grid or a Husimi field")
        field_ = husimi(rho, grid)
    grid = field_.grid
    eps, d = spec.eps, spec.d
    phi = field_.values / field_.scale
    hup = _upper_values(h, eps, grid.nodes)
    z_up = integrate(np.exp(-beta * hup), grid)
    log_zup = math.log(z_up)
    energy = integrate(hup * phi, grid)
    s_b = wehrl_entropy(field_) + renorm_shift(d, eps)
    shift = renorm_shift(d, eps) / beta
    value = energy - s_b / beta + shift
    log_phi = np.log(np.maximum(phi, LOG_FLOOR))
    rel = integrate(np.where(phi > 0, phi * (log_phi + beta * hup + log_zup), 0.0), grid) / beta
    defect = abs(value - rel + log_zup / beta - shift)
    _identity("Wehrl", defect, tol)
    if renormalize:
        value -= shift
    return FreeEnergyReport("wehrl", value, rel, beta, eps, renormalize, log_zup, defect,
                            {"energy": energy, "S_B_phi": s_b, "husimi_norm": field_.normalization_check})


# eps sweeps -------------------------------------------------------------------


DIAGONAL_LIMIT = 2_000_000  # states; diagonal Hamiltonians beyond this do not fit in memory comfortably


def initial_cutoff(h: SymbolClassS, beta: float, eps: float, tol: float = 1e-10) -> int:
    """Cutoff guess: coherent states out to the radius where exp(-beta h) < tol."""
    R = gibbs_radius(h, beta, tail=tol)
    return max(8, int(math.ceil(R * R / eps)))


def certified_gibbs(h: SymbolClassS, beta: float, eps: float, n_max: int | None = None, tol: float = 1e-10,
                    max_tries: int = 8):
    """Quantize h, build its Gibbs state, and grow n_max until the cutoff weight is below tol."""
    n = initial_cutoff(h, beta, eps, tol) if n_max is None else int(n_max)
    for _ in range(max_tries):
        spec = FockSpec(h.d, n, eps)
        if spec.dim > DIAGONAL_LIMIT:
            raise ResourceError(f"cutoff n_max={n} gives {spec.dim} states at eps={eps:g}, above {DIAGONAL_LIMIT}")
        if not h.is_number_conserving() and spec.dim > DENSE_LIMIT:
            raise ResourceError(f"dense Hamiltonian of dimension {spec.dim} needed at eps={eps:g}")
        H = wick_quantize(h.symbol, spec)
        try:
            rho, Z = gibbs_state(H, beta, spec, tol=tol)
        except TruncationError:
            n = int(math.ceil(1.5 * n))
            continue
        return spec, H, rho, Z
    raise TruncationError(f"no adequate cutoff found at eps={eps:g}", suggested_n_max=n)


def phase_grid(h: SymbolClassS, beta: float, eps: float = 0.0, spacing: float | None = None, tail: float = 1e-18) -> QuadratureGrid:
    """Uniform grid covering the Gibbs region, widened by the coherent spread."""
    R = gibbs_radius(h, beta, tail=tail) + 6 * math.sqrt(eps)
    if spacing is None:
        spacing = 0.2 if h.d == 1 else 0.5
    return uniform_grid(h.d, R, spacing)


def classical_targets(h: SymbolClassS, beta: float) -> dict:
    gamma = classical_gibbs(h, beta)
    Z0 = gamma.meta["Z"]
    return {"S_B": boltzmann_entropy(gamma), "F_B": -math.log(Z0) / beta, "Z": Z0, "gamma": gamma}


def entropy_convergence_experiment(h: SymbolClassS, beta: float, eps_list, grid: QuadratureGrid | None = None,
                                   tol: float = 1e-10, k_list=(), n_max_list=None) -> list[ConvergenceRow]:
    """Renormalized Gibbs entropies and free energies along an eps sweep.

    Each row certifies its own cutoff.  ``k_list`` adds the moment norms
    || (N+eps)^{k/2} e^{-beta H} (N+eps)^{k/2} || to the row extras.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ArgumentError("eps_list must be strictly decreasing")
    target = classical_targets(h, beta)
    rows = []
    for idx, eps in enumerate(eps_list):
        n_hint = None if n_max_list is None else n_max_list[idx]
        spec, H, gamma, Z = certified_gibbs(h, beta, eps, n_hint, tol)
        g = grid if grid is not None else phase_grid(h, beta, eps)
        fld = husimi(gamma, g)
        shift = renorm_shift(spec.d, eps)
        s_vn = von_neumann_entropy(gamma) + shift
        s_w = wehrl_entropy(fld) + shift
        fv = vn_free_energy(gamma, H, beta, gibbs=(gamma, Z), renormalize=True)
        fw = wehrl_free_energy(gamma, h, beta, field_=fld, renormalize=True)
        extras = {
            "log_Z": gamma.meta["log_Z"],
            "top_weight": gamma.meta.get("top_weight", 0.0),
            "husimi_norm": fld.normalization_check,
            "F_vN_rel": fv.relative_value,
            "F_W_rel": fw.relative_value,
            "identity_defect": max(fv.identity_defect, fw.identity_defect),
        }
        for k in k_list:
            extras[f"A_norm_{k}"] = assumption_A_norm(H, beta, k, spec)
        rows.append(ConvergenceRow(
            eps=eps, n_max=spec.n_max,
            Z_scaled=math.exp(gamma.meta["log_Z"] + shift),
            S_vN_renorm=s_vn, S_W_renorm=s_w, S_B_target=target["S_B"],
            err_vN=abs(s_vn - target["S_B"]), err_W=abs(s_w - target["S_B"]),
            F_vN_renorm=fv.value, F_W_renorm=fw.value, F_B_target=target["F_B"],
            extras=extras,
        ))
        log.info("eps=%g n_max=%d S_vN=%.12g S_W=%.12g", eps, spec.n_max, s_vn, s_w)
    return rows


def partition_table(h: SymbolClassS, beta: float, eps_list, tol: float = 1e-10) -> list[dict]:
    """(pi eps)^d Z against the classical partition function and its upper-symbol bound."""
    target = classical_targets(h, beta)
    grid = target["gamma"].grid
    rows = []
    for eps in eps_list:
        spec, H, gamma, Z = certified_gibbs(h, beta, float(eps), None, tol)
        z_scaled = math.exp(gamma.meta["log_Z"] + renorm_shift(spec.d, eps))
        z_up = integrate(np.exp(-beta * _upper_values(h, eps, grid.nodes)), grid)
        rows.append({
            "eps": float(eps), "n_max": spec.n_max, "Z_scaled": z_scaled,
            "Z_classical": target["Z"], "Z_upper": z_up, "err": abs(z_scaled - target["Z"]),
        })
    return rows


def monotone_limit_identity(h: SymbolClassS, beta: float, eps: float, grid: QuadratureGrid | None = None):
    """(Tr H e^{-beta H}, int h_up <z|e^{-beta H}|z> dz/(pi eps)^d) for the certified cutoff."""
    spec, H, gamma, Z = certified_gibbs(h, beta, eps)
    grid = grid if grid is not None else phase_grid(h, beta, eps)
    spectral = gamma.expect(H).real * Z
    g = husimi(gamma, grid).values * Z
    quad = integrate(_upper_values(h, eps, grid.nodes) * g, grid) / (math.pi * eps) ** spec.d
    return spectral, quad


def husimi_log_bound(h: SymbolClassS, beta: float, eps: float, grid: QuadratureGrid | None = None) -> float:
    """max over nodes of -log(f/(pi eps)^d) - beta h - log((pi eps)^d Z); must be <= 0."""
    spec, H, gamma, Z = certified_gibbs(h, beta, eps)
    grid = grid if grid is not None else phase_grid(h, beta, eps)
    fld = husimi(gamma, grid)
    lhs = -np.log(np.maximum(fld.values / fld.scale, LOG_FLOOR))
    rhs = beta * h(grid.nodes) + gamma.meta["log_Z"] + renorm_shift(spec.d, eps)
    # the bound concerns the untruncated state; only nodes resolved by the cutoff qualify
    keep = (coherent_deficits(spec, grid.nodes) <= 1e-12) & (fld.values > 1e-250)
    return float((lhs - rhs)[keep].max())


def jensen_lower_bound_check(h: SymbolClassS, beta: float, eps: float, grid: QuadratureGrid | None = None) -> dict:
    """Both sides of S_vN(Gamma) - log Z >= (beta/Z) int h_up e^{-beta h} dz/(pi eps)^d.

    Returns the sides and their gap (left minus right); the gap is expected
    to be positive and to vanish as eps decreases.
    """
    spec, H, gamma, Z = certified_gibbs(h, beta, eps)
    grid = grid if grid is not None else phase_grid(h, beta, eps)
    lhs = von_neumann_entropy(gamma) - gamma.meta["log_Z"]
    nodes = grid.nodes
    integrand = _upper_values(h, eps, nodes) * np.exp(-beta * h(nodes))
    rhs = beta * integrate(integrand, grid) / (Z * (math.pi * eps) ** spec.d)
    return {"eps": eps, "lhs": lhs, "rhs": rhs, "gap": lhs - rhs}


def recovery_sequence(f: ClassicalDensity, spec: FockSpec, grid: QuadratureGrid | None = None, trace_tol: float = 1e-6) -> DensityMatrix:
    """rho = int f(z) |z_eps><z_eps| dz assembled on the quadrature grid."""
    grid = f.grid if grid is None else grid
    f = f.on(grid)
    weight = f.values * (math.pi * spec.eps) ** spec.d
    mat = _anti_wick_on(weight, spec, grid)
    mat = (mat + mat.conj().T) / 2
    tr = float(np.trace(mat).real)
    if abs(tr - 1) > trace_tol:
        raise TruncationError(f"recovery state has trace {tr:.10g}; grid or cutoff too small",
                              suggested_n_max=2 * spec.n_max)
    return DensityMatrix.from_matrix(spec, mat / tr, meta={"raw_trace": tr})


def gaussian_density(grid: QuadratureGrid, center, s: float) -> ClassicalDensity:
    """exp(-|z - c|^2 / s) / (pi s)^d on the grid."""
    c = np.atleast_1d(np.asarray(center, dtype=complex))
    d = c.size

    def func(z):
        z = np.asarray(z).reshape(-1, d)
        return np.exp(-np.sum(np.abs(z - c) ** 2, axis=1) / s) / (math.pi * s) ** d

    def log_func(z):
        z = np.asarray(z).reshape(-1, d)
        return -np.sum(np.abs(z - c) ** 2, axis=1) / s - d * math.log(math.pi * s)

    return ClassicalDensity(grid, func(grid.nodes), func, log_func, {"center": c.tolist(), "s": s})


def recovery_sweep(center, s: float, eps_list, h: SymbolClassS | None = None, spacing_factor: float = 0.45,
                   tail: float = 1e-14) -> list[dict]:
    """Recovery states of a Gaussian density along an eps sweep.

    Reports the Husimi deviation from the convolution closed form, the
    renormalized Wehrl entropy against S_B(f), and Tr(H rho) against int h f.
    """
    c = np.atleast_1d(np.asarray(center, dtype=complex))
    d = c.size
    s_b = d * (1 + math.log(math.pi * s))
    rows = []
    for eps in eps_list:
        eps = float(eps)
        reach = float(np.abs(c).max()) + math.sqrt(s * math.log(1 / tail))
        spec = FockSpec(d, coherent_cutoff(reach + 2 * math.sqrt(eps), eps, 1e-12, d), eps)
        g = uniform_grid(d, reach, spacing_factor * math.sqrt(eps), center=c)
        f = gaussian_density(g, c, s)
        rho = recovery_sequence(f, spec, g)
        wide = math.sqrt((s + eps) * math.log(1 / tail))
        hg = uniform_grid(d, wide + 1.0, min(0.2, 0.5 * math.sqrt(s + eps)), center=c)
        fld = husimi(rho, hg)
        conv = (eps / (eps + s)) ** d * np.exp(-np.sum(np.abs(hg.nodes - c) ** 2, axis=1) / (s + eps))
        row = {
            "eps": eps, "n_max": spec.n_max,
            "husimi_err": float(np.abs(fld.values - conv).max()),
            "S_W_renorm": wehrl_entropy(fld) + renorm_shift(d, eps),
            "S_B": s_b,
        }
        row["gap"] = row["S_W_renorm"] - s_b
        if h is not None:
            H = wick_quantize(h.symbol, spec)
            row["energy"] = rho.expect(H).real
            row["energy_classical"] = integrate(h(g.nodes) * f.values, g)
        rows.append(row)
    return rows


def gamma_lower_report(h: SymbolClassS, beta: float, beta_state: float, eps_list) -> list[dict]:
    """Relative Wehrl free energy of Gibbs states at beta_state, against the classical value of their limit."""
    target = classical_gibbs(h, beta_state)
    ref = classical_gibbs(h, beta)  # its own certified Z, resampled on the target grid below
    classical = relative_entropy_classical(target, ref, grid=target.grid) / beta
    rows = []
    for eps in eps_list:
        spec, H, gamma, Z = certified_gibbs(h, beta_state, float(eps))
        fw = wehrl_free_energy(gamma, h, beta, field_=husimi(gamma, phase_grid(h, min(beta, beta_state), eps)))
        rows.append({"eps": float(eps), "F_W_rel": fw.relative_value, "F_B_rel": classical})
    return rows


def coherent_expectation_sweep(h: SymbolClassS, beta: float, eps_list, points) -> list[dict]:
    """max |g_eps(z) - e^{-beta h(z)}| over the given points, per eps."""
    pts = np.asarray(points, dtype=complex).reshape(-1, h.d)
    rows = []
    for eps in eps_list:
        spec, H, gamma, Z = certified_gibbs(h, beta, float(eps))
        g = coherent_expectation(H, beta, pts, spec)
        rows.append({"eps": float(eps), "max_err": float(np.abs(g - np.exp(-beta * h(pts))).max())})
    return rows
