"""Structural and variational invariants, runnable as one suite."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SemigibbsError
from .fock import FockSpec, ccr_defect, number_operator
from .free_energy import (
    certified_gibbs,
    classical_free_energy,
    husimi_log_bound,
    jensen_lower_bound_check,
    monotone_limit_identity,
    partition_table,
    phase_grid,
    vn_free_energy,
)
from .lattice import AdmissibilityWarning, lattice_state
from .quadrature import ClassicalDensity, classical_gibbs, gibbs_radius, uniform_grid
from .quantize import anti_wick_quantize, coherent_grid, wick_quantize
from .states import (
    DensityMatrix,
    gibbs_state,
    husimi,
    random_density_matrix,
    relative_entropy_vn,
    von_neumann_entropy,
    wehrl_entropy,
    wehrl_relative_entropy,
)
from .symbols import PolySymbol, SymbolClassS, upper_symbol


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    detail: str = ""


def sample_symbols(d: int = 1) -> list[PolySymbol]:
    """Symbols exercised by the upper-symbol round trip."""
    n1 = PolySymbol.norm_power(d, 1)
    n2 = PolySymbol.norm_power(d, 2)
    x = PolySymbol.real_part(d)
    return [n1, n2, x * n1, n2 + PolySymbol.monomial((2,) + (0,) * (d - 1), (0,) * d, "0.5") + PolySymbol.monomial((0,) * d, (2,) + (0,) * (d - 1), "0.5")]


def upper_roundtrip_error(sym: PolySymbol, spec: FockSpec) -> float:
    """max |AntiWick(upper(sym)) - Wick(sym)| on the truncated space."""
    up = upper_symbol(sym)
    aw = anti_wick_quantize(up, spec)
    wk = wick_quantize(sym, spec, diagonal=False)
    return float(np.abs(aw.dense() - wk.dense()).max())


def resolution_of_identity_error(spec: FockSpec, low: int | None = None) -> float:
    """max deviation of int |z><z| dz/(pi eps)^d from 1 on sectors n <= low."""
    low = spec.n_max // 2 if low is None else low
    grid = coherent_grid(spec, 0)
    one = anti_wick_quantize(lambda z: np.ones(z.shape[0]), spec, grid).dense()
    keep = (spec.occupations <= low).all(axis=1)
    blk = one[np.ix_(keep, keep)]
    return float(np.abs(blk - np.eye(blk.shape[0])).max())


def run_suite(h: SymbolClassS, beta: float, eps_list, seed: int = 0, n_random: int = 50,
              progress: Callable[[Check], None] | None = None) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks: list[Check] = []

    def add(name, passed, value, detail=""):
        c = Check(name, bool(passed), float(value), detail)
        checks.append(c)
        if progress:
            progress(c)

    def guarded(name, fn):
        try:
            fn()
        except SemigibbsError as exc:
            add(name, False, math.nan, f"{type(exc).__name__}: {exc}")

    # algebra
    def ccr():
        worst = max(ccr_defect(FockSpec(d, 6, e)) for d in (1, 2) for e in (1.0, 0.25))
        add("ccr_interior", worst <= 1e-12, worst)
    guarded("ccr_interior", ccr)

    def identity():
        err = max(resolution_of_identity_error(FockSpec(d, 12, e)) for d in (1, 2) for e in (1.0, 0.3))
        add("resolution_of_identity", err <= 1e-10, err)
    guarded("resolution_of_identity", identity)

    def upper():
        spec = FockSpec(1, 10, 0.5)
        err = max(upper_roundtrip_error(s, spec) for s in sample_symbols(1))
        add("upper_symbol_roundtrip", err <= 1e-6, err)
        up = upper_symbol(PolySymbol.norm_power(1, 1))
        exact = up.base == PolySymbol.norm_power(1, 1) and up.corrections.get(1) == PolySymbol.constant(1, -1)
        add("upper_symbol_number_operator", exact, 0.0, repr(up))
    guarded("upper_symbol", upper)

    # states
    def random_states():
        spec = FockSpec(1, 8, 0.5)
        grid = uniform_grid(1, 7.0, 0.08)
        worst_dom, worst_rel, worst_order = math.inf, math.inf, math.inf
        for _ in range(n_random):
            r = random_density_matrix(spec, rng, rank=int(rng.integers(1, spec.dim + 1)))
            s = random_density_matrix(spec, rng)
            fr = husimi(r, grid)
            worst_dom = min(worst_dom, wehrl_entropy(fr) - von_neumann_entropy(r))
            rv = relative_entropy_vn(r, s)
            rw = wehrl_relative_entropy(r, s, grid)
            worst_rel = min(worst_rel, rv, rw)
            worst_order = min(worst_order, rv - rw)
        add("wehrl_dominance", worst_dom > 1e-10, worst_dom)
        add("relative_entropy_nonnegative", worst_rel >= -1e-10, worst_rel)
        add("relative_entropy_ordering", worst_order > 1e-10, worst_order)
    guarded("random_states", random_states)

    # Gibbs family of the configured model
    eps_small = [float(e) for e in eps_list][:4]

    def squeeze():
        rows = partition_table(h, beta, eps_small)
        worst = min(min(r["Z_scaled"] - r["Z_classical"], r["Z_upper"] - r["Z_scaled"]) for r in rows)
        add("partition_squeeze", worst >= -1e-10, worst)
    guarded("partition_squeeze", squeeze)

    def logbound():
        worst = max(husimi_log_bound(h, beta, e) for e in eps_small)
        add("husimi_log_bound", worst <= 1e-9, worst)
    guarded("husimi_log_bound", logbound)

    def monotone():
        worst = 0.0
        for e in eps_small[:2]:
            a, b = monotone_limit_identity(h, beta, e)
            worst = max(worst, abs(a - b) / max(1.0, abs(a)))
        add("monotone_limit_identity", worst <= 1e-8, worst)
    guarded("monotone_limit_identity", monotone)

    def jensen():
        gaps = [jensen_lower_bound_check(h, beta, e)["gap"] for e in eps_small[:2]]
        add("jensen_lower_bound", min(gaps) > 0, min(gaps))
    guarded("jensen_lower_bound", jensen)

    def certification():
        e = eps_small[0]
        spec, H, g1, _ = certified_gibbs(h, beta, e)
        spec2 = spec.with_n_max(2 * spec.n_max)
        g2, _ = gibbs_state(wick_quantize(h.symbol, spec2), beta, spec2)
        grid = phase_grid(h, beta, e)
        fine = grid.refined()
        vals1 = (von_neumann_entropy(g1), wehrl_entropy(husimi(g1, grid)), g1.meta["log_Z"])
        vals2 = (von_neumann_entropy(g2), wehrl_entropy(husimi(g2, fine)), g2.meta["log_Z"])
        worst = max(abs(a - b) for a, b in zip(vals1, vals2))
        add("certification_doubling", worst < 1e-8, worst)
    guarded("certification_doubling", certification)

    def variational():
        e = eps_small[0]
        spec, H, gamma, Z = certified_gibbs(h, beta, e)
        base = vn_free_energy(gamma, H, beta, gibbs=(gamma, Z))
        worst = math.inf
        for _ in range(10):
            noise = rng.random(spec.dim) * gamma.weights * 0.5
            p = gamma.weights + noise
            rho = DensityMatrix.diagonal(spec, p / p.sum())
            worst = min(worst, vn_free_energy(rho, H, beta, gibbs=(gamma, Z)).value - base.value)
        add("vn_variational_dominance", worst > 0, worst)
        # trial Gaussians are shifted and wider than the Gibbs density, so a
        # Gauss-Hermite rule tuned to the latter is not exact for them
        grid = uniform_grid(h.d, gibbs_radius(h, beta, tail=1e-18) + 4.0, 0.1)
        gam = classical_gibbs(h, beta, grid)
        fb = classical_free_energy(gam, h, beta).value
        worst_c = math.inf
        for _ in range(10):
            c = complex(*rng.normal(0, 0.3, 2))
            s = float(rng.uniform(0.3, 1.5))
            f = ClassicalDensity.from_function(
                lambda z, c=c, s=s: np.exp(-np.abs(z[:, 0] - c) ** 2 / s) / (math.pi * s), gam.grid)
            if abs(f.normalization - 1) > 1e-6:
                continue
            worst_c = min(worst_c, classical_free_energy(f, h, beta).value - fb)
        add("classical_variational_dominance", worst_c > 0, worst_c)
    if h.d == 1:
        guarded("variational_dominance", variational)

    def lattice():
        f = lambda x: np.exp(-np.real(x[:, 0]) ** 2 / 0.5) / math.sqrt(0.5 * math.pi)  # noqa: E731
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AdmissibilityWarning)
            st = lattice_state(f, 2, 2.0**-6 / math.pi)
        defect = st.ons.gram_defect()
        add("lattice_ons_orthonormal", defect <= 1e-8, defect)
    guarded("lattice_ons", lattice)

    def vacuum_check():
        spec = FockSpec(1, 40, 1.0)
        gamma, _ = gibbs_state(number_operator(spec), math.log(2), spec)
        vac = DensityMatrix.diagonal(spec, np.eye(spec.dim)[0])
        val = relative_entropy_vn(vac, gamma)
        add("vacuum_relative_entropy", abs(val - math.log(2)) < 1e-12, val)
    guarded("vacuum_relative_entropy", vacuum_check)
    return checks
