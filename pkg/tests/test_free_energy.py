import math

import numpy as np
import pytest

from semigibbs.errors import ConvergenceError, TruncationError
from semigibbs.fock import FockSpec, coherent_vector, number_operator
from semigibbs.free_energy import (
    FreeEnergyReport,
    certified_gibbs,
    classical_free_energy,
    coherent_expectation_sweep,
    entropy_convergence_experiment,
    gamma_lower_report,
    gaussian_density,
    husimi_log_bound,
    initial_cutoff,
    jensen_lower_bound_check,
    monotone_limit_identity,
    partition_table,
    phase_grid,
    recovery_sequence,
    recovery_sweep,
    renorm_shift,
    vn_free_energy,
    wehrl_free_energy,
)
from semigibbs.quadrature import ClassicalDensity, classical_gibbs, uniform_grid
from semigibbs.states import DensityMatrix, gibbs_state, harmonic_closed_forms, husimi
from semigibbs.symbols import SymbolClassS

HARMONIC = SymbolClassS(1, {1: 1})
ANHARMONIC = SymbolClassS(1, {1: 1, 2: 0.5})


def thermal(spec, q):
    n = np.arange(spec.levels)
    return DensityMatrix.diagonal(spec, (1 - q) * q**n)


def test_report_rejects_negative_relative():
    with pytest.raises(ConvergenceError):
        FreeEnergyReport("vN", 0.0, -1e-6, 1.0)


def test_classical_free_energy_minimum():
    gamma = classical_gibbs(HARMONIC, 1.0)
    rep = classical_free_energy(gamma, HARMONIC, 1.0)
    assert rep.value == pytest.approx(-math.log(math.pi), abs=1e-10)
    assert rep.relative_value == pytest.approx(0.0, abs=1e-12)


def test_classical_free_energy_wrong_variance():
    grid = uniform_grid(1, 9.0, 0.05)
    s = 2.0
    mu = ClassicalDensity.from_function(lambda z: np.exp(-np.abs(z[:, 0]) ** 2 / s) / (math.pi * s), grid)
    rep = classical_free_energy(mu, HARMONIC, 1.0, grid)
    # KL of e^{-|z|^2/s}/(pi s) against e^{-|z|^2}/pi
    assert rep.relative_value == pytest.approx(s - 1 - math.log(s), abs=1e-9)


def test_vn_free_energy_harmonic_log2():
    spec = FockSpec(1, 80, 1.0)
    H = number_operator(spec)
    beta = math.log(2)
    gamma, Z = gibbs_state(H, beta, spec)
    rep = vn_free_energy(gamma, H, beta)
    assert rep.value == pytest.approx(-1.0, abs=1e-12)
    assert rep.extras["energy"] == pytest.approx(1.0, abs=1e-12)
    vac = DensityMatrix.diagonal(spec, np.eye(spec.dim)[0])
    assert vn_free_energy(vac, H, beta).relative_value == pytest.approx(1.0, abs=1e-12)  # log 2 / beta
    renorm = vn_free_energy(gamma, H, beta, renormalize=True)
    assert renorm.value == pytest.approx(-1.0 - renorm_shift(1, 1.0) / beta, abs=1e-12)


def test_wehrl_free_energy_identity_harmonic():
    spec = FockSpec(1, 80, 1.0)
    beta = math.log(2)
    gamma, _ = gibbs_state(number_operator(spec), beta, spec)
    grid = uniform_grid(1, 12.0, 0.1)
    rep = wehrl_free_energy(gamma, HARMONIC, beta, grid=grid)
    assert rep.identity_defect <= 1e-8
    # energy: int (|z|^2 - 1) phi with phi of mean |z|^2 = 1/(1-q) = 2
    assert rep.extras["energy"] == pytest.approx(1.0, abs=1e-9)
    assert rep.extras["S_B_phi"] == pytest.approx(1 + math.log(2) + math.log(math.pi), abs=1e-9)


def test_wehrl_minimizer_is_not_gibbs():
    # in the harmonic model the Wehrl free energy is minimized by the thermal
    # state with q' = 1 - beta eps, whose Husimi density is exactly the upper Gibbs density
    beta, eps = 1.0, 0.25
    spec = FockSpec(1, 160, eps)
    grid = uniform_grid(1, 7.0, 0.1)
    best = wehrl_free_energy(thermal(spec, 1 - beta * eps), HARMONIC, beta, grid=grid)
    assert best.relative_value == pytest.approx(0.0, abs=1e-10)
    gibbs = wehrl_free_energy(thermal(spec, math.exp(-beta * eps)), HARMONIC, beta, grid=grid)
    assert gibbs.relative_value > 1e-4
    assert gibbs.value > best.value


def test_certified_gibbs_grows_cutoff():
    spec, H, rho, Z = certified_gibbs(HARMONIC, 1.0, 0.25, n_max=10)
    assert spec.n_max > 10
    assert rho.meta["top_weight"] <= 1e-10
    assert initial_cutoff(HARMONIC, 1.0, 0.25) >= 8
    with pytest.raises(TruncationError):
        certified_gibbs(HARMONIC, 1.0, 0.25, n_max=2, max_tries=1)


def test_partition_table_squeeze():
    rows = partition_table(ANHARMONIC, 1.0, [0.5, 0.25, 0.125])
    for r in rows:
        assert r["Z_classical"] <= r["Z_scaled"] <= r["Z_upper"]
    assert rows[-1]["err"] < rows[0]["err"]


def test_partition_harmonic_closed_form():
    for r in partition_table(HARMONIC, 1.0, [0.25, 0.0625]):
        assert r["Z_scaled"] == pytest.approx(math.pi * r["eps"] / (1 - math.exp(-r["eps"])), rel=1e-9)


def test_jensen_harmonic_closed_form():
    beta = 1.0
    gaps = []
    for eps in (0.25, 0.0625):
        q = math.exp(-beta * eps)
        res = jensen_lower_bound_check(HARMONIC, beta, eps)
        assert res["lhs"] == pytest.approx(beta * eps * q / (1 - q), abs=1e-8)
        assert res["rhs"] == pytest.approx((1 - beta * eps) * (1 - q) / (beta * eps), abs=1e-8)
        gaps.append(res["gap"])
    assert gaps[0] > gaps[1] > 0


@pytest.mark.parametrize("eps", [0.25, 0.0625])
def test_jensen_anharmonic(eps):
    assert jensen_lower_bound_check(ANHARMONIC, 1.0, eps)["gap"] > 0


def test_monotone_identity_and_log_bound():
    a, b = monotone_limit_identity(ANHARMONIC, 1.0, 0.25)
    assert a == pytest.approx(b, rel=1e-9)
    assert husimi_log_bound(ANHARMONIC, 1.0, 0.25) <= 1e-9


def test_entropy_rows_harmonic():
    rows = entropy_convergence_experiment(HARMONIC, 1.0, [0.25, 0.125], k_list=[2])
    for r in rows:
        cf = harmonic_closed_forms(1.0, r.eps)
        assert r.S_vN_renorm == pytest.approx(cf["S_vN_renorm"], abs=1e-8)
        assert r.S_W_renorm == pytest.approx(cf["S_W_renorm"], abs=1e-8)
        assert r.S_W_renorm > r.S_vN_renorm
        assert "A_norm_2" in r.extras
    assert set(rows[0].as_dict()) == set(rows[0].CSV_FIELDS)


def test_recovery_sequence_trace_and_narrow_limit():
    eps = 0.25
    w = 0.4 + 0.2j
    spec = FockSpec(1, 60, eps)
    s = 1e-3
    grid = uniform_grid(1, 0.3, 0.004, center=w)
    rho = recovery_sequence(gaussian_density(grid, w, s), spec, grid)
    pure = DensityMatrix.pure(spec, coherent_vector(spec, w).entries)
    assert rho.trace_distance(pure) < 1e-2


def test_recovery_sweep_small():
    rows = recovery_sweep(0.3, 0.5, [0.5, 0.25], h=HARMONIC)
    for r in rows:
        assert r["husimi_err"] < 1e-6
        assert r["gap"] == pytest.approx(math.log(1 + r["eps"] / 0.5), abs=1e-6)
        # Tr(H rho) = int (|z|^2 + eps... ) f: for N the exact value is c^2 + s
        assert r["energy"] == pytest.approx(0.3**2 + 0.5, abs=1e-6)
    assert rows[1]["gap"] < rows[0]["gap"]


def test_gamma_lower_report_positive():
    rows = gamma_lower_report(HARMONIC, 1.0, 0.5, [0.25, 0.125])
    for r in rows:
        assert r["F_W_rel"] > 0
    # classical KL(gamma_{1/2} || gamma_1): E[r/2] - log 2 with E r = 2
    assert rows[0]["F_B_rel"] == pytest.approx(1 - math.log(2), abs=1e-8)
    assert abs(rows[1]["F_W_rel"] - rows[1]["F_B_rel"]) < abs(rows[0]["F_W_rel"] - rows[0]["F_B_rel"])


def test_coherent_expectation_sweep():
    rows = coherent_expectation_sweep(HARMONIC, 1.0, [0.25, 0.0625], [[0.5], [1.0j]])
    assert rows[1]["max_err"] < rows[0]["max_err"]


def test_phase_grid_covers_husimi():
    eps = 0.125
    spec, H, rho, Z = certified_gibbs(ANHARMONIC, 1.0, eps)
    assert husimi(rho, phase_grid(ANHARMONIC, 1.0, eps)).normalization_check == pytest.approx(1.0, abs=1e-10)
