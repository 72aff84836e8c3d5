"""Acceptance suite: one PASS/FAIL line per criterion, printed and summarized.

Each test records its outcome before asserting, so the summary shows every
criterion even when one fails.
"""
import math
import time

import numpy as np

from conftest import record
from semigibbs.fock import FockSpec, ccr_defect
from semigibbs.free_energy import (
    certified_gibbs,
    classical_free_energy,
    entropy_convergence_experiment,
    partition_table,
    phase_grid,
    recovery_sweep,
    vn_free_energy,
    wehrl_free_energy,
)
from semigibbs.invariants import resolution_of_identity_error, run_suite, sample_symbols, upper_roundtrip_error
from semigibbs.lattice import divergence_experiment
from semigibbs.quadrature import classical_gibbs, uniform_grid
from semigibbs.states import (
    harmonic_closed_forms,
    husimi,
    random_density_matrix,
    relative_entropy_vn,
    von_neumann_entropy,
    wehrl_entropy,
    wehrl_relative_entropy,
)
from semigibbs.symbols import PolySymbol, SymbolClassS, upper_symbol

HARMONIC = SymbolClassS(1, {1: 1})
ANHARMONIC = SymbolClassS(1, {1: 1, 2: 0.5})
SWEEP = [2.0**-k for k in range(2, 9)]
BETA = 1.0


def test_criterion_1_partition():
    t0 = time.perf_counter()
    rows = partition_table(HARMONIC, BETA, SWEEP)
    elapsed = time.perf_counter() - t0
    closed = max(abs(r["Z_scaled"] - math.pi * r["eps"] / (1 - math.exp(-r["eps"]))) for r in rows)
    limit_ok = all(abs(r["Z_scaled"] - math.pi) < r["eps"] for r in rows)
    # the closed form itself exceeds pi by pi eps/2 + O(eps^2), so this ratio tends to pi/2
    ratio = max(abs(r["Z_scaled"] - math.pi) / r["eps"] for r in rows)
    ok = closed <= 1e-8 and limit_ok and elapsed < 5
    record(1, "partition convergence", ok,
           f"closed-form dev {closed:.2e}, |Z-pi| < eps: {limit_ok} (max |Z-pi|/eps {ratio:.4f}), "
           f"final err {rows[-1]['err']:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_entropies():
    t0 = time.perf_counter()
    rows = entropy_convergence_experiment(HARMONIC, BETA, SWEEP)
    elapsed = time.perf_counter() - t0
    target = 1 + math.log(math.pi)
    dev = 0.0
    limit_ok = True
    for r in rows:
        cf = harmonic_closed_forms(BETA, r.eps)
        dev = max(dev, abs(r.S_vN_renorm - cf["S_vN_renorm"]), abs(r.S_W_renorm - cf["S_W_renorm"]))
        limit_ok &= abs(r.S_vN_renorm - target) < 3 * r.eps and abs(r.S_W_renorm - target) < 3 * r.eps
    ok = dev <= 1e-8 and limit_ok and elapsed < 30
    record(2, "entropy convergence", ok,
           f"closed-form dev {dev:.2e}, within 3 eps of 1+log pi: {limit_ok}, {elapsed:.2f}s")
    assert ok


def test_criterion_3_anharmonic():
    ks = (0, 2, 4, 6)
    t0 = time.perf_counter()
    rows = entropy_convergence_experiment(ANHARMONIC, BETA, SWEEP, k_list=ks)
    elapsed = time.perf_counter() - t0
    last = rows[-4:]
    mono = all(b.err_vN < a.err_vN and b.err_W < a.err_W for a, b in zip(last, last[1:]))
    final = max(rows[-1].err_vN, rows[-1].err_W)
    # H >= N and both are diagonal, so the moment norms sit below e^{beta eps} (k/beta)^k e^{-k}
    a_ok = all(
        r.extras[f"A_norm_{k}"] <= math.exp(BETA * r.eps) * max(1.0, (k / BETA) ** k * math.exp(-k))
        for r in rows for k in ks
    )
    ok = mono and final < 5e-2 and a_ok and elapsed < 120
    record(3, "anharmonic cross-check", ok,
           f"monotone last 4: {mono}, final err vN {rows[-1].err_vN:.3e} W {rows[-1].err_W:.3e}, "
           f"moment norms bounded (k<=6): {a_ok}, {elapsed:.2f}s")
    assert ok


def test_criterion_4_random_states():
    rng = np.random.default_rng(2024)
    spec = FockSpec(1, 8, 0.5)
    grid = uniform_grid(1, 7.0, 0.08)
    dom, order, rel_min = math.inf, math.inf, math.inf
    for _ in range(50):
        rho = random_density_matrix(spec, rng, rank=int(rng.integers(1, spec.dim + 1)))
        sigma = random_density_matrix(spec, rng)
        dom = min(dom, wehrl_entropy(husimi(rho, grid)) - von_neumann_entropy(rho))
        rv = relative_entropy_vn(rho, sigma)
        rw = wehrl_relative_entropy(rho, sigma, grid)
        order = min(order, rv - rw)
        rel_min = min(rel_min, rw)
    ok = dom > 1e-10 and order > 1e-10 and rel_min >= -1e-10
    record(4, "Wehrl dominance and relative ordering", ok,
           f"min S_W-S_vN {dom:.3e}, min S_vN(.||.)-S_W(.||.) {order:.3e} over 50 states/pairs")
    assert ok


def test_criterion_5_upper_symbols():
    worst = 0.0
    for eps in (1.0, 0.25, 0.0625):
        spec = FockSpec(1, 12, eps)
        for sym in sample_symbols(1):
            worst = max(worst, upper_roundtrip_error(sym, spec))
    up = upper_symbol(PolySymbol.norm_power(1, 1))
    exact = up.base == PolySymbol.norm_power(1, 1) and up.corrections == {1: PolySymbol.constant(1, -1)}
    ok = worst <= 1e-6 and exact
    record(5, "upper-symbol engine", ok, f"max |AntiWick(upper) - Wick| {worst:.2e}, N -> |z|^2 - eps exact: {exact}")
    assert ok


def test_criterion_6_recovery():
    rows = recovery_sweep(0.3, 0.5, [2.0**-k for k in range(1, 6)], h=HARMONIC)
    husimi_err = max(r["husimi_err"] for r in rows)
    bound = all(r["S_W_renorm"] >= r["S_B"] - 1e-6 for r in rows)
    gaps = [r["gap"] for r in rows]
    shrinking = all(b < a for a, b in zip(gaps, gaps[1:]))
    ok = husimi_err <= 1e-6 and bound and shrinking
    record(6, "recovery sequence", ok,
           f"Husimi vs convolution {husimi_err:.2e}, S_W >= S_B - 1e-6: {bound}, gaps {gaps[0]:.3e} -> {gaps[-1]:.3e}")
    assert ok


def test_criterion_7_lattice_divergence():
    sigma = 0.5
    s_b = 0.5 * math.log(2 * math.pi * math.e * sigma**2)

    def f(x):
        x = np.real(np.asarray(x)).reshape(-1)
        return np.exp(-x**2 / (2 * sigma**2)) / math.sqrt(2 * math.pi * sigma**2)

    t0 = time.perf_counter()
    res = divergence_experiment(f, 1.0, [1, 2, 3], S_B=s_b)
    elapsed = time.perf_counter() - t0
    expected = 2 * math.log(2)
    slope_ok = abs(res["slope"] - expected) <= 0.15 * expected
    renorm = [r["renormalized"] for r in res["rows"]]
    renorm_ok = all(abs(v - s_b) <= 0.1 * s_b for v in renorm)
    ok = slope_ok and renorm_ok and len(renorm) == 3 and elapsed < 300
    record(7, "lattice divergence", ok,
           f"slope {res['slope']:.4f} vs {expected:.4f}, renormalized {renorm[-1]:.4f} vs S_B {s_b:.4f}, {elapsed:.2f}s")
    assert ok


def test_criterion_8_invariants():
    notes = []
    ccr = max(ccr_defect(FockSpec(d, n, e)) for d in (1, 2) for n in (4, 10) for e in (1.0, 0.25, 2.0**-8))
    roi = max(resolution_of_identity_error(FockSpec(d, 12, e)) for d in (1, 2) for e in (1.0, 0.3))
    notes.append(f"CCR {ccr:.1e}, identity {roi:.1e}")

    # free-energy identity ledgers: every evaluation raises above 1e-8, so reaching the end means they held
    ledger = 0.0
    for h in (HARMONIC, ANHARMONIC):
        for r in entropy_convergence_experiment(h, BETA, SWEEP[:4]):
            ledger = max(ledger, r.extras["identity_defect"])
        gam = classical_gibbs(h, BETA)
        ledger = max(ledger, classical_free_energy(gam, h, BETA).identity_defect)
        spec, H, gamma, Z = certified_gibbs(h, BETA, 0.125)
        ledger = max(ledger, vn_free_energy(gamma, H, BETA, gibbs=(gamma, Z)).identity_defect,
                     wehrl_free_energy(gamma, h, BETA, grid=phase_grid(h, BETA, 0.125)).identity_defect)
    notes.append(f"ledgers {ledger:.1e}")

    failed = []
    for h in (HARMONIC, ANHARMONIC):
        for c in run_suite(h, BETA, SWEEP, seed=0, n_random=50):
            if not c.passed:
                failed.append(f"{c.name} ({c.detail or c.value})")
    notes.append("suite " + ("all pass" if not failed else "failed: " + "; ".join(failed)))
    ok = ccr <= 1e-12 and roi <= 1e-10 and ledger <= 1e-8 and not failed
    record(8, "structural invariants", ok, ", ".join(notes))
    assert ok
