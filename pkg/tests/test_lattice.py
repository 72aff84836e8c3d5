import math
import warnings

import numpy as np
import pytest

from semigibbs.errors import ArgumentError, DegenerateBasisError, ResourceError, TruncationError
from semigibbs.fock import FockSpec, coherent_matrix
from semigibbs.lattice import (
    AdmissibilityWarning,
    admissibility,
    build_lattice,
    divergence_experiment,
    gram_closed_form,
    gram_schmidt_coherent,
    lattice_characteristic,
    lattice_entropy,
    lattice_size,
    lattice_spec,
    lattice_state,
    gram_correction_check,
    minimal_admissible_eps,
    real_line_characteristic,
)

SIGMA = 0.5
S_B_GAUSS = 0.5 * math.log(2 * math.pi * math.e * SIGMA**2)  # 0.725791352644727432 by mpmath


def gauss(x):
    x = np.real(np.asarray(x)).reshape(-1)
    return np.exp(-x**2 / (2 * SIGMA**2)) / math.sqrt(2 * math.pi * SIGMA**2)


def quiet_state(f, M, eps, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdmissibilityWarning)
        return lattice_state(f, M, eps, **kw)


@pytest.mark.parametrize("M,count", [(0, 1), (1, 5), (2, 17), (3, 49)])
def test_lattice_sizes_match_enumeration(M, count):
    lat = build_lattice(M)
    assert lat.size == count == lattice_size(M, 1)
    assert np.all(lat.points.imag == 0)
    assert np.abs(lat.points.real).max(initial=0) <= M
    assert len(set(np.round(lat.points.real[:, 0] * 2**M).astype(int).tolist())) == count


def test_lattice_nesting_and_two_modes():
    lat = build_lattice(3)
    for L in range(3):
        coarse = build_lattice(L).points
        assert np.array_equal(lat.prefix(L), coarse)
    assert build_lattice(1, 2).size == 25
    with pytest.raises(ResourceError):
        build_lattice(5, 2)
    with pytest.raises(ArgumentError):
        build_lattice(-1)


def test_two_point_residual():
    eps, a = 0.3, 0.4
    spec = FockSpec(1, 60, eps)
    ons = gram_schmidt_coherent(np.array([[0.0], [a]]), spec)
    # the second vector keeps the part orthogonal to the first coherent vector
    assert ons.gram_norms[1] == pytest.approx(math.sqrt(1 - math.exp(-a * a / eps)), rel=1e-10)
    assert ons.gram_defect() < 1e-13


def test_gram_closed_form_matches_vectors():
    lat = build_lattice(1)
    spec = lattice_spec(1, 1, 0.2)
    C = coherent_matrix(spec, lat.points)
    assert np.abs(C.conj() @ C.T - gram_closed_form(lat.points, 0.2)).max() < 1e-10


def test_gram_schmidt_guards():
    spec = FockSpec(1, 5, 0.1)
    with pytest.raises(TruncationError):
        gram_schmidt_coherent(build_lattice(2), spec)
    spec = FockSpec(1, 80, 1.0)
    with pytest.raises(DegenerateBasisError):
        gram_schmidt_coherent(np.array([[0.0], [1e-8]]), spec)
    loose = gram_schmidt_coherent(np.array([[0.0], [1e-8]]), spec, strict=False)
    assert loose.flagged == (1,)


@pytest.mark.parametrize("M,eps", [(1, 0.005), (2, 0.001)])
def test_gram_correction_bound_holds(M, eps):
    ons = gram_schmidt_coherent(build_lattice(M), lattice_spec(M, 1, eps))
    for zeta in (0.3 + 0.2j, -1.1j):
        # entries that vanish analytically come out at rounding level
        assert gram_correction_check(ons, zeta).max() <= 1e-12


def test_admissibility_warning_and_strict():
    M = 1
    eps_ok = 0.9 * minimal_admissible_eps(M, 1)
    assert admissibility(M, 1, eps_ok) < 1e-8
    with warnings.catch_warnings():
        warnings.simplefilter("error", AdmissibilityWarning)
        assert lattice_state(gauss, M, eps_ok).admissible
    with pytest.warns(AdmissibilityWarning):
        st = lattice_state(gauss, M, 0.05)
    assert not st.admissible
    with pytest.raises(ArgumentError):
        lattice_state(gauss, M, 0.05, strict=True)


def test_state_is_density_matrix():
    st = quiet_state(gauss, 2, 0.002)
    assert st.rho.eigen[0].sum() == pytest.approx(1.0, abs=1e-12)
    assert st.weights.sum() == pytest.approx(1.0, abs=1e-14)
    # N_M is a Riemann sum of f over [-2, 2]; the Gaussian tail beyond 4 sigma is 6.3e-5
    assert st.N_M == pytest.approx(1.0, abs=1e-4)
    with pytest.raises(ArgumentError):
        quiet_state(lambda x: -np.ones(np.shape(x)[0]), 1, 0.005)


def test_spectral_entropy_matches_formula(rng):
    vals = rng.uniform(0.1, 1.0, size=17)
    lat = build_lattice(2)
    table = dict(zip(np.round(lat.points.real[:, 0] * 4).astype(int), vals))

    def f(x):
        return np.array([table[int(round(v * 4))] for v in np.real(x).reshape(-1)])

    st = quiet_state(f, 2, 0.001)
    s, renorm, info = lattice_entropy(st)
    assert s == pytest.approx(info["formula"], abs=1e-10)
    assert renorm == pytest.approx(s - 2 * math.log(2))


def test_renormalized_entropy_tends_to_boltzmann():
    errs = []
    for M, eps in [(1, 0.005), (2, 0.001), (3, 2.5e-4)]:
        _, renorm, _ = lattice_entropy(quiet_state(gauss, M, eps))
        errs.append(abs(renorm - S_B_GAUSS))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-5


def test_characteristic_converges_to_line_transform():
    zeta = 0.7 + 0.1j
    target = real_line_characteristic(gauss, zeta)
    # Gaussian f: exp(i kappa Re(conj(zeta) x)) averages to exp(-kappa^2 (Re zeta)^2 sigma^2 / 2)
    assert target.real == pytest.approx(math.exp(-2 * 0.49 * SIGMA**2 / 2), abs=1e-12)
    errs = [abs(lattice_characteristic(quiet_state(gauss, M, eps), zeta) - target)
            for M, eps in [(1, 0.005), (2, 0.001), (3, 2.5e-4)]]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_divergence_slopes_and_energy():
    res = divergence_experiment(gauss, 0.0, [1, 2, 3], S_B=S_B_GAUSS)
    assert res["expected_slope"] == pytest.approx(math.log(2))
    assert res["slope"] == pytest.approx(math.log(2), rel=0.1)
    energies = [r["energy"] for r in res["rows"]]
    assert max(energies) < 0.3  # Tr(rho N) stays bounded while S_rel diverges
    S = [r["S_rel"] for r in res["rows"]]
    assert S[0] < S[1] < S[2]


def test_divergence_intercept_stabilizes():
    res = divergence_experiment(gauss, 1.0, [1, 2, 3])
    rate = res["expected_slope"]
    shifted = [r["S_rel"] - rate * r["M"] for r in res["rows"]]
    assert abs(shifted[2] - shifted[1]) < 1e-2
    assert res["slope"] == pytest.approx(rate, rel=0.15)


def test_divergence_drops_infeasible_levels():
    with pytest.warns(RuntimeWarning):
        res = divergence_experiment(gauss, 1.0, [1, 2, 4], max_dim=5000)
    assert res["dropped"] == [4]
    assert len(res["rows"]) == 2
