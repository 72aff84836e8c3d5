from fractions import Fraction

import numpy as np
import pytest

from semigibbs.errors import ArgumentError, ClassSViolation
from semigibbs.symbols import PolySymbol, QQi, SymbolClassS, poisson_bracket_power, upper_symbol


def test_exact_coefficients():
    s = PolySymbol.norm_power(1, 2, Fraction(1, 2))
    assert s.is_exact()
    assert s.terms[((2,), (2,))] == QQi(Fraction(1, 2))
    assert PolySymbol.from_literals(1, [{"i": [1], "j": [0], "re": 0.1}]).terms[((1,), (0,))] == QQi(Fraction(1, 10))


def test_norm_power_multinomial():
    s = PolySymbol.norm_power(2, 2)
    assert s.terms[((1, 1), (1, 1))] == QQi(Fraction(2))
    z = np.array([[0.3 + 0.1j, -0.5j]])
    assert s(z)[0].real == pytest.approx(np.sum(np.abs(z) ** 2) ** 2)


def test_algebra_and_predicates():
    x = PolySymbol.real_part(1)
    n = PolySymbol.norm_power(1, 1)
    assert x.is_hermitian() and not x.is_number_conserving()
    assert (x * x - x * x).is_zero()
    assert (n + 1).degree() == 2
    assert (n * n) == PolySymbol.norm_power(1, 2)
    with pytest.raises(ArgumentError):
        n + PolySymbol.norm_power(2, 1)


def test_poisson_bracket_power():
    assert poisson_bracket_power((2,), (3,), (1,)) == (6, (1,), (2,))
    assert poisson_bracket_power((2,), (3,), (2,)) == (6, (0,), (1,))
    assert poisson_bracket_power((1,), (3,), (2,))[0] == 0


def test_upper_number_operator_exact():
    up = upper_symbol(PolySymbol.norm_power(1, 1))
    assert up.base == PolySymbol.norm_power(1, 1)
    assert up.corrections == {1: PolySymbol.constant(1, -1)}


def test_upper_quartic_exact():
    up = upper_symbol(PolySymbol.norm_power(1, 2))
    assert up.corrections[1] == PolySymbol.norm_power(1, 1, -4)
    assert up.corrections[2] == PolySymbol.constant(1, 2)


def test_upper_multimode_number():
    up = upper_symbol(PolySymbol.norm_power(3, 1))
    assert up.corrections == {1: PolySymbol.constant(3, -3)}


def test_upper_odd_symbol():
    x = PolySymbol.real_part(1)
    up = upper_symbol(x * PolySymbol.norm_power(1, 1))
    assert up.corrections[1] == x * -2


def test_expansion_evaluation():
    up = upper_symbol(PolySymbol.norm_power(1, 2))
    z = np.array([[0.7 - 0.2j]])
    r = abs(z[0, 0]) ** 2
    eps = 0.3
    assert up(z, eps)[0].real == pytest.approx(r * r - 4 * eps * r + 2 * eps**2)
    assert up.at(eps)(z)[0].real == pytest.approx(r * r - 4 * eps * r + 2 * eps**2)
    assert up.correction_bound(z)[0] == pytest.approx(4 * r + 2)


def test_class_s_validation():
    with pytest.raises(ClassSViolation):
        SymbolClassS(1, {1: 0})
    with pytest.raises(ClassSViolation):
        SymbolClassS(1, {1: -1, 2: 1})
    with pytest.raises(ClassSViolation):
        SymbolClassS(1, {1: 1}, PolySymbol.norm_power(1, 1))  # deg V = 2p
    with pytest.raises(ClassSViolation):
        SymbolClassS(1, {1: 1}, PolySymbol.monomial((1,), (0,), 1))  # not real
    with pytest.raises(ClassSViolation):
        SymbolClassS(2, {1: np.array([[1, 2], [2, 1]])})  # indefinite matrix block
    h = SymbolClassS(1, {1: 1, 2: Fraction(1, 2)})
    assert h.p_max == 2 and h.is_number_conserving()
    assert h(np.array([[1 + 1j]]))[0] == pytest.approx(2 + 2)


def test_matrix_block():
    A = np.array([[2.0, 0.5j], [-0.5j, 1.0]])
    h = SymbolClassS(2, {1: A})
    z = np.array([[0.4 + 0.1j, -0.3j]])
    expect = np.vdot(z[0], A @ z[0]).real
    assert h(z)[0] == pytest.approx(expect)
    assert h.leading_min() == pytest.approx(np.linalg.eigvalsh(A).min())
