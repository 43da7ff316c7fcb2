"""The oracle functions reproduce their frozen tables."""

from fractions import Fraction

import oracles


def test_legendre_norms_match_closed_form():
    from math import factorial

    computed = oracles.monic_legendre_norms(5)
    closed = [Fraction(2 ** (2 * k + 1) * factorial(k) ** 4, factorial(2 * k) ** 2 * (2 * k + 1)) for k in range(5)]
    assert computed == closed == list(oracles.LEGENDRE_H)


def test_legendre_cubic():
    assert tuple(oracles.monic_legendre_coefficients(3)) == oracles.LEGENDRE_P3


def test_level_sizes():
    assert [oracles.level_size(2, k) for k in range(4)] == [1, 2, 3, 4]
    assert [oracles.level_size(3, k) for k in range(4)] == [1, 3, 6, 10]
