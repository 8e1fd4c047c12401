from fractions import Fraction

from conslaw.scalars import (RatFunc, ratfunc, nf_add, nf_mul, nf_div, nf_sub,
                             nf_linear, nf_eval, nf_pow, nf_str, p_divmod,
                             p_gcd, p_mul)

F = Fraction


def test_ratfunc_collapse():
    assert ratfunc((F(3),), (F(2),)) == F(3, 2)
    assert ratfunc((), (F(1),)) == 0
    # (n^2 - 1) / (n - 1) = n + 1
    r = ratfunc((F(-1), F(0), F(1)), (F(-1), F(1)))
    assert isinstance(r, RatFunc)
    assert r.num == (F(1), F(1)) and r.den == (F(1),)


def test_monic_denominator():
    # n / (2n + 2) -> (1/2 n) / (n + 1)
    r = ratfunc((F(0), F(1)), (F(2), F(2)))
    assert r.den == (F(1), F(1))
    assert nf_eval(r, F(1)) == F(1, 4)


def test_linear_and_arithmetic():
    n = nf_linear(1, 0)
    np1 = nf_add(n, F(1))
    assert nf_eval(np1, F(3)) == 4
    inv = nf_div(F(1), np1)
    assert nf_eval(inv, F(1)) == F(1, 2)
    # (n+1) * 1/(n+1) == 1 exactly
    assert nf_mul(np1, inv) == F(1)
    assert nf_sub(n, n) == 0
    assert nf_pow(np1, 2) == nf_mul(np1, np1)


def test_division_exactness():
    a = (F(2), F(3), F(1))       # n^2 + 3n + 2
    b = (F(1), F(1))             # n + 1
    q, r = p_divmod(a, b)
    assert r == ()
    assert q == (F(2), F(1))     # n + 2
    assert p_gcd(a, b) == (F(1), F(1))
    assert p_mul(q, b) == a


def test_str_forms():
    n = nf_linear(1, 0)
    assert nf_str(n, 'n') == 'n'
    assert nf_str(nf_add(n, F(1)), 'n') == '(n + 1)'
    assert nf_str(nf_div(F(1), nf_add(n, F(1))), 'n') == '1/(n + 1)'
    assert nf_str(F(-3, 2), 'n') == '-3/2'
