"""Exact scalar coefficients: rationals and rational functions of one symbol.

Expression coefficients are either plain Fraction (the common case) or RatFunc,
a reduced rational function of the context's single exponent symbol.  The nf_*
helpers operate on the union and collapse RatFunc back to Fraction whenever the
result is constant, so the fast Fraction path is preserved.
"""

from fractions import Fraction

ZERO = Fraction(0)
ONE = Fraction(1)


# -- polynomial helpers; a polynomial is a tuple of Fractions, low degree first

def p_trim(coeffs):
    """Strip trailing zero coefficients."""
    n = len(coeffs)
    while n and coeffs[n - 1] == 0:
        n -= 1
    return tuple(coeffs[:n])


def p_add(a, b):
    if len(a) < len(b):
        a, b = b, a
    out = list(a)
    for i, c in enumerate(b):
        out[i] += c
    return p_trim(out)


def p_neg(a):
    return tuple(-c for c in a)


def p_mul(a, b):
    if not a or not b:
        return ()
    out = [ZERO] * (len(a) + len(b) - 1)
    for i, ca in enumerate(a):
        if ca:
            for j, cb in enumerate(b):
                if cb:
                    out[i + j] += ca * cb
    return p_trim(out)


def p_scale(a, c):
    if c == 0:
        return ()
    return tuple(x * c for x in a)


def p_divmod(a, b):
    """Quotient and remainder of polynomial division."""
    assert b, "division by zero polynomial"
    q = [ZERO] * max(len(a) - len(b) + 1, 0)
    r = list(a)
    db = len(b) - 1
    lb = b[-1]
    while len(p_trim(r)) - 1 >= db and p_trim(r):
        r = list(p_trim(r))
        d = len(r) - 1 - db
        c = r[-1] / lb
        q[d] = c
        for i in range(len(b)):
            r[d + i] -= c * b[i]
        r = list(p_trim(r))
    return p_trim(q), p_trim(r)


def p_gcd(a, b):
    a, b = p_trim(a), p_trim(b)
    while b:
        a, b = b, p_divmod(a, b)[1]
    if a:
        a = p_scale(a, 1 / a[-1])
    return a


def p_eval(a, x):
    acc = ZERO
    for c in reversed(a):
        acc = acc * x + c
    return acc


def p_str(a, sym):
    """Human form, high degree first, e.g. '2*n^2 - n + 1/2'."""
    if not a:
        return "0"
    parts = []
    for d in range(len(a) - 1, -1, -1):
        c = a[d]
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        if d == 0:
            body = str(mag)
        else:
            var = sym if d == 1 else "%s^%d" % (sym, d)
            body = var if mag == 1 else "%s*%s" % (mag, var)
        parts.append((sign, body))
    first_sign, first_body = parts[0]
    out = ("-" if first_sign == "-" else "") + first_body
    for sign, body in parts[1:]:
        out += " %s %s" % (sign, body)
    return out


class RatFunc:
    """Reduced rational function of the exponent symbol.

    Canonical: numerator and denominator coprime, denominator monic and
    nonconstant-or-num-nonconstant (a constant value is represented by a plain
    Fraction, never by RatFunc; use ratfunc() which enforces the collapse).
    """

    __slots__ = ("num", "den", "_hash")

    def __init__(self, num, den):
        self.num = num
        self.den = den
        self._hash = hash((num, den))

    def __eq__(self, other):
        return (isinstance(other, RatFunc) and self.num == other.num
                and self.den == other.den)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return "RatFunc(%r, %r)" % (self.num, self.den)

    def str(self, sym):
        ns = p_str(self.num, sym)
        nterms = sum(1 for c in self.num if c)
        dterms = sum(1 for c in self.den if c)
        if self.den == (ONE,):
            return ns if nterms <= 1 else "(%s)" % ns
        ds = p_str(self.den, sym)
        if nterms > 1 or ns.startswith("-"):
            ns = "(%s)" % ns
        if dterms > 1:
            ds = "(%s)" % ds
        return "%s/%s" % (ns, ds)

    def latex(self, sym):
        if self.den == (ONE,):
            return p_str(self.num, sym)
        return "\\frac{%s}{%s}" % (p_str(self.num, sym), p_str(self.den, sym))


def ratfunc(num, den):
    """Build a canonical RatFunc or collapse to Fraction."""
    num, den = p_trim(num), p_trim(den)
    if not den:
        raise ZeroDivisionError("zero denominator in rational function")
    if not num:
        return ZERO
    g = p_gcd(num, den)
    if len(g) > 1:
        num = p_divmod(num, g)[0]
        den = p_divmod(den, g)[0]
    lead = den[-1]
    if lead != 1:
        num = p_scale(num, 1 / lead)
        den = p_scale(den, 1 / lead)
    if len(den) == 1 and len(num) == 1:
        return num[0]
    return RatFunc(num, den)


def nf_linear(a, b):
    """The scalar a*s + b (collapses to Fraction when a == 0)."""
    a, b = Fraction(a), Fraction(b)
    if a == 0:
        return b
    return ratfunc((b, a), (ONE,))


def _parts(x):
    if isinstance(x, RatFunc):
        return x.num, x.den
    return ((x,) if x else ()), (ONE,)


def nf_add(x, y):
    if not isinstance(x, RatFunc) and not isinstance(y, RatFunc):
        return x + y
    nx, dx = _parts(x)
    ny, dy = _parts(y)
    return ratfunc(p_add(p_mul(nx, dy), p_mul(ny, dx)), p_mul(dx, dy))


def nf_neg(x):
    if not isinstance(x, RatFunc):
        return -x
    return RatFunc(p_neg(x.num), x.den)


def nf_sub(x, y):
    return nf_add(x, nf_neg(y))


def nf_mul(x, y):
    if not isinstance(x, RatFunc) and not isinstance(y, RatFunc):
        return x * y
    nx, dx = _parts(x)
    ny, dy = _parts(y)
    return ratfunc(p_mul(nx, ny), p_mul(dx, dy))


def nf_div(x, y):
    if nf_is_zero(y):
        raise ZeroDivisionError("scalar division by zero")
    if not isinstance(x, RatFunc) and not isinstance(y, RatFunc):
        return x / y
    nx, dx = _parts(x)
    ny, dy = _parts(y)
    return ratfunc(p_mul(nx, dy), p_mul(dx, ny))


def nf_pow(x, k):
    assert isinstance(k, int)
    if k < 0:
        return nf_div(ONE, nf_pow(x, -k))
    out = ONE
    for _ in range(k):
        out = nf_mul(out, x)
    return out


def nf_is_zero(x):
    if isinstance(x, RatFunc):
        return False
    return x == 0


def nf_eval(x, v):
    """Evaluate at a Fraction value of the symbol."""
    if not isinstance(x, RatFunc):
        return x
    d = p_eval(x.den, v)
    if d == 0:
        raise ZeroDivisionError("coefficient denominator vanishes at value %s" % v)
    return p_eval(x.num, v) / d


def nf_str(x, sym):
    if isinstance(x, RatFunc):
        return x.str(sym)
    return str(x)
