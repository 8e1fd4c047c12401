"""Exact linear algebra over the coefficient field (Fractions and RatFunc).

Rows are (coeffs, rhs) pairs where coeffs maps column keys to scalars.
Elimination is deterministic: columns in caller order, pivot = first row with
a nonzero entry.
"""

from fractions import Fraction

from .scalars import RatFunc, nf_add, nf_mul, nf_neg, nf_div, nf_is_zero


class InconsistentError(Exception):
    pass


class NonlinearError(Exception):
    pass


class UnderdeterminedError(Exception):
    def __init__(self, free):
        self.free = list(free)
        super().__init__("free unknowns remain: %s"
                         % ", ".join(str(f) for f in free))


def _scale_row(row, c):
    coeffs, rhs = row
    return ({k: nf_mul(v, c) for k, v in coeffs.items()}, nf_mul(rhs, c))


def _add_row(row, other, c):
    coeffs, rhs = row
    ocoeffs, orhs = other
    out = dict(coeffs)
    for k, v in ocoeffs.items():
        s = nf_add(out.get(k, Fraction(0)), nf_mul(v, c))
        if nf_is_zero(s):
            out.pop(k, None)
        else:
            out[k] = s
    return (out, nf_add(rhs, nf_mul(orhs, c)))


def eliminate(rows, cols):
    """Reduced row echelon form.  Returns (pivots, reduced, free) where
    pivots maps column -> row index into reduced; raises InconsistentError
    on a row 0 = nonzero."""
    work = [({k: v for k, v in coeffs.items() if not nf_is_zero(v)}, rhs)
            for coeffs, rhs in rows]
    pivots = {}
    reduced = []
    for col in cols:
        pivot = None
        for i, row in enumerate(work):
            if col in row[0]:
                pivot = i
                break
        if pivot is None:
            continue
        row = work.pop(pivot)
        row = _scale_row(row, nf_div(Fraction(1), row[0][col]))
        for j, other in enumerate(work):
            if col in other[0]:
                work[j] = _add_row(other, row, nf_neg(other[0][col]))
        for j, other in enumerate(reduced):
            if col in other[0]:
                reduced[j] = _add_row(other, row, nf_neg(other[0][col]))
        pivots[col] = len(reduced)
        reduced.append(row)
    for coeffs, rhs in work:
        if not coeffs and not nf_is_zero(rhs):
            raise InconsistentError("inconsistent linear system")
        assert not coeffs, "column set did not cover %s" % list(coeffs)
    free = [c for c in cols if c not in pivots]
    return pivots, reduced, free


def solve_unique(rows, cols):
    pivots, reduced, free = eliminate(rows, cols)
    if free:
        raise UnderdeterminedError(free)
    return {col: reduced[i][1] for col, i in pivots.items()}


def affine_solution(rows, cols):
    """General solution: (particular, basis) with particular setting the free
    columns to zero and one basis direction per free column (entry 1 there)."""
    pivots, reduced, free = eliminate(rows, cols)
    part = {col: Fraction(0) for col in cols}
    for col, i in pivots.items():
        part[col] = reduced[i][1]
    basis = []
    for fc in free:
        vec = {col: Fraction(0) for col in cols}
        vec[fc] = Fraction(1)
        for col, i in pivots.items():
            c = reduced[i][0].get(fc)
            if c is not None:
                vec[col] = nf_neg(c)
        basis.append((fc, vec))
    return part, basis


def kernel_basis(rows, cols):
    """Basis of the homogeneous kernel, integer-normalized where entries are
    plain Fractions, first nonzero entry positive."""
    hom = [(coeffs, Fraction(0)) for coeffs, _ in rows]
    _part, basis = affine_solution(hom, cols)
    out = []
    for _fc, vec in basis:
        out.append(_normalize_vector(vec, cols))
    return out


def _normalize_vector(vec, cols):
    entries = [vec[c] for c in cols if not nf_is_zero(vec[c])]
    if all(not isinstance(e, RatFunc) for e in entries):
        den = 1
        for e in entries:
            den = den * e.denominator // _gcd(den, e.denominator)
        num = 0
        for e in entries:
            num = _gcd(num, abs(e.numerator * den // e.denominator))
        scale = Fraction(den, num) if num else Fraction(1)
        vec = {k: v * scale for k, v in vec.items()}
        entries = [vec[c] for c in cols if vec[c] != 0]
    first = entries[0]
    if (isinstance(first, RatFunc) and first.num[-1] < 0) or (
            not isinstance(first, RatFunc) and first < 0):
        vec = {k: nf_neg(v) for k, v in vec.items()}
    return vec


def _gcd(a, b):
    while b:
        a, b = b, a % b
    return a


def split_linear(exprs, unknowns):
    """Linear rows over the named unknowns from expressions that must vanish
    identically: one row per distinct unknown-free monomial part.  Raises
    NonlinearError when an unknown occurs squared, multiplied by another,
    inside a composite base or function argument, or in an exponent."""
    names = set(unknowns)
    one = (Fraction(1), ())
    rows = []
    for e in exprs:
        by_rest = {}
        for mono, c in e.terms.items():
            found = None
            rest = []
            for atom, le in mono:
                for sym, _k in le[1]:
                    if sym in names:
                        raise NonlinearError("unknown %r in an exponent" % sym)
                if atom[0] == 's' and atom[1] in names:
                    if found is not None:
                        raise NonlinearError(
                            "unknowns %r and %r multiplied" % (found, atom[1]))
                    if le != one:
                        raise NonlinearError("unknown %r to power %s"
                                             % (atom[1], le[0]))
                    found = atom[1]
                    continue
                if atom[0] == 'b':
                    nested = atom[1].atoms(deep=True)
                elif atom[0] == 'f':
                    nested = set()
                    for arg in atom[2]:
                        nested |= arg.atoms(deep=True)
                else:
                    nested = ()
                for sub in nested:
                    if sub[0] == 's' and sub[1] in names:
                        raise NonlinearError("unknown %r inside %r"
                                             % (sub[1], atom[0]))
                rest.append((atom, le))
            key = tuple(rest)
            coeffs, rhs = by_rest.setdefault(key, ({}, [Fraction(0)]))
            if found is None:
                rhs[0] = nf_add(rhs[0], nf_neg(c))
            else:
                coeffs[found] = nf_add(coeffs.get(found, Fraction(0)), c)
        for coeffs, rhs in by_rest.values():
            rows.append((coeffs, rhs[0]))
    return rows
