"""Shared test utilities: random expressions and exact evaluation oracles."""

import random
from fractions import Fraction

from conslaw.expr import Context, le_make


def small_fraction(rng, zero_ok=False):
    while True:
        f = Fraction(rng.randint(-6, 6), rng.randint(1, 4))
        if zero_ok or f != 0:
            return f


def random_jet_poly(ctx, rng, deps=None, max_order=2, n_terms=4, max_deg=3):
    """Random polynomial in jet coordinates with Fraction coefficients."""
    deps = deps or ctx.deps
    nv = len(ctx.indeps)
    e = ctx.zero
    for _ in range(n_terms):
        term = ctx.wrap(small_fraction(rng))
        for _ in range(rng.randint(1, max_deg)):
            dep = rng.choice(deps)
            idx = [0] * nv
            for _ in range(rng.randint(0, max_order)):
                idx[rng.randrange(nv)] += 1
            term = term * ctx.jet(dep, tuple(idx))
        e = e + term
    return e


def random_point(exprs, rng, names=()):
    """Assign random nonzero Fractions to every atom and named symbol."""
    atoms = set()
    for e in exprs:
        atoms |= e.atoms(deep=True)
    pt = {}
    for a in atoms:
        if a[0] == 'b':
            continue
        pt[a] = small_fraction(rng)
    for n in names:
        pt[n] = small_fraction(rng)
    return pt


def eval_agree(e1, e2, rng, names=(), tries=5):
    """Exact evaluation agreement at several random points."""
    for _ in range(tries):
        pt = random_point([e1, e2], rng, names)
        try:
            v1 = e1.eval(pt)
            v2 = e2.eval(pt)
        except ZeroDivisionError:
            continue
        if v1 != v2:
            return False
    return True


def nle(ctx, const=0, **pairs):
    return le_make(const, pairs.items())
