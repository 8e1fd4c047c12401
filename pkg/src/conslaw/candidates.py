"""Candidate densities for the scaling method.

A candidate at a given rank and degree is a linear combination, with fresh
unknown coefficients, of products

    x1^p1 x2^p2 ... * M

where the x^p coefficient runs over the independent variables up to the
requested total degree and M is a differential monomial in the dependent
variables, their derivatives transverse to the evolution direction, and the
weighted parameters, chosen so every product has the requested rank.  The
lists are pruned: no constant or parameter-only monomials, and one
representative per class modulo total derivatives (so nothing in the
candidate could simply be moved into the flux).
"""

from fractions import Fraction

from .scalars import RatFunc
from .expr import le_make, atom_key
from . import linsolve


class CandidateError(Exception):
    pass


def hierarchy_vars(system):
    if system.direction is None:
        raise CandidateError("system has no evolution direction; the "
                             "scaling method does not apply")
    out = [v for v in system.ctx.indeps if v != system.direction]
    return out


def _numeric_weights(system, w):
    vals = {}
    for dep in system.ctx.deps:
        vals[('dep', dep)] = w.of_dep(dep)
    for x in system.ctx.indeps:
        vals[('op', x)] = w.of_op(x)
    for key, v in list(w.values.items()):
        vals[key] = v
    for key, v in vals.items():
        if isinstance(v, RatFunc) or v <= 0:
            raise CandidateError("enumeration needs concrete positive "
                                 "weights; bind the exponent first (%s)"
                                 % (key,))
    return vals


def _atom_pool(system, w, cap):
    """(atom, weight) pairs available for differential monomials, heaviest
    jet order bounded by cap."""
    ctx = system.ctx
    pool = []
    for (kind, name), v in w.values.items():
        if kind == 'param':
            pool.append((('s', name), v))
    hvars = hierarchy_vars(system)
    hidx = [ctx.indeps.index(v) for v in hvars]
    for dep in ctx.deps:
        base = w.of_dep(dep)
        frontier = [(0,) * len(ctx.indeps)]
        while frontier:
            nxt = []
            for idx in frontier:
                weight = base
                for i, k in enumerate(idx):
                    weight += k * w.of_op(ctx.indeps[i])
                if weight <= cap:
                    pool.append((('j', dep, idx), weight))
                    for i in hidx:
                        grown = list(idx)
                        grown[i] += 1
                        grown = tuple(grown)
                        if grown not in nxt:
                            nxt.append(grown)
            frontier = nxt
    return pool


def _diff_monomials(pool, target):
    """All exponent assignments over the pool with total weight target."""
    out = []

    def recurse(i, remaining, picked):
        if remaining == 0:
            out.append(tuple(picked))
            return
        if i == len(pool):
            return
        atom, weight = pool[i]
        recurse(i + 1, remaining, picked)
        e = 1
        while e * weight <= remaining:
            recurse(i + 1, remaining - e * weight, picked + [(atom, e)])
            e += 1

    recurse(0, target, [])
    return [m for m in out if any(a[0] == 'j' for a, _e in m)]


def _mono_expr(ctx, mono):
    out = ctx.one
    for atom, e in mono:
        out = out * ctx.make_atom(atom, le_make(e))
    return out


def _tdiff_key(ctx, mono):
    """Sorting data: total derivative order, per-dep degrees with the
    later-declared variables compared first, parameter degrees."""
    order = 0
    degs = {d: 0 for d in ctx.deps}
    params = {}
    for atom, e in mono:
        if atom[0] == 'j':
            order += e * sum(atom[2])
            degs[atom[1]] += e
        else:
            params[atom[1]] = params.get(atom[1], 0) + e
    degtup = tuple(degs[d] for d in reversed(ctx.deps))
    partup = tuple(params.get(p, 0) for p in ctx.params)
    return (order, degtup, partup)


def _keep_preference(ctx, mono):
    """Larger is kept when pruning: derivatives piled on earlier-declared
    variables and concentrated in as few factors as possible."""
    per = {d: 0 for d in ctx.deps}
    top = 0
    for atom, e in mono:
        if atom[0] == 'j':
            per[atom[1]] += e * sum(atom[2])
            top = max(top, sum(atom[2]))
    return (tuple(per[d] for d in ctx.deps), top,
            tuple(sorted(mono, key=str)))


def prune_divergences(system, w, monos, target):
    """One representative per class modulo total derivatives along the
    hierarchy variables; total-derivative classes disappear entirely."""
    if not monos:
        return []
    ctx = system.ctx
    hvars = hierarchy_vars(system)
    vals = _numeric_weights(system, w)
    image = []
    for v in hvars:
        lower = target - vals[('op', v)]
        if lower <= 0:
            continue
        pool = _atom_pool(system, w, lower)
        for m in _diff_monomials(pool, lower):
            d = _mono_expr(ctx, m).diff(v)
            if not d.is_zero():
                image.append(d)
    cols = sorted({mk for e in image for mk in e.terms.keys()} |
                  set(_as_mono(ctx, m) for m in monos),
                  key=lambda mono: _droppability(ctx, mono))
    rows = []
    for e in image:
        rows.append(({m: c for m, c in e.terms.items()}, Fraction(0)))
    pivots, _reduced, _free = linsolve.eliminate(rows, cols)
    kept = [m for m in monos if _as_mono(ctx, m) not in pivots]
    return kept


def _as_mono(ctx, mono):
    return tuple(sorted(((a, le_make(e)) for a, e in mono),
                        key=lambda item: atom_key(item[0])))


def _droppability(ctx, mono):
    pairs = tuple((a, int(le[0])) for a, le in mono)
    pref = _keep_preference(ctx, pairs)
    return (pref[0], pref[1], tuple(str(p) for p in pref[2]))


def enumerate_products(system, w, rank, degree):
    """All candidate products (coefficient powers, differential monomial) at
    the rank, ordered deterministically."""
    ctx = system.ctx
    vals = _numeric_weights(system, w)
    rank = Fraction(rank)
    products = []
    powvecs = []

    def powers(i, left, acc):
        if i == len(ctx.indeps):
            powvecs.append(tuple(acc))
            return
        for p in range(left + 1):
            powers(i + 1, left - p, acc + [p])

    powers(0, int(degree), [])
    by_target = {}
    for p in powvecs:
        target = rank
        for i, e in enumerate(p):
            target += e * vals[('op', ctx.indeps[i])]
        if target <= 0:
            continue
        by_target.setdefault(target, []).append(p)
    pruned_cache = {}
    for target, plist in sorted(by_target.items()):
        pool = _atom_pool(system, w, target)
        monos = _diff_monomials(pool, target)
        monos = prune_divergences(system, w, monos, target)
        pruned_cache[target] = monos
        for p in plist:
            for m in monos:
                products.append((p, m))
    products.sort(key=lambda pm: (sum(pm[0]),) + _tdiff_key(ctx, pm[1]) +
                  (pm[0],))
    return products


def product_expr(ctx, p, mono):
    out = _mono_expr(ctx, mono)
    for i, e in enumerate(p):
        if e:
            out = out * ctx.sym(ctx.indeps[i]).powi(e)
    return out


def build_candidate(system, w, rank, degree, prefix="c"):
    """Candidate density and its fresh unknown coefficient names."""
    ctx = system.ctx
    products = enumerate_products(system, w, rank, degree)
    if not products:
        raise CandidateError("no monomials at rank %s, degree %s"
                             % (rank, degree))
    names = []
    total = ctx.zero
    for i, (p, m) in enumerate(products):
        name = "%s%d" % (prefix, i + 1)
        if ctx.kinds.get(name) != 'unknown':
            ctx.add_unknown(name)
        names.append(name)
        total = total + ctx.sym(name) * product_expr(ctx, p, m)
    return total, names
