"""Conservation laws and multiplier machinery.

A conservation law is one component per independent variable whose total
divergence vanishes on solutions.  The component along the distinguished
direction is the conserved density; the remaining components are fluxes.
Multipliers are the characteristic functions pairing with the equation
residuals: the law's divergence equals the multiplied residuals identically,
so checking a multiplier set reduces to Euler operators, and building the law
from a checked set is integration.
"""

from fractions import Fraction

from .scalars import nf_is_zero, nf_neg, RatFunc
from .expr import LE_ONE, le_is_const, mono_key, _assemble
from .varcalc import (euler, lambda_scale, integrate_lambda_01,
                      integrate_by_parts, drop_static, HomotopyError)
from .system import ConstraintRule, ConstraintSet
from . import linsolve


class LawError(Exception):
    pass


class ConservationLaw:
    """Density plus fluxes for a system; divergence() is the combination
    whose vanishing is the content of the law."""

    def __init__(self, system, density, fluxes, density_var,
                 multipliers=None, name=None):
        self.system = system
        self.density = density
        self.fluxes = dict(fluxes)
        self.density_var = density_var
        self.multipliers = multipliers
        self.name = name

    def components(self):
        out = {self.density_var: self.density}
        out.update(self.fluxes)
        return out

    def divergence(self):
        d = self.density.diff(self.density_var)
        for var, f in self.fluxes.items():
            d = d + f.diff(var)
        return d

    def bind(self, env, system=None):
        if system is None:
            system = self.system.bind(env)
        lams = self.multipliers
        if lams is not None:
            lams = tuple(l.bind(env) for l in lams)
        return ConservationLaw(
            system, self.density.bind(env),
            {v: f.bind(env) for v, f in self.fluxes.items()},
            self.density_var, lams, self.name)

    def __repr__(self):
        return "<ConservationLaw %s>" % (self.name or str(self.density))


def verify_law(system, law):
    """(ok, residual): reduce the divergence on solutions and modulo the
    function-space constraints; ok means it vanished identically."""
    residual = system.reduce_all(law.divergence())
    return residual.is_zero(), residual


def laws_equivalent(system, a, b):
    """True when two laws differ by a curl: the divergence of the
    componentwise difference vanishes identically modulo the function-space
    constraints, without using the equations."""
    if a.density_var != b.density_var:
        return False
    zero = system.ctx.zero
    d = (a.density - b.density).diff(a.density_var)
    for v in sorted(set(a.fluxes) | set(b.fluxes)):
        d = d + (a.fluxes.get(v, zero) - b.fluxes.get(v, zero)).diff(v)
    return system.constraints.reduce(d).is_zero()


def characteristic(system, lams):
    """Sum of multiplier times equation residual."""
    res = system.residuals()
    if len(lams) != len(res):
        raise LawError("need %d multipliers, got %d" % (len(res), len(lams)))
    tot = system.ctx.zero
    for lam, r in zip(lams, res):
        tot = tot + system.ctx.wrap(lam) * r
    return tot


def check_multipliers(system, lams):
    """(ok, witness): every Euler operator must annihilate the multiplied
    residuals modulo the function-space constraints.  witness is the first
    failing (dep, component)."""
    tot = characteristic(system, lams)
    for dep in system.ctx.deps:
        comp = system.constraints.reduce(euler(tot, dep))
        if not comp.is_zero():
            return False, (dep, comp)
    return True, None


# -- determining equations over a multiplier ansatz

class DeterminingSystem:
    """Equations a multiplier ansatz must satisfy identically.  rules lists
    the derivatives found to vanish outright; equations lists everything
    left after substituting those in, the vanished derivatives included as
    bare symbols."""

    def __init__(self, system, multipliers, equations, rules):
        self.system = system
        self.multipliers = list(multipliers)
        self.equations = list(equations)
        self.rules = list(rules)

    def __iter__(self):
        return iter(self.equations)

    def __len__(self):
        return len(self.equations)


def _ansatz_atom(ctx, tok):
    kind = ctx.kinds.get(tok)
    if kind in ('indep', 'param', 'unknown', 'dep'):
        return ctx.name_atom(tok)
    if '_' in tok:
        head, _, sub = tok.partition('_')
        if ctx.kinds.get(head) == 'dep':
            ((mono, _c),) = ctx.jet(head, sub).terms.items()
            return mono[0][0]
    raise LawError("unknown ansatz argument %r" % tok)


def derive_determining(system, ansatz):
    """Determining equations for multipliers Lambda^a(args): declare one
    function symbol per equation over the ansatz arguments, apply every
    Euler operator to the multiplied residuals, and split the results by
    their monomials in jets outside the ansatz.  ansatz is a list of
    (name, argument-token) pairs, one per equation."""
    ctx = system.ctx
    res = system.residuals()
    if len(ansatz) != len(res):
        raise LawError("need %d multiplier symbols, got %d"
                       % (len(res), len(ansatz)))
    closure = set()
    argatoms = []
    for name, toks in ansatz:
        atoms = tuple(_ansatz_atom(ctx, t) for t in toks)
        argatoms.append(atoms)
        closure.update(atoms)
    _check_ansatz_orders(system, closure)

    names = []
    tot = ctx.zero
    for (name, toks), atoms, r in zip(ansatz, argatoms, res):
        if ctx.kinds.get(name) != 'func':
            ctx.declare_func(name, list(toks))
        names.append(name)
        lam = ctx.func_expr(name, tuple(ctx.make_atom(a) for a in atoms),
                            (0,) * len(atoms))
        tot = tot + lam * r

    eqs = []
    for dep in ctx.deps:
        comp = system.constraints.reduce(euler(tot, dep))
        eqs.extend(_split_by_outside_jets(ctx, comp, closure))
    eqs, rules = _interreduce(ctx, eqs, set(names), closure)
    mults = [(name, tuple(toks)) for name, toks in ansatz]
    return DeterminingSystem(system, mults, eqs, rules)


def _check_ansatz_orders(system, closure):
    for atom in closure:
        if atom[0] != 'j':
            continue
        for eq in system.equations:
            lead = eq.lead
            if atom[1] != lead[1]:
                continue
            if all(i >= j for i, j in zip(atom[2], lead[2])):
                raise LawError(
                    "ansatz argument %s_%s reaches the leading derivative; "
                    "the determining system would not close"
                    % (atom[1], atom[2]))


def _split_by_outside_jets(ctx, comp, closure):
    """Group the monomials of comp by their factors in jets outside the
    ansatz closure; each group's coefficient must vanish separately."""
    groups = {}
    for mono, c in comp.terms.items():
        key = []
        keep = []
        for atom, le in mono:
            outside = False
            if atom[0] == 'j' and atom not in closure:
                outside = True
            elif atom[0] == 'b':
                outside = any(a[0] == 'j' and a not in closure
                              for a in atom[1].atoms(deep=True))
            elif atom[0] == 'f':
                for arg in atom[2]:
                    if any(a[0] == 'j' and a not in closure
                           for a in arg.atoms(deep=True)):
                        outside = True
            (key if outside else keep).append((atom, le))
        groups.setdefault(tuple(key), []).append((tuple(keep), c))
    out = []
    for key in sorted(groups, key=_mono_sort_key):
        out.append(_assemble(ctx, groups[key]))
    return out


def _mono_sort_key(mono):
    return tuple((str(atom), str(le)) for atom, le in mono)


def _interreduce(ctx, eqs, names, closure):
    """Substitute derivatives that vanish outright (single-term equations
    linear in one multiplier derivative) into the rest, splitting by powers
    of ansatz atoms the surviving symbols no longer depend on, to a fixed
    point.  Returns (equations, rules); the vanishing rules reappear in the
    equation list as bare derivative symbols."""
    rules = set()
    work = [e for e in eqs if not e.is_zero()]
    for _ in range(60):
        cset = ConstraintSet(ctx, [ConstraintRule(f, d, ctx.zero)
                                   for f, d in sorted(rules)])
        nxt = []
        new = False
        for e in work:
            r = cset.reduce(e)
            if r.is_zero():
                continue
            subs = _ansatz_split(ctx, r, names, rules, closure)
            if len(subs) > 1:
                new = True
            for s in subs:
                z = _zero_rule(s, names)
                if z is not None and z not in rules:
                    rules.add(z)
                    new = True
                nxt.append(s)
        work = nxt
        if not new:
            break
    else:
        raise LawError("determining interreduction did not stabilize")

    rules = _minimal_rules(rules)
    final = {}
    for fname, didx in sorted(rules):
        decl = ctx.funcs[fname]
        args = tuple(ctx.sym(a) if ctx.kinds.get(a) in
                     ('indep', 'param', 'unknown', 'dep')
                     else ctx.make_atom(_ansatz_atom(ctx, a))
                     for a in decl.argnames)
        e = ctx.make_atom(('f', fname, args, didx))
        final.setdefault(str(e), e)
    for e in work:
        e = _normalize_eq(e)
        if not e.is_zero():
            final.setdefault(str(e), e)
    return list(final.values()), sorted(rules)


def _ansatz_split(ctx, e, names, rules, closure):
    """Split an equation by powers of ansatz atoms once the rules imply no
    symbol in it depends on them, making the equation polynomial in inert
    quantities whose coefficients must vanish separately."""
    out = [e]
    for a in sorted(closure, key=str):
        nxt = []
        for part in out:
            nxt.extend(_split_one(ctx, part, names, rules, a))
        out = nxt
    return out


def _split_one(ctx, e, names, rules, a):
    occurred = False
    for mono, _c in e.terms.items():
        for atom, le in mono:
            if atom == a:
                occurred = True
                if not le_is_const(le):
                    return [e]
            elif atom[0] == 'f' and atom[1] in names:
                for i, arg in enumerate(atom[2]):
                    if _is_atom_expr(arg, a):
                        bump = list(atom[3])
                        bump[i] += 1
                        if not _ruled_out(rules, atom[1], bump):
                            return [e]
            elif atom[0] == 'b':
                if a in atom[1].atoms(deep=True):
                    return [e]
            elif atom[0] == 'f':
                if any(a in arg.atoms(deep=True) for arg in atom[2]):
                    return [e]
    if not occurred:
        return [e]
    groups = {}
    for mono, c in e.terms.items():
        k = sum((le[0] for atom, le in mono if atom == a), Fraction(0))
        rest = tuple((atom, le) for atom, le in mono if atom != a)
        groups.setdefault(k, []).append((rest, c))
    if len(groups) == 1:
        return [e]
    return [_assemble(ctx, items) for _k, items in sorted(groups.items())]


def _is_atom_expr(arg, a):
    if len(arg.terms) != 1:
        return False
    ((mono, c),) = arg.terms.items()
    return c == 1 and mono == ((a, LE_ONE),)


def _ruled_out(rules, fname, didx):
    return any(f == fname and all(i >= j for i, j in zip(didx, d))
               for f, d in rules)


def _minimal_rules(rules):
    """Drop rules subsumed by a lower derivative of the same symbol."""
    out = []
    for f, d in sorted(rules):
        if any(f == g and all(i >= j for i, j in zip(d, e)) and d != e
               for g, e in rules):
            continue
        out.append((f, d))
    return out


def _zero_rule(e, names):
    if len(e.terms) != 1:
        return None
    ((mono, _c),) = e.terms.items()
    hits = [(atom, le) for atom, le in mono
            if atom[0] == 'f' and atom[1] in names]
    if len(hits) == 1 and hits[0][1] == LE_ONE:
        atom = hits[0][0]
        return (atom[1], atom[3])
    return None


def _normalize_eq(e):
    """Strip nonvanishing common factors, scale to integer content one,
    first coefficient positive."""
    e = _strip_common(e)
    coeffs = list(e.terms.values())
    if not coeffs:
        return e
    if all(isinstance(c, Fraction) for c in coeffs):
        den = 1
        for c in coeffs:
            den = den * c.denominator // _gcd(den, c.denominator)
        num = 0
        for c in coeffs:
            num = _gcd(num, abs(c.numerator * den // c.denominator))
        if num:
            e = e.scale(Fraction(den, num))
    first = e.terms[max(e.terms, key=mono_key)]
    neg = (first.num[-1] < 0) if isinstance(first, RatFunc) else (first < 0)
    if neg:
        e = e.scale(Fraction(-1))
    return e


def _gcd(a, b):
    while b:
        a, b = b, a % b
    return a


def _strip_common(e):
    """Divide out coordinate and parameter powers present in every
    monomial (those never vanish identically)."""
    monos = list(e.terms)
    if not monos or any(not m for m in monos):
        return e
    common = {}
    for atom, le in monos[0]:
        if atom[0] == 's' and e.ctx.kinds.get(atom[1]) in ('indep', 'param') \
                and le_is_const(le):
            common[atom] = le[0]
    for m in monos[1:]:
        if not common:
            return e
        here = {}
        for atom, le in m:
            if atom in common and le_is_const(le):
                here[atom] = le[0]
        common = {a: min(k, here[a]) for a, k in common.items() if a in here}
    common = {a: k for a, k in common.items() if k}
    if not common:
        return e
    items = []
    for m, c in e.terms.items():
        entries = []
        for atom, le in m:
            k = common.get(atom)
            if k is not None:
                le = (le[0] - k, le[1])
                if le == (0, ()):
                    continue
            entries.append((atom, le))
        items.append((tuple(entries), c))
    return _assemble(e.ctx, items)


# -- restricted multiplier solving over a finite basis

def solve_multipliers(system, basis, prefix="c"):
    """Multiplier combinations of the given basis that pass the determining
    equations.  basis is a list of tuples, one expression per equation;
    returns a list of such tuples spanning the admissible combinations."""
    ctx = system.ctx
    res = system.residuals()
    names = []
    tot = ctx.zero
    for i, tup in enumerate(basis):
        if len(tup) != len(res):
            raise LawError("basis entry %d: need %d expressions"
                           % (i, len(res)))
        name = "%s%d" % (prefix, i + 1)
        if ctx.kinds.get(name) != 'unknown':
            ctx.add_unknown(name)
        names.append(name)
        c = ctx.sym(name)
        for lam, r in zip(tup, res):
            tot = tot + c * ctx.wrap(lam) * r
    rows = []
    for dep in ctx.deps:
        comp = system.constraints.reduce(euler(tot, dep))
        rows.extend(linsolve.split_linear([comp], names))
    out = []
    for vec in linsolve.kernel_basis(rows, names):
        tup = [ctx.zero] * len(res)
        for name, b in zip(names, basis):
            if nf_is_zero(vec[name]):
                continue
            coef = ctx.wrap(vec[name])
            for a in range(len(res)):
                tup[a] = tup[a] + coef * ctx.wrap(b[a])
        out.append(tuple(tup))
    return out


# -- law construction from checked multipliers

def law_from_multipliers(system, lams, name=None):
    """Build and verify the conservation law for a multiplier set.  The
    multipliers are checked first; construction then integrates the
    multiplied residuals, one way for evolution systems and another for
    single-direction-free systems."""
    ctx = system.ctx
    lams = [ctx.wrap(l) for l in lams]
    ok, witness = check_multipliers(system, lams)
    if not ok:
        raise LawError("multipliers fail the determining equations; "
                       "Euler component for %s: %s" % witness)
    if system.direction is not None:
        law = _law_evolution(system, lams)
    else:
        law = _law_direct(system, lams)
    law.multipliers = tuple(lams)
    law.name = name
    okv, residual = verify_law(system, law)
    if not okv:
        raise LawError("constructed law failed verification: %s" % residual)
    return law


def _law_evolution(system, lams):
    """Evolution systems: the density inverts the Euler operators on the
    multipliers, then the flux integrates what is left of the multiplied
    residuals."""
    ctx = system.ctx
    d = system.direction
    others = [v for v in ctx.indeps if v != d]
    if len(others) != 1:
        raise LawError("evolution construction needs exactly one variable "
                       "besides the direction")
    t = others[0]
    deps = []
    tot = ctx.zero
    for eq, lam in zip(system.equations, lams):
        dep = eq.lead[1]
        if dep in deps:
            raise LawError("two equations lead in %s" % dep)
        deps.append(dep)
        tot = tot + ctx.sym(dep) * lambda_scale(lam)
    raw = integrate_lambda_01(tot)
    for dep, lam in zip(deps, lams):
        back = euler(raw, dep)
        if not (back - lam).is_zero():
            raise LawError("multipliers are not variational in the %s "
                           "hierarchy: Euler mismatch for %s: %s"
                           % (t, dep, back - lam))
    density, _moved = canonical_density(raw, t)
    P = characteristic(system, lams) - density.diff(d)
    try:
        flux = integrate_by_parts(P, t)
    except HomotopyError as exc:
        raise LawError("flux integration failed: %s" % exc)
    flux = drop_static(flux, t)
    return ConservationLaw(system, density, {t: flux}, d)


def _law_direct(system, lams):
    """No distinguished direction: strip spatial derivatives off the
    multiplied residuals into fluxes by parts, reduce what remains modulo
    the function-space constraints, and integrate it in t for the
    density."""
    ctx = system.ctx
    if 't' not in ctx.indeps:
        raise LawError("direct construction expects a variable named t")
    t = 't'
    spatial = [v for v in ctx.indeps if v != t]
    sidx = [ctx.indeps.index(v) for v in spatial]
    R = characteristic(system, lams)
    fluxes = {x: ctx.zero for x in spatial}
    for _ in range(600):
        theta = _max_spatial_jet(ctx, R, sidx)
        if theta is None:
            break
        order = [theta[2][i] for i in sidx]
        x = spatial[order.index(max(order))]
        xi = ctx.indeps.index(x)
        idx = list(theta[2])
        idx[xi] -= 1
        w = ctx.make_atom(('j', theta[1], tuple(idx)))
        coeff = ctx.zero
        for mono, c in R.terms.items():
            entry = [le for atom, le in mono if atom == theta]
            if not entry:
                continue
            if entry[0] != LE_ONE:
                raise LawError("spatial derivative %s_%s occurs nonlinearly "
                               "in %s" % (theta[1], theta[2], R))
            rest = tuple((a, le) for a, le in mono if a != theta)
            coeff = coeff + _assemble(ctx, [(rest, c)])
        chunk = coeff * w
        fluxes[x] = fluxes[x] + chunk
        R = R - chunk.diff(x)
    else:
        raise LawError("loop guard exceeded stripping spatial derivatives")
    for atom in R.atoms(deep=True):
        if atom[0] == 'j' and any(atom[2][i] for i in sidx):
            raise LawError("spatial derivatives remain inside composite "
                           "factors: %s" % R)
    R = system.constraints.reduce(R)
    try:
        density = integrate_by_parts(R, t)
    except HomotopyError as exc:
        raise LawError("density integration failed: %s" % exc)
    density = drop_static(density, t)
    return ConservationLaw(system, density, fluxes, t)


def _max_spatial_jet(ctx, R, sidx):
    best = None
    key = None
    for mono, _c in R.terms.items():
        for atom, _le in mono:
            if atom[0] != 'j':
                continue
            tot = sum(atom[2][i] for i in sidx)
            if not tot:
                continue
            k = (tot, atom)
            if key is None or k > key:
                key = k
                best = atom
    return best


# -- canonical representatives modulo total derivatives

def canonical_density(e, var):
    """Split e = canonical + moved.diff(var), one representative per class
    of monomials equivalent modulo total var-derivatives, preferring
    derivatives concentrated on earlier-declared dependent variables."""
    ctx = e.ctx
    vi = ctx.indeps.index(var)
    pots = {}
    for mono, _c in e.terms.items():
        for i, (atom, le) in enumerate(mono):
            if atom[0] != 'j' or not atom[2][vi]:
                continue
            if not le_is_const(le) or le[0].denominator != 1 or le[0] < 1:
                continue
            idx = list(atom[2])
            idx[vi] -= 1
            w = ('j', atom[1], tuple(idx))
            entries = [(a, x) for j, (a, x) in enumerate(mono) if j != i]
            if le != LE_ONE:
                entries.append((atom, (le[0] - 1, le[1])))
            entries.append((w, LE_ONE))
            pot = _assemble(ctx, [(tuple(entries), Fraction(1))])
            if pot.is_zero():
                continue
            ((pm, _pc),) = pot.terms.items()
            pots[pm] = pot
    if not pots:
        return e, ctx.zero

    diffs = {pm: pot.diff(var) for pm, pot in pots.items()}
    parent = {}

    def find(m):
        r = m
        while parent[r] != r:
            r = parent[r]
        while parent[m] != r:
            parent[m], m = r, parent[m]
        return r

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for pm, de in diffs.items():
        monos = list(de.terms)
        for m in monos:
            parent.setdefault(m, m)
        for m in monos[1:]:
            union(monos[0], m)

    classes = {}
    for pm, de in diffs.items():
        if not de.terms:
            continue
        root = find(next(iter(de.terms)))
        classes.setdefault(root, []).append(pm)

    moved = ctx.zero
    for root, members in sorted(classes.items(), key=lambda kv: str(kv[0])):
        monos = set()
        for pm in members:
            monos.update(diffs[pm].terms)
        kept = max(monos, key=lambda m: _pref(ctx, m))
        cols = ["p%d" % i for i in range(len(members))]
        rows = []
        for m in sorted(monos, key=_mono_sort_key):
            if m == kept:
                continue
            coeffs = {}
            for col, pm in zip(cols, members):
                c = diffs[pm].terms.get(m)
                if c is not None:
                    coeffs[col] = c
            rows.append((coeffs, e.terms.get(m, Fraction(0))))
        try:
            part, _basis = linsolve.affine_solution(rows, cols)
        except linsolve.InconsistentError:
            continue
        for col, pm in zip(cols, members):
            if nf_is_zero(part[col]):
                continue
            moved = moved + pots[pm].scale(part[col])
    return e - moved.diff(var), moved


def _pref(ctx, mono):
    """Larger is kept: derivatives on earlier-declared dependents,
    concentrated in fewer factors."""
    per = {d: Fraction(0) for d in ctx.deps}
    top = 0
    for atom, le in mono:
        if atom[0] == 'j' and le_is_const(le):
            per[atom[1]] += le[0] * sum(atom[2])
            top = max(top, sum(atom[2]))
    return (tuple(per[d] for d in ctx.deps), top,
            tuple(sorted(str(a) for a, _le in mono)))
