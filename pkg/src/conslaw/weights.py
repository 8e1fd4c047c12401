"""Scaling weights for PDE systems.

A weight assignment gives each dependent variable, each derivative operator
D_x, and each parameter that occurs inside a composite base a value, so that
every equation of the system is weight-uniform: all monomials of a residual
share the same rank.  Ranks live in the coefficient field, so they may depend
on the symbolic exponent.  Independent variables scale opposite to their
operators, so a factor x contributes -W(D_x) per power.
"""

from fractions import Fraction
from itertools import product

from .scalars import RatFunc, nf_add, nf_sub, nf_mul, nf_is_zero, nf_str, \
    nf_linear
from . import linsolve


class WeightError(Exception):
    pass


class _NonUniform:
    __slots__ = ()

    def __repr__(self):
        return "NonUniform"


NONUNIFORM = _NonUniform()


def _form_sub(a, b):
    out = dict(a)
    for k, v in b.items():
        s = nf_sub(out.get(k, Fraction(0)), v)
        if nf_is_zero(s):
            out.pop(k, None)
        else:
            out[k] = s
    return out


def _form_add(a, b, c=Fraction(1)):
    out = dict(a)
    for k, v in b.items():
        s = nf_add(out.get(k, Fraction(0)), nf_mul(v, c))
        if nf_is_zero(s):
            out.pop(k, None)
        else:
            out[k] = s
    return out


def weighted_params(system):
    """Parameters carrying scaling weight: those appearing inside some
    composite base of the system as written (before binding)."""
    found = set(system.scaled_params)
    return [p for p in system.ctx.params if p in found]


def _le_value(ctx, le):
    """Exponent as a coefficient-field value; parameters are not allowed in
    exponents during weight analysis."""
    const, pairs = le
    val = const
    for name, c in pairs:
        if name != ctx.exponent_symbol:
            raise WeightError("parameter %r in an exponent; weight analysis "
                              "needs numeric or n-linear exponents" % name)
        val = nf_add(val, nf_linear(c, 0))
    return val


class _FormBuilder:
    def __init__(self, system, weighted):
        self.system = system
        self.ctx = system.ctx
        self.weighted = set(weighted)
        self.base_contents = []     # base atoms seen, in first-seen order

    def monomial(self, mono):
        form = {}
        for atom, le in mono:
            form = _form_add(form, self.atom_form(atom),
                             _le_value(self.ctx, le))
        return form

    def atom_form(self, atom):
        kind = atom[0]
        if kind == 's':
            name = atom[1]
            k = self.ctx.kinds.get(name)
            if k == 'indep':
                return {('op', name): Fraction(-1)}
            if k == 'param' and name in self.weighted:
                return {('param', name): Fraction(1)}
            return {}
        if kind == 'j':
            dep, idx = atom[1], atom[2]
            form = {('dep', dep): Fraction(1)}
            for i, k in enumerate(idx):
                if k:
                    form[('op', self.ctx.indeps[i])] = Fraction(k)
            return form
        if kind == 'b':
            if atom not in [a for a, _ in self.base_contents]:
                forms = [self.monomial(m) for m in atom[1].terms.keys()]
                self.base_contents.append((atom, forms))
            for a, forms in self.base_contents:
                if a == atom:
                    return forms[0]
            raise AssertionError
        raise WeightError("weight analysis is not available for systems "
                          "with constitutive function symbols")


def weight_unknowns(system):
    cols = [('dep', d) for d in system.ctx.deps]
    cols += [('op', x) for x in system.ctx.indeps]
    cols += [('param', p) for p in weighted_params(system)]
    return cols


def weight_equations(system):
    """Uniformity equations as (unknowns, forms); each form, a mapping
    unknown -> coefficient, is required to vanish."""
    builder = _FormBuilder(system, weighted_params(system))
    eqs = []
    for res in system.residuals():
        forms = [builder.monomial(m) for m in res.terms.keys()]
        for f in forms[1:]:
            eq = _form_sub(f, forms[0])
            if eq:
                eqs.append(eq)
    for _atom, forms in builder.base_contents:
        for f in forms[1:]:
            eq = _form_sub(f, forms[0])
            if eq:
                eqs.append(eq)
    return weight_unknowns(system), eqs


def unknown_str(key):
    if key[0] == 'op':
        return "W(D_%s)" % key[1]
    return "W(%s)" % key[1]


def equation_str(eq, cols, sym="n"):
    parts = []
    for key in cols:
        if key not in eq:
            continue
        c = eq[key]
        s = nf_str(c, sym)
        if s == "1":
            term = unknown_str(key)
        elif s == "-1":
            term = "-" + unknown_str(key)
        else:
            if isinstance(c, RatFunc) or "/" in s:
                s = "(%s)" % s
            term = "%s*%s" % (s, unknown_str(key))
        if parts and not term.startswith("-"):
            parts.append("+ " + term)
        elif parts:
            parts.append("- " + term[1:])
        else:
            parts.append(term)
    return " ".join(parts) + " = 0" if parts else "0 = 0"


class Weights:
    """A concrete weight assignment for one system."""

    def __init__(self, system, values):
        self.system = system
        self.values = dict(values)

    def of_dep(self, name):
        return self.values[('dep', name)]

    def of_op(self, name):
        return self.values[('op', name)]

    def of_param(self, name):
        return self.values.get(('param', name), Fraction(0))

    def of_indep(self, name):
        return -self.of_op(name) if not isinstance(self.of_op(name), RatFunc) \
            else nf_mul(self.of_op(name), Fraction(-1))

    def describe(self):
        sym = self.system.ctx.exponent_symbol or "n"
        cols = weight_unknowns(self.system)
        return ["%s = %s" % (unknown_str(k), nf_str(self.values[k], sym))
                for k in cols]

    def as_dict(self):
        sym = self.system.ctx.exponent_symbol or "n"
        out = {}
        for (kind, name), v in self.values.items():
            key = "D_%s" % name if kind == 'op' else name
            out[key] = nf_str(v, sym)
        return out

    def rank(self, e):
        """Common rank of all monomials of e, or NONUNIFORM.  Zero has no
        rank and gives None."""
        ranks = [self._mono_rank(m) for m in e.terms.keys()]
        ranks = [r for r in ranks if r is not NONUNIFORM]
        if len(ranks) != len(e.terms):
            return NONUNIFORM
        if not ranks:
            return None
        first = ranks[0]
        for r in ranks[1:]:
            if not nf_is_zero(nf_sub(r, first)):
                return NONUNIFORM
        return first

    def _mono_rank(self, mono):
        total = Fraction(0)
        for atom, le in mono:
            a = self._atom_rank(atom)
            if a is NONUNIFORM:
                return NONUNIFORM
            total = nf_add(total, nf_mul(a, _le_value(self.system.ctx, le)))
        return total

    def _atom_rank(self, atom):
        ctx = self.system.ctx
        kind = atom[0]
        if kind == 's':
            k = ctx.kinds.get(atom[1])
            if k == 'indep':
                return nf_mul(self.of_op(atom[1]), Fraction(-1))
            if k == 'param':
                return self.of_param(atom[1])
            return Fraction(0)
        if kind == 'j':
            total = self.of_dep(atom[1])
            for i, k in enumerate(atom[2]):
                if k:
                    total = nf_add(total, nf_mul(self.of_op(ctx.indeps[i]),
                                                 Fraction(k)))
            return total
        if kind == 'b':
            ranks = [self._mono_rank(m) for m in atom[1].terms.keys()]
            first = ranks[0]
            for r in ranks[1:]:
                if r is NONUNIFORM or not nf_is_zero(nf_sub(r, first)):
                    return NONUNIFORM
            return first
        raise WeightError("weight analysis is not available for systems "
                          "with constitutive function symbols")


def _resolve_choice_key(system, name):
    kinds = system.ctx.kinds
    if name.startswith("D_") and kinds.get(name[2:]) == 'indep':
        return ('op', name[2:])
    k = kinds.get(name)
    if k == 'dep':
        return ('dep', name)
    if k == 'indep':
        return ('op', name)
    if k == 'param':
        if name in weighted_params(system):
            return ('param', name)
        raise WeightError("parameter %r does not occur in a base and has "
                          "weight 0" % name)
    raise WeightError("cannot choose a weight for %r" % name)


def solve_weights(system, choices=None, limit=12):
    """All minimal positive weight assignments.

    choices maps names (deps, parameters, or D_x) to fixed values.  Remaining
    freedom is searched over positive integers 1..limit, keeping assignments
    that make every weight positive and scoring by total weight; all minimal
    assignments are returned, ordered by the free values.  With a symbolic
    exponent the solution involves n, so the freedom must be fixed by
    choices."""
    cols, eqs = weight_equations(system)
    rows = [(eq, Fraction(0)) for eq in eqs]
    if choices:
        for name, val in choices.items():
            key = _resolve_choice_key(system, name)
            if isinstance(val, int):
                val = Fraction(val)
            rows.append(({key: Fraction(1)}, val))
    try:
        part, basis = linsolve.affine_solution(rows, cols)
    except linsolve.InconsistentError:
        raise WeightError("weight uniformity equations are inconsistent "
                          "with the given choices")
    if not basis:
        return [Weights(system, part)]
    symbolic = any(isinstance(v, RatFunc) for v in part.values()) or \
        any(isinstance(v, RatFunc) for _f, vec in basis
            for v in vec.values())
    if symbolic:
        free = ", ".join(unknown_str(f) for f, _v in basis)
        raise WeightError("free weights remain (%s) and the exponent is "
                          "symbolic; fix them with explicit choices" % free)
    if len(basis) > 4:
        raise WeightError("too many free weights (%d); give explicit "
                          "choices" % len(basis))
    best = None
    found = []
    for vals in product(range(1, limit + 1), repeat=len(basis)):
        vec = dict(part)
        for t, (_fc, dirn) in zip(vals, basis):
            vec = _form_add(vec, dirn, Fraction(t))
        if any(vec.get(c, Fraction(0)) <= 0 for c in cols):
            continue
        if any(vec.get(c, Fraction(0)).denominator != 1 for c in cols):
            continue
        score = sum(vec[c] for c in cols)
        if best is None or score < best:
            best = score
            found = [vec]
        elif score == best:
            found.append(vec)
    if best is None:
        raise WeightError("no positive weight assignment found (free "
                          "weights searched up to %d)" % limit)
    return [Weights(system, vec) for vec in found]
