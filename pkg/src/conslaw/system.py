"""PDE systems in solved form, reduction on solutions, and constraint rules.

A declared system stores each equation as a rewrite rule lead -> rhs on jet
space, together with the residual lead - rhs.  reduce_on_solutions rewrites
any derivative of a lead by the correspondingly prolonged rhs, to a normal
form that vanishes exactly on solutions.  ConstraintSet does the same for
declared function symbols (phi, psi, multiplier ansatz members) whose leading
slot-derivatives are constrained.
"""

from fractions import Fraction

from .expr import ExprError, _assemble
from .parser import parse_document


class ModelError(ExprError):
    pass


class Equation:
    __slots__ = ('lead', 'rhs', 'residual')

    def __init__(self, lead, rhs, residual):
        self.lead = lead
        self.rhs = rhs
        self.residual = residual


def _jet_atoms(e):
    return [a for a in e.atoms(deep=True) if a[0] == 'j']


def _dominates(idx, lead):
    return all(i >= j for i, j in zip(idx, lead))


def _isolate(ctx, residual, skip=()):
    """Pick the lex-maximal linearly occurring jet and solve for it."""
    top = {}
    nested = set()
    for mono, _c in residual.terms.items():
        for atom, le in mono:
            if atom[0] == 'j':
                top.setdefault(atom, set()).add(le)
            elif atom[0] in ('b', 'f'):
                sub = atom[1].atoms(deep=True) if atom[0] == 'b' else set()
                if atom[0] == 'f':
                    for arg in atom[2]:
                        sub |= arg.atoms(deep=True)
                nested |= {a for a in sub if a[0] == 'j'}
    candidates = []
    for atom, les in top.items():
        if atom in nested or atom in skip:
            continue
        if les == {(Fraction(1), ())}:
            candidates.append(atom)
    for atom in sorted(candidates, key=lambda a: a[2], reverse=True):
        coeff = residual.ctx.zero
        rest = residual.ctx.zero
        for mono, c in residual.terms.items():
            if any(p[0] == atom for p in mono):
                other = tuple(p for p in mono if p[0] != atom)
                coeff = coeff + _assemble(ctx, [(other, c)])
            else:
                rest = rest + _assemble(ctx, [(mono, c)])
        if atom in {a for a in coeff.atoms(deep=True)}:
            continue
        rhs = -rest / coeff
        bad = any(a != atom and _dominates(a[2], atom[2])
                  for a in _jet_atoms(rhs) if a[1] == atom[1])
        if bad:
            continue
        return atom, rhs
    raise ModelError("no solvable leading derivative in %s" % residual)


class ConstraintRule:
    __slots__ = ('fname', 'didx', 'rhs')

    def __init__(self, fname, didx, rhs):
        self.fname = fname
        self.didx = tuple(didx)
        self.rhs = rhs


class ConstraintSet:
    """Oriented rewrite rules on function-symbol derivatives, with automatic
    prolongation of each rule to higher slot-derivatives."""

    def __init__(self, ctx, rules):
        self.ctx = ctx
        self.rules = list(rules)
        self._cache = {}

    def __iter__(self):
        return iter(self.rules)

    def __len__(self):
        return len(self.rules)

    def _slot_coord(self, fname, atom, slot):
        arg = atom[2][slot]
        if len(arg.terms) == 1:
            ((m, c),) = arg.terms.items()
            if c == 1 and len(m) == 1 and m[0][1] == (Fraction(1), ()):
                return m[0][0]
        raise ModelError("constrained symbol %r has a non-coordinate "
                          "argument in slot %d" % (fname, slot))

    def _prolonged(self, ri, extra, atom):
        key = (ri, extra)
        got = self._cache.get(key)
        if got is not None:
            return got
        rule = self.rules[ri]
        if not any(extra):
            out = self.reduce(rule.rhs)
        else:
            slot = max(i for i, v in enumerate(extra) if v)
            down = tuple(v - (1 if i == slot else 0)
                         for i, v in enumerate(extra))
            prev = self._prolonged(ri, down, atom)
            coord = self._slot_coord(rule.fname, atom, slot)
            out = self.reduce(prev.partial(coord))
        self._cache[key] = out
        return out

    def _find(self, e):
        best = None
        for atom in e.atoms(deep=True):
            if atom[0] != 'f':
                continue
            for ri, rule in enumerate(self.rules):
                if atom[1] != rule.fname or len(atom[3]) != len(rule.didx):
                    continue
                if _dominates(atom[3], rule.didx):
                    rank = (sum(atom[3]), atom[3])
                    if best is None or rank > best[0]:
                        best = (rank, atom, ri)
                    break
        return best

    def reduce(self, e):
        guard = 0
        while True:
            hit = self._find(e)
            if hit is None:
                return e
            _rank, atom, ri = hit
            rule = self.rules[ri]
            extra = tuple(a - b for a, b in zip(atom[3], rule.didx))
            rep = self._prolonged(ri, extra, atom)
            e = e.subs({atom: rep})
            guard += 1
            if guard > 5000:
                raise ModelError("constraint reduction did not terminate")


def _scan_scaled_params(residuals):
    """Parameters occurring inside a composite base; they carry scaling
    weight.  Recorded before any binding, since binding the exponent can
    expand the bases away."""
    found = []
    for res in residuals:
        for atom in res.atoms(deep=True):
            if atom[0] != 'b':
                continue
            for sub in atom[1].atoms(deep=True):
                if sub[0] == 's' and res.ctx.kinds.get(sub[1]) == 'param' \
                        and sub[1] not in found:
                    found.append(sub[1])
    return found


class PdeSystem:
    """Immutable declared system: context, solved equations, direction,
    function-space constraints, and weight choices."""

    def __init__(self, ctx, equations, direction, constraints, weights,
                 dep_args, source=None, scaled_params=None):
        self.ctx = ctx
        self.equations = list(equations)
        self.direction = direction
        self.constraints = constraints
        self.weights = dict(weights)
        self.dep_args = dict(dep_args)
        self.source = source
        if scaled_params is None:
            scaled_params = _scan_scaled_params(self.residuals())
        self.scaled_params = tuple(scaled_params)
        self._rules = {(eq.lead[1], eq.lead[2]): i
                       for i, eq in enumerate(self.equations)}
        self._cache = {}

    @classmethod
    def from_spec(cls, spec):
        ctx = spec.ctx
        equations = []
        for lead, rhs, residual in spec.equations:
            if lead is None:
                lead, rhs = _isolate(ctx, residual)
            equations.append(Equation(lead, rhs, residual))
        constraints = ConstraintSet(
            ctx, [ConstraintRule(f, d, r) for f, d, r in spec.constraints])
        direction = _infer_direction(ctx, equations)
        return cls(ctx, equations, direction, constraints, spec.weights,
                   spec.dep_args, source=spec.source)

    @classmethod
    def from_text(cls, text):
        return cls.from_spec(parse_document(text))

    def residuals(self):
        return [eq.residual for eq in self.equations]

    def bind(self, env):
        """A new system with parameter values substituted and leads
        re-isolated where a leading coefficient degenerated."""
        env = {k: Fraction(v) for k, v in env.items()}
        ctx = self.ctx
        equations = []
        for eq in self.equations:
            res = eq.residual.bind(env)
            if res.is_zero():
                continue
            lead, rhs = _isolate(ctx, res)
            equations.append(Equation(lead, rhs, res))
        rules = [ConstraintRule(r.fname, r.didx, r.rhs.bind(env))
                 for r in self.constraints]
        direction = _infer_direction(ctx, equations)
        return PdeSystem(ctx, equations, direction,
                         ConstraintSet(ctx, rules), self.weights,
                         self.dep_args, source=self.source,
                         scaled_params=self.scaled_params)

    # -- reduction on solutions

    def _prolonged(self, ei, extra):
        key = (ei, extra)
        got = self._cache.get(key)
        if got is not None:
            return got
        eq = self.equations[ei]
        if not any(extra):
            out = self.reduce_on_solutions(eq.rhs)
        else:
            vi = max(i for i, v in enumerate(extra) if v)
            down = tuple(v - (1 if i == vi else 0)
                         for i, v in enumerate(extra))
            prev = self._prolonged(ei, down)
            out = self.reduce_on_solutions(prev.diff(self.ctx.indeps[vi]))
        self._cache[key] = out
        return out

    def _find(self, e):
        best = None
        for atom in e.atoms(deep=True):
            if atom[0] != 'j':
                continue
            for (dep, lead_idx), ei in self._rules.items():
                if atom[1] == dep and _dominates(atom[2], lead_idx):
                    rank = (sum(atom[2]), atom[2])
                    if best is None or rank > best[0]:
                        best = (rank, atom, ei)
                    break
        return best

    def reduce_on_solutions(self, e):
        """Normal form of e modulo the system's solution set.  Replacements
        are batched: every reducible jet present is substituted at once, and
        since the replacements are themselves in normal form this settles in
        a few passes."""
        for _ in range(200):
            repl = {}
            for atom in e.atoms(deep=True):
                if atom[0] != 'j' or atom in repl:
                    continue
                for (dep, lead_idx), ei in self._rules.items():
                    if atom[1] == dep and _dominates(atom[2], lead_idx):
                        extra = tuple(a - b
                                      for a, b in zip(atom[2], lead_idx))
                        repl[atom] = self._prolonged(ei, extra)
                        break
            if not repl:
                return e
            e = e.subs(repl)
        raise ModelError("reduction on solutions did not terminate")

    def reduce_all(self, e):
        """Reduce on solutions, then modulo function-space constraints."""
        return self.constraints.reduce(self.reduce_on_solutions(e))


def _infer_direction(ctx, equations):
    if not equations:
        return None
    var = None
    for eq in equations:
        idx = eq.lead[2]
        if sum(idx) != 1:
            return None
        v = ctx.indeps[idx.index(1)]
        if var is None:
            var = v
        elif var != v:
            return None
    vi = ctx.indeps.index(var)
    for eq in equations:
        for a in _jet_atoms(eq.rhs):
            if a[2][vi] >= 1:
                return None
    return var


def expand_funcsym(e, name, concrete, argatoms):
    """Replace every derivative atom of a function symbol by the matching
    derivative of a concrete expression; argatoms gives the coordinate atom
    of each slot."""
    rules = {}
    for atom in e.atoms(deep=True):
        if atom[0] != 'f' or atom[1] != name:
            continue
        val = concrete
        for slot, cnt in enumerate(atom[3]):
            for _ in range(cnt):
                val = val.partial(argatoms[slot])
        rules[atom] = val
    return e.subs(rules) if rules else e
