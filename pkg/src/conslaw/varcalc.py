"""Variational calculus on jet expressions: Euler operators, exactness,
and homotopy integration of total derivatives.

The homotopy integrator undoes a single total derivative D_v.  It builds the
standard integrand per dependent variable, scales the dependent variables by
a parameter, and evaluates the resulting one-dimensional integral exactly.
Integrands are restricted to the closed set of shapes that arise here:
rational powers of the scaling parameter, composite bases whose contents are
affine in a single power of the parameter, and function symbols with scaled
arguments (integrated by parts, creating antiderivative symbols as needed).
"""

from fractions import Fraction

from .scalars import nf_mul, nf_div, nf_linear, nf_neg, nf_add, nf_is_zero
from .expr import LE_ONE, le_make, le_neg, le_is_const, ExprError, _assemble, Expr


class HomotopyError(Exception):
    pass


LAMBDA = '_hom'


def euler(e, dep, vars=None):
    """Euler operator (variational derivative) of e with respect to dep.

    vars restricts the admissible jet family; jets of dep outside it are an
    error since the operator would be meaningless there."""
    ctx = e.ctx
    allowed = None if vars is None else \
        tuple(ctx.indeps.index(v) for v in vars)
    idxs = sorted({a[2] for a in e.atoms(deep=True)
                   if a[0] == 'j' and a[1] == dep})
    acc = {}
    for idx in idxs:
        if allowed is not None:
            for i, k in enumerate(idx):
                if k and i not in allowed:
                    raise ExprError("jet %s_%s outside the %s family"
                                    % (dep, idx, ",".join(vars)))
        term = e.partial(('j', dep, idx))
        for i, k in enumerate(idx):
            for _ in range(k):
                term = term.diff(ctx.indeps[i])
        sign = -1 if sum(idx) % 2 else 1
        for mono, c in term.terms.items():
            if sign < 0:
                c = nf_neg(c)
            prev = acc.get(mono)
            c = nf_add(prev, c) if prev is not None else c
            if nf_is_zero(c):
                acc.pop(mono, None)
            else:
                acc[mono] = c
    return Expr(ctx, acc)


def is_exact(e, vars=None, deps=None):
    """True when e is a total divergence in the given jet family: every
    Euler operator annihilates it."""
    for dep in (deps if deps is not None else e.ctx.deps):
        if not euler(e, dep, vars).is_zero():
            return False
    return True


def _lam(ctx):
    if ctx.kinds.get(LAMBDA) != 'param':
        ctx.add_param(LAMBDA)
    return ('s', LAMBDA)


def lambda_scale(e, extra=()):
    """Scale every dependent-variable jet (and any extra atoms) by the
    homotopy parameter."""
    ctx = e.ctx
    lam = ctx.make_atom(_lam(ctx))
    rules = {}
    for a in e.atoms(deep=True):
        if a[0] == 'j' or a in extra:
            rules[a] = lam * ctx.make_atom(a)
    return e.subs(rules)


def _chain_heads(e, vi):
    """Towers of var-derivatives present in e: maps (dep, base index with
    the var component cleared) to the highest var-order in that tower.
    Jets carrying derivatives in other variables head their own towers."""
    heads = {}
    for a in e.atoms(deep=True):
        if a[0] != 'j':
            continue
        base = list(a[2])
        k = base[vi]
        base[vi] = 0
        key = (a[1], tuple(base))
        heads[key] = max(heads.get(key, 0), k)
    return heads


def t_euler(e, var):
    """Euler components of e along the var-derivative towers, one per tower
    head.  All components vanish iff e is a total var-derivative on the jet
    space where each head is an independent coordinate."""
    ctx = e.ctx
    vi = ctx.indeps.index(var)
    out = {}
    for (dep, base), K in sorted(_chain_heads(e, vi).items()):
        comp = ctx.zero
        for k in range(K + 1):
            idx = list(base)
            idx[vi] = k
            term = e.partial(('j', dep, tuple(idx)))
            if term.is_zero():
                continue
            for _ in range(k):
                term = term.diff(var)
            if k % 2:
                term = term.scale(Fraction(-1))
            comp = comp + term
        out[(dep, base)] = comp
    return out


def exact_in(e, var):
    """(True, None) when e is a total var-derivative, else (False, witness)
    with witness the first nonzero Euler component keyed by tower head."""
    for head, comp in t_euler(e, var).items():
        if not comp.is_zero():
            return False, (head, comp)
    return True, None


def homotopy_integrate(e, var, check=True):
    """An expression T with D_var T = e, for e exact along its towers of
    var-derivatives.  Jets with derivatives in other variables are treated
    as independent tower heads, so mixed jets are allowed."""
    ctx = e.ctx
    vi = ctx.indeps.index(var)
    if check:
        _require_exact(e, var)
    total = ctx.zero
    for (dep, base), K in sorted(_chain_heads(e, vi).items()):
        total = total + _integrand(e, dep, base, var, K)
    lam = _lam(ctx)
    scaled = lambda_scale(total) * ctx.make_atom(lam, le_make(-1))
    return integrate_lambda_01(scaled)


def _integrand(e, dep, base, var, K):
    """Sum over k of (sum_i head_iv (-D_v)^(k-1-i)) applied to dP/dhead_kv
    for one tower."""
    ctx = e.ctx
    vi = ctx.indeps.index(var)
    out = ctx.zero
    for k in range(1, K + 1):
        idx = list(base)
        idx[vi] = k
        dPdk = e.partial(('j', dep, tuple(idx)))
        if dPdk.is_zero():
            continue
        for i in range(k):
            term = dPdk
            for _ in range(k - 1 - i):
                term = term.diff(var)
            if (k - 1 - i) % 2:
                term = term.scale(Fraction(-1))
            jdx = list(base)
            jdx[vi] = i
            out = out + ctx.make_atom(('j', dep, tuple(jdx))) * term
    return out


def _require_exact(e, var):
    ok, witness = exact_in(e, var)
    if not ok:
        raise HomotopyError("not a total %s-derivative; Euler witness for "
                            "tower %s %s: %s"
                            % (var, witness[0][0], witness[0][1], witness[1]))


def integrate_by_parts(e, var, guard=400):
    """An expression T with D_var T = e, built by repeatedly moving the
    highest var-derivative down one order with the two-factor parts rule.
    The first-order tail is closed with a one-step homotopy integral and a
    jet-free remainder integrates in var directly.  Agrees with
    homotopy_integrate up to an expression free of var."""
    ctx = e.ctx
    vi = ctx.indeps.index(var)
    _require_exact(e, var)
    R = e
    Q = ctx.zero
    for _ in range(guard):
        theta = _top_parts_jet(ctx, R, vi)
        if theta is None:
            break
        chunk = _parts_chunk(ctx, R, theta, vi)
        Q = Q + chunk
        R = R - chunk.diff(var)
    else:
        raise HomotopyError("loop guard exceeded moving %s-derivatives down"
                            % var)
    total = ctx.zero
    for (dep, base), K in sorted(_chain_heads(R, vi).items()):
        total = total + _integrand(R, dep, base, var, K)
    if not total.is_zero():
        lam = _lam(ctx)
        tail = integrate_lambda_01(
            lambda_scale(total) * ctx.make_atom(lam, le_make(-1)))
        Q = Q + tail
        R = R - tail.diff(var)
    for mono, c in R.terms.items():
        atoms = set()
        _mono_atoms(ctx, mono, atoms)
        if any(a[0] == 'j' for a in atoms):
            raise HomotopyError("nonintegrable remainder %s"
                                % _assemble(ctx, [(mono, c)]))
        Q = Q + _var_antideriv(ctx, mono, c, var)
    return Q


def _top_parts_jet(ctx, R, vi):
    """The maximal top-level jet of var-order at least two, or None.  A
    high derivative hiding inside a composite factor is out of pattern."""
    best = None
    for mono, _c in R.terms.items():
        for atom, _le in mono:
            if atom[0] == 'j' and atom[2][vi] >= 2:
                key = (atom[2][vi], atom)
                if best is None or key > best:
                    best = key
            elif atom[0] in ('b', 'f'):
                sub = atom[1].atoms(deep=True) if atom[0] == 'b' else set()
                if atom[0] == 'f':
                    for arg in atom[2]:
                        sub |= arg.atoms(deep=True)
                for a in sub:
                    if a[0] == 'j' and a[2][vi] >= 2:
                        raise HomotopyError(
                            "high %s-derivative inside a composite factor"
                            % ctx.indeps[vi])
    return best[1] if best else None


def _parts_chunk(ctx, R, theta, vi):
    """Antiderivative chunk removing every occurrence of the top jet: a
    monomial A * w^q * theta (w one order below theta, A free of both)
    contributes A * w^(q+1) / (q+1)."""
    widx = list(theta[2])
    widx[vi] -= 1
    w = ('j', theta[1], tuple(widx))
    items = []
    for mono, c in R.terms.items():
        le_theta = None
        q = Fraction(0)
        rest = []
        for atom, le in mono:
            if atom == theta:
                le_theta = le
            elif atom == w:
                if not le_is_const(le):
                    raise HomotopyError("symbolic power of %s_%s"
                                        % (w[1], w[2]))
                q = le[0]
            else:
                rest.append((atom, le))
        if le_theta is None:
            continue
        if le_theta != LE_ONE:
            raise HomotopyError("top derivative %s_%s occurs nonlinearly"
                                % (theta[1], theta[2]))
        nested = set()
        for atom, _le in rest:
            if atom[0] == 'b':
                nested |= atom[1].atoms(deep=True)
            elif atom[0] == 'f':
                for arg in atom[2]:
                    nested |= arg.atoms(deep=True)
        if theta in nested or w in nested:
            raise HomotopyError("derivative of %s buried in a composite "
                                "factor" % theta[1])
        if q + 1 == 0:
            raise HomotopyError("inverse power of %s_%s blocks the parts "
                                "rule" % (w[1], w[2]))
        items.append((tuple(rest) + ((w, le_make(q + 1)),),
                      nf_div(c, Fraction(q + 1))))
    return _assemble(ctx, items)


def _var_antideriv(ctx, mono, c, var):
    """Antiderivative in var of a jet-free monomial."""
    items = []
    found = False
    for atom, le in mono:
        if atom == ('s', var):
            if not le_is_const(le):
                raise HomotopyError("symbolic power of %s" % var)
            a = le[0]
            if a == -1:
                raise HomotopyError("logarithmic obstruction %s^-1" % var)
            items.append((atom, le_make(a + 1)))
            c = nf_div(c, Fraction(a + 1))
            found = True
        else:
            items.append((atom, le))
    if not found:
        items.append((('s', var), le_make(1)))
    return _assemble(ctx, [(tuple(items), c)])


def drop_static(e, var):
    """Remove monomials free of jets and of var itself: they are constant
    along var and their total var-derivative is exactly zero."""
    keep = []
    for mono, c in e.terms.items():
        atoms = set()
        _mono_atoms(e.ctx, mono, atoms)
        if any(a[0] == 'j' or a == ('s', var) for a in atoms):
            keep.append((mono, c))
    return _assemble(e.ctx, keep)


def _mono_atoms(ctx, mono, out):
    for atom, _le in mono:
        out.add(atom)
        if atom[0] == 'b':
            out.update(atom[1].atoms(deep=True))
        elif atom[0] == 'f':
            for arg in atom[2]:
                out.update(arg.atoms(deep=True))


# -- exact integration over the homotopy parameter ----------------------------

def integrate_lambda_01(e):
    """Definite integral over the homotopy parameter from 0 to 1, term by
    term, for the integrand shapes produced by the homotopy operator.

    Composite bases carrying the parameter are first made opaque and every
    power of one class is lowered to the smallest exponent present, so that
    cancellations between neighbouring powers happen before any single term
    is matched against an integration pattern."""
    ctx = e.ctx
    e, zinfo = _opaque_bases(e)
    out = ctx.zero
    for mono, c in e.terms.items():
        out = out + _integrate_term(ctx, mono, c, zinfo)
    return out


def _lam_exponent(atom, le, lam):
    if atom == lam:
        if not le_is_const(le):
            raise HomotopyError("symbolic power of the homotopy parameter")
        return le[0]
    return None


def _placeholder(ctx, i):
    name = "%sZ%d" % (LAMBDA, i)
    if ctx.kinds.get(name) != 'param':
        ctx.add_param(name)
    return name


def _opaque_bases(e):
    """Replace parameter-bearing bases by placeholder symbols and expand
    each placeholder class down to its minimal exponent.  Returns the
    rewritten expression and {placeholder: (content, A, B, k)}."""
    ctx = e.ctx
    lam = ('s', LAMBDA)
    batoms = sorted((a for a in e.atoms(deep=True)
                     if a[0] == 'b' and lam in a[1].atoms(deep=True)),
                    key=lambda a: sorted(str(m) for m in a[1].terms))
    if not batoms:
        return e, {}
    rules = {}
    zinfo = {}
    for i, a in enumerate(batoms):
        z = _placeholder(ctx, i)
        rules[a] = ctx.make_atom(('s', z))
        zinfo[z] = (a[1],) + _split_affine(ctx, a[1], lam)
    work = e.subs(rules)
    # per class and per (symbolic part, fractional offset) subgroup, find the
    # minimal exponent and lower every member to it
    emin = {}
    for mono, _c in work.terms.items():
        for atom, le in mono:
            if atom[0] == 's' and atom[1] in zinfo:
                key = (atom[1], le[1], le[0] % 1)
                if key not in emin or le[0] < emin[key][0]:
                    emin[key] = le
    out = ctx.zero
    for mono, c in work.terms.items():
        rest = []
        extra = ctx.one
        for atom, le in mono:
            if atom[0] == 's' and atom[1] in zinfo:
                base = emin[(atom[1], le[1], le[0] % 1)]
                j = le[0] - base[0]
                if j:
                    content = zinfo[atom[1]][0]
                    extra = extra * content.powi(int(j))
                rest.append((atom, base))
            else:
                rest.append((atom, le))
        out = out + _assemble(ctx, [(tuple(rest), c)]) * extra
    return out, zinfo


def _split_affine(ctx, content, lam):
    """content as A + lam^k B; returns (A, B, k)."""
    parts = {}
    for mono, c in content.terms.items():
        deg = Fraction(0)
        inner = []
        for atom, ale in mono:
            p = _lam_exponent(atom, ale, lam)
            if p is not None:
                deg += p
            else:
                if ('s', LAMBDA) in _atom_atoms(atom):
                    raise HomotopyError("nested parameter inside a base")
                inner.append((atom, ale))
        parts.setdefault(deg, []).append((tuple(inner), c))
    degs = sorted(parts)
    if len(degs) != 2 or degs[0] != 0:
        raise HomotopyError("base content is not affine in one parameter "
                            "power (degrees %s)" % degs)
    k = degs[1]
    if k.denominator != 1 or k <= 0:
        raise HomotopyError("fractional parameter power in a base")
    return (_assemble(ctx, parts[degs[0]]),
            _assemble(ctx, parts[degs[1]]), int(k))


def _integrate_term(ctx, mono, c, zinfo):
    lam = ('s', LAMBDA)
    q = Fraction(0)
    rest = []          # lambda-free factors
    lam_bases = []     # (A, B, k, le)
    lam_funcs = []     # (name, args, didx, le)
    for atom, le in mono:
        p = _lam_exponent(atom, le, lam)
        if p is not None:
            q += p
            continue
        if atom[0] == 's' and atom[1] in zinfo:
            _content, A, B, k = zinfo[atom[1]]
            lam_bases.append((A, B, k, le))
            continue
        if atom[0] == 'f' and any(('s', LAMBDA) in a.atoms(deep=True)
                                  for a in atom[2]):
            lam_funcs.append((atom[1], atom[2], atom[3], le))
            continue
        if ('s', LAMBDA) in _atom_atoms(atom):
            raise HomotopyError("parameter buried in %r" % (atom,))
        rest.append((atom, le))
    prefix = _assemble(ctx, [(tuple(rest), c)])
    if lam_bases and lam_funcs:
        raise HomotopyError("mixed base and function factors in one term")
    if len(lam_bases) > 1 or len(lam_funcs) > 1:
        raise HomotopyError("more than one parameter-bearing factor")
    if lam_bases:
        A, B, k, le = lam_bases[0]
        return prefix * _base_integral(ctx, A, B, k, le, q)
    if lam_funcs:
        name, args, didx, le = lam_funcs[0]
        if le != LE_ONE:
            raise HomotopyError("power of a function symbol")
        if len(args) != 1:
            raise HomotopyError("multi-argument function of the parameter")
        return prefix * _integrate_func(ctx, name, args[0], didx[0], q)
    if q == -1:
        raise HomotopyError("logarithmic obstruction (1/parameter term)")
    if q.denominator != 1 or q < 0:
        raise HomotopyError("cannot integrate parameter power %s" % q)
    return prefix.scale(Fraction(1, int(q) + 1))


def _base_integral(ctx, A, B, k, le, q):
    """Integral of lam^q * (A + lam^k B)^le over the unit interval."""
    m = (q + 1) / k
    if m.denominator != 1 or m < 1:
        raise HomotopyError("parameter power %s does not match base "
                            "power %s" % (q, k))
    m = int(m)
    # substitute w = lam^k:  (1/k) * integral of w^(m-1) (A + w B)^le dw,
    # expanding w^(m-1) = ((A + wB) - A)^(m-1) / B^(m-1) binomially; each
    # piece integrates against d(A + wB) = B dw, so B^(-m) appears overall.
    total = ctx.zero
    Bpow = B.pow_le(le_make(Fraction(-m)))
    for j in range(m):
        ej = _le_shift(le, j + 1)
        scale = nf_mul(Fraction(_binom(m - 1, j) * (-1) ** (m - 1 - j), k),
                       _le_inverse(ctx, ej))
        bound = (A + B).pow_le(ej) - A.pow_le(ej)
        total = total + (bound * A.powi(m - 1 - j) * Bpow).scale(scale)
    return total


def _atom_atoms(atom):
    if atom[0] == 'b':
        return atom[1].atoms(deep=True)
    if atom[0] == 'f':
        out = set()
        for a in atom[2]:
            out.update(a.atoms(deep=True))
        return out
    return set()


def _le_shift(le, j):
    return le_make(le[0] + j, le[1])


def _le_inverse(ctx, le):
    """1 / (value of an exponent), as a coefficient-field element."""
    const, pairs = le
    if not pairs:
        if const == 0:
            raise HomotopyError("logarithmic obstruction (zero exponent)")
        return Fraction(1) / const
    if len(pairs) != 1 or pairs[0][0] != ctx.exponent_symbol:
        raise HomotopyError("exponent too general: %s" % (le,))
    return nf_div(Fraction(1), nf_linear(pairs[0][1], const))


def _binom(a, b):
    out = 1
    for i in range(b):
        out = out * (a - i) // (i + 1)
    return out


def _integrate_func(ctx, name, arg, didx, q):
    """Integral of lam^q * name^(didx)(arg) with arg = lam * s, by parts."""
    lamatom = ('s', LAMBDA)
    s = arg.partial(lamatom)
    if ('s', LAMBDA) in s.atoms(deep=True):
        raise HomotopyError("function argument is not linear in the "
                            "parameter")
    if q.denominator != 1 or q < 0:
        raise HomotopyError("cannot integrate parameter power %s" % q)
    q = int(q)
    sinv = _monomial_inverse(s)
    if didx >= 1:
        lower = name
        d = didx - 1
    else:
        lower = ctx.antideriv(name)
        d = 0
    at_one = ctx.func_expr(lower, (s,), (d,))
    at_zero = ctx.func_expr(lower, (ctx.zero,), (d,)) if q == 0 else ctx.zero
    bound = sinv * (at_one - at_zero)
    if q == 0:
        return bound
    tail = ctx.make_atom(lamatom).powi(q - 1) * \
        ctx.func_expr(lower, (ctx.make_atom(lamatom) * s,), (d,))
    return bound - sinv.scale(Fraction(q)) * integrate_lambda_01(tail)


def _monomial_inverse(s):
    if len(s.terms) != 1:
        raise HomotopyError("function argument has a sum prefactor")
    ((mono, c),) = s.terms.items()
    inv = [(atom, le_neg(le)) for atom, le in mono]
    return _assemble(s.ctx, [(tuple(inv), Fraction(1) / c)])
