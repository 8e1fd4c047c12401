"""Line-oriented DSL for PDE systems, and the expression grammar.

Statements:

    indep r t
    dep sigma(r, t)
    param delta beta
    exponent n
    func F(sigma) [deriv <expr>] [antideriv G]
    funcspace phi(x, y) [constraint phi_xx = <expr>]
    eq sigma_r = <expr>         (or: eq 0 = <expr>, residual form)
    weight sigma = 1

Expressions use ^ * / + - and parentheses, subscript derivatives u_tt or
u_{tt}, prime marks F'(sigma), and Int(F(sigma), sigma) for the antiderivative
symbol.  Precedence: power > unary minus > mul/div > add/sub.  '#' starts a
comment.
"""

import re
from fractions import Fraction

from .expr import Context, le_make, le_int, ExprError
from .scalars import RatFunc, ONE


class DslError(Exception):
    def __init__(self, msg, line=None, col=None):
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = "line %d" % line
            if col is not None:
                where += ", col %d" % col
            where += ": "
        super().__init__(where + msg)


_TOKEN = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<name>[A-Za-z][A-Za-z0-9_]*)
  | (?P<int>[0-9]+)
  | (?P<op>[-+*/^(),='{}_])
""", re.VERBOSE)


def tokenize(text, lineno=1):
    """Token stream of (kind, value, line, col)."""
    toks = []
    for off, line in enumerate(text.split("\n")):
        body = line.split("#", 1)[0]
        pos = 0
        while pos < len(body):
            m = _TOKEN.match(body, pos)
            if not m:
                raise DslError("unexpected character %r" % body[pos],
                               lineno + off, pos + 1)
            if m.lastgroup != 'ws':
                toks.append((m.lastgroup, m.group(), lineno + off, pos + 1))
            pos = m.end()
        toks.append(('nl', '', lineno + off, len(body) + 1))
    toks.append(('end', '', lineno + len(text.split("\n")), 1))
    return toks


class _Stream:
    def __init__(self, toks):
        self.toks = toks
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        if t[0] != 'end':
            self.i += 1
        return t

    def at_op(self, *ops):
        k, v, _l, _c = self.peek()
        return k == 'op' and v in ops

    def expect_op(self, op):
        k, v, l, c = self.next()
        if k != 'op' or v != op:
            raise DslError("expected %r, found %r" % (op, v or k), l, c)

    def error(self, msg):
        _k, v, l, c = self.peek()
        raise DslError(msg + (" (at %r)" % v if v else ""), l, c)


class ExprParser:
    """Precedence-climbing expression parser over a declaration context."""

    def __init__(self, ctx, stream):
        self.ctx = ctx
        self.s = stream

    def parse(self):
        return self._sum()

    def _sum(self):
        e = self._product()
        while self.s.at_op('+', '-'):
            op = self.s.next()[1]
            rhs = self._product()
            e = e + rhs if op == '+' else e - rhs
        return e

    def _product(self):
        e = self._unary()
        while self.s.at_op('*', '/'):
            op = self.s.next()[1]
            rhs = self._unary()
            if op == '*':
                e = e * rhs
            else:
                e = e / rhs
        return e

    def _unary(self):
        if self.s.at_op('-'):
            self.s.next()
            return -self._unary()
        return self._power()

    def _power(self):
        base = self._primary()
        if self.s.at_op('^'):
            _k, _v, l, c = self.s.next()
            neg = False
            if self.s.at_op('-'):
                self.s.next()
                neg = True
            exp = self._primary()
            le = self._as_linexp(exp, l, c)
            if neg:
                le = le_make(-le[0], ((n, -v) for n, v in le[1]))
            try:
                return base.pow_le(le)
            except ExprError as ex:
                raise DslError(str(ex), l, c)
        return base

    def _as_linexp(self, e, l, c):
        const = Fraction(0)
        pairs = {}
        for mono, coeff in e.terms.items():
            if isinstance(coeff, RatFunc):
                if (len(coeff.num) <= 2 and coeff.den == (ONE,) and not mono):
                    const += coeff.num[0] if coeff.num else 0
                    if len(coeff.num) == 2:
                        name = self.ctx.exponent_symbol
                        pairs[name] = pairs.get(name, 0) + coeff.num[1]
                    continue
                raise DslError("exponent is not affine", l, c)
            if not mono:
                const += coeff
                continue
            if (len(mono) == 1 and mono[0][0][0] == 's'
                    and le_int(mono[0][1]) == 1):
                name = mono[0][0][1]
                pairs[name] = pairs.get(name, 0) + coeff
                continue
            raise DslError("exponent is not affine", l, c)
        return le_make(const, pairs.items())

    def _primary(self):
        s = self.s
        k, v, l, c = s.peek()
        if k == 'int':
            s.next()
            return self.ctx.num(int(v))
        if k == 'op' and v == '(':
            s.next()
            e = self._sum()
            s.expect_op(')')
            return e
        if k == 'name':
            s.next()
            return self._name(v, l, c)
        s.error("expected a number, name, or parenthesized expression")

    def _name(self, name, l, c):
        ctx = self.ctx
        s = self.s
        # braces subscript: u_{tt} tokenizes as name 'u_' then '{tt}'
        if name.endswith('_') and s.at_op('{'):
            s.next()
            k2, v2, l2, c2 = s.next()
            if k2 != 'name':
                raise DslError("expected derivative subscript", l2, c2)
            s.expect_op('}')
            return self._subscripted(name[:-1], v2, l, c)
        if name == 'Int':
            return self._antideriv(l, c)
        ticks = 0
        while s.at_op("'"):
            s.next()
            ticks += 1
        if s.at_op('('):
            args = self._call_args()
            return self._apply(name, args, ticks, l, c)
        if ticks:
            raise DslError("derivative marks need an argument list", l, c)
        kind = ctx.kinds.get(name)
        if kind is None:
            if '_' in name:
                head, _, sub = name.partition('_')
                return self._subscripted(head, sub, l, c)
            raise DslError("undeclared name %r" % name, l, c)
        if kind == 'func':
            raise DslError("function symbol %r needs an argument list" % name,
                           l, c)
        try:
            return ctx.sym(name)
        except ExprError as ex:
            raise DslError(str(ex), l, c)

    def _subscripted(self, head, sub, l, c):
        ctx = self.ctx
        kind = ctx.kinds.get(head)
        if kind == 'dep':
            try:
                return ctx.jet(head, sub)
            except ExprError as ex:
                raise DslError(str(ex), l, c)
        if kind == 'func':
            decl = ctx.funcs[head]
            didx = [0] * len(decl.argnames)
            rest = sub
            while rest:
                for i, an in enumerate(sorted(decl.argnames, key=len,
                                              reverse=True)):
                    if rest.startswith(an):
                        didx[decl.argnames.index(an)] += 1
                        rest = rest[len(an):]
                        break
                else:
                    raise DslError("cannot read subscript %r on %r"
                                   % (sub, head), l, c)
            args = tuple(ctx.sym(a) if ctx.kinds.get(a) != 'dep'
                         else ctx.jet(a, '') for a in decl.argnames)
            return ctx.func_expr(head, args, tuple(didx))
        raise DslError("cannot subscript %r" % head, l, c)

    def _call_args(self):
        s = self.s
        s.expect_op('(')
        args = []
        if not s.at_op(')'):
            args.append(self._sum())
            while s.at_op(','):
                s.next()
                args.append(self._sum())
        s.expect_op(')')
        return args

    def _apply(self, name, args, ticks, l, c):
        ctx = self.ctx
        if ctx.kinds.get(name) != 'func':
            raise DslError("%r is not a declared function symbol" % name, l, c)
        decl = ctx.funcs[name]
        if len(args) != len(decl.argnames):
            raise DslError("%r takes %d argument(s)" % (name, len(decl.argnames)),
                           l, c)
        didx = [0] * len(decl.argnames)
        if ticks:
            if len(decl.argnames) != 1:
                raise DslError("derivative marks need a single-argument symbol",
                               l, c)
            didx[0] = ticks
        return ctx.func_expr(name, tuple(args), tuple(didx))

    def _antideriv(self, l, c):
        s = self.s
        s.expect_op('(')
        k, fname, l2, c2 = s.next()
        if k != 'name' or self.ctx.kinds.get(fname) != 'func':
            raise DslError("Int(...) needs a declared function symbol", l2, c2)
        inner = self._call_args()
        s.expect_op(',')
        k3, vname, l3, c3 = s.next()
        if k3 != 'name':
            raise DslError("Int(...) needs an integration variable", l3, c3)
        s.expect_op(')')
        gname = self.ctx.antideriv(fname)
        return self.ctx.func_expr(gname, tuple(inner), (0,))


def parse_expr(ctx, text, lineno=1):
    s = _Stream(tokenize(text, lineno))
    e = ExprParser(ctx, s).parse()
    k, v, l, c = s.peek()
    while k == 'nl':
        s.next()
        k, v, l, c = s.peek()
    if k != 'end':
        raise DslError("unexpected trailing %r" % (v or k), l, c)
    return e


class SystemSpec:
    """Parsed DSL document: a declaration context plus equations,
    function-space constraints, and weight choices."""

    def __init__(self):
        self.ctx = None
        self.dep_args = {}
        self.equations = []      # (lead_atom or None, rhs, residual)
        self.constraints = []    # (funcname, didx, rhs)
        self.weights = {}        # display name -> Fraction
        self.source = None


def parse_document(text):
    spec = SystemSpec()
    spec.source = text
    ctx = None
    indeps = None
    lines = text.split("\n")
    for off, raw in enumerate(lines):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        lineno = off + 1
        word = body.split(None, 1)[0]
        rest = body[len(word):].strip()
        if word == 'indep':
            if indeps is not None:
                raise DslError("indep declared twice", lineno)
            indeps = tuple(rest.split())
            if not indeps:
                raise DslError("indep needs at least one name", lineno)
            ctx = Context(indeps=indeps)
            spec.ctx = ctx
            continue
        if ctx is None:
            raise DslError("indep must come first", lineno)
        if word == 'dep':
            name, args = _parse_head(rest, lineno)
            for a in args:
                if a not in indeps:
                    raise DslError("dependent variable argument %r is not an "
                                   "independent variable" % a, lineno)
            ctx.add_dep(name)
            spec.dep_args[name] = tuple(args)
        elif word == 'param':
            for name in rest.split():
                ctx.add_param(name)
        elif word == 'exponent':
            names = rest.split()
            if len(names) != 1:
                raise DslError("exponent takes exactly one name", lineno)
            try:
                ctx.set_exponent(names[0])
            except ExprError as ex:
                raise DslError(str(ex), lineno)
        elif word == 'func':
            _parse_func(ctx, rest, lineno)
        elif word == 'funcspace':
            _parse_funcspace(ctx, spec, rest, lineno)
        elif word == 'eq':
            _parse_eq(ctx, spec, rest, lineno)
        elif word == 'weight':
            name, _, val = rest.partition('=')
            name = name.strip()
            try:
                spec.weights[name] = Fraction(val.strip())
            except (ValueError, ZeroDivisionError):
                raise DslError("weight value must be rational", lineno)
        else:
            raise DslError("unknown statement %r" % word, lineno)
    if ctx is None:
        raise DslError("empty document: no indep statement", 1)
    return spec


def _parse_head(text, lineno):
    m = re.match(r"^([A-Za-z][A-Za-z0-9_]*)\s*\(([^)]*)\)\s*$", text)
    if not m:
        raise DslError("expected name(arguments)", lineno)
    args = [a.strip() for a in m.group(2).split(",") if a.strip()]
    return m.group(1), args


def _parse_func(ctx, rest, lineno):
    m = re.match(r"^([A-Za-z][A-Za-z0-9_]*)\s*\(([^)]*)\)\s*(.*)$", rest)
    if not m:
        raise DslError("expected func name(argument)", lineno)
    name = m.group(1)
    args = [a.strip() for a in m.group(2).split(",") if a.strip()]
    tail = m.group(3).strip()
    deriv_src = None
    antideriv = None
    if tail.startswith('deriv '):
        body = tail[len('deriv '):]
        if ' antideriv ' in body:
            body, anti = body.rsplit(' antideriv ', 1)
            antideriv = anti.strip()
        deriv_src = body.strip()
    elif tail.startswith('antideriv '):
        antideriv = tail[len('antideriv '):].strip()
    elif tail:
        raise DslError("unexpected %r after func declaration" % tail, lineno)
    for a in args:
        if ctx.kinds.get(a) not in ('dep', 'indep', 'param'):
            raise DslError("function argument %r is not declared" % a, lineno)
    deriv = None
    if deriv_src is not None:
        if len(args) != 1:
            raise DslError("deriv needs a single-argument symbol", lineno)
        deriv = parse_expr(ctx, deriv_src, lineno)
    ctx.declare_func(name, tuple(args), deriv=deriv, antideriv=antideriv)


def _parse_funcspace(ctx, spec, rest, lineno):
    m = re.match(r"^([A-Za-z][A-Za-z0-9_]*)\s*\(([^)]*)\)\s*(.*)$", rest)
    if not m:
        raise DslError("expected funcspace name(arguments)", lineno)
    name = m.group(1)
    args = [a.strip() for a in m.group(2).split(",") if a.strip()]
    for a in args:
        if ctx.kinds.get(a) != 'indep':
            raise DslError("funcspace argument %r is not an independent "
                           "variable" % a, lineno)
    ctx.declare_func(name, tuple(args))
    tail = m.group(3).strip()
    if not tail:
        return
    if not tail.startswith('constraint '):
        raise DslError("expected 'constraint' after funcspace declaration",
                       lineno)
    lead_src, _, rhs_src = tail[len('constraint '):].partition('=')
    lead_src = lead_src.strip()
    if not rhs_src:
        raise DslError("constraint needs '='", lineno)
    lead = parse_expr(ctx, lead_src, lineno)
    fname, didx = _as_func_lead(lead, lineno)
    if fname != name:
        raise DslError("constraint must be on %r" % name, lineno)
    rhs = parse_expr(ctx, rhs_src.strip(), lineno)
    spec.constraints.append((fname, didx, rhs))


def _as_func_lead(e, lineno):
    if len(e.terms) != 1:
        raise DslError("constraint left side must be a single derivative",
                       lineno)
    ((mono, c),) = e.terms.items()
    if c != 1 or len(mono) != 1 or mono[0][0][0] != 'f':
        raise DslError("constraint left side must be a single derivative",
                       lineno)
    atom = mono[0][0]
    return atom[1], atom[3]


def _parse_eq(ctx, spec, rest, lineno):
    lhs_src, _, rhs_src = rest.partition('=')
    if not rhs_src:
        raise DslError("eq needs '='", lineno)
    lhs_src = lhs_src.strip()
    rhs = parse_expr(ctx, rhs_src.strip(), lineno)
    if lhs_src == '0':
        spec.equations.append((None, None, rhs))
        return
    lhs = parse_expr(ctx, lhs_src, lineno)
    if len(lhs.terms) != 1:
        raise DslError("eq left side must be a jet variable or 0", lineno)
    ((mono, c),) = lhs.terms.items()
    if c != 1 or len(mono) != 1 or mono[0][0][0] != 'j':
        raise DslError("eq left side must be a jet variable or 0", lineno)
    spec.equations.append((mono[0][0], rhs, lhs - rhs))
