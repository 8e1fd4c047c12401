"""Built-in model corpus.

Each entry is a pair of files in this directory: ``<id>.dsl`` holding the
system in the input language, and ``<id>.json`` holding metadata and the
reference conservation laws (component expressions as strings, parsed on
demand against a freshly built system).

Set ``CONSLAW_CORPUS_DIR`` to point the loader at a different directory.
"""

import json
import os
from fractions import Fraction

from ..parser import parse_expr
from ..system import PdeSystem


class CorpusError(Exception):
    pass


def corpus_dir():
    override = os.environ.get("CONSLAW_CORPUS_DIR")
    if override:
        if not os.path.isdir(override):
            raise CorpusError(
                "CONSLAW_CORPUS_DIR is not a directory: %r" % override)
        return override
    return os.path.dirname(os.path.abspath(__file__))


def list_ids():
    names = [fn[:-5] for fn in os.listdir(corpus_dir())
             if fn.endswith(".json")]
    return sorted(names)


def _fracs(env):
    return {k: Fraction(str(v)) for k, v in env.items()}


class CorpusLaw:
    """One reference law: component strings, optional multiplier strings,
    an optional per-law parameter binding, and a table label."""

    def __init__(self, entry, data, index):
        self.entry = entry
        self.index = index
        self.name = data.get("name") or "law %d" % (index + 1)
        self.components = dict(data["components"])
        mults = data.get("multipliers")
        self.multipliers = list(mults) if mults else None
        self.bind = _fracs(data.get("bind") or {})
        self.table = data.get("table")

    def build(self, system):
        """Construct the ConservationLaw on a freshly parsed system.  A
        per-law binding mutates the shared context, so bound laws must
        never share a system object."""
        from ..laws import ConservationLaw
        ctx = system.ctx
        comps = {v: parse_expr(ctx, s) for v, s in self.components.items()}
        mults = None
        if self.multipliers is not None:
            mults = tuple(parse_expr(ctx, s) for s in self.multipliers)
        dv = self.entry.density_var or system.direction or 't'
        if dv not in comps:
            raise CorpusError("law %r of %r lacks a %r component"
                              % (self.name, self.entry.id, dv))
        density = comps.pop(dv)
        law = ConservationLaw(system, density, comps, dv, mults, self.name)
        if self.bind:
            law = law.bind(self.bind)
        return law


class CorpusEntry:
    def __init__(self, cid, data, dirname):
        self.id = cid
        self.title = data.get("title", cid)
        self.method = data.get("method", "multiplier")
        self.data = data
        sysfile = data.get("system", cid + ".dsl")
        path = os.path.join(dirname, sysfile)
        try:
            with open(path) as fh:
                self.dsl_text = fh.read()
        except OSError as e:
            raise CorpusError("corpus entry %r: cannot read %s (%s)"
                              % (cid, sysfile, e))
        self.density_var = data.get("density_var")
        self.side_conditions = list(data.get("side_conditions") or [])
        self.presets = {k: _fracs(v)
                        for k, v in (data.get("presets") or {}).items()}
        self.scan = data.get("scan") or {}
        self.determining = data.get("determining") or {}
        self.f_forms = data.get("f_forms") or []
        self.specializations = data.get("specializations") or []
        self.laws = [CorpusLaw(self, d, i)
                     for i, d in enumerate(data.get("laws") or [])]

    def system(self, preset=None, bind=None):
        """A freshly parsed PdeSystem, optionally specialized by a named
        preset and/or an explicit parameter binding."""
        sys = PdeSystem.from_text(self.dsl_text)
        env = {}
        if preset is not None:
            if preset not in self.presets:
                raise CorpusError("entry %r has no preset %r"
                                  % (self.id, preset))
            env.update(self.presets[preset])
        if bind:
            env.update(_fracs(bind))
        if env:
            sys = sys.bind(env)
        return sys

    def law(self, index, system=None):
        spec = self.laws[index]
        if system is None:
            system = self.system()
        elif spec.bind:
            raise CorpusError(
                "law %r binds parameters and needs its own system"
                % spec.name)
        return spec.build(system)

    def all_laws(self):
        return [self.law(i) for i in range(len(self.laws))]

    def specialization(self, name):
        for sp in self.specializations:
            if sp.get("name") == name:
                return sp
        raise CorpusError("entry %r has no specialization %r"
                          % (self.id, name))

    def __repr__(self):
        return "<CorpusEntry %s: %d laws>" % (self.id, len(self.laws))


def load(cid):
    dirname = corpus_dir()
    path = os.path.join(dirname, cid + ".json")
    if not os.path.exists(path):
        raise CorpusError("unknown corpus id %r (have: %s)"
                          % (cid, ", ".join(list_ids())))
    try:
        with open(path) as fh:
            data = json.load(fh)
    except ValueError as e:
        raise CorpusError("corpus entry %r: bad JSON (%s)" % (cid, e))
    return CorpusEntry(cid, data, dirname)


def load_all():
    return [load(cid) for cid in list_ids()]
