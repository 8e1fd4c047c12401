"""Scaling scan: enumerate candidate densities rank by rank, solve the
exactness conditions, and integrate the matching fluxes.

The scan applies to evolution systems (every equation solved for a first
derivative in one shared direction).  A candidate at a given scaling rank is
a sum of unknown-coefficient monomials; its direction-derivative, expanded
on solutions, must be annihilated by the Euler operators of the remaining
hierarchy.  The kernel of that linear condition gives the densities, and
homotopy integration recovers one flux per density.
"""

from .expr import le_is_const
from .varcalc import euler, homotopy_integrate, drop_static
from .weights import Weights, solve_weights, weighted_params
from .candidates import build_candidate, hierarchy_vars, CandidateError
from .laws import ConservationLaw, verify_law
from . import linsolve


class PipelineError(Exception):
    pass


def resolve_weights(system, choices=None):
    """A concrete weight assignment: an explicit Weights instance, choices
    passed through the solver, or the first minimal default."""
    if isinstance(choices, Weights):
        return choices
    found = solve_weights(system, choices)
    return found[0]


def scan_rank(system, w, rank, degree):
    """Verified conservation laws at one scaling rank."""
    ctx = system.ctx
    d = system.direction
    if d is None:
        raise PipelineError("the scan needs an evolution direction")
    hvars = tuple(hierarchy_vars(system))
    try:
        candidate, names = build_candidate(system, w, rank, degree)
    except CandidateError:
        return []
    P = system.reduce_on_solutions(candidate.diff(d))
    rows = []
    for dep in ctx.deps:
        comp = system.constraints.reduce(euler(P, dep, vars=hvars))
        rows.extend(linsolve.split_linear([comp], names))
    try:
        vecs = linsolve.kernel_basis(rows, names)
    except linsolve.NonlinearError as exc:
        raise PipelineError("exactness conditions are not linear in the "
                            "candidate coefficients: %s" % exc)
    if len(hvars) != 1:
        raise PipelineError("the scan handles one hierarchy variable, "
                            "have %s" % (hvars,))
    t = hvars[0]
    out = []
    for vec in vecs:
        density = candidate.bind({n: vec[n] for n in names})
        if _param_multiple(system, density):
            continue
        Pd = system.reduce_on_solutions(density.diff(d))
        flux = homotopy_integrate(Pd.scale(-1), t)
        law = ConservationLaw(system, density, {t: drop_static(flux, t)}, d,
                              name="rank %s" % rank)
        ok, residual = verify_law(system, law)
        if not ok:
            raise PipelineError("law at rank %s failed verification: %s"
                                % (rank, residual))
        out.append(law)
    return out


def _param_multiple(system, density):
    """True when every monomial shares a power of a weighted parameter;
    such a density is a constant multiple of a law at another rank and is
    reported there instead."""
    for p in weighted_params(system):
        atom = ('s', p)
        exps = []
        for mono in density.terms:
            e = 0
            for a, le in mono:
                if a == atom and le_is_const(le):
                    e = le[0]
            exps.append(e)
        if exps and (all(e > 0 for e in exps) or all(e < 0 for e in exps)):
            return True
    return False


def scan(system, ranks, degree, weights=None):
    """Scan a range of ranks; returns all verified laws found."""
    w = resolve_weights(system, weights)
    out = []
    for rank in ranks:
        out.extend(scan_rank(system, w, rank, degree))
    return out
