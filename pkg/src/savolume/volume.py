"""Volume orchestration: the single-inequality recursion, the product
deformation for several inequalities, and direct mode.

The recursion integrates the slice-volume function v over each interval cut
out by the exceptional values (plus every real singular point of the
Picard-Fuchs operator, so analytic continuation never has to cross an
interior singularity): the antiderivative of v vanishing at the right
endpoint solves P*(d/dt) with conditions [w'(rho_j) = v(rho_j)] and
[w(beta) = 0], and -w(alpha) is the piece.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from gmpy2 import mpq, mpz

from .exact import AlgebraicNumber, Polynomial, squarefree_part, isolate_real_roots
from .balls import (
    Ball,
    InconsistentSystem,
    InsufficientPrecision,
    PossibleSingularity,
)
from .semialg import (
    Formula,
    TRUE,
    Atom,
    conj,
    check_condition_R,
    critical_values,
    univariate_volume,
)
from .picardfuchs import DiffOp, PFPolicy, picard_fuchs
from .odelocal import StepTooLarge, local_basis, normalize_point
from .odetransit import ICSystem, dsolve, pick_good_points

logger = logging.getLogger("savolume")

PRECISION_CAP = 1 << 20


class PrecisionCapExceeded(RuntimeError):
    pass


class ConditionRError(ValueError):
    pass


@dataclass
class VolumeProblem:
    inequalities: list[Polynomial]
    variables: tuple[str, ...]
    mode: str = "deform"              # "deform" | "direct"
    coordinate: str | None = None
    assume_R: bool = False
    assume_compact: bool = False
    pf_operator_path: str | None = None
    budget: int = 40
    threads: int = 1

    def __post_init__(self):
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("variables must be distinct")
        if not self.inequalities:
            raise ValueError("at least one inequality is required")
        if self.mode == "direct" and len(self.inequalities) != 1:
            raise ValueError("direct mode requires exactly one inequality")


@dataclass
class VolumeResult:
    enclosure: Ball
    requested_bits: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def achieved_width(self) -> mpq:
        return 2 * self.enclosure.radius_fraction()

    def meets_target(self) -> bool:
        return self.achieved_width <= mpq(1, mpz(1) << self.requested_bits)


def _retrying(p_start: int, what: str):
    """Yield increasing working precisions p, 2p, ... up to the cap."""
    p = p_start
    while p <= PRECISION_CAP:
        yield p
        p *= 2
    raise PrecisionCapExceeded(f"precision cap exhausted during {what}")


def volume1(f: Polynomial, theta: Formula, variables, p: int,
            policy: PFPolicy | None = None, extra_subdivision=(),
            threads: int = 1, diagnostics: dict | None = None) -> Ball:
    """Volume of the union of connected components of {f >= 0} selected by
    theta, fibered over the first variable.  Ball of width <= 2^-p."""
    variables = tuple(variables)
    policy = policy or PFPolicy()
    diagnostics = diagnostics if diagnostics is not None else {}
    f = f.with_vars(variables) if set(f.vars) <= set(variables) else f
    if len(variables) == 1:
        return univariate_volume(f, theta, p)
    t = variables[0]

    crit = critical_values(f, t)
    diagnostics.setdefault("critical_values", []).append(
        [c.float_approx() for c in crit])
    P = picard_fuchs(f, t, policy)
    diagnostics.setdefault("operators", []).append(
        (P.order, max(c.total_degree() for c in P.coeffs)))
    subdivision = list(crit)
    lead = P.leading_coefficient().drop_unused()
    if not lead.is_constant():
        subdivision.extend(isolate_real_roots(squarefree_part(lead)))
    for x in extra_subdivision:
        subdivision.append(x if isinstance(x, AlgebraicNumber)
                           else AlgebraicNumber.from_rational(mpq(x)))
    subdivision = _sorted_dedup(subdivision)
    if len(subdivision) <= 1:
        return Ball.zero(p)

    npieces = len(subdivision) - 1
    p_piece = p + 1 + max(1, npieces).bit_length()
    total = Ball.zero(p_piece)
    Phat = P.right_mul_ddt()
    for a, b in zip(subdivision, subdivision[1:]):
        piece = _integrate_piece(f, theta, variables, P, Phat, a, b,
                                 p_piece, policy, threads, diagnostics)
        total = total.add(piece, p_piece + 8)
    return total


def _sorted_dedup(points: list[AlgebraicNumber]) -> list[AlgebraicNumber]:
    pts = sorted(points, key=lambda a: (a.refine(24)[0] + a.refine(24)[1]) / 2)
    out: list[AlgebraicNumber] = []
    for x in pts:
        if out and out[-1].equals(x):
            continue
        out.append(x)
    # strict exact ordering pass
    for i in range(len(out) - 1):
        if not out[i].compare(out[i + 1]) < 0:
            out.sort(key=AlgebraicNumberKey)
            break
    return out


class AlgebraicNumberKey:
    def __init__(self, a):
        self.a = a

    def __lt__(self, other):
        return self.a.compare(other.a) < 0


def _integrate_piece(f, theta, variables, P: DiffOp, Phat: DiffOp, a, b,
                     p: int, policy, threads, diagnostics) -> Ball:
    """Enclosure of the integral of the slice-volume over (a, b)."""
    t = variables[0]
    rhos = pick_good_points(P, a, b)
    retries = 0
    for p_work in _retrying(p + 20, "piece integration"):
        try:
            svals = _slice_values(f, theta, variables, rhos, p_work, policy,
                                  threads, diagnostics)
            if all(s.is_exact_zero() for s in svals):
                # good points pin the zero solution: the piece is exactly 0
                return Ball.zero(p)
            basis_b = local_basis(Phat, normalize_point(b))
            j0 = basis_b.index_of_one()
            if j0 is None:
                raise RuntimeError("no leading-1 element at the right "
                                   "endpoint for the integrated operator")
            conditions = [(rho, 1, s) for rho, s in zip(rhos, svals)]
            conditions.append((normalize_point(b), j0, Ball.zero(p_work)))
            ics = ICSystem(conditions, verified=True)
            val = dsolve(Phat, ics, normalize_point(a), p_work)
            piece = val.neg()
            wl = piece.width_log2_upper()
            if wl is not None and wl > -p:
                retries += 1
                continue
            if retries:
                diagnostics["retries"] = diagnostics.get("retries", 0) + retries
            return piece.round(p + 8)
        except (InsufficientPrecision, InconsistentSystem, StepTooLarge,
                PossibleSingularity) as exc:
            logger.info("piece retry at %d bits: %s", p_work, exc)
            retries += 1
            continue


def _slice_values(f, theta, variables, rhos, p_work, policy, threads,
                  diagnostics):
    t = variables[0]
    rest = variables[1:]

    def one(rho):
        frho = f.substitute(t, rho).with_vars(rest)
        trho = theta.substitute(t, rho)
        return volume1(frho, trho, rest, p_work, policy,
                       threads=1, diagnostics=diagnostics)

    if threads > 1 and len(rhos) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, rhos))
    return [one(rho) for rho in rhos]


def volume(inequalities: list[Polynomial], p: int,
           policy: PFPolicy | None = None, variables=None,
           threads: int = 1) -> VolumeResult:
    """Volume of the basic set {f_1 >= 0, ..., f_r >= 0} (assumed compact)
    through the product deformation f = f_1...f_r - t."""
    policy = policy or PFPolicy()
    diagnostics: dict = {}
    if variables is None:
        variables = ()
        for q in inequalities:
            for v in q.used_vars():
                if v not in variables:
                    variables = variables + (v,)
    variables = tuple(variables)
    ineqs = [q.with_vars(variables) for q in inequalities]

    if len(variables) == 0:
        raise ValueError("no variables in the problem")
    if len(variables) == 1:
        theta = conj(*[Atom(q, ">=") for q in ineqs[1:]]) if len(ineqs) > 1 \
            else TRUE
        for p_work in _retrying(p + 4, "univariate volume"):
            ball = univariate_volume(ineqs[0], theta, p_work)
            result = VolumeResult(ball, p, diagnostics)
            if result.meets_target():
                return result

    tname = "t"
    while tname in variables:
        tname += "_"
    prod = ineqs[0]
    for q in ineqs[1:]:
        prod = prod * q
    tvar = Polynomial.variable(tname, (tname,) + variables)
    f = prod.with_vars((tname,) + variables) - tvar

    crit = critical_values(f, tname)
    P = picard_fuchs(f, tname, policy)
    diagnostics["deformation_operator"] = (P.order,
                                           max(c.total_degree()
                                               for c in P.coeffs))
    # alpha below every positive critical value and every positive singular
    # point of P, and at most 1/2
    bound = mpq(1)
    for c in crit:
        if c.compare_rational(0) > 0:
            bound = min(bound, c.refine(24)[0])
    lead = P.leading_coefficient().drop_unused()
    if not lead.is_constant():
        for s in isolate_real_roots(squarefree_part(lead)):
            if s.compare_rational(0) > 0:
                bound = min(bound, s.refine(24)[0])
    alpha = _dyadic_floor(bound / 2)
    if alpha <= 0:
        raise RuntimeError("could not choose the deformation bound alpha")
    diagnostics["alpha"] = str(alpha)
    diagnostics["critical_values"] = [c.float_approx() for c in crit]

    theta_U = conj(*([Atom(q.with_vars((tname,) + variables), ">=")
                      for q in ineqs]
                     + [Atom(tvar, ">"),
                        Atom(Polynomial.constant(alpha, (tname,)) - tvar, ">")]))

    rhos = pick_good_points(P, mpq(0), alpha)
    retries = 0
    for p_work in _retrying(p + 24, "deformation solve"):
        try:
            svals = _slice_values(f, theta_U, (tname,) + variables, rhos,
                                  p_work, policy, threads, diagnostics)
            if all(s.is_exact_zero() for s in svals):
                return VolumeResult(Ball.zero(p), p, diagnostics)
            ics = ICSystem([(rho, 0, s) for rho, s in zip(rhos, svals)],
                           verified=True)
            ball = dsolve(P, ics, mpq(0), p_work)
            result = VolumeResult(ball.round(p + 8), p, diagnostics)
            if result.meets_target():
                if retries:
                    diagnostics["retries"] = diagnostics.get("retries", 0) + retries
                return result
            retries += 1
        except (InsufficientPrecision, InconsistentSystem, StepTooLarge,
                PossibleSingularity) as exc:
            logger.info("deformation retry at %d bits: %s", p_work, exc)
            retries += 1
            continue


def volume_direct(f: Polynomial, coordinate: str, p: int,
                  policy: PFPolicy | None = None, assume_R: bool = False,
                  variables=None, threads: int = 1) -> VolumeResult:
    """Volume of {f >= 0} (assumed compact) slicing along one coordinate."""
    policy = policy or PFPolicy()
    diagnostics: dict = {}
    if variables is None:
        variables = f.used_vars()
    variables = tuple(variables)
    if coordinate not in variables:
        raise ValueError(f"coordinate {coordinate!r} not among the variables")
    f = f.with_vars(variables)
    status = check_condition_R(f, coordinate)
    diagnostics["condition_R"] = status
    if status == "violated":
        raise ConditionRError("condition (R) is violated for this input")
    if status == "unknown" and not assume_R:
        raise ConditionRError("condition (R) could not be verified; "
                              "pass --assume-R to proceed")
    order = (coordinate,) + tuple(v for v in variables if v != coordinate)
    retries = 0
    for p_work in _retrying(p + 8, "direct volume"):
        ball = volume1(f.with_vars(order), TRUE, order, p_work, policy,
                       threads=threads, diagnostics=diagnostics)
        result = VolumeResult(ball.round(p_work), p, diagnostics)
        if result.meets_target():
            if retries:
                diagnostics["retries"] = diagnostics.get("retries", 0) + retries
            return result
        retries += 1


def _dyadic_floor(x: mpq, bits: int = 16) -> mpq:
    scaled = x * (mpz(1) << bits)
    return mpq(scaled.numerator // scaled.denominator, mpz(1) << bits)


def solve_problem(problem: VolumeProblem, p: int) -> VolumeResult:
    policy = PFPolicy(operator_path=problem.pf_operator_path,
                      budget=problem.budget)
    if problem.mode == "direct":
        return volume_direct(problem.inequalities[0], problem.coordinate,
                             p, policy, assume_R=problem.assume_R,
                             variables=problem.variables,
                             threads=problem.threads)
    return volume(problem.inequalities, p, policy,
                  variables=problem.variables, threads=problem.threads)
