"""Semi-algebraic formulas, the condition (R) check, exceptional values,
and the univariate base case of the volume recursion."""

from __future__ import annotations

from dataclasses import dataclass

from gmpy2 import mpq, mpz

from .exact import (
    Polynomial,
    AlgebraicNumber,
    isolate_real_roots,
    resultant,
    sign_at,
    sign_at_rational,
    squarefree_part,
    uni_gcd,
)
from .balls import Ball


class DegenerateInput(ValueError):
    """Elimination degenerated (identically-zero resultants after shears)."""


class UnboundedRegion(ValueError):
    """The described set is unbounded where boundedness is required."""


# ---------------------------------------------------------------------------
# formulas
# ---------------------------------------------------------------------------

_OPS = {">=", ">", "<=", "<"}


class Formula:
    """AST over atoms P ?? 0 with ?? in >=, >, <=, <."""

    def substitute(self, var: str, value) -> "Formula":
        raise NotImplementedError

    def atom_polynomials(self) -> list[Polynomial]:
        raise NotImplementedError

    def evaluate(self, assignment: dict) -> bool:
        raise NotImplementedError


class _TrueFormula(Formula):
    def substitute(self, var, value):
        return self

    def atom_polynomials(self):
        return []

    def evaluate(self, assignment):
        return True

    def __repr__(self):
        return "TRUE"


class _FalseFormula(Formula):
    def substitute(self, var, value):
        return self

    def atom_polynomials(self):
        return []

    def evaluate(self, assignment):
        return False

    def __repr__(self):
        return "FALSE"


TRUE = _TrueFormula()
FALSE = _FalseFormula()


@dataclass(frozen=True)
class Atom(Formula):
    poly: Polynomial
    op: str  # ">=", ">", "<=", "<"

    def __post_init__(self):
        if self.op not in _OPS:
            raise ValueError(f"bad relation {self.op!r}")

    def substitute(self, var, value):
        if var not in self.poly.vars:
            return self
        p = self.poly.substitute(var, value)
        if p.is_constant():
            return TRUE if _sign_ok(_sign_of_const(p), self.op) else FALSE
        return Atom(p, self.op)

    def atom_polynomials(self):
        return [self.poly]

    def evaluate(self, assignment):
        s = _sign_at_point(self.poly, assignment)
        return _sign_ok(s, self.op)

    def __repr__(self):
        return f"({self.poly} {self.op} 0)"


@dataclass(frozen=True)
class And(Formula):
    parts: tuple

    def substitute(self, var, value):
        out = []
        for p in self.parts:
            q = p.substitute(var, value)
            if q is FALSE:
                return FALSE
            if q is not TRUE:
                out.append(q)
        if not out:
            return TRUE
        if len(out) == 1:
            return out[0]
        return And(tuple(out))

    def atom_polynomials(self):
        return [q for p in self.parts for q in p.atom_polynomials()]

    def evaluate(self, assignment):
        return all(p.evaluate(assignment) for p in self.parts)

    def __repr__(self):
        return "(" + " & ".join(map(repr, self.parts)) + ")"


@dataclass(frozen=True)
class Or(Formula):
    parts: tuple

    def substitute(self, var, value):
        out = []
        for p in self.parts:
            q = p.substitute(var, value)
            if q is TRUE:
                return TRUE
            if q is not FALSE:
                out.append(q)
        if not out:
            return FALSE
        if len(out) == 1:
            return out[0]
        return Or(tuple(out))

    def atom_polynomials(self):
        return [q for p in self.parts for q in p.atom_polynomials()]

    def evaluate(self, assignment):
        return any(p.evaluate(assignment) for p in self.parts)

    def __repr__(self):
        return "(" + " | ".join(map(repr, self.parts)) + ")"


def conj(*parts) -> Formula:
    flat = [p for p in parts if p is not TRUE]
    if any(p is FALSE for p in flat):
        return FALSE
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def _sign_of_const(p: Polynomial) -> int:
    v = p.constant_value()
    return 1 if v > 0 else (-1 if v < 0 else 0)


def _sign_ok(s: int, op: str) -> bool:
    if op == ">=":
        return s >= 0
    if op == ">":
        return s > 0
    if op == "<=":
        return s <= 0
    return s < 0


def _sign_at_point(poly: Polynomial, assignment: dict) -> int:
    """Exact sign at a point with rational and/or one algebraic coordinate."""
    alg_vars = [v for v, x in assignment.items()
                if isinstance(x, AlgebraicNumber) and x.rational_value is None]
    p = poly
    for v, x in assignment.items():
        if v in alg_vars or v not in p.vars:
            continue
        val = x.rational_value if isinstance(x, AlgebraicNumber) else mpq(x)
        p = p.substitute(v, val)
    alg_vars = [v for v in alg_vars if v in p.vars]
    if not alg_vars:
        return _sign_of_const(p) if p.is_constant() else _sign_of_const(
            Polynomial.constant(p.eval_rational([mpq(0)] * len(p.vars))))
    if len(alg_vars) > 1:
        raise NotImplementedError("sign at a point with several algebraic "
                                  "coordinates is not supported")
    v = alg_vars[0]
    p = p.drop_unused()
    return sign_at(p, assignment[v])


def evaluate_formula(theta: Formula, point, variables=None) -> bool:
    """Exact truth value at a point given as a mapping or aligned tuple."""
    if isinstance(point, dict):
        return theta.evaluate(point)
    if variables is None:
        raise ValueError("tuple point needs the variable order")
    return theta.evaluate(dict(zip(variables, point)))


# ---------------------------------------------------------------------------
# elimination: projections and condition (R)
# ---------------------------------------------------------------------------

def _project_system(polys: list[Polynomial], keep: str):
    """Univariate polynomials in `keep` whose common roots contain the
    projection of the real variety of the system.  Returns None when an
    elimination route degenerates, or the string "empty" when a nonzero
    constant certifies emptiness."""
    work = []
    for p in polys:
        p = p.drop_unused()
        if p.is_zero():
            continue
        if p.is_constant():
            return "empty"  # nonzero constant in the system
        work.append(p)
    while True:
        elim_vars = sorted({v for p in work for v in p.used_vars() if v != keep})
        if not elim_vars:
            break
        v = elim_vars[-1]
        with_v = [p for p in work if v in p.used_vars()]
        without = [p for p in work if v not in p.used_vars()]
        if len(with_v) == 1:
            # a lone polynomial in v imposes no computable constraint
            return None
        # all-pairs resultants; identically-zero ones (common factors in v)
        # are discarded, which only enlarges the projection superset
        new = []
        seen = set()
        for i in range(len(with_v)):
            for j in range(i + 1, len(with_v)):
                r = resultant(with_v[i], with_v[j], v).drop_unused()
                if r.is_zero():
                    continue
                if r.is_constant():
                    return "empty"
                r = r.primitive()
                if hash(r) in seen:
                    continue
                seen.add(hash(r))
                new.append(r)
        if not new:
            return None
        work = without + new
    return work


def _shears(variables, max_c=4):
    """Deterministic shear substitutions x_i <- x_i + c*x_j."""
    yield {}
    n = len(variables)
    for c in range(1, max_c + 1):
        for i in range(n):
            for j in range(n):
                if i != j:
                    yield {variables[i]: (variables[i], variables[j], c)}


def _apply_shear(p: Polynomial, shear: dict) -> Polynomial:
    for v, (vi, vj, c) in shear.items():
        sub = Polynomial.variable(vi, p.vars) + c * Polynomial.variable(vj, p.vars)
        p = p.substitute(v, sub).with_vars(p.vars)
    return p


def _combined_univariate(unis: list[Polynomial], keep: str) -> Polynomial | None:
    """gcd of the univariate projections (None if the gcd is trivial zero)."""
    g: list = []
    for p in unis:
        c = p.with_vars((keep,)).univariate_coeffs()
        g = c if not g else uni_gcd(g, c)
        if len(g) == 1:
            return Polynomial.constant(1, (keep,))
    if not g:
        return None
    return Polynomial.univariate(g, keep)


def simplest_rational_in(lo: mpq, hi: mpq) -> mpq:
    """The rational with smallest denominator in [lo, hi]."""
    lo, hi = mpq(lo), mpq(hi)
    if lo > hi:
        raise ValueError("empty interval")
    fl = lo.numerator // lo.denominator  # floor
    if fl >= lo:
        return mpq(fl)
    if fl + 1 <= hi:
        return mpq(fl + 1)
    frac = simplest_rational_in(1 / (hi - fl), 1 / (lo - fl))
    return fl + 1 / frac


def rational_root_value(a: AlgebraicNumber, max_den=mpz(1) << 24) -> mpq | None:
    """Detect whether `a` is rational with a small denominator; exact verify."""
    if a.rational_value is not None:
        return a.rational_value
    p = 16
    while True:
        lo, hi = a.refine(p)
        cand = simplest_rational_in(lo, hi)
        if cand.denominator > max_den:
            return None
        if sign_at_rational(a.poly, cand) == 0 and lo < cand < hi:
            a._set_rational(cand)
            return cand
        if p > 2 * int(max_den).bit_length() + 32:
            return None
        p *= 2


def check_condition_R(f: Polynomial, split: str | None = None) -> str:
    """Does {f = df/dt = df/dx_i = 0 (all vars)} have no real solution?

    Returns "holds", "violated", or "unknown".
    """
    f = f.drop_unused()
    variables = f.vars
    if split is not None and split in variables:
        dt = f.derivative(split).drop_unused()
        if dt.is_constant() and not dt.is_zero():
            return "holds"
    system = [f] + [f.derivative(v) for v in variables]
    # cheap explicit-point scan for a violation certificate
    grid = [mpq(0), mpq(1), mpq(-1), mpq(1, 2), mpq(-1, 2), mpq(2), mpq(-2)]
    n = len(variables)
    if n <= 3:
        for point in _grid_points(grid, n):
            if all(p.eval_rational(point) == 0 for p in system):
                return "violated"
    if n > 3:
        return "unknown"
    keep = variables[0]
    for shear in _shears(variables[1:] if n > 1 else variables):
        sys2 = [_apply_shear(p, shear) for p in system] if shear else system
        proj = _project_system(sys2, keep)
        if proj is None:
            continue
        if proj == "empty":
            return "holds"
        g = _combined_univariate(proj, keep)
        if g is None:
            continue
        if g.is_constant():
            return "holds" if not g.is_zero() else "unknown"
        roots = isolate_real_roots(g)
        if not roots:
            return "holds"
        # try to certify a violation at rational candidate roots
        if not shear:
            for r in roots:
                v = rational_root_value(r)
                if v is None:
                    continue
                spec = [p.substitute(keep, v).drop_unused() for p in system]
                if _common_real_zero(spec):
                    return "violated"
        return "unknown"
    return "unknown"


def _grid_points(grid, n):
    if n == 0:
        yield ()
        return
    for rest in _grid_points(grid, n - 1):
        for v in grid:
            yield (v,) + rest


def _common_real_zero(polys: list[Polynomial]) -> bool:
    """Certified common real zero for specialized low-dimensional systems."""
    polys = [p.drop_unused() for p in polys]
    if any(p.is_constant() and not p.is_zero() for p in polys):
        return False
    polys = [p for p in polys if not p.is_zero()]
    if not polys:
        return True  # everything vanished identically
    used = sorted({v for p in polys for v in p.used_vars()})
    if not used:
        return True
    if len(used) == 1:
        g: list = []
        for p in polys:
            c = p.with_vars((used[0],)).univariate_coeffs()
            g = c if not g else uni_gcd(g, c)
            if len(g) == 1:
                return False
        return bool(g) and bool(isolate_real_roots(Polynomial.univariate(g, used[0])))
    return False  # inconclusive; callers treat as "no certificate"


# ---------------------------------------------------------------------------
# exceptional values (Lemma 8 via iterated resultants)
# ---------------------------------------------------------------------------

def critical_values(f: Polynomial, t: str) -> list[AlgebraicNumber]:
    """Real roots of a nonzero g in Q[t] containing the exceptional set of f.

    Eliminates the non-parameter variables from {f, df/dx_1, ..., df/dx_n}
    by iterated resultants; a superset of the exceptional values only refines
    the subdivision downstream.
    """
    f = f.with_vars(f.vars)  # defensive copy of the view
    xvars = tuple(v for v in f.vars if v != t)
    if not xvars:
        raise ValueError("critical_values needs at least one non-parameter "
                         "variable")
    system = [f] + [f.derivative(v) for v in xvars]
    for shear in _shears(xvars):
        sys2 = [_apply_shear(p, shear) for p in system] if shear else system
        proj = _project_system(sys2, t)
        if proj is None:
            continue
        if proj == "empty":
            return []
        g = _combined_univariate(proj, t)
        if g is None:
            continue
        if g.is_constant():
            return []
        g = squarefree_part(g)
        return isolate_real_roots(g)
    raise DegenerateInput("degenerate input: all elimination routes vanished")


# ---------------------------------------------------------------------------
# univariate base case
# ---------------------------------------------------------------------------

def univariate_volume(g: Polynomial, theta: Formula, p: int) -> Ball:
    """Ball of width <= 2^-p containing the length of {g >= 0} /\\ theta."""
    var = (g.used_vars() or ("y",))[0]
    polys = [g]
    for q in theta.atom_polynomials():
        polys.append(q)
    roots: list[AlgebraicNumber] = []
    for q in polys:
        q = q.drop_unused()
        if q.is_zero() or q.is_constant():
            continue
        uv = q.used_vars()
        if len(uv) != 1:
            raise ValueError("univariate_volume: formula is not univariate")
        roots.extend(isolate_real_roots(q.with_vars((var,))))
    roots = _sorted_distinct(roots)

    def accepted_at(x: mpq) -> bool:
        assignment = {var: x}
        if not _eval_g(g, var, x):
            return False
        return theta.evaluate(assignment)

    # sample points of the open intervals of the root subdivision
    samples: list[tuple[mpq, int, int]] = []  # (sample, left idx, right idx)
    if not roots:
        if accepted_at(mpq(0)):
            raise UnboundedRegion("unbounded 1-dimensional region")
        return Ball.zero(p + 4)
    lo0 = roots[0].lo - 1
    if accepted_at(lo0):
        raise UnboundedRegion("unbounded 1-dimensional region")
    hi0 = roots[-1].hi + 1
    if accepted_at(hi0):
        raise UnboundedRegion("unbounded 1-dimensional region")
    accepted_pairs: list[tuple[int, int]] = []
    for i in range(len(roots) - 1):
        a, b = roots[i], roots[i + 1]
        q = 8
        while not (a.hi < b.lo):
            a.refine(q)
            b.refine(q)
            q *= 2
        s = (a.hi + b.lo) / 2
        if accepted_at(s):
            accepted_pairs.append((i, i + 1))
    if not accepted_pairs:
        return Ball.zero(p + 4)
    # net endpoint multiset: sum of (right - left) telescopes
    coeff: dict[int, int] = {}
    for i, j in accepted_pairs:
        coeff[j] = coeff.get(j, 0) + 1
        coeff[i] = coeff.get(i, 0) - 1
    count = sum(1 for c in coeff.values() if c)
    prec = p + max(1, count).bit_length() + 4
    total = Ball.zero(prec)
    for idx, c in sorted(coeff.items()):
        if not c:
            continue
        lo, hi = roots[idx].refine(prec)
        term = Ball.from_interval(lo, hi, prec).mul(Ball.exact_int(c, prec), prec)
        total = total.add(term, prec)
    return total


def _eval_g(g: Polynomial, var: str, x: mpq) -> bool:
    gv = g.drop_unused()
    if gv.is_zero():
        return True
    if gv.is_constant():
        return gv.constant_value() >= 0
    return sign_at_rational(gv.with_vars((var,)).univariate_coeffs(), x) >= 0


def _sorted_distinct(roots: list[AlgebraicNumber]) -> list[AlgebraicNumber]:
    if not roots:
        return []
    roots = sorted(roots, key=lambda r: (r.lo + r.hi) / 2)
    # the float presort can misorder touching enclosures; fix by compare
    out = [roots[0]]
    for r in roots[1:]:
        c = out[-1].compare(r)
        if c == 0:
            continue
        if c < 0:
            out.append(r)
        else:
            # insertion by exact comparison (rare path)
            inserted = False
            for k in range(len(out) - 1, -1, -1):
                ck = out[k].compare(r)
                if ck == 0:
                    inserted = True
                    break
                if ck < 0:
                    out.insert(k + 1, r)
                    inserted = True
                    break
            if not inserted:
                out.insert(0, r)
    return out


@dataclass
class Region:
    """U = {(rho, x) in A /\\ pr^-1(I) : theta}; the component-union property
    is a caller-asserted precondition."""
    f: Polynomial
    theta: Formula
    variables: tuple[str, ...]
    interval: tuple | None = None  # (lo, hi) with None for +-infinity
