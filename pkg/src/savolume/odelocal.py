"""Local analysis of a differential operator at a point.

Everything is organized around the theta-form of the operator at an
expansion point u: writing s = t - u and theta = s d/ds,

    s^m P = sum_j s^(j0+j) Q_j(theta),       Q_0 = indicial polynomial,

so that a series sum c_nu s^(gamma+nu) solves P(y)=0 iff the coefficient
vectors satisfy  sum_j M_j(nu) C_{nu-j} = 0, a linear recurrence whose
matrices couple the log powers.  The same data drives classification,
Frobenius bases, rigorous truncated evaluation (with a geometric-tail
majorant read off the recurrence), and the binary-splitting transition
matrices of the continuation engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from gmpy2 import mpq, mpz

from .exact import (
    AlgebraicNumber,
    DefiningSplit,
    Polynomial,
    ResidueRing,
    isolate_real_roots,
    split_defining,
    squarefree_part,
    uni_divmod,
    zero_test_at,
)
from .exact.poly import _uni_trim, QONE, QZERO
from .exact.roots import sign_at_rational
from .semialg import rational_root_value
from .picardfuchs import DiffOp
from .balls import (
    Ball,
    ComplexBall,
    InsufficientPrecision,
    _rcmp,
    ball_log,
    ball_pow_rational,
    cospi_sinpi,
    const_pi,
)


class NonRationalExponent(ValueError):
    """An indicial root is not rational: outside class D."""


class Infinity:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "infinity"


INFINITY = Infinity()


# ---------------------------------------------------------------------------
# coefficient fields: Q, Q(i), Q[y]/(q)
# ---------------------------------------------------------------------------

class QQField:
    """Plain rationals."""

    zero = QZERO
    one = QONE

    @staticmethod
    def from_mpq(x):
        return mpq(x)

    @staticmethod
    def add(a, b):
        return a + b

    @staticmethod
    def sub(a, b):
        return a - b

    @staticmethod
    def mul(a, b):
        return a * b

    @staticmethod
    def scale(a, c):
        return a * c

    @staticmethod
    def inv(a):
        return 1 / a

    @staticmethod
    def is_zero(a):
        return not a

    @staticmethod
    def to_ball(a, prec):
        return ComplexBall.from_real(Ball.from_fraction(a, prec))

    @staticmethod
    def abs_upper(a, prec=24):
        return abs(mpq(a))


class GaussField:
    """Gaussian rationals as (re, im) mpq pairs."""

    zero = (QZERO, QZERO)
    one = (QONE, QZERO)

    @staticmethod
    def from_mpq(x):
        return (mpq(x), QZERO)

    @staticmethod
    def add(a, b):
        return (a[0] + b[0], a[1] + b[1])

    @staticmethod
    def sub(a, b):
        return (a[0] - b[0], a[1] - b[1])

    @staticmethod
    def mul(a, b):
        return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])

    @staticmethod
    def scale(a, c):
        return (a[0] * c, a[1] * c)

    @staticmethod
    def inv(a):
        n = a[0] * a[0] + a[1] * a[1]
        if not n:
            raise ZeroDivisionError
        return (a[0] / n, -a[1] / n)

    @staticmethod
    def is_zero(a):
        return not a[0] and not a[1]

    @staticmethod
    def to_ball(a, prec):
        return ComplexBall(Ball.from_fraction(a[0], prec),
                           Ball.from_fraction(a[1], prec))

    @staticmethod
    def abs_upper(a, prec=24):
        # |re| + |im| bounds the modulus
        return abs(a[0]) + abs(a[1])


class NFField:
    """Q[y]/(q) tied to a specific root (zero tests are root-aware and may
    raise DefiningSplit, after which the caller rebuilds the tower)."""

    def __init__(self, ring: ResidueRing, root: AlgebraicNumber):
        self.ring = ring
        self.root = root
        self.zero = ring.zero()
        self.one = ring.one()
        self._ball_cache: dict[int, list] = {}

    def from_mpq(self, x):
        return self.ring.from_rational(x)

    def add(self, a, b):
        return self.ring.add(a, b)

    def sub(self, a, b):
        return self.ring.sub(a, b)

    def mul(self, a, b):
        return self.ring.mul(a, b)

    def scale(self, a, c):
        return self.ring.scale(a, c)

    def inv(self, a):
        if zero_test_at(self.ring, a, self.root):
            raise ZeroDivisionError("inverse of zero in number field")
        return self.ring.inverse(a)

    def is_zero(self, a):
        return zero_test_at(self.ring, a, self.root)

    def _root_powers(self, prec) -> list:
        got = self._ball_cache.get(prec)
        if got is None:
            lo, hi = self.root.refine(prec + 8)
            rb = Ball.from_interval(lo, hi, prec + 8)
            got = [Ball.exact_int(1, prec + 8)]
            for _ in range(self.ring.deg - 1):
                got.append(got[-1].mul(rb, prec + 8))
            self._ball_cache[prec] = got
        return got

    def to_ball(self, a, prec):
        pw = self._root_powers(prec)
        acc = Ball.zero(prec + 8)
        for c, p in zip(a, pw):
            if c:
                acc = acc.add(p.mul(Ball.from_fraction(c, prec + 8), prec + 8),
                              prec + 8)
        return ComplexBall.from_real(acc.round(prec))

    def abs_upper(self, a, prec=24):
        b = self.to_ball(a, prec).re
        m, e = b.mag_upper()
        return mpq(m) * (mpq(2) ** e if e >= 0 else mpq(1, mpz(1) << -e))


# ---------------------------------------------------------------------------
# theta form
# ---------------------------------------------------------------------------

def _falling_polys(m: int) -> list[list[mpq]]:
    """fall_i(x) = x(x-1)...(x-i+1) as dense mpq coefficient lists."""
    out = [[QONE]]
    for i in range(m):
        prev = out[-1]
        # multiply by (x - i)
        nxt = [QZERO] * (len(prev) + 1)
        for k, c in enumerate(prev):
            nxt[k + 1] += c
            nxt[k] -= c * i
        out.append(_uni_trim(nxt))
    return out


@dataclass
class ThetaForm:
    """s^(-j0-m-ish) normalized theta expansion of P at a point."""
    field: object
    j0: int                  # lowest s-exponent relative to degree -m
    Qs: list                 # Qs[j] = dense field-coeff list of Q_{j0+j}(theta)
    order: int

    @property
    def span(self) -> int:
        return len(self.Qs) - 1

    def indicial(self):
        return self.Qs[0]


def _taylor_shift_field(coeffs: list, field, u) -> list[list]:
    """Rows pi[i][a]: coefficient of s^a in p_i(u+s), u a field element."""
    out = []
    for c in coeffs:
        dense = c.univariate_coeffs() if not c.is_zero() else []
        vec = [field.from_mpq(x) for x in dense]
        # synthetic division shift by u
        n = len(vec)
        for i in range(n):
            for j in range(n - 2, i - 1, -1):
                vec[j] = field.add(vec[j], field.mul(vec[j + 1], u))
        out.append(vec)
    return out


def theta_form(P: DiffOp, u, field=None) -> ThetaForm:
    """Theta-form data of P at the point u.

    u may be an mpq (field defaults to QQField), a GaussField pair, or an
    AlgebraicNumber (field built from its defining polynomial).
    """
    if isinstance(u, AlgebraicNumber) and u.rational_value is not None:
        u = u.rational_value
    if field is None:
        if isinstance(u, AlgebraicNumber):
            field = NFField(ResidueRing(u.poly), u)
        elif isinstance(u, tuple):
            field = GaussField()
        else:
            field = QQField()
            u = mpq(u)
    uf = u if isinstance(u, tuple) or isinstance(u, AlgebraicNumber) else field.from_mpq(u)
    if isinstance(u, AlgebraicNumber):
        uf = field.ring.generator()
    pi = _taylor_shift_field(P.coeffs, field, uf)
    m = P.order
    fall = _falling_polys(m)
    # Q_j(theta) = sum_i pi[i][j+m... index a = j + i with j >= -m
    cols: dict[int, list] = {}
    for i, row in enumerate(pi):
        for a, coeff in enumerate(row):
            if field.is_zero(coeff):
                continue
            j = a - i  # relative exponent; j >= -m
            tgt = cols.get(j)
            fp = fall[i]
            if tgt is None:
                tgt = [field.zero] * (m + 1)
                cols[j] = tgt
            for r, fc in enumerate(fp):
                if fc:
                    tgt[r] = field.add(tgt[r], field.scale(coeff, fc))
    # trim identically-zero columns and find j0
    keys = sorted(cols)
    j0 = None
    for j in keys:
        if any(not field.is_zero(c) for c in cols[j]):
            j0 = j
            break
    if j0 is None:
        raise ValueError("zero operator in theta form")
    jmax = max(j for j in keys
               if any(not field.is_zero(c) for c in cols[j]))
    Qs = []
    for j in range(j0, jmax + 1):
        vec = cols.get(j, [field.zero] * (m + 1))
        while len(vec) > 1 and field.is_zero(vec[-1]):
            vec.pop()
        Qs.append(vec)
    return ThetaForm(field=field, j0=j0, Qs=Qs, order=m)


def reciprocal_operator(P: DiffOp) -> DiffOp:
    """Operator whose behaviour at 0 mirrors P at infinity (t -> 1/s)."""
    var = P.var
    s = Polynomial.variable(var)
    D = DiffOp([Polynomial.constant(0, (var,)), Polynomial.constant(1, (var,))], var)
    A1 = DiffOp([Polynomial.constant(0, (var,)), -(s * s)], var)  # -s^2 d/ds
    dmax = max(c.total_degree() for c in P.coeffs)
    acc = None
    Ai = DiffOp([Polynomial.constant(1, (var,))], var)
    for i, c in enumerate(P.coeffs):
        if i > 0:
            Ai = A1 * Ai if i > 1 else A1
        if c.is_zero():
            continue
        rev = _reverse_poly(c, var, dmax)
        term = DiffOp([rev], var) * Ai
        acc = term if acc is None else acc + term
    return acc.normalize_content()


def _reverse_poly(c: Polynomial, var: str, dmax: int) -> Polynomial:
    dense = c.univariate_coeffs()
    out = [QZERO] * (dmax + 1)
    for k, v in enumerate(dense):
        out[dmax - k] = v
    return Polynomial.univariate(out, var)


# ---------------------------------------------------------------------------
# classification and exponents
# ---------------------------------------------------------------------------

def normalize_point(u):
    """Detect small-denominator rational algebraic numbers; keeps the exact
    coefficient field rational whenever possible."""
    if isinstance(u, AlgebraicNumber):
        if u.rational_value is not None:
            return u.rational_value
        v = rational_root_value(u, max_den=mpz(1) << 16)
        if v is not None:
            return v
    return u


def theta_form_at(P: DiffOp, u):
    """theta_form with rational upgrade and defining-polynomial splitting;
    returns (tf, possibly reduced point)."""
    u = normalize_point(u)
    while True:
        try:
            return theta_form(P, u), u
        except DefiningSplit as split:
            if not isinstance(u, AlgebraicNumber):
                raise
            u = split_defining(u, split.factor)
            u = normalize_point(u)


def point_kind(P: DiffOp, u) -> str:
    """'ordinary' / 'regular_singular' / 'irregular' at a finite point.

    j0 = -order happens exactly when the leading coefficient does not vanish
    at u, which is the definition of an ordinary point.
    """
    tf, _ = theta_form_at(P, u)
    if tf.j0 == -P.order:
        return "ordinary"
    return "regular_singular" if len(tf.Qs[0]) - 1 == P.order else "irregular"


def indicial_exponents(P: DiffOp, u) -> list[mpq]:
    """Indicial roots at u (rational, with multiplicity) or raise."""
    if u is INFINITY:
        return indicial_exponents(reciprocal_operator(P), mpq(0))
    while True:
        tf, u = theta_form_at(P, u)
        if len(tf.Qs[0]) - 1 != P.order:
            raise ValueError("irregular singular point: no full indicial "
                             "polynomial")
        try:
            roots, ok = _rational_roots_with_multiplicity(tf.indicial(),
                                                          tf.field)
            break
        except DefiningSplit as split:
            u = split_defining(u, split.factor)
    if not ok:
        raise NonRationalExponent("non-rational exponent, outside class D")
    return roots


def _rational_roots_with_multiplicity(ind: list, field) -> tuple[list[mpq], bool]:
    """Split a field-coefficient polynomial into rational linear factors.

    Returns (roots with multiplicity, fully_split?).
    """
    roots: list[mpq] = []
    cur = list(ind)
    while len(cur) > 1:
        r = _one_rational_root(cur, field)
        if r is None:
            return roots, False
        roots.append(r)
        cur = _deflate(cur, r, field)
    roots.sort()
    return roots, True


def _one_rational_root(poly: list, field) -> mpq | None:
    if isinstance(field, NFField):
        # eliminate the algebraic coefficient via a resultant to Q[x]
        yvar, xvar = "y_", "x_"
        q = Polynomial.univariate(field.ring.modulus, yvar)
        acc = Polynomial.constant(0, (yvar, xvar))
        x = Polynomial.variable(xvar, (yvar, xvar))
        for k, c in enumerate(poly):
            cp = Polynomial.univariate(field.ring.as_poly_list(c), yvar)
            acc = acc + cp.with_vars((yvar, xvar)) * x ** k
        if acc.is_zero():
            return None
        from .exact import resultant as _res
        norm = _res(q, acc, yvar).drop_unused()
        if norm.is_zero() or norm.is_constant():
            # fall back: scan small rationals directly
            candidates = [mpq(k, d) for d in (1, 2, 3, 4) for k in range(-12, 13)]
        else:
            candidates = []
            for root in isolate_real_roots(squarefree_part(norm)):
                v = rational_root_value(root)
                if v is not None:
                    candidates.append(v)
        for v in candidates:
            val = _eval_field_poly(poly, v, field)
            if field.is_zero(val):
                return v
        return None
    # rational (or Gaussian with zero imaginary parts) coefficients
    dense = []
    for c in poly:
        c = c if not isinstance(c, tuple) else (c[0] if not c[1] else None)
        if c is None:
            return None
        dense.append(mpq(c))
    dense = _uni_trim(dense)
    if len(dense) <= 1:
        return None
    for root in isolate_real_roots(Polynomial.univariate(
            squarefree_part(Polynomial.univariate(dense, "x")).univariate_coeffs(), "x")):
        v = rational_root_value(root)
        if v is not None and sign_at_rational(dense, v) == 0:
            return v
    return None


def _eval_field_poly(poly: list, x: mpq, field):
    acc = field.zero
    for c in reversed(poly):
        acc = field.add(field.scale(acc, x), c)
    return acc


def _deflate(poly: list, r: mpq, field) -> list:
    """poly / (X - r) in field[X] (exact)."""
    out = [field.zero] * (len(poly) - 1)
    carry = field.zero
    for k in range(len(poly) - 1, 0, -1):
        carry = field.add(poly[k], field.scale(carry, r))
        out[k - 1] = carry
    return out


@dataclass
class SingPoint:
    location: object          # AlgebraicNumber or INFINITY
    kind: str                 # 'regular_singular' | 'irregular'
    exponents: tuple          # mpq exponents with multiplicity (or ())
    max_log_power: dict       # exponent -> log-power bound of its class


def classify_singularities(P: DiffOp) -> list[SingPoint]:
    """Real roots of the leading coefficient plus infinity, classified;
    ordinary points are not listed.  Complex singular points are handled
    geometrically (exclusion disks) by the continuation layer instead."""
    out = []
    lead = P.leading_coefficient().drop_unused()
    if not lead.is_constant():
        for root in isolate_real_roots(squarefree_part(lead)):
            out.append(_sing_point_at(P, root))
    out.append(_sing_point_at(P, INFINITY))
    return [s for s in out if s is not None]


def _sing_point_at(P: DiffOp, u) -> SingPoint | None:
    Pu = reciprocal_operator(P) if u is INFINITY else P
    uu = mpq(0) if u is INFINITY else u
    m = P.order
    while True:
        tf, uu = theta_form_at(Pu, uu)
        if len(tf.Qs[0]) - 1 != m:
            return SingPoint(u, "irregular", (), {})
        try:
            roots, ok = _rational_roots_with_multiplicity(tf.indicial(),
                                                          tf.field)
            break
        except DefiningSplit as split:
            if not isinstance(uu, AlgebraicNumber):
                raise
            uu = split_defining(uu, split.factor)
    if u is INFINITY and ok and sorted(roots) == [mpq(i) for i in range(m)]:
        # indicial pattern of an ordinary point: infinity not reported
        # (denominator clearing hides the exact test; apparent-singularity
        # tolerance is harmless to every consumer of this report)
        return None
    exps = tuple(sorted(roots))
    logs: dict = {}
    if ok:
        classes: dict[mpq, list[mpq]] = {}
        for r in roots:
            frac = r - mpz(r.numerator) // mpz(r.denominator)
            classes.setdefault(frac, []).append(r)
        for rs in classes.values():
            bound = len(rs) - 1
            for r in rs:
                logs[r] = bound
    return SingPoint(u, "regular_singular", exps, logs)


# ---------------------------------------------------------------------------
# Frobenius bases
# ---------------------------------------------------------------------------

class StepTooLarge(ArithmeticError):
    """The evaluation point is too close to the convergence boundary for the
    computed majorant; the caller should shorten the step."""


@dataclass
class BasisElement:
    gamma: mpq
    k0: int
    class_index: int
    offset: int
    local_index: int


class CongruenceClass:
    """All solutions with exponents in gamma0 + N for one residue class."""

    def __init__(self, P: DiffOp, tf: ThetaForm, gamma0: mpq,
                 offsets: dict[int, int], ordinary: bool):
        self.tf = tf
        self.field = tf.field
        self.gamma0 = gamma0
        self.sing_offsets = dict(offsets)
        total = sum(offsets.values())
        self.K = 0 if ordinary else total - 1
        self.J = tf.span
        self.leading = []  # (offset, k0) pairs, sorted
        for o in sorted(offsets):
            for k in range(offsets[o]):
                self.leading.append((o, k if not ordinary else 0))
        if ordinary:
            self.leading = [(o, 0) for o in sorted(offsets)]
        # Q_j and their theta-derivatives (the multiple-root solve needs one
        # extra derivative order beyond the log height)
        nder = self.K + max(offsets.values())
        self.Qd = []
        for j in range(self.J + 1):
            derivs = [list(tf.Qs[j])]
            for _ in range(nder):
                derivs.append(_theta_poly_deriv(derivs[-1], self.field))
            self.Qd.append(derivs)
        self.N0 = max(self.sing_offsets) + self.J + self.K + 8
        self.tables: list[list[list]] = []
        for o, k0 in self.leading:
            self.tables.append(self._build_table(o, k0))

    # -- exact construction -------------------------------------------------

    def _q_value(self, j: int, i: int, s: mpq):
        """Q_j^(i) evaluated at s, exactly in the field."""
        F = self.field
        acc = F.zero
        for c in reversed(self.Qd[j][i]):
            acc = F.add(F.scale(acc, s), c)
        return acc

    def _build_table(self, o_star: int, k0_star: int) -> list[list]:
        F = self.field
        K, J = self.K, self.J
        binom = _binom_table(K + 1)
        table: list[list] = []
        for nu in range(self.N0 + 1):
            s = self.gamma0 + nu
            rhs = [F.zero] * (K + 1)
            for j in range(1, min(J, nu) + 1):
                prev = table[nu - j]
                sj = self.gamma0 + nu - j
                for k in range(K + 1):
                    ck = prev[k]
                    if F.is_zero(ck):
                        continue
                    for l in range(k + 1):
                        q = self._q_value(j, k - l, sj)
                        if not F.is_zero(q):
                            rhs[l] = F.sub(rhs[l],
                                           F.mul(F.scale(q, binom[k][k - l]), ck))
            mult = self.sing_offsets.get(nu, 0)
            vec = [F.zero] * (K + 1)
            if mult == 0:
                q0 = self._q_value(0, 0, s)
                q0inv = F.inv(q0)
                for k in range(K, -1, -1):
                    acc = rhs[k]
                    for kp in range(k + 1, K + 1):
                        if F.is_zero(vec[kp]):
                            continue
                        q = self._q_value(0, kp - k, s)
                        acc = F.sub(acc, F.mul(F.scale(q, binom[kp][kp - k]),
                                               vec[kp]))
                    vec[k] = F.mul(acc, q0inv)
            else:
                for k in range(mult):
                    if nu == o_star and k == k0_star:
                        vec[k] = F.one
                # determined slots from l = K-mult down to 0
                qm = self._q_value(0, mult, s)
                for l in range(K - mult, -1, -1):
                    acc = rhs[l]
                    for kp in range(l + mult + 1, K + 1):
                        if F.is_zero(vec[kp]):
                            continue
                        q = self._q_value(0, kp - l, s)
                        acc = F.sub(acc, F.mul(F.scale(q, binom[kp][kp - l]),
                                               vec[kp]))
                    denom = F.scale(qm, binom[l + mult][mult])
                    vec[l + mult] = F.mul(acc, F.inv(denom))
                for l in range(max(0, K - mult + 1), K + 1):
                    if not F.is_zero(rhs[l]):
                        raise RuntimeError(
                            "Frobenius consistency violated; log height "
                            "bookkeeping bug")
            table.append(vec)
        return table

    # -- majorant ------------------------------------------------------------

    def majorant(self, nu1: int):
        """(Rj bounds (mpq) for j=1..J, validity threshold) for nu >= nu1."""
        F = self.field
        K, J = self.K, self.J
        binom = _binom_table(K + 1)
        # PQ0(nu) = Q_0(gamma0 + nu) as an mpq-bounded polynomial in nu
        q0_abs, q0_low = _poly_in_nu_bounds(self.Qd[0][0], self.gamma0, 0, F)
        deg0 = len(q0_abs) - 1
        T = _dominance_threshold(q0_abs, q0_low)
        nu1 = max(nu1, T, max(self.sing_offsets) + 1)
        half_lead = q0_low / 2

        def sup_ratio(numer_abs: list[mpq]) -> mpq:
            # sup_{nu >= nu1} (sum |a_r| nu^r) / (half_lead nu^deg0)
            tot = mpq(0)
            for r, a in enumerate(numer_abs):
                if a:
                    tot += a * mpq(nu1) ** (r - deg0) if r <= deg0 else \
                        a * mpq(nu1) ** (r - deg0)
            return tot / half_lead

        # ||U||: strictly-upper entries binom(k,k-l) Q0^{(k-l)}(g0+nu)/PQ0
        u_norm = mpq(0)
        for l in range(K + 1):
            row = mpq(0)
            for k in range(l + 1, K + 1):
                nab, _ = _poly_in_nu_bounds(self.Qd[0][k - l], self.gamma0, 0, F)
                row += binom[k][k - l] * sup_ratio(nab)
            u_norm = max(u_norm, row)
        ninv = mpq(0)
        term = mpq(1)
        for _ in range(K + 1):
            ninv += term
            term *= u_norm
        Rj = []
        for j in range(1, J + 1):
            mj = mpq(0)
            for l in range(K + 1):
                row = mpq(0)
                for k in range(l, K + 1):
                    nab, _ = _poly_in_nu_bounds(self.Qd[j][k - l], self.gamma0,
                                                -j, F)
                    row += binom[k][k - l] * sup_ratio(nab)
                mj = max(mj, row)
            Rj.append(ninv * mj)
        return Rj, nu1


def _theta_poly_deriv(poly: list, field) -> list:
    return [field.scale(poly[k], k) for k in range(1, len(poly))] or [field.zero]


def _binom_table(n: int) -> list[list[int]]:
    out = [[1]]
    for i in range(1, n + 1):
        row = [1]
        for j in range(1, i):
            row.append(out[-1][j - 1] + out[-1][j])
        row.append(1)
        out.append(row)
    return out


def _poly_in_nu_bounds(theta_poly: list, gamma0: mpq, shift: int, field):
    """Coefficient |.|-upper bounds of Q(gamma0 + shift + nu) as poly in nu,
    plus a lower bound on the absolute leading coefficient."""
    # binomial re-expansion around nu
    c = gamma0 + shift
    n = len(theta_poly)
    out_abs = [mpq(0)] * n
    lead_low = None
    # coefficient of nu^r: sum_k a_k C(k, r) c^(k-r)
    binom = _binom_table(n)
    for r in range(n):
        acc_abs = mpq(0)
        for k in range(r, n):
            a = theta_poly[k]
            w = binom[k][r] * c ** (k - r)
            if not field.is_zero(a) and w:
                acc_abs += abs(w) * field.abs_upper(a)
        out_abs[r] = acc_abs
    # leading coefficient of the theta-poly is the nu-lead as well
    lead = theta_poly[-1]
    lead_low = _field_abs_lower(lead, field)
    return out_abs, lead_low


def _field_abs_lower(a, field) -> mpq:
    if isinstance(field, NFField):
        b = field.to_ball(a, 96).re
        m, e = b.mag_lower()
        if not m:
            raise RuntimeError("cannot lower-bound a field element "
                               "(increase precision)")
        return mpq(m) * (mpq(2) ** e if e >= 0 else mpq(1, mpz(1) << -e))
    if isinstance(field, GaussField):
        return abs(a[0]) + abs(a[1]) if (a[0] or a[1]) else mpq(0)
    return abs(mpq(a))


def _dominance_threshold(abs_coeffs: list[mpq], lead_low: mpq) -> int:
    """Smallest T >= 1 with sum_{r<deg} |a_r| T^(r-deg) <= lead_low / 2."""
    deg = len(abs_coeffs) - 1
    if deg == 0:
        return 1
    T = 1
    while True:
        tot = mpq(0)
        for r in range(deg):
            tot += abs_coeffs[r] / mpq(T) ** (deg - r)
        if tot <= lead_low / 2:
            return T
        T *= 2
        if T > 1 << 30:
            raise RuntimeError("no dominance threshold found")


class LocalBasis:
    """Distinguished Frobenius basis at a point, with exact coefficient
    tables to order N0 and validated ball extension for evaluation."""

    def __init__(self, P: DiffOp, u, kind: str | None = None):
        self.P = P
        self.point = u
        uu = normalize_point(u)
        while True:
            try:
                self.tf = theta_form(P, uu)
                self.kind = kind or point_kind(P, uu)
                if self.kind == "irregular":
                    raise ValueError("irregular singular point not supported")
                roots = indicial_exponents(P, uu)
                ordinary = self.kind == "ordinary"
                classes: dict[mpq, dict[int, int]] = {}
                for r in sorted(roots):
                    base = min(x for x in roots
                               if (r - x).denominator == 1 and x <= r)
                    offs = classes.setdefault(base, {})
                    o = int(r - base)
                    offs[o] = offs.get(o, 0) + 1
                self.classes = []
                self.elements: list[BasisElement] = []
                for ci, (g0, offs) in enumerate(sorted(classes.items())):
                    cc = CongruenceClass(P, self.tf, g0, offs, ordinary)
                    self.classes.append(cc)
                    for li, (o, k0) in enumerate(cc.leading):
                        self.elements.append(
                            BasisElement(g0 + o, k0, ci, o, li))
                break
            except DefiningSplit as split:
                if not isinstance(uu, AlgebraicNumber):
                    raise
                uu = split_defining(uu, split.factor)
                self.point = uu
        self.elements.sort(key=lambda e: (e.gamma, e.k0))
        if len(self.elements) != P.order:
            raise RuntimeError("basis element count != operator order")

    @property
    def order(self):
        return self.P.order

    def leading_monomials(self) -> list[tuple[mpq, int]]:
        return [(e.gamma, e.k0) for e in self.elements]

    def index_of_monomial(self, gamma, k) -> int | None:
        for i, e in enumerate(self.elements):
            if e.gamma == gamma and e.k0 == k:
                return i
        return None

    def index_of_one(self) -> int | None:
        return self.index_of_monomial(mpq(0), 0)

    def divergent_indices(self) -> list[int]:
        """Elements without a finite limit as zeta -> 0."""
        out = []
        for i, e in enumerate(self.elements):
            if e.gamma < 0 or (e.gamma == 0 and e.k0 > 0):
                out.append(i)
        return out

    def exact_coefficient(self, elem_index: int, k: int, nu_abs: mpq):
        """lambda_{k,nu}: exact table lookup (nu_abs is the absolute
        exponent); returns a field element or None outside the table."""
        e = self.elements[elem_index]
        cc = self.classes[e.class_index]
        rel = nu_abs - cc.gamma0
        if rel.denominator != 1:
            return None
        rel = int(rel)
        if rel < 0 or rel > cc.N0 or k > cc.K:
            return None
        return cc.tables[e.local_index][rel][k]

    def residual_ok(self, elem_index: int) -> bool:
        """Exact check that the truncated element satisfies the recurrence
        (equivalently P(y) = O(s^(N0+...)) symbolically)."""
        e = self.elements[elem_index]
        cc = self.classes[e.class_index]
        F = cc.field
        binom = _binom_table(cc.K + 1)
        table = cc.tables[e.local_index]
        for nu in range(cc.N0 + 1):
            for l in range(cc.K + 1):
                acc = F.zero
                for j in range(0, min(cc.J, nu) + 1):
                    sj = cc.gamma0 + nu - j
                    vec = table[nu - j]
                    for k in range(l, cc.K + 1):
                        ck = vec[k]
                        if F.is_zero(ck):
                            continue
                        q = cc._q_value(j, k - l, sj)
                        if not F.is_zero(q):
                            acc = F.add(acc, F.mul(F.scale(q, binom[k][k - l]),
                                                   ck))
                if not F.is_zero(acc):
                    return False
        return True


_basis_cache: dict = {}


def local_basis(P: DiffOp, u, N: int | None = None) -> LocalBasis:
    """Distinguished basis at u (ordinary or regular singular).

    N is accepted for interface compatibility; tables always extend to the
    structural order N0 and evaluation extends them (with validated balls)
    as far as the target precision requires.
    """
    key = (P.var, P.coeffs, _point_key(u))
    got = _basis_cache.get(key)
    if got is None:
        got = LocalBasis(P, u)
        _basis_cache[key] = got
    return got


def _point_key(u):
    if isinstance(u, AlgebraicNumber):
        if u.rational_value is not None:
            return ("q", u.rational_value)
        return ("a", tuple(u.poly), u.lo, u.hi)
    if isinstance(u, tuple):
        return ("g", u)
    return ("q", mpq(u))


# ---------------------------------------------------------------------------
# evaluation with validated tails
# ---------------------------------------------------------------------------

def evaluate_local(basis: LocalBasis, zeta: Ball, p: int,
                   nderiv: int | None = None) -> list[list[ComplexBall]]:
    """Values and derivatives of the basis elements at point + zeta.

    zeta is a real ball excluding 0; a negative zeta is interpreted on the
    upper side of the slit (branch fixed by approaching from above).
    Returns rows delta = 0..nderiv-1 and columns aligned with
    basis.elements; entry = d^delta/dt^delta of the element at point+zeta.
    The truncation error is controlled by a geometric-tail majorant derived
    from the recurrence; ball widths meet 2^-p plus that tail.
    """
    m = basis.order
    if nderiv is None:
        nderiv = m
    if zeta.contains_zero():
        raise ValueError("evaluation point coincides with the expansion point")
    neg = zeta.man < 0
    wp = p + 48 + 4 * m
    azeta = zeta.abs().round(wp)
    zm, ze = azeta.mag_upper()
    z_up = mpq(zm) * (mpq(2) ** ze if ze >= 0 else mpq(1, mpz(1) << -ze))

    class_results = [
        _evaluate_class(basis, cc, zeta, azeta, z_up, neg, wp, nderiv, p)
        for cc in basis.classes
    ]
    return [[class_results[e.class_index][e.local_index][d]
             for e in basis.elements] for d in range(nderiv)]


def _evaluate_class(basis, cc: CongruenceClass, zeta: Ball, azeta: Ball,
                    z_up: mpq, neg: bool, wp: int, nderiv: int, p: int):
    F = cc.field
    K, J = cc.K, cc.J
    nelem = len(cc.leading)

    # majorant threshold and contraction factor
    Rj, nu1 = cc.majorant(cc.N0 + 1)
    Kmaj = _solve_contraction(Rj, J)
    q = Kmaj * z_up
    if q >= mpq(7, 8):
        raise StepTooLarge("majorant ratio %.3f too close to 1" % float(q))
    # terms needed: q^N <= 2^-(wp + 8)  (A-factor folded in afterwards)
    logq = math.log2(float(q))
    N = max(nu1 + J + 2, int((wp + 16) / -logq) + J + 8, 64 * nderiv)

    # ball-ified recurrence data
    qd_balls = [[[F.to_ball(c, wp).re for c in cc.Qd[j][i]]
                 for i in range(K + 1)] for j in range(J + 1)]
    binom = _binom_table(K + 1)
    g0 = cc.gamma0

    def qval(j, i, nu_minus_j):
        acc = Ball.zero(wp)
        s = Ball.from_fraction(g0 + nu_minus_j, wp)
        for c in reversed(qd_balls[j][i]):
            acc = acc.mul(s, wp).add(c, wp)
        return acc

    # state: per element, deque of last J+1 coefficient vectors (balls)
    window: list[list[list[Ball]]] = [[] for _ in range(nelem)]
    moments = [[[Ball.zero(wp) for _ in range(nderiv)] for _ in range(K + 1)]
               for _ in range(nelem)]
    zpow = Ball.exact_int(1, wp)
    zsigned = zeta.round(wp)

    beta_window: list[list[mpq]] = [[] for _ in range(nelem)]

    for nu in range(N + 1):
        if nu <= cc.N0:
            vecs = [[F.to_ball(c, wp).re for c in cc.tables[li][nu]]
                    for li in range(nelem)]
        else:
            s = g0 + nu
            q0 = qval(0, 0, nu)
            q0inv = q0.inverse(wp)
            q0d = [qval(0, i, nu) for i in range(1, K + 1)]
            qjs = [[qval(j, i, nu - j) for i in range(K + 1)]
                   for j in range(1, J + 1)]
            vecs = []
            for li in range(nelem):
                win = window[li]
                rhs = [Ball.zero(wp) for _ in range(K + 1)]
                for j in range(1, J + 1):
                    prev = win[-j]
                    for k in range(K + 1):
                        ck = prev[k]
                        if ck.is_exact_zero():
                            continue
                        for l in range(k + 1):
                            qb = qjs[j - 1][k - l]
                            term = qb.mul(ck, wp)
                            if binom[k][k - l] != 1:
                                term = term.mul(
                                    Ball.exact_int(binom[k][k - l], wp), wp)
                            rhs[l] = rhs[l].sub(term, wp)
                vec = [None] * (K + 1)
                for k in range(K, -1, -1):
                    acc = rhs[k]
                    for kp in range(k + 1, K + 1):
                        term = q0d[kp - k - 1].mul(vec[kp], wp)
                        if binom[kp][kp - k] != 1:
                            term = term.mul(
                                Ball.exact_int(binom[kp][kp - k], wp), wp)
                        acc = acc.sub(term, wp)
                    vec[k] = acc.mul(q0inv, wp)
                vecs.append(vec)
        for li in range(nelem):
            win = window[li]
            win.append(vecs[li])
            if len(win) > J + 1:
                win.pop(0)
            mom = moments[li]
            for k in range(K + 1):
                ck = vecs[li][k]
                if ck.is_exact_zero():
                    continue
                w = ck.mul(zpow, wp)
                nue = 1
                for e in range(nderiv):
                    if e == 0:
                        mom[k][0] = mom[k][0].add(w, wp)
                    else:
                        nue *= nu
                        mom[k][e] = mom[k][e].add(
                            w.mul(Ball.exact_int(nue, wp), wp), wp)
            if nu > N - (J + 1):
                bmax = mpq(0)
                for k in range(K + 1):
                    mm, ee = vecs[li][k].mag_upper()
                    v = mpq(mm) * (mpq(2) ** ee if ee >= 0
                                   else mpq(1, mpz(1) << -ee))
                    bmax = max(bmax, v)
                beta_window[li].append(bmax)
        zpow = zpow.mul(zsigned, wp)

    # tails: |sum_{nu>N} nu^e c_k,nu zeta^nu| <= A0 (N+1)^e q^(N+1)/(1-qt)
    qt = q * (mpq(N + 2) / mpq(N + 1)) ** max(1, nderiv - 1)
    if qt >= 1:
        raise StepTooLarge("tail ratio >= 1")
    zpow_up = Ball.from_fraction(z_up, 64).pow_int(N + 1, 64)
    for li in range(nelem):
        a0qn = Ball.zero(64)
        for widx, beta in enumerate(beta_window[li]):
            mu = N - len(beta_window[li]) + 1 + widx
            t = Ball.from_fraction(beta * Kmaj ** (N + 1 - mu), 64)
            t = t.mul(zpow_up, 64)
            if _rcmp(*t.mag_upper(), *a0qn.mag_upper()) > 0:
                a0qn = t
        inv1mq = Ball.from_fraction(1 / (1 - qt), 64)
        for e in range(nderiv):
            tail = a0qn.mul(Ball.from_fraction(mpq(N + 1) ** e, 64), 64)
            tail = tail.mul(inv1mq, 64)
            tm, te = tail.mag_upper()
            if tm:
                width = te + int(tm).bit_length()
                for k in range(K + 1):
                    moments[li][k][e] = Ball.with_radius_2exp(
                        moments[li][k][e], width)

    # assemble derivatives
    return _assemble(cc, moments, azeta, neg, wp, nderiv, p)


def _solve_contraction(Rj: list[mpq], J: int) -> mpq:
    """K with sum_j Rj K^-j <= 1, within ~15% of the minimal such K."""
    K = mpq(1, 1 << 20)
    for j, R in enumerate(Rj, start=1):
        if R <= 0:
            continue
        # smallest power of two K0 with K0^j >= J*R
        target = mpq(J) * R
        b = 0
        while mpq(2) ** (b * j) < target:
            b += 1
        K = max(K, mpq(2) ** b)
    # refine downwards in 15/16 steps while the contraction still holds
    for _ in range(24):
        cand = K * mpq(15, 16)
        tot = mpq(0)
        for j, R in enumerate(Rj, start=1):
            tot += R / cand ** j
        if tot <= 1:
            K = cand
        else:
            break
    return K


def _assemble(cc: CongruenceClass, moments, azeta: Ball, neg: bool,
              wp: int, nderiv: int, p: int):
    K = cc.K
    g0 = cc.gamma0
    out = []
    # log zeta and branch factors
    la = ball_log(azeta, wp)
    if neg:
        pi_b = const_pi(wp)
        logz = ComplexBall(la, pi_b)
        cg, sg = cospi_sinpi(g0, wp)
        phase = ComplexBall(cg, sg)  # e^(i pi g0)
    else:
        logz = ComplexBall.from_real(la)
        phase = ComplexBall.exact_int(1, wp)
    logpow = [ComplexBall.exact_int(1, wp)]
    for _ in range(K):
        logpow.append(logpow[-1].mul(logz, wp))
    # A_{delta,j;k} tables: polynomials in nu (dense mpq)
    atab = _deriv_log_table(g0, K, nderiv)
    for li in range(len(cc.leading)):
        col = []
        base = ball_pow_rational(azeta, g0, wp) if g0 else Ball.exact_int(1, wp)
        for delta in range(nderiv):
            acc = ComplexBall.zero(wp)
            for l in range(K + 1):
                coeff = Ball.zero(wp)
                for k in range(l, K + 1):
                    poly = atab[delta][k - l][k]
                    for e, a in enumerate(poly):
                        if a:
                            coeff = coeff.add(
                                moments[li][k][e].mul(
                                    Ball.from_fraction(a, wp), wp), wp)
                if not coeff.is_exact_zero():
                    acc = acc.add(logpow[l].mul_real(coeff, wp), wp)
            # multiply by zeta^(g0 - delta) with branch
            fac = base
            if delta:
                fac = fac.mul(azeta.pow_int(-delta, wp), wp)
            accf = acc.mul_real(fac, wp)
            if neg:
                accf = accf.mul(phase, wp)
                if delta % 2:
                    accf = accf.neg()
            col.append(accf.round(p + 16))
        out.append(col)
    return out


def _deriv_log_table(g0: mpq, K: int, nderiv: int):
    """atab[delta][j][k] = A_{delta,j;k} as a dense mpq polynomial in nu,
    where (d/dz)^delta [z^(g0+nu) log^k z]
        = z^(g0+nu-delta) sum_j A_{delta,j;k}(nu) log^(k-j) z."""
    atab = []
    base = [[[mpq(1)] if j == 0 else [] for j in range(K + 1)]
            for k in range(K + 1)]
    # index as [j][k] per delta; start at delta = 0
    cur = [[([mpq(1)] if j == 0 else []) for k in range(K + 1)]
           for j in range(K + 1)]
    atab.append(cur)
    for delta in range(1, nderiv):
        prev = atab[-1]
        nxt = [[[] for _ in range(K + 1)] for _ in range(K + 1)]
        for j in range(K + 1):
            for k in range(K + 1):
                # (s - (delta-1)) * prev[j][k] with s = g0 + nu
                p1 = _mul_linear(prev[j][k], g0 - (delta - 1))
                # + (k - j + 1) * prev[j-1][k]
                if j >= 1 and (k - j + 1) != 0:
                    p2 = [c * (k - j + 1) for c in prev[j - 1][k]]
                else:
                    p2 = []
                nxt[j][k] = _poly_add_q(p1, p2)
        atab.append(nxt)
    return atab


def _mul_linear(poly: list[mpq], c0: mpq) -> list[mpq]:
    """poly(nu) * (nu + c0)."""
    if not poly:
        return []
    out = [mpq(0)] * (len(poly) + 1)
    for i, a in enumerate(poly):
        out[i + 1] += a
        out[i] += a * c0
    while out and not out[-1]:
        out.pop()
    return out


def _poly_add_q(a: list[mpq], b: list[mpq]) -> list[mpq]:
    out = [mpq(0)] * max(len(a), len(b))
    for i, c in enumerate(a):
        out[i] += c
    for i, c in enumerate(b):
        out[i] += c
    while out and not out[-1]:
        out.pop()
    return out
