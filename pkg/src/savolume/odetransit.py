"""Validated analytic continuation.

Transition matrices between distinguished local bases: ordinary-point steps
between Gaussian-rational waypoints run an exact binary-splitting product of
the Taylor recurrence (one rounding at the end); steps into or out of a
regular singular endpoint use the validated Frobenius evaluation.  Paths
stay in the closed upper half-plane, bypassing interior real singular points
by dyadic detours, with every step length certified against a lower bound on
the distance to the singular set (ball-exclusion disks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from gmpy2 import mpq, mpz

from .exact import AlgebraicNumber, Polynomial, squarefree_part
from .exact.poly import _uni_trim, QZERO, QONE
from .exact.roots import sign_at_rational, _to_int_coeffs
from .balls import (
    Ball,
    ComplexBall,
    InconsistentSystem,
    InsufficientPrecision,
    _rcmp,
    mat_identity,
    mat_inverse,
    mat_mul,
    solve_linear,
)
from .picardfuchs import DiffOp
from .odelocal import (
    CongruenceClass,
    GaussField,
    LocalBasis,
    StepTooLarge,
    _falling_polys,
    evaluate_local,
    local_basis,
    point_kind,
    theta_form,
)

import logging

logger = logging.getLogger("savolume")


class PathPlanningError(RuntimeError):
    pass


@dataclass
class Path:
    """Waypoints from start to end; interior waypoints are ordinary Gaussian
    rationals (re, im) with im >= 0; endpoints may be regular singular."""
    start: object            # mpq | AlgebraicNumber
    end: object
    waypoints: list          # [(mpq re, mpq im), ...] ordinary points
    start_singular: bool
    end_singular: bool

    def step_count(self) -> int:
        n = max(0, len(self.waypoints) - 1)
        if self.start_singular:
            n += 1
        if self.end_singular:
            n += 1
        return n


@dataclass
class ICSystem:
    """Good initial conditions: (point, dual-basis index, Ball value)."""
    conditions: list
    verified: bool = False


@dataclass
class TransitionMatrix:
    source: object
    target: object
    matrix: list
    path: Path | None


# ---------------------------------------------------------------------------
# distances to the singular set
# ---------------------------------------------------------------------------

class _SingularGeometry:
    """Cached leading-coefficient data for distance certificates."""

    def __init__(self, P: DiffOp):
        lead = P.leading_coefficient().drop_unused()
        self.is_const = lead.is_constant()
        if self.is_const:
            self.sq = None
            self.root_estimates = []
            self.real_roots = []
            return
        sq = squarefree_part(lead)
        self.sq = _uni_trim(sq.univariate_coeffs())
        coeffs = [float(c) for c in self.sq]
        self.root_estimates = list(np.roots(list(reversed(coeffs))))
        from .exact import isolate_real_roots
        self.real_roots = isolate_real_roots(sq)

    def vanishes_at(self, x: mpq) -> bool:
        if self.is_const:
            return False
        return sign_at_rational(self.sq, mpq(x)) == 0

    def dist_lower(self, z: tuple[mpq, mpq]) -> mpq | None:
        """Certified positive lower bound on the distance from z to the
        singular set, or None when there are no finite singular points."""
        if self.is_const:
            return None
        zre, zim = mpq(z[0]), mpq(z[1])
        zf = complex(float(zre), float(zim))
        est = min(abs(zf - r) for r in self.root_estimates)
        if est == 0:
            return mpq(0)
        delta = mpq(1)
        while delta > est * 0.9:
            delta /= 2
        while delta * 2 <= est * 0.9:
            delta *= 2
        prec = 96
        for _ in range(80):
            if self._excludes(zre, zim, delta, prec):
                return delta
            delta /= 2
            prec = min(512, prec + 16)
        return mpq(0)

    def _excludes(self, zre, zim, delta, prec) -> bool:
        c = ComplexBall(Ball.from_interval(zre - delta, zre + delta, prec),
                        Ball.from_interval(zim - delta, zim + delta, prec))
        # the square |x-z|<=delta contains the disk of radius delta
        acc = ComplexBall.zero(prec)
        for co in reversed(self.sq):
            acc = acc.mul(c, prec)
            acc = ComplexBall(acc.re.add(Ball.from_fraction(co, prec), prec),
                              acc.im)
        return not acc.contains_zero()


_geom_cache: dict = {}


def _geometry(P: DiffOp) -> _SingularGeometry:
    key = (P.var, P.coeffs)
    got = _geom_cache.get(key)
    if got is None:
        got = _SingularGeometry(P)
        _geom_cache[key] = got
    return got


def _point_value_interval(u, bits=64):
    if isinstance(u, AlgebraicNumber):
        return u.refine(bits)
    u = mpq(u)
    return (u, u)


def _dyadic_near(x: mpq, bits: int) -> mpq:
    scaled = x * (mpz(1) << bits)
    return mpq(scaled.numerator // scaled.denominator, mpz(1) << bits)


# ---------------------------------------------------------------------------
# path planning
# ---------------------------------------------------------------------------

def plan_path(P: DiffOp, u, v) -> Path:
    """Path from u to v with upper-half-plane detours around interior real
    singular points; all interior waypoints ordinary dyadic points."""
    geom = _geometry(P)
    u_sing = _is_singular_point(geom, u)
    v_sing = _is_singular_point(geom, v)
    ulo, uhi = _point_value_interval(u)
    vlo, vhi = _point_value_interval(v)
    if not u_sing and not v_sing and ulo == uhi and vlo == vhi and ulo == vlo:
        return Path(u, v, [(mpq(ulo), mpq(0))], False, False)

    direction = 1 if vlo >= uhi else -1

    # anchor points: lift over interior real singular points
    anchors: list[tuple[mpq, mpq]] = []
    interior = []
    for r in geom.real_roots:
        rlo, rhi = r.refine(32)
        if direction > 0 and uhi < rlo and rhi < vlo:
            interior.append(r)
        elif direction < 0 and vhi < rlo and rhi < ulo:
            interior.append(r)
    if direction < 0:
        interior = interior[::-1]
    for r in interior:
        others = [o for o in geom.real_roots if o is not r]
        h = None
        rlo, rhi = r.refine(64)
        rmid = (rlo + rhi) / 2
        if others:
            dmin = min(abs((o.refine(64)[0] + o.refine(64)[1]) / 2 - rmid)
                       for o in others)
            h = dmin / 2
        else:
            h = mpq(1, 2)
        h = _dyadic_near(min(h, mpq(1, 2)), 24)
        if h <= 0:
            h = mpq(1, 1024)
        anchors.append((_dyadic_near(rmid - direction * h, 24), h))
        anchors.append((_dyadic_near(rmid + direction * h, 24), h))

    # first/last concrete endpoints on the real axis
    start_pt = _exit_point(geom, u, direction, u_sing)
    end_pt = _exit_point(geom, v, -direction, v_sing)

    route = [start_pt] + anchors + [end_pt]
    waypoints = [start_pt]
    for nxt in route[1:]:
        waypoints.extend(_march(geom, waypoints[-1], nxt))
    cleaned = [waypoints[0]]
    for w in waypoints[1:]:
        if w != cleaned[-1]:
            cleaned.append(w)
    return Path(u, v, cleaned, u_sing, v_sing)


def _is_singular_point(geom: _SingularGeometry, u) -> bool:
    if geom.is_const:
        return False
    if isinstance(u, AlgebraicNumber):
        if u.rational_value is not None:
            return geom.vanishes_at(u.rational_value)
        from .exact import sign_at, Polynomial
        return sign_at(Polynomial.univariate(geom.sq, "t"), u) == 0
    return geom.vanishes_at(mpq(u))


def _exit_point(geom: _SingularGeometry, u, direction: int, singular: bool) -> tuple[mpq, mpq]:
    """The rational point where ordinary marching starts/ends next to u."""
    ulo, uhi = _point_value_interval(u, 96)
    umid = (ulo + uhi) / 2
    if not singular:
        if isinstance(u, AlgebraicNumber) and u.rational_value is None:
            raise PathPlanningError("ordinary endpoints must be rational")
        return (mpq(umid), mpq(0))
    # distance from u to the *other* singular points
    d = None
    for r in geom.real_roots:
        rlo, rhi = r.refine(96)
        rmid = (rlo + rhi) / 2
        if abs(rmid - umid) < mpq(1, mpz(1) << 64):
            continue  # u itself
        dd = abs(rmid - umid)
        d = dd if d is None else min(d, dd)
    if d is None:
        d = mpq(1)
    delta = _dyadic_near(min(d / 4, mpq(1, 2)), 48)
    for _ in range(200):
        w = _dyadic_near(umid + direction * delta, 48 + 16)
        if not geom.vanishes_at(w) and (w - umid) * direction > 0:
            wi = (w, mpq(0))
            # certify the quarter-distance property approximately: the exact
            # requirement is |w - u| <= 3/4 * dist(u, other sing), amply met
            return wi
        delta /= 2
    raise PathPlanningError("cannot exit the singular point")


def _march(geom: _SingularGeometry, frm: tuple, to: tuple) -> list[tuple]:
    """Ordinary waypoints from frm to to with certified step lengths."""
    out = []
    cur = frm
    for _ in range(600):
        dx = to[0] - cur[0]
        dy = to[1] - cur[1]
        dist2 = dx * dx + dy * dy
        if dist2 == 0:
            return out
        lower = geom.dist_lower(cur)
        if lower is None:
            out.append(to)
            return out
        if lower <= 0:
            raise PathPlanningError("waypoint fell onto the singular set")
        step = lower / 2
        # |remaining| <= step -> single hop
        if dist2 <= step * step:
            out.append(to)
            return out
        scale = _sqrt_upper(dist2)
        frac = step / scale  # <= 1
        nxt = (_dyadic_near(cur[0] + dx * frac, 64),
               _dyadic_near(cur[1] + dy * frac, 64))
        if nxt == cur:
            out.append(to)
            return out
        out.append(nxt)
        cur = nxt
    raise PathPlanningError("path march did not converge")


def _sqrt_upper(x: mpq) -> mpq:
    """Cheap rational upper bound of sqrt(x), x > 0."""
    f = math.sqrt(float(x))
    g = mpq(int(math.ceil(f * 2 ** 24)) + 2, 1 << 24)
    while g * g < x:
        g *= mpq(17, 16)
    return g


# ---------------------------------------------------------------------------
# ordinary-point binary splitting
# ---------------------------------------------------------------------------

class _OrdinarySeries:
    """Integer-cleared Taylor recurrence of P at a Gaussian-rational point."""

    def __init__(self, P: DiffOp, w: tuple[mpq, mpq]):
        self.P = P
        self.w = w
        self.m = P.order
        self.complex = bool(w[1])
        if self.complex:
            field = GaussField()
            tf = theta_form(P, (w[0], w[1]), field)
        else:
            tf = theta_form(P, mpq(w[0]))
        if tf.j0 != -P.order:
            raise ValueError("expansion point is not ordinary")
        self.tf = tf
        self.J = tf.span
        # congruence class for the majorant machinery
        self.cc = CongruenceClass(P, tf, mpq(0),
                                  {i: 1 for i in range(P.order)}, True)
        # integer-cleared Q polynomials
        den = mpz(1)
        for q in tf.Qs:
            for c in q:
                if self.complex:
                    den = _lcm(den, c[0].denominator)
                    den = _lcm(den, c[1].denominator)
                else:
                    den = _lcm(den, mpq(c).denominator)
        self.qint = []
        for q in tf.Qs:
            if self.complex:
                self.qint.append([(mpz(c[0] * den), mpz(c[1] * den)) for c in q])
            else:
                self.qint.append([mpz(mpq(c) * den) for c in q])

    def majorant_contraction(self, nu1: int):
        from .odelocal import _solve_contraction
        Rj, nu1b = self.cc.majorant(nu1)
        K = _solve_contraction(Rj, max(1, self.J))
        return K, nu1b


_series_cache: dict = {}


def _ordinary_series(P: DiffOp, w: tuple[mpq, mpq]) -> _OrdinarySeries:
    key = (P.var, P.coeffs, w)
    got = _series_cache.get(key)
    if got is None:
        got = _OrdinarySeries(P, w)
        _series_cache[key] = got
    return got


def _lcm(a: mpz, b) -> mpz:
    b = mpz(b)
    from gmpy2 import gcd
    return a * b // gcd(a, b)


def _mat_mul_int(A, B):
    n = len(A)
    k = len(B)
    m = len(B[0])
    out = []
    for i in range(n):
        Ai = A[i]
        row = []
        for j in range(m):
            acc = Ai[0] * B[0][j]
            for l in range(1, k):
                acc += Ai[l] * B[l][j]
            row.append(acc)
        out.append(row)
    return out


def _mat_mul_gauss(A, B):
    # entries are (re, im) mpz pairs
    n = len(A)
    k = len(B)
    m = len(B[0])
    out = []
    for i in range(n):
        Ai = A[i]
        row = []
        for j in range(m):
            re = mpz(0)
            im = mpz(0)
            for l in range(k):
                a = Ai[l]
                b = B[l][j]
                re += a[0] * b[0] - a[1] * b[1]
                im += a[0] * b[1] + a[1] * b[0]
            row.append((re, im))
        out.append(row)
    return out


def _ordinary_step_matrix(P: DiffOp, w: tuple, wnext: tuple, prec: int):
    """Enclosure of Delta(w, wnext) for ordinary Gaussian-rational points, by
    exact binary splitting of the Taylor recurrence."""
    ser = _ordinary_series(P, w)
    m = ser.m
    J = max(ser.J, 1)
    zre = mpq(wnext[0]) - mpq(w[0])
    zim = mpq(wnext[1]) - mpq(w[1])
    cplx = ser.complex or bool(zim)
    z_abs_up = _sqrt_upper(zre * zre + zim * zim)

    # choose the truncation order against the contraction factor; raising
    # the validity threshold nu1 tightens the factor, so iterate from below
    nu1 = max(64, 2 * m)
    N = q = None
    for _ in range(14):
        K, nu1v = ser.majorant_contraction(nu1)
        q = K * z_abs_up
        if q >= mpq(7, 8):
            nu1 *= 4
            if nu1 > (1 << 20):
                raise StepTooLarge("ordinary step too long for the majorant")
            continue
        logq = math.log2(float(q))
        N = max(nu1v + J + 2, int((prec + 32) / -logq) + J + 8, 8 * m)
        if N <= 2 * nu1:
            break
        nu1 = min(N, nu1 * 8)
    if N is None or q is None or q >= mpq(7, 8):
        raise StepTooLarge("ordinary step too long for the majorant")

    # integer-cleared zeta = zn / zd (Gaussian numerator)
    zd = mpz(_lcm(mpz(zre.denominator), zim.denominator))
    zn = (mpz(zre * zd), mpz(zim * zd))

    dim = J + m
    prod, den = _split_product(ser, zn, zd, cplx, m, J, m, N, dim)

    # seeds: columns l = 0..m-1, rows: y_{m-1-i} then S_e
    # scale all seeds by zd^(m-1) to stay integral
    seeds = []
    for r in range(dim):
        seeds.append([_gz(0) if cplx else mpz(0)] * m)
    zpow = []  # zn^l * zd^(m-1-l)
    for l in range(m):
        if cplx:
            v = _gpow(zn, l)
            s = zd ** (m - 1 - l)
            zpow.append((v[0] * s, v[1] * s))
        else:
            zpow.append(zn[0] ** l * zd ** (m - 1 - l))
    for l in range(m):
        lag = m - 1 - l  # y_{m-1-lag} = y_l nonzero
        if lag < J:
            seeds[lag][l] = zpow[l]
        for e in range(m):
            seeds[J + e][l] = _scale_int(zpow[l], mpz(l) ** e, cplx)
    seed_den = zd ** (m - 1)

    final = _mat_mul_gauss(prod, seeds) if cplx else _mat_mul_int(prod, seeds)
    total_den = den * seed_den

    wp = prec + 16
    fall = _falling_polys(m)
    # per column: moments S_e = final[J+e][l] / total_den
    zball = ComplexBall(Ball.from_fraction(zre, wp), Ball.from_fraction(zim, wp))
    zinv = zball.inverse(wp)
    cols = []
    for l in range(m):
        moments = []
        for e in range(m):
            entry = final[J + e][l]
            moments.append(_ball_from_scaled(entry, total_den, wp, cplx))
        # tail bound: A0 q^{N+1} = max over the window |y_mu| q^{N+1-mu},
        # with mu = N - lag so the exponent stays tiny
        a0qn = Ball.zero(64)
        qb = Ball.from_fraction(q, 64)
        for lag in range(min(J, N + 1)):
            ymu = _ball_from_scaled(final[lag][l], total_den, 64, cplx)
            mm, ee = ymu.mag_upper()
            t = Ball(mm, ee, 0, 0, 64).mul(qb.pow_int(lag + 1, 64), 64)
            if _rcmp(*t.mag_upper(), *a0qn.mag_upper()) > 0:
                a0qn = t
        qt = q * (mpq(N + 2) / mpq(N + 1)) ** max(1, m - 1)
        if qt >= 1:
            raise StepTooLarge("tail ratio >= 1")
        inv1mq = Ball.from_fraction(1 / (1 - qt), 64)
        col = []
        derivs = []
        for d in range(m):
            acc = ComplexBall.zero(wp)
            for e, c in enumerate(fall[d]):
                if c:
                    term = moments[e]
                    acc = acc.add(term.mul_real(Ball.from_fraction(c, wp), wp)
                                  if isinstance(term, ComplexBall)
                                  else ComplexBall.from_real(
                                      term.mul(Ball.from_fraction(c, wp), wp)),
                                  wp)
            # add the tail for every contributing moment power
            tail = a0qn.mul(Ball.from_fraction(
                sum(abs(c) * mpq(N + 1) ** e for e, c in enumerate(fall[d])) + 1,
                64), 64).mul(inv1mq, 64)
            tm, te = tail.mag_upper()
            if tm:
                wbits = te + int(tm).bit_length()
                acc = ComplexBall(Ball.with_radius_2exp(acc.re, wbits),
                                  Ball.with_radius_2exp(acc.im, wbits))
            if d:
                acc = acc.mul(zinv.pow_int(d, wp), wp)
                acc = acc.mul_real(Ball.from_fraction(
                    mpq(1, math.factorial(d)), wp), wp)
            derivs.append(acc.round(prec))
        cols.append(derivs)
    # rows: dual index (derivative/d!), columns: source basis elements
    return [[cols[l][d] for l in range(m)] for d in range(m)]


def _gz(x) -> tuple[mpz, mpz]:
    return (mpz(x), mpz(0))


def _gpow(z: tuple, n: int) -> tuple:
    re, im = mpz(1), mpz(0)
    for _ in range(n):
        re, im = re * z[0] - im * z[1], re * z[1] + im * z[0]
    return (re, im)


def _scale_int(v, c: mpz, cplx: bool):
    if cplx:
        return (v[0] * c, v[1] * c)
    return v * c


def _ball_from_scaled(entry, den: mpz, prec: int, cplx: bool):
    if cplx:
        return ComplexBall(_ball_num_den(entry[0], den, prec),
                           _ball_num_den(entry[1], den, prec))
    return ComplexBall.from_real(_ball_num_den(entry, den, prec))


def _ball_num_den(num: mpz, den: mpz, prec: int) -> Ball:
    if not num:
        return Ball.zero(prec)
    neg = (num < 0) != (den < 0)
    num, den = abs(num), abs(den)
    sh = prec + max(0, den.bit_length() - num.bit_length()) + 8
    q, r = divmod(num << sh, den)
    b = Ball(-q if neg else q, -sh, 1 if r else 0, -sh, prec)
    return b.round(prec)


def _split_product(ser: _OrdinarySeries, zn, zd, cplx, m, J, mhat, N, dim):
    """Product over nu = m..N of the scaled one-step matrices."""
    qint = ser.qint
    span = len(qint) - 1

    if cplx and not ser.complex:
        qint = [[(c, mpz(0)) for c in q] for q in qint]

    zpows = []
    for j in range(J + 1):
        if cplx:
            v = _gpow(zn, j)
            s = zd ** (J - j)
            zpows.append((v[0] * s, v[1] * s))
        else:
            zpows.append(zn[0] ** j * zd ** (J - j))

    def qeval(j, x):
        # integer Horner of the cleared Q_j at integer x
        if j > span:
            return _gz(0) if cplx else mpz(0)
        poly = qint[j]
        if cplx:
            re, im = mpz(0), mpz(0)
            for c in reversed(poly):
                re, im = re * x + c[0], im * x + c[1]
            return (re, im)
        acc = mpz(0)
        for c in reversed(poly):
            acc = acc * x + c
        return acc

    zdJ = zd ** J

    def leaf(nu):
        # scaled one-step matrix: y_nu row, shift rows, moment rows;
        # denominator D_nu = Q0(nu) * zd^J
        d0 = qeval(0, nu)
        if cplx:
            Dnu = (d0[0] * zdJ, d0[1] * zdJ)
        else:
            Dnu = d0 * zdJ
        row0 = []
        for j in range(1, J + 1):
            qv = qeval(j, nu - j)
            if cplx:
                t = (qv[0] * zpows[j][0] - qv[1] * zpows[j][1],
                     qv[0] * zpows[j][1] + qv[1] * zpows[j][0])
                row0.append((-t[0], -t[1]))
            else:
                row0.append(-qv * zpows[j])
        zero = _gz(0) if cplx else mpz(0)
        M = [[zero] * dim for _ in range(dim)]
        for j in range(J):
            M[0][j] = row0[j]
        for i in range(1, J):
            M[i][i - 1] = Dnu
        for e in range(mhat):
            ne = mpz(nu) ** e
            for j in range(J):
                M[J + e][j] = _scale_int(row0[j], ne, cplx)
            M[J + e][J + e] = Dnu
        return M, Dnu

    matmul = _mat_mul_gauss if cplx else _mat_mul_int

    def rec(a, b):
        # product M(b-1)...M(a), denominators multiplied
        if b - a == 1:
            return leaf(a)
        mid = (a + b) // 2
        M1, d1 = rec(a, mid)
        M2, d2 = rec(mid, b)
        if cplx:
            dd = (d1[0] * d2[0] - d1[1] * d2[1], d1[0] * d2[1] + d1[1] * d2[0])
        else:
            dd = d1 * d2
        return matmul(M2, M1), dd

    if N < m:
        ident = [[(_gz(1) if i == j else _gz(0)) if cplx else
                  (mpz(1) if i == j else mpz(0)) for j in range(dim)]
                 for i in range(dim)]
        return ident, _gz(1) if cplx else mpz(1)
    M, D = rec(m, N + 1)
    if cplx:
        # fold the complex denominator into the matrix: multiply by conj
        # and divide by |D|^2 later; simpler: keep complex den as pair by
        # converting to (num matrix, real den) via multiplication by conj(D)
        conj = (D[0], -D[1])
        M = [[(e[0] * conj[0] - e[1] * conj[1],
               e[0] * conj[1] + e[1] * conj[0]) for e in row] for row in M]
        return M, D[0] * D[0] + D[1] * D[1]
    return M, D


# ---------------------------------------------------------------------------
# transition matrices
# ---------------------------------------------------------------------------

def _singular_start_matrix(P: DiffOp, u, w: tuple, prec: int):
    """Delta(u, w): Frobenius basis at the singular u expressed in the Taylor
    basis at the ordinary rational point w.

    When the Frobenius majorant rejects the hop (contraction factor too close
    to 1 at this radius), the exit point is pulled toward u and the remaining
    distance is covered by ordinary binary-splitting steps.
    """
    if w[1]:
        raise PathPlanningError("singular exits must stay on the real axis")
    basis = local_basis(P, u)
    wp = prec + 16
    m = P.order
    geom = _geometry(P)
    ulo, uhi = _point_value_interval(u, 96)
    umid = (ulo + uhi) / 2
    w_cur = mpq(w[0])
    for attempt in range(48):
        if isinstance(u, AlgebraicNumber) and u.rational_value is None:
            lo, hi = u.refine(wp + 16)
            ub = Ball.from_interval(lo, hi, wp)
            zeta = Ball.from_fraction(w_cur, wp).sub(ub, wp)
        else:
            uval = u.rational_value if isinstance(u, AlgebraicNumber) else mpq(u)
            zeta = Ball.from_fraction(w_cur - uval, wp)
        try:
            M = evaluate_local(basis, zeta, prec, nderiv=m)
        except StepTooLarge:
            nxt = _dyadic_near(umid + (w_cur - umid) / 2, 64 + attempt)
            if nxt == w_cur or geom.vanishes_at(nxt):
                nxt = _dyadic_near(umid + (w_cur - umid) * mpq(3, 8),
                                   72 + attempt)
            if nxt == w_cur:
                raise
            w_cur = nxt
            continue
        out = []
        for d in range(m):
            fact = Ball.from_fraction(mpq(1, math.factorial(d)), wp)
            out.append([M[d][j].mul_real(fact, wp).round(prec)
                        for j in range(m)])
        if w_cur != mpq(w[0]):
            hop = _ordinary_step_with_split(P, (w_cur, mpq(0)), w, prec)
            out = mat_mul(hop, out, wp)
        return out
    raise StepTooLarge("could not shrink the singular exit step")


def _step_matrices(P: DiffOp, path: Path, prec: int):
    """Per-step matrices along the path, left-composable in order."""
    mats = []
    w = path.waypoints
    if path.start_singular:
        mats.append(_singular_start_matrix(P, path.start, w[0], prec))
    elif isinstance(path.start, AlgebraicNumber) and path.start.rational_value is None:
        raise PathPlanningError("ordinary endpoints must be rational")
    for a, b in zip(w, w[1:]):
        mats.append(_ordinary_step_with_split(P, a, b, prec))
    if path.end_singular:
        back = _singular_start_matrix(P, path.end, w[-1], prec)
        mats.append(mat_inverse(back, prec + 16))
    return mats


def _ordinary_step_with_split(P: DiffOp, a: tuple, b: tuple, prec: int,
                              depth: int = 0):
    try:
        return _ordinary_step_matrix(P, a, b, prec)
    except StepTooLarge:
        if depth >= 24:
            raise
        mid = (_dyadic_near((a[0] + b[0]) / 2, 64 + 2 * depth),
               _dyadic_near((a[1] + b[1]) / 2, 64 + 2 * depth))
        if _geometry(P).vanishes_at(mid[0]) and not mid[1]:
            mid = (mid[0] + mpq(1, mpz(1) << (40 + depth)), mid[1])
        m1 = _ordinary_step_with_split(P, a, mid, prec, depth + 1)
        m2 = _ordinary_step_with_split(P, mid, b, prec, depth + 1)
        return mat_mul(m2, m1, prec + 16)


def transition_matrix(P: DiffOp, u, v, p: int, path: Path | None = None) -> TransitionMatrix:
    """Enclosure of Delta(u, v), the change of basis B_u -> B_v, along the
    given (or planned) upper-half-plane path."""
    if path is None:
        path = plan_path(P, u, v)
    if _same_point(u, v):
        m = P.order
        return TransitionMatrix(u, v, mat_identity(m, p), path)
    wp = p + 20 + 10 * max(1, path.step_count())
    mats = _step_matrices(P, path, wp)
    total = mats[0]
    for M in mats[1:]:
        total = mat_mul(M, total, wp)
    total = [[e.round(p) for e in row] for row in total]
    return TransitionMatrix(u, v, total, path)


def _same_point(u, v) -> bool:
    if isinstance(u, AlgebraicNumber) and isinstance(v, AlgebraicNumber):
        return u.equals(v)
    if isinstance(u, AlgebraicNumber):
        return u.rational_value is not None and u.rational_value == mpq(v)
    if isinstance(v, AlgebraicNumber):
        return v.rational_value is not None and v.rational_value == mpq(u)
    return mpq(u) == mpq(v)


# ---------------------------------------------------------------------------
# good initial conditions
# ---------------------------------------------------------------------------

def verify_good_ic(P: DiffOp, functionals: list, interval: tuple,
                   prec_cap: int = 4096) -> bool:
    """True iff the functionals (point, dual index) span the dual of the
    solution space: certified via an interval square subsystem with all
    pivots excluding zero, at escalating precision up to the cap."""
    m = P.order
    if len(functionals) < m:
        return False
    geom = _geometry(P)
    ref = None
    for u, _ in functionals:
        if not _is_singular_point(geom, u):
            ref = u
            break
    if ref is None:
        return False
    prec = 64
    while prec <= prec_cap:
        try:
            rows = []
            for u, j in functionals:
                T = transition_matrix(P, ref, u, prec)
                rows.append(T.matrix[j])
            # greedy certified row selection (column-rank witness)
            work = [list(r) for r in rows]
            used = set()
            ok = True
            for col in range(m):
                best, best_mag = None, (mpz(0), 0)
                for ri, row in enumerate(work):
                    if ri in used:
                        continue
                    mag = row[col].mag_lower()
                    if mag[0] and (best is None or _rcmp(*mag, *best_mag) > 0):
                        best, best_mag = ri, mag
                if best is None:
                    ok = False
                    break
                used.add(best)
                inv = work[best][col].inverse(prec)
                work[best] = [x.mul(inv, prec) for x in work[best]]
                for ri in range(len(work)):
                    if ri == best:
                        continue
                    f = work[ri][col]
                    if f.is_exact_zero():
                        continue
                    work[ri] = [work[ri][c].sub(f.mul(work[best][c], prec), prec)
                                for c in range(m)]
            if ok:
                return True
        except (InsufficientPrecision, StepTooLarge, PathPlanningError):
            pass
        prec *= 2
    return False


def pick_good_points(P: DiffOp, a, b) -> list[mpq]:
    """Deterministically select m rational points in (a, b) whose value
    functionals are good initial conditions for P (Lemma-12 style: a fixed
    dyadic enumeration clustered near the lower end, certified a posteriori)."""
    m = P.order
    geom = _geometry(P)
    alo, ahi = _point_value_interval(a, 96)
    blo, bhi = _point_value_interval(b, 96)
    if not ahi < blo:
        raise ValueError("empty or unresolved interval for point picking")
    width = blo - ahi
    lo = ahi + width / 8
    for c in range(3, 20):
        pts = []
        ok = True
        for j in range(1, m + 1):
            pt = _dyadic_near(lo + width * mpq(j, mpz(1) << c), 64 + c)
            if geom.vanishes_at(pt) or (pts and pt == pts[-1]) or pt <= ahi:
                ok = False
                break
            pts.append(pt)
        if not ok:
            continue
        if verify_good_ic(P, [(pt, 0) for pt in pts], (a, b)):
            return pts
    raise InsufficientPrecision("cannot certify good points")


# ---------------------------------------------------------------------------
# DSolve
# ---------------------------------------------------------------------------

def dsolve(P: DiffOp, ics, alpha, p: int) -> Ball:
    """Algorithm-3 style evaluation: the limit at alpha of the solution of
    P(y) = 0 pinned down by the (approximate) good initial conditions.

    Raises InsufficientPrecision / InconsistentSystem when the interval
    linear algebra cannot certify the solve; the caller retries at doubled
    precision.
    """
    conditions = ics.conditions if isinstance(ics, ICSystem) else list(ics)
    basis = local_basis(P, alpha)
    j0 = basis.index_of_one()
    if j0 is None:
        return Ball.zero(p)
    # reject starved inputs early (Proposition-11 style contract)
    for _, _, s in conditions:
        wl = s.re.width_log2_upper() if isinstance(s, ComplexBall) \
            else s.width_log2_upper()
        if wl is not None and wl > -p + 4:
            raise InsufficientPrecision(
                "initial conditions wider than the target precision")
    m = P.order
    if len(conditions) < m:
        raise ValueError("not enough initial conditions")
    alo, ahi = _point_value_interval(alpha, 96)
    amid = (alo + ahi) / 2

    def dist_key(cond):
        u = cond[0]
        ulo, uhi = _point_value_interval(u, 96)
        return abs((ulo + uhi) / 2 - amid)

    conditions = sorted(conditions, key=dist_key)
    wp = p + 20 + 12 * (len(conditions) + 2)
    delta = mat_identity(m, wp)
    prev = alpha
    rows = []
    rhs = []
    for (u, j, s) in conditions:
        if not _same_point(u, prev):
            T = transition_matrix(P, prev, u, wp)
            delta = mat_mul(T.matrix, delta, wp)
            prev = u
        rows.append(list(delta[j]))
        rhs.append(s if isinstance(s, ComplexBall) else ComplexBall.from_real(s))
    sol = solve_linear(rows, rhs, wp)
    for j in basis.divergent_indices():
        if not sol[j].contains_zero():
            logger.warning("dsolve: coefficient on a divergent local element "
                           "does not enclose 0 (index %d)", j)
    out = sol[j0].re
    return out.round(p)
