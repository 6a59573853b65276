"""Differential operators annihilating slice-volume functions.

Three providers:
  (a) annihilators of algebraic functions via linear algebra in Q(t)[x]/(f),
  (b) bounded-ansatz creative telescoping with certificate denominators
      restricted to powers of f (two integration variables),
  (c) import of a user-supplied operator from a coefficient file.

All operators live in Q[t]<d/dt> with the Weyl relation (d/dt) t = t (d/dt) + 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from gmpy2 import mpq, mpz, gcd, invert

from .exact import (
    Polynomial,
    parse_polynomial,
    poly_exact_div,
    resultant,
    uni_gcd,
    uni_divmod,
)
from .exact.poly import _uni_trim, QZERO, QONE


class TelescoperNotFound(RuntimeError):
    pass


class NotClassD(ValueError):
    pass


# ---------------------------------------------------------------------------
# univariate rational functions over Q
# ---------------------------------------------------------------------------

class RatFun:
    """num/den with dense univariate mpq coefficient lists, den monic."""

    __slots__ = ("num", "den")

    def __init__(self, num, den=None, reduce=True):
        num = _uni_trim([mpq(c) for c in num])
        den = _uni_trim([mpq(c) for c in den]) if den is not None else [QONE]
        if not den:
            raise ZeroDivisionError("rational function with zero denominator")
        if reduce and num:
            g = uni_gcd(num, den)
            if len(g) > 1:
                num, _ = uni_divmod(num, g)
                den, _ = uni_divmod(den, g)
        if not num:
            den = [QONE]
        else:
            lead = den[-1]
            if lead != 1:
                inv = 1 / lead
                den = [c * inv for c in den]
                num = [c * inv for c in num]
        self.num = num
        self.den = den

    @staticmethod
    def const(c) -> "RatFun":
        return RatFun([mpq(c)], [QONE], reduce=False)

    @staticmethod
    def var() -> "RatFun":
        return RatFun([QZERO, QONE], [QONE], reduce=False)

    def is_zero(self) -> bool:
        return not self.num

    def __add__(self, other):
        n = _poly_add(_poly_mul(self.num, other.den), _poly_mul(other.num, self.den))
        return RatFun(n, _poly_mul(self.den, other.den))

    def __sub__(self, other):
        n = _poly_sub(_poly_mul(self.num, other.den), _poly_mul(other.num, self.den))
        return RatFun(n, _poly_mul(self.den, other.den))

    def __neg__(self):
        return RatFun([-c for c in self.num], self.den, reduce=False)

    def __mul__(self, other):
        return RatFun(_poly_mul(self.num, other.num), _poly_mul(self.den, other.den))

    def __truediv__(self, other):
        if other.is_zero():
            raise ZeroDivisionError("division by zero rational function")
        return RatFun(_poly_mul(self.num, other.den), _poly_mul(self.den, other.num))

    def derivative(self) -> "RatFun":
        dn = _poly_deriv(self.num)
        dd = _poly_deriv(self.den)
        n = _poly_sub(_poly_mul(dn, self.den), _poly_mul(self.num, dd))
        return RatFun(n, _poly_mul(self.den, self.den))

    def __eq__(self, other):
        return (self - other).is_zero() if isinstance(other, RatFun) else NotImplemented

    def __repr__(self):
        if self.den == [QONE]:
            return f"RatFun({self.num})"
        return f"RatFun({self.num}/{self.den})"


def _poly_add(a, b):
    out = [QZERO] * max(len(a), len(b))
    for i, c in enumerate(a):
        out[i] += c
    for i, c in enumerate(b):
        out[i] += c
    return _uni_trim(out)


def _poly_sub(a, b):
    out = [QZERO] * max(len(a), len(b))
    for i, c in enumerate(a):
        out[i] += c
    for i, c in enumerate(b):
        out[i] -= c
    return _uni_trim(out)


def _poly_mul(a, b):
    if not a or not b:
        return []
    out = [QZERO] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return _uni_trim(out)


def _poly_deriv(a):
    return _uni_trim([k * a[k] for k in range(1, len(a))])


# ---------------------------------------------------------------------------
# DiffOp
# ---------------------------------------------------------------------------

class DiffOp:
    """P = p_m(t) (d/dt)^m + ... + p_0(t), coefficients in Q[t]."""

    __slots__ = ("var", "coeffs")

    def __init__(self, coeffs, var: str = "t"):
        self.var = var
        cleaned = []
        for c in coeffs:
            if isinstance(c, Polynomial):
                cleaned.append(c.with_vars((var,)) if c.vars != (var,)
                               else c)
            else:
                cleaned.append(Polynomial.constant(c, (var,)))
        while cleaned and cleaned[-1].is_zero():
            cleaned.pop()
        if not cleaned:
            raise ValueError("zero differential operator")
        self.coeffs = tuple(cleaned)

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def leading_coefficient(self) -> Polynomial:
        return self.coeffs[-1]

    def coefficient(self, i: int) -> Polynomial:
        if i < 0 or i > self.order:
            return Polynomial.constant(0, (self.var,))
        return self.coeffs[i]

    def normalize_content(self) -> "DiffOp":
        """Divide out the common polynomial content of the coefficients."""
        g: list = []
        for c in self.coeffs:
            u = c.univariate_coeffs()
            if u:
                g = u if not g else uni_gcd(g, u)
            if len(g) == 1:
                g = []
                break
        out = list(self.coeffs)
        if g and len(g) > 1:
            gp = Polynomial.univariate(g, self.var)
            out = [poly_exact_div(c, gp) if not c.is_zero() else c for c in out]
        # rational content and sign: leading coefficient primitive, lead > 0
        op = DiffOp(out, self.var)
        cont = None
        for c in op.coeffs:
            cc = c.content()
            if cc:
                cont = cc if cont is None else mpq(gcd(cont.numerator, cc.numerator),
                                                   (cont.denominator * cc.denominator) //
                                                   gcd(cont.denominator, cc.denominator))
        if cont and cont != 1:
            op = DiffOp([c * (1 / cont) for c in op.coeffs], self.var)
        lead = op.coeffs[-1]
        key = max(lead.coeffs, key=lambda e: e)
        if lead.coeffs[key] < 0:
            op = DiffOp([-c for c in op.coeffs], self.var)
        return op

    def __add__(self, other: "DiffOp") -> "DiffOp":
        n = max(self.order, other.order)
        return DiffOp([self.coefficient(i) + other.coefficient(i)
                       for i in range(n + 1)], self.var)

    def __sub__(self, other: "DiffOp") -> "DiffOp":
        n = max(self.order, other.order)
        return DiffOp([self.coefficient(i) - other.coefficient(i)
                       for i in range(n + 1)], self.var)

    def __mul__(self, other: "DiffOp") -> "DiffOp":
        """Composition (self after other) in the Weyl algebra."""
        var = self.var
        t = Polynomial.variable(var)
        # self = sum_i p_i D^i ; apply D^i to (q_j D^j) via Leibniz
        out: dict[int, Polynomial] = {}
        for i, p in enumerate(self.coeffs):
            if p.is_zero():
                continue
            for j, q in enumerate(other.coeffs):
                if q.is_zero():
                    continue
                # D^i (q D^j) = sum_k C(i,k) q^{(k)} D^{i-k+j}
                qk = q
                binom = 1
                for k in range(i + 1):
                    if not qk.is_zero():
                        idx = i - k + j
                        term = p * qk * binom
                        out[idx] = out.get(idx, Polynomial.constant(0, (var,))) + term
                    binom = binom * (i - k) // (k + 1)
                    qk = qk.derivative(var)
        n = max(out) if out else 0
        return DiffOp([out.get(i, Polynomial.constant(0, (var,)))
                       for i in range(n + 1)], var)

    def right_mul_ddt(self) -> "DiffOp":
        """P * (d/dt): apply d/dt first; coefficients shift up one order."""
        zero = Polynomial.constant(0, (self.var,))
        return DiffOp([zero] + list(self.coeffs), self.var)

    def apply_to_polynomial(self, y: Polynomial) -> Polynomial:
        y = y.with_vars((self.var,)) if y.vars != (self.var,) else y
        out = Polynomial.constant(0, (self.var,))
        d = y
        for i, p in enumerate(self.coeffs):
            out = out + p * d
            d = d.derivative(self.var)
        return out

    def apply_to_ratfun(self, y: RatFun) -> RatFun:
        out = RatFun.const(0)
        d = y
        for p in self.coeffs:
            pc = RatFun(p.univariate_coeffs() or [QZERO])
            out = out + pc * d
            d = d.derivative()
        return out

    def divmod_right(self, other: "DiffOp"):
        """self = Q * other + R in Q(t)<d/dt>; returns (Q, R) with RatFun
        coefficient lists (R may be the empty list for exact division)."""
        var = self.var
        rem = [RatFun(c.univariate_coeffs() or [QZERO]) for c in self.coeffs]
        div = [RatFun(c.univariate_coeffs() or [QZERO]) for c in other.coeffs]
        quo: list[RatFun] = []

        def trim(l):
            while l and l[-1].is_zero():
                l.pop()
            return l

        trim(rem)
        trim(div)
        dn = len(div) - 1
        quo = [RatFun.const(0)] * max(0, len(rem) - len(div) + 1)
        while len(rem) - 1 >= dn and rem:
            k = len(rem) - 1 - dn
            c = rem[-1] / div[-1]
            quo[k] = quo[k] + c
            # subtract (c D^k) * other
            term = _ore_shift(div, k, c, var)
            rem = [a - b for a, b in
                   itertools.zip_longest(rem, term, fillvalue=RatFun.const(0))]
            trim(rem)
        return quo, rem

    def is_right_divisible_by(self, other: "DiffOp") -> bool:
        _, rem = self.divmod_right(other)
        return not rem

    def __eq__(self, other):
        if not isinstance(other, DiffOp):
            return NotImplemented
        return self.var == other.var and self.order == other.order and \
            all((a - b).is_zero() for a, b in zip(self.coeffs, other.coeffs))

    def equals_up_to_scalar(self, other: "DiffOp") -> bool:
        return self.normalize_content() == other.normalize_content()

    def __repr__(self):
        parts = []
        for i in range(self.order, -1, -1):
            c = self.coeffs[i]
            if c.is_zero():
                continue
            cs = f"({c})" if len(c.coeffs) > 1 else f"{c}"
            ds = f"D^{i}" if i > 1 else ("D" if i == 1 else "")
            parts.append(f"{cs}*{ds}" if ds else cs)
        return " + ".join(parts) if parts else "0"

    def coefficient_lines(self) -> str:
        """Operator file format: line i holds p_i as an expression in t."""
        return "\n".join(str(c) for c in self.coeffs) + "\n"


def _ore_shift(div: list[RatFun], k: int, c: RatFun, var: str) -> list[RatFun]:
    """(c * D^k) applied on the left of sum_j div_j D^j (RatFun coeffs)."""
    out = [RatFun.const(0)] * (k + len(div))
    for j, q in enumerate(div):
        if q.is_zero():
            continue
        qk = q
        binom = 1
        for i in range(k + 1):
            if not qk.is_zero():
                out[k - i + j] = out[k - i + j] + c * qk * RatFun.const(binom)
            binom = binom * (k - i) // (i + 1)
            qk = qk.derivative()
    while out and out[-1].is_zero():
        out.pop()
    return out


def right_mul_ddt(P: DiffOp) -> DiffOp:
    return P.right_mul_ddt()


def parse_diffop(text: str, var: str = "t") -> DiffOp:
    """Parse the line-oriented operator format (line i = coefficient p_i)."""
    coeffs = []
    any_line = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        any_line = True
        p = parse_polynomial(line, line0=lineno)
        extra = [v for v in p.used_vars() if v != var]
        if extra:
            raise ValueError(f"operator coefficient on line {lineno} uses "
                             f"variables {extra} other than {var!r}")
        coeffs.append(p.with_vars((var,)))
    if not any_line or all(c.is_zero() for c in coeffs):
        raise ValueError("operator file defines the zero operator")
    return DiffOp(coeffs, var)


# ---------------------------------------------------------------------------
# provider (a): annihilators of algebraic functions
# ---------------------------------------------------------------------------

def _gcd_bivariate_in(f: Polynomial, g: Polynomial, x: str) -> Polynomial:
    """gcd of f, g in Q(t)[x] (primitive in x), f,g in at most 2 variables."""
    a = f.coeffs_in(x)
    b = g.coeffs_in(x)
    while b and b[-1].is_zero():
        b.pop()
    while a and a[-1].is_zero():
        a.pop()
    if not a:
        return Polynomial.from_coeffs_in(b, x)
    if not b:
        return Polynomial.from_coeffs_in(a, x)
    from .exact.poly import _prem
    if len(a) < len(b):
        a, b = b, a
    while len(b) > 1:
        r = _prem(a, b)
        a, b = b, r
        if not b:
            break
    if b:  # nonzero constant in x: gcd is 1 (up to content)
        return Polynomial.constant(1, f.vars)
    return _primitive_in(Polynomial.from_coeffs_in(a, x), x)


def _primitive_in(p: Polynomial, x: str) -> Polynomial:
    coeffs = p.coeffs_in(x)
    g: list = []
    for c in coeffs:
        u = c.univariate_coeffs() if not c.is_zero() else []
        if u:
            g = u if not g else uni_gcd(g, u)
        if len(g) == 1:
            return p
    if not g or len(g) == 1:
        return p
    gp = Polynomial.univariate(g, [v for v in p.vars if v != x][0] if len(p.vars) > 1 else x)
    out = [poly_exact_div(c, gp) if not c.is_zero() else c for c in coeffs]
    return Polynomial.from_coeffs_in(out, x).with_vars(p.vars)


def annihilator_algebraic(f: Polynomial, t: str) -> DiffOp:
    """Nonzero operator of order <= deg_x f annihilating every branch y(t)
    with f(t, y(t)) = 0 (hence every Z-linear combination of branches)."""
    f = f.drop_unused()
    xs = [v for v in f.vars if v != t]
    if len(xs) != 1:
        raise ValueError("annihilator_algebraic expects a bivariate input")
    x = xs[0]
    if f.degree(x) < 1:
        raise ValueError("input polynomial is constant in the function variable")
    f2 = f.with_vars((t, x))
    fx = f2.derivative(x)
    g = _gcd_bivariate_in(f2, fx, x)
    if g.degree(x) >= 1:
        f2 = poly_exact_div(f2, g)
        f2 = _primitive_in(f2, x)
        fx = f2.derivative(x)
    d = f2.degree(x)
    # elements of Q(t)[x]/(f2) as RatFun vectors of length d
    fc = [_ratfun_of(c, t) for c in f2.coeffs_in(x)]
    lead_inv = RatFun.const(1) / fc[d]

    def reduce_vec(vec: list[RatFun]) -> list[RatFun]:
        vec = list(vec)
        while len(vec) > d:
            c = vec.pop()
            if c.is_zero():
                continue
            k = len(vec) - d
            cc = c * lead_inv
            for i in range(d):
                vec[k + i] = vec[k + i] - cc * fc[i]
        while len(vec) < d:
            vec.append(RatFun.const(0))
        return vec

    def mul_elem(a: list[RatFun], b: list[RatFun]) -> list[RatFun]:
        out = [RatFun.const(0)] * (2 * d - 1)
        for i, xi in enumerate(a):
            if xi.is_zero():
                continue
            for j, yj in enumerate(b):
                if not yj.is_zero():
                    out[i + j] = out[i + j] + xi * yj
        return reduce_vec(out)

    def xgcd_inverse(a: list[RatFun]) -> list[RatFun]:
        """Inverse of a modulo f2 over Q(t)."""
        r0 = fc[:]
        r1 = list(a)
        s0, s1 = [RatFun.const(0)], [RatFun.const(1)]

        def trim(l):
            while l and l[-1].is_zero():
                l.pop()
            return l

        trim(r0)
        trim(r1)
        while r1:
            # field division r0 = q r1 + r
            q = [RatFun.const(0)] * max(0, len(r0) - len(r1) + 1)
            r = list(r0)
            inv = RatFun.const(1) / r1[-1]
            while len(r) >= len(r1) and trim(r):
                if len(r) < len(r1):
                    break
                k = len(r) - len(r1)
                c = r[-1] * inv
                q[k] = q[k] + c
                for i in range(len(r1)):
                    r[k + i] = r[k + i] - c * r1[i]
                trim(r)
            r0, r1 = r1, r
            s0, s1 = s1, _vec_sub(s0, _vec_mul_poly(q, s1))
        if len(r0) != 1:
            raise ValueError("degenerate: derivative not invertible modulo f")
        inv = RatFun.const(1) / r0[0]
        return reduce_vec([c * inv for c in s0])

    ft_vec = reduce_vec([_ratfun_of(c, t) for c in f2.derivative(t).coeffs_in(x)])
    fx_vec = reduce_vec([_ratfun_of(c, t) for c in fx.coeffs_in(x)])
    fx_inv = xgcd_inverse(fx_vec)
    yprime = [(-RatFun.const(1)) * c for c in mul_elem(ft_vec, fx_inv)]

    def derive(vec: list[RatFun]) -> list[RatFun]:
        # D(a) = da/dt + da/dx * y'
        dt = [c.derivative() for c in vec]
        dx = [RatFun.const(k + 1) * vec[k + 1] for k in range(len(vec) - 1)]
        return _vec_add(dt, mul_elem(dx + [RatFun.const(0)], yprime))

    # Krylov: x, D x, D^2 x, ... first linear dependence over Q(t)
    rows: list[tuple[list[RatFun], list[RatFun]]] = []  # (echelon vec, combo)
    cur = reduce_vec([RatFun.const(0), RatFun.const(1)])
    combo = [RatFun.const(1)]
    k = 0
    while True:
        vec = list(cur)
        cmb = list(combo)
        for evec, ecmb in rows:
            piv = next(i for i, c in enumerate(evec) if not c.is_zero())
            if not vec[piv].is_zero():
                factor = vec[piv] / evec[piv]
                vec = [a - factor * b for a, b in zip(vec, evec)]
                cmb = [a - factor * b for a, b in
                       itertools.zip_longest(cmb, ecmb, fillvalue=RatFun.const(0))]
        if all(c.is_zero() for c in vec):
            # dependence found: sum cmb_j D^j (x) = 0
            den_l = [QONE]
            for c in cmb:
                den_l = _poly_mul_den_lcm(den_l, c.den)
            coeffs = []
            for c in cmb:
                q, r = uni_divmod(_poly_mul(c.num, den_l), c.den)
                assert not r
                coeffs.append(Polynomial.univariate(q, t))
            return DiffOp(coeffs, t).normalize_content()
        rows.append((vec, cmb))
        k += 1
        if k > d:
            raise RuntimeError("no dependence found below the dimension bound")
        cur = derive(cur)
        combo = [RatFun.const(0)] + combo
        # pad previous combos implicitly via zip_longest
        cur = reduce_vec(cur)


def _poly_mul_den_lcm(a: list[mpq], b: list[mpq]) -> list[mpq]:
    g = uni_gcd(a, b)
    q, r = uni_divmod(b, g)
    assert not r
    return _poly_mul(a, q)


def _vec_add(a, b):
    return [x + y for x, y in itertools.zip_longest(a, b, fillvalue=RatFun.const(0))]


def _vec_sub(a, b):
    return [x - y for x, y in itertools.zip_longest(a, b, fillvalue=RatFun.const(0))]


def _vec_mul_poly(q, s):
    """Product of dense RatFun polynomial lists."""
    if not q or not s:
        return []
    out = [RatFun.const(0)] * (len(q) + len(s) - 1)
    for i, x in enumerate(q):
        if x.is_zero():
            continue
        for j, y in enumerate(s):
            if not y.is_zero():
                out[i + j] = out[i + j] + x * y
    return out


def _ratfun_of(c: Polynomial, t: str) -> RatFun:
    c = c.drop_unused()
    if c.is_zero():
        return RatFun.const(0)
    if c.is_constant():
        return RatFun.const(c.constant_value())
    return RatFun(c.with_vars((t,)).univariate_coeffs())


# ---------------------------------------------------------------------------
# provider (b): bounded-ansatz creative telescoping
# ---------------------------------------------------------------------------

@dataclass
class Telescoper:
    """L and a certificate with f-power denominators only:
    L(g/f) = sum_v d/dv (A_v / f^k), an exact identity in Q(t, x)."""
    operator: DiffOp
    certificate: tuple          # A_v polynomials, aligned with int_vars
    pole_order: int
    f: Polynomial
    numerator: Polynomial
    int_vars: tuple
    t: str

    def verify(self) -> bool:
        return _verify_telescoper_identity(
            self.f, self.numerator, self.operator, self.certificate,
            self.pole_order, self.int_vars, self.t)


def _integrand_numerators(f: Polynomial, g: Polynomial, t: str, m: int):
    """H_i with d^i/dt^i (g/f) = H_i / f^(i+1)."""
    hs = [g]
    ft = f.derivative(t)
    for i in range(m):
        h = hs[-1]
        hs.append(f * h.derivative(t) - (i + 1) * h * ft)
    return hs


def _verify_telescoper_identity(f, g, L, cert, k, int_vars, t) -> bool:
    m = L.order
    if k < m:
        return False
    g = g.with_vars(f.vars) if set(g.vars) <= set(f.vars) else g
    hs = _integrand_numerators(f, g, t, m)
    lhs = Polynomial.constant(0, f.vars)
    for i, q in enumerate(L.coeffs):
        if q.is_zero():
            continue
        lhs = lhs + q.with_vars(f.vars) * hs[i] * f ** (k - i)
    rhs = Polynomial.constant(0, f.vars)
    for v, A in zip(int_vars, cert):
        if A.is_zero():
            continue
        Av = A.with_vars(f.vars)
        rhs = rhs + f * Av.derivative(v) - k * Av * f.derivative(v)
    return (lhs - rhs).is_zero()


# 31-bit primes: products fit comfortably in int64 for numpy row updates
_PRIMES31 = [
    2147483629, 2147483587, 2147483579, 2147483563, 2147483549,
    2147483543, 2147483497, 2147483489, 2147483477, 2147483423,
    2147483399, 2147483353, 2147483323, 2147483269, 2147483249,
    2147483237, 2147483179, 2147483171, 2147483137, 2147483123,
    2147483077, 2147483069, 2147483059, 2147483053, 2147483033,
    2147483029, 2147482951, 2147482949, 2147482943, 2147482937,
    2147482921, 2147482877, 2147482873, 2147482867, 2147482859,
    2147482819, 2147482817, 2147482811, 2147482801, 2147482763,
    2147482739, 2147482697, 2147482693, 2147482681, 2147482663,
    2147482661, 2147482621, 2147482591, 2147482583, 2147482577,
    2147482507, 2147482501, 2147482481, 2147482417, 2147482409,
    2147482367, 2147482361, 2147482349, 2147482343, 2147482327,
    2147482291, 2147482273, 2147482237, 2147482231, 2147482223,
]


def _rational_reconstruct(r: mpz, M: mpz):
    """Wang rational reconstruction of r mod M; None if impossible."""
    r = mpz(r % M)
    bound = mpz(int((M // 2)) ** 0.5) if False else _isqrt(M // 2)
    s0, s1 = mpz(M), r
    t0, t1 = mpz(0), mpz(1)
    while s1 > bound:
        qt = s0 // s1
        s0, s1 = s1, s0 - qt * s1
        t0, t1 = t1, t0 - qt * t1
    if abs(t1) > bound or t1 == 0:
        return None
    if gcd(s1, t1) != 1:
        return None
    if t1 < 0:
        s1, t1 = -s1, -t1
    return mpq(s1, t1)


def _isqrt(n: mpz) -> mpz:
    from gmpy2 import isqrt
    return isqrt(n)


class _AnsatzSystem:
    """Sparse linear system for one (m, k, dq) telescoping ansatz."""

    def __init__(self, f: Polynomial, g: Polynomial, int_vars, t,
                 m: int, k: int, dq: int, hs_cache: dict):
        all_vars = f.vars
        for v in g.vars:
            if v not in all_vars:
                all_vars = all_vars + (v,)
        f = f.with_vars(all_vars)
        g = g.with_vars(all_vars)
        self.f = f
        self.g = g
        self.int_vars = tuple(int_vars)
        self.t = t
        self.m, self.k, self.dq = m, k, dq
        ti = all_vars.index(t)
        key = m
        if key not in hs_cache:
            hs_cache[key] = _integrand_numerators(f, g, t, m)
        hs = hs_cache[key]
        # products H_i * f^(k-i)
        pkey = ("P", m, k)
        if pkey not in hs_cache:
            fp = {0: Polynomial.constant(1, all_vars)}
            mx = max(k - i for i in range(m + 1))
            cur = Polynomial.constant(1, all_vars)
            for e in range(1, mx + 1):
                cur = cur * f
                fp[e] = cur
            hs_cache[pkey] = [hs[i] * fp[k - i] for i in range(m + 1)]
        self.pi = hs_cache[pkey]

        # columns
        self.columns: list[dict] = []   # monomial -> int coefficient
        self.col_kind: list[tuple] = []  # ("q", i, a) or ("A", vi, mono)
        # scale everything to integers once
        scale = mpz(1)
        for p in self.pi + [f]:
            for c in p.coeffs.values():
                scale = scale * c.denominator // gcd(scale, c.denominator)
        self.scale = scale

        nvars = len(all_vars)
        deg_bounds = [0] * nvars
        tot_bound = 0
        for i, p in enumerate(self.pi):
            if p.is_zero():
                continue
            for w in range(nvars):
                d = p.degree(all_vars[w]) + (dq if w == ti else 0)
                deg_bounds[w] = max(deg_bounds[w], d)
            tot_bound = max(tot_bound, p.total_degree() + dq)
        fdeg = [max(f.degree(v), 1) for v in all_vars]
        a_bounds = [max(0, deg_bounds[w] - fdeg[w] + 1) for w in range(nvars)]
        a_tot = max(0, tot_bound - f.total_degree() + 1)

        # q columns
        for i in range(m + 1):
            base = self.pi[i]
            if base.is_zero():
                continue
            for a in range(dq + 1):
                col = {}
                for e, c in base.coeffs.items():
                    e2 = list(e)
                    e2[ti] += a
                    col[tuple(e2)] = mpz(c * scale)
                self.columns.append(col)
                self.col_kind.append(("q", i, a))
        # A columns: f d/dv(x^mu) - k x^mu d/dv f collapses to
        # sum_e (mu_v - k e_v) f_e x^(mu + e - e_v)
        fitems = [(e, mpz(c * scale)) for e, c in f.coeffs.items()]
        for vi, v in enumerate(self.int_vars):
            w = all_vars.index(v)
            for mono in _monomials_box(a_bounds, a_tot):
                col = {}
                for e, c in fitems:
                    coef = (mono[w] - k * e[w]) * c
                    if not coef:
                        continue
                    tgt = list(mono)
                    for x in range(nvars):
                        tgt[x] += e[x]
                    tgt[w] -= 1
                    if tgt[w] < 0:
                        continue
                    tgt = tuple(tgt)
                    prev = col.get(tgt)
                    if prev is None:
                        col[tgt] = coef
                    else:
                        s = prev + coef
                        if s:
                            col[tgt] = s
                        else:
                            del col[tgt]
                if col:
                    self.columns.append({kk: -vv for kk, vv in col.items()})
                    self.col_kind.append(("A", vi, mono))

        # connected components (rows are monomials)
        parent: dict = {}

        def find(x):
            while parent.get(x, x) != x:
                parent[x] = parent.get(parent[x], parent[x])
                x = parent[x]
            return x

        def union(x, y):
            rx, ry = find(x), find(y)
            if rx != ry:
                parent[rx] = ry

        for ci, col in enumerate(self.columns):
            first = None
            for mono in col:
                key = ("r", mono)
                if first is None:
                    first = key
                else:
                    union(key, first)
            if first is not None:
                union(("c", ci), first)
        keep_roots = {find(("c", ci)) for ci, kind in enumerate(self.col_kind)
                      if kind[0] == "q"}
        self.active_cols = [ci for ci in range(len(self.columns))
                            if find(("c", ci)) in keep_roots]
        rows = sorted({mono for ci in self.active_cols
                       for mono in self.columns[ci]})
        self.row_index = {mono: i for i, mono in enumerate(rows)}
        self.nrows = len(rows)

    def modular_nullvector(self, p: int):
        """RREF mod p with A-columns first; returns (pivot structure key,
        nullvector dict col->residue, chosen free q-column) or None."""
        acols = [ci for ci in self.active_cols if self.col_kind[ci][0] == "A"]
        qcols = [ci for ci in self.active_cols if self.col_kind[ci][0] == "q"]
        order = acols + qcols
        ncols = len(order)
        if not self.nrows or not qcols:
            return None
        M = np.zeros((self.nrows, ncols), dtype=np.int64)
        for jj, ci in enumerate(order):
            for mono, c in self.columns[ci].items():
                M[self.row_index[mono], jj] = int(c % p)
        piv_rows = []
        piv_cols = []
        r = 0
        for c in range(ncols):
            if r >= self.nrows:
                break
            col = M[r:, c]
            nz = np.nonzero(col)[0]
            if nz.size == 0:
                continue
            i = r + int(nz[0])
            if i != r:
                M[[r, i]] = M[[i, r]]
            inv = pow(int(M[r, c]), p - 2, p)
            M[r] = (M[r] * inv) % p
            colvals = M[:, c].copy()
            colvals[r] = 0
            nzr = np.nonzero(colvals)[0]
            if nzr.size:
                M[nzr] = (M[nzr] - np.outer(colvals[nzr], M[r])) % p
            piv_rows.append(r)
            piv_cols.append(c)
            r += 1
        piv_set = set(piv_cols)
        free_q = None
        for jj in range(len(acols), ncols):
            if jj not in piv_set:
                free_q = jj
                break
        if free_q is None:
            return None
        null = {order[free_q]: 1}
        for pr, pc in zip(piv_rows, piv_cols):
            val = int(M[pr, free_q]) % p
            if val:
                null[order[pc]] = (-val) % p
        return (tuple(piv_cols), free_q), null


def telescoper_rational(f: Polynomial, numerator: Polynomial,
                        int_vars, t: str, budget: int = 40,
                        require_class_d: bool = True) -> Telescoper:
    """Search for (L, certificate) with L(numerator/f) = sum_v d/dv(A_v/f^k),
    enumerating (order m, pole order k, coefficient degree d) by increasing
    m + k + d; certificates carry denominators f^k only.

    Two accelerators prune the schedule without affecting soundness (every
    candidate is verified exactly): a t-evaluated modular probe discards
    (m, k) families that admit no operator at any degree, and modular
    rational interpolation guesses the coefficient degree to try first.
    """
    f = f.drop_unused()
    int_vars = tuple(int_vars)
    if len(int_vars) > 2:
        raise TelescoperNotFound("more than two integration variables")
    hs_cache: dict = {}
    family: dict = {}  # (m, k) -> "dead" | "done"
    tried: set = set()

    def attempt(m, k, dq):
        if (m, k, dq) in tried:
            return None
        tried.add((m, k, dq))
        try:
            tel = _try_ansatz(f, numerator, int_vars, t, m, k, dq, hs_cache)
        except _BadModularRun:
            return None
        if tel is None:
            return None
        if require_class_d:
            rep = verify_class_D(tel.operator)
            if not (rep.fuchsian and rep.all_rational):
                return None
        return tel

    def feasible(m, k, dq) -> bool:
        try:
            return bool(_try_ansatz(f, numerator, int_vars, t, m, k, dq,
                                    hs_cache, feasibility_only=True))
        except Exception:
            return False

    for s in range(2, budget + 1):
        for m in range(1, s):
            for k in range(m, s - m + 1):
                dq = s - m - k
                state = family.get((m, k))
                if state is not None:
                    continue  # family resolved (dead or already swept)
                probe = _TauProbe(f, numerator, int_vars, t, m, k)
                alive = False
                for tau, p in ((mpq(5, 2), _PRIMES31[0]),
                               (mpq(7, 3), _PRIMES31[1])):
                    try:
                        if probe.solve_at(tau, p) is not None:
                            alive = True
                            break
                    except Exception:
                        alive = True  # probe failure must not prune
                        break
                if not alive:
                    family[(m, k)] = "dead"
                    continue
                family[(m, k)] = "done"
                dq_max = budget - m - k
                # locate the minimal feasible degree with single-prime tests
                dq_lo = None
                cand = 0
                step_list = [0, 1, 2, 4, 6, 8, 12, 16, 24, 32]
                for cand in step_list:
                    if cand > dq_max:
                        break
                    if feasible(m, k, cand):
                        dq_lo = cand
                        break
                if dq_lo is None:
                    continue
                # refine downward
                prev = 0
                for prevc in reversed([c for c in step_list if c < dq_lo]):
                    prev = prevc
                    break
                lo, hi = prev, dq_lo
                while hi - lo > 1:
                    mid = (lo + hi) // 2
                    if feasible(m, k, mid):
                        hi = mid
                    else:
                        lo = mid
                start = hi if dq_lo > 0 else 0
                for dqg in (start, start + 1, start + 2):
                    if m + k + dqg <= budget:
                        tel = attempt(m, k, dqg)
                        if tel is not None:
                            return tel
    raise TelescoperNotFound("telescoper not found within budget "
                             f"m+k+d <= {budget}")


class _BadModularRun(Exception):
    pass


def _try_ansatz(f, g, int_vars, t, m, k, dq, hs_cache,
                feasibility_only: bool = False) -> Telescoper | None | bool:
    sys = _AnsatzSystem(f, g, int_vars, t, m, k, dq, hs_cache)
    if not sys.active_cols:
        return False if feasibility_only else None
    if feasibility_only:
        return sys.modular_nullvector(_PRIMES31[0]) is not None
    null_by_prime: list[tuple[int, dict]] = []
    structure = None
    max_primes = min(48, len(_PRIMES31))
    pi = 0
    misses = 0
    while pi < max_primes:
        batch = 0
        while pi < max_primes and batch < (3 if not null_by_prime else 2):
            p = _PRIMES31[pi]
            pi += 1
            got = sys.modular_nullvector(p)
            if got is None:
                if structure is None and not null_by_prime:
                    return None  # very likely genuinely infeasible
                misses += 1
                if misses >= 2:
                    return None  # the first structure was a bad-prime artifact
                continue
            struct, null = got
            if structure is None:
                structure = struct
            elif struct != structure:
                misses += 1
                if misses >= 3:
                    return None
                continue  # bad prime
            null_by_prime.append((p, null))
            batch += 1
        if not null_by_prime:
            return None
        # CRT + rational reconstruction (a residue absent from a prime's
        # nullvector means it is 0 mod that prime)
        M = mpz(1)
        for p, _ in null_by_prime:
            M *= p
        cols = set()
        for _, null in null_by_prime:
            cols.update(null)
        sol = {}
        ok = True
        for ci in cols:
            pairs = [(null.get(ci, 0), p) for p, null in null_by_prime]
            v = _rational_reconstruct(_crt(pairs), M)
            if v is None:
                ok = False
                break
            sol[ci] = v
        if ok:
            tel = _build_telescoper(sys, sol)
            if tel is not None and tel.verify():
                return tel
        if pi >= max_primes:
            return None
    return None


def _crt(pairs) -> mpz:
    x = mpz(0)
    M = mpz(1)
    for r, p in pairs:
        p = mpz(p)
        # x' == x mod M, x' == r mod p
        inv = invert(M % p, p)
        tdelta = ((mpz(r) - x) * inv) % p
        x = x + M * tdelta
        M *= p
    return x % M


def _build_telescoper(sys: _AnsatzSystem, sol: dict) -> Telescoper | None:
    all_vars = sys.f.vars
    qs = [dict() for _ in range(sys.m + 1)]
    certs = [dict() for _ in sys.int_vars]
    ti = all_vars.index(sys.t)
    for ci, v in sol.items():
        if not v:
            continue
        kind = sys.col_kind[ci]
        if kind[0] == "q":
            _, i, a = kind
            e = tuple(a if w == ti else 0 for w in range(len(all_vars)))
            qs[i][e] = qs[i].get(e, mpq(0)) + v
        else:
            _, vi, mono = kind
            certs[vi][mono] = certs[vi].get(mono, mpq(0)) + v
    qpolys = [Polynomial(all_vars, d).drop_unused().with_vars((sys.t,))
              for d in qs]
    if all(q.is_zero() for q in qpolys):
        return None
    while qpolys and qpolys[-1].is_zero():
        qpolys.pop()
    L = DiffOp(qpolys, sys.t)
    cert = tuple(Polynomial(all_vars, d) for d in certs)
    return Telescoper(L, cert, sys.k, sys.f, sys.g, sys.int_vars, sys.t)


def _monomials_box(bounds: list[int], total: int):
    n = len(bounds)

    def rec(i, left):
        if i == n:
            yield ()
            return
        for d in range(0, min(bounds[i], left) + 1):
            for rest in rec(i + 1, left - d):
                yield (d,) + rest

    yield from rec(0, total)


# ---------------------------------------------------------------------------
# provider (c): operator import, class-D verification, dispatcher
# ---------------------------------------------------------------------------

@dataclass
class ClassDReport:
    fuchsian: bool
    all_rational: bool
    points: list  # (location, kind, exponents tuple)

    @property
    def is_class_d(self):
        return self.fuchsian and self.all_rational


def verify_class_D(P: DiffOp) -> ClassDReport:
    """Classify every singular point (finite real/complex via criteria on
    real ones plus infinity) and check exponent rationality."""
    from .odelocal import (classify_singularities, INFINITY,
                           reciprocal_operator, theta_form,
                           _rational_roots_with_multiplicity)
    pts = classify_singularities(P)
    fuchsian = all(s.kind == "regular_singular" for s in pts)
    all_rational = True
    out = []
    for s in pts:
        ok = bool(s.exponents) or s.kind != "regular_singular"
        if s.kind == "regular_singular" and len(s.exponents) != P.order:
            all_rational = False
        out.append((s.location, s.kind, s.exponents))
    if not fuchsian:
        all_rational = all_rational and True
    # complex singular points: the multiplicity criterion via resultant-free
    # global check: for Fuchsianity we also need the complex roots of the
    # leading coefficient to be regular; check degree bounds instead:
    # mult criterion at every root of p_m holds iff for all i,
    # deg gcd-free valuation controls... use the global sufficient check:
    if fuchsian:
        fuchsian = _complex_regularity(P) and fuchsian
    return ClassDReport(fuchsian, all_rational, out)


def _complex_regularity(P: DiffOp) -> bool:
    """Regularity at every (possibly complex) root of the leading coefficient.

    Uses the valuation criterion with the full squarefree factor chain:
    every root u of p_m with multiplicity mu must satisfy
    ord_u(p_i) >= mu - (order - i) for all i.  We check it via exact gcd
    computations, no complex root isolation."""
    from .exact import uni_gcd, uni_divmod
    var = P.var
    m = P.order
    pm = P.leading_coefficient().univariate_coeffs()
    # square-free decomposition of p_m: p_m = prod B_j^j
    parts = _squarefree_decomposition(pm)
    for mult, factor in parts:
        if len(factor) <= 1:
            continue
        # at roots of `factor` (multiplicity `mult` in p_m):
        for i, c in enumerate(P.coeffs[:-1]):
            need = mult - (m - i)
            if need <= 0:
                continue
            # ord_u(p_i) >= need for every root u of factor:
            # factor^need must divide p_i (since factor is squarefree)
            ci = c.univariate_coeffs() if not c.is_zero() else []
            if not ci:
                continue
            rem_ok = _divides_power(factor, need, ci)
            if not rem_ok:
                return False
    return True


def _squarefree_decomposition(poly: list) -> list:
    """Yun-style decomposition [(multiplicity, factor coefficients)]."""
    from .exact import uni_gcd, uni_divmod
    out = []
    a = list(poly)
    da = [k * a[k] for k in range(1, len(a))]
    g = uni_gcd(a, da)
    if len(g) <= 1:
        return [(1, a)]
    b, _ = uni_divmod(a, g)
    c, _ = uni_divmod(da, g)
    i = 1
    while len(b) > 1:
        db = [k * b[k] for k in range(1, len(b))]
        d = [x - y for x, y in zip(c + [mpq(0)] * len(db), db + [mpq(0)] * len(c))]
        d = _uni_trim(d[:max(len(c), len(db))])
        w = uni_gcd(b, d)
        if len(w) > 1:
            out.append((i, w))
        b2, _ = uni_divmod(b, w)
        c2, _ = uni_divmod(d, w)
        b, c = b2, c2
        i += 1
    return out


def _divides_power(factor: list, power: int, target: list) -> bool:
    from .exact import uni_divmod
    cur = list(target)
    for _ in range(power):
        q, r = uni_divmod(cur, factor)
        if r:
            return False
        cur = q
        if len(cur) == 0:
            return True
    return True


def import_operator(path: str, var: str = "t",
                    allow_non_fuchsian: bool = False):
    """Provider (c): read a line-oriented coefficient file; verify_class_D is
    run and its report attached; annihilation of the target period is only
    asserted by the user (trusted=True)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    op = parse_diffop(text, var)
    report = verify_class_D(op)
    if not report.is_class_d and not allow_non_fuchsian:
        raise NotClassD("imported operator is not in class D "
                        "(use --allow-non-fuchsian to override)")
    return op, report, True


@dataclass
class PFPolicy:
    operator_path: str | None = None
    budget: int = 40
    allow_non_fuchsian: bool = False


_pf_cache: dict = {}


def picard_fuchs(f: Polynomial, t: str, policy: PFPolicy | None = None) -> DiffOp:
    """Dispatcher: provider (a) for bivariate f, provider (b) for two
    integration variables, provider (c) when an operator file is supplied.
    The returned operator passes verify_class_D."""
    policy = policy or PFPolicy()
    f = f.drop_unused()
    if t not in f.vars:
        raise ValueError(f"parameter {t!r} does not occur in the polynomial")
    key = (hash(f), f.vars, t, policy.operator_path)
    got = _pf_cache.get(key)
    if got is not None:
        return got
    nint = len(f.vars) - 1
    if policy.operator_path:
        op, report, _ = import_operator(policy.operator_path, t,
                                        policy.allow_non_fuchsian)
    elif nint == 1:
        op = annihilator_algebraic(f, t)
        op = op.normalize_content()
        report = verify_class_D(op)
        if not report.is_class_d:
            raise NotClassD("provider (a) produced an operator outside "
                            "class D")
    elif nint == 2:
        x1 = [v for v in f.vars if v != t][0]
        g = Polynomial.variable(x1, f.vars) * f.derivative(x1)
        tel = telescoper_rational(f, g, [v for v in f.vars if v != t], t,
                                  budget=policy.budget)
        op = tel.operator.normalize_content()
    else:
        raise ValueError("unsupported dimension, supply --pf-operator")
    _pf_cache[key] = op
    return op


# ---------------------------------------------------------------------------
# search acceleration: t-evaluated probes and modular degree detection
# ---------------------------------------------------------------------------
# The (m, k, d) schedule is driven exactly as specified; these helpers only
# decide cheaply that a whole (m, k) family is infeasible (a specialized
# t = tau system already has no operator-bearing nullvector) or guess the
# coefficient degree to try first.  Any candidate found is verified exactly,
# so the accelerators cannot affect soundness.

class _TauProbe:
    """The ansatz system with t evaluated: rows are (x, y)-monomials."""

    def __init__(self, f, g, int_vars, t, m, k):
        all_vars = f.vars
        for v in g.vars:
            if v not in all_vars:
                all_vars = all_vars + (v,)
        f = f.with_vars(all_vars)
        g = g.with_vars(all_vars)
        self.int_vars = tuple(int_vars)
        self.m, self.k = m, k
        self.t = t
        self.f, self.g = f, g
        self.hs = _integrand_numerators(f, g, t, m)
        rest = tuple(v for v in all_vars if v != t)
        self.rest = rest
        dyz = 0
        for i, h in enumerate(self.hs):
            dyz = max(dyz, _deg_in(h, rest) + (k - i) * _deg_in(f, rest))
        self.abound = max(0, dyz - _deg_in(f, rest) + 1)
        self.dyz = dyz

    def solve_at(self, tau: mpq, p: int):
        """Returns (q-vector mod p or None) for the specialized system."""
        f_t = self.f.substitute(self.t, tau)
        hs_t = [h.substitute(self.t, tau) for h in self.hs]
        rest = self.rest
        # columns
        cols = []
        kinds = []
        den = mpz(1)
        polys = hs_t + [f_t]
        for pPoly in polys:
            for c in pPoly.coeffs.values():
                den = den * c.denominator // gcd(den, c.denominator)
        fitems = [(e, mpz(c * den) % p) for e, c in
                  f_t.with_vars(rest).coeffs.items()]
        for vi, v in enumerate(self.int_vars):
            w = rest.index(v)
            for mono in _monomials_box([self.abound] * len(rest), self.abound):
                col = {}
                for e, c in fitems:
                    coef = (mono[w] - self.k * e[w]) * c % p
                    if not coef:
                        continue
                    tgt = list(mono)
                    for x in range(len(rest)):
                        tgt[x] += e[x]
                    tgt[w] -= 1
                    if tgt[w] < 0:
                        continue
                    tgt = tuple(tgt)
                    col[tgt] = (col.get(tgt, 0) - coef) % p
                col = {kk: vv for kk, vv in col.items() if vv}
                if col:
                    cols.append(col)
                    kinds.append(("A", vi, mono))
        for i in range(self.m + 1):
            hp = hs_t[i].with_vars(rest) * (f_t.with_vars(rest) ** (self.k - i))
            col = {}
            for e, c in hp.coeffs.items():
                val = int(mpz(c * den) % p)
                if val:
                    col[e] = val
            if col:
                cols.append(col)
                kinds.append(("q", i))
        rows = sorted({mono for col in cols for mono in col})
        ridx = {mono: i for i, mono in enumerate(rows)}
        if not rows:
            return None
        M = np.zeros((len(rows), len(cols)), dtype=np.int64)
        for j, col in enumerate(cols):
            for mono, c in col.items():
                M[ridx[mono], j] = c
        r = 0
        pivots = {}
        for c in range(len(cols)):
            nz = np.nonzero(M[r:, c])[0]
            if nz.size == 0:
                continue
            i = r + int(nz[0])
            if i != r:
                M[[r, i]] = M[[i, r]]
            inv = pow(int(M[r, c]), p - 2, p)
            M[r] = (M[r] * inv) % p
            colv = M[:, c].copy()
            colv[r] = 0
            nzr = np.nonzero(colv)[0]
            if nzr.size:
                M[nzr] = (M[nzr] - np.outer(colv[nzr], M[r])) % p
            pivots[c] = r
            r += 1
            if r == len(rows):
                break
        free_q = None
        for j, kind in enumerate(kinds):
            if kind[0] == "q" and j not in pivots:
                free_q = j
                break
        if free_q is None:
            return None
        vec = {free_q: 1}
        for c, rr in pivots.items():
            val = int(M[rr, free_q]) % p
            if val:
                vec[c] = (-val) % p
        q = [0] * (self.m + 1)
        for j, kind in enumerate(kinds):
            if kind[0] == "q" and j in vec:
                q[kind[1]] = vec[j]
        return q if any(q) else None


def _deg_in(poly: Polynomial, variables) -> int:
    d = 0
    for e in poly.coeffs:
        d = max(d, sum(e[poly.vars.index(v)] for v in variables))
    return d if poly.coeffs else 0
