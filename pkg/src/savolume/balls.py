"""Arbitrary-precision validated real/complex arithmetic (midpoint-radius).

A Ball is {x : |x - mid| <= rad} with a dyadic midpoint man*2^exp carried to
the working precision and a short nonnegative dyadic radius.  Every operation
returns a ball containing the exact image of its input sets; midpoints are
rounded to the working precision with the rounding error folded into the
radius (outward).

Elementary functions are limited to what Frobenius evaluation needs: log,
rational powers, pi, and the root-of-unity values cos/sin(pi*q) used for
branch factors on the negative real axis.
"""

from __future__ import annotations

from gmpy2 import mpq, mpz, gcd, iroot, isqrt

RADBITS = 32  # radius mantissa width

_MZ = mpz(0)
_M1 = mpz(1)


class PossibleSingularity(ArithmeticError):
    """Division by a ball containing zero (or log/power at such a ball)."""


class InsufficientPrecision(ArithmeticError):
    """A certified operation could not be completed at this precision."""


class InconsistentSystem(ArithmeticError):
    """An over-determined interval system has a residual excluding zero."""


# -- radius kernels: nonnegative (man, exp) with man <= 2^RADBITS ------------

def _rnorm(m: mpz, e: int) -> tuple[mpz, int]:
    b = m.bit_length()
    if b > RADBITS:
        sh = b - RADBITS
        return (m >> sh) + 1, e + sh
    return m, e


def _radd(m1, e1, m2, e2) -> tuple[mpz, int]:
    if not m1:
        return m2, e2
    if not m2:
        return m1, e1
    if e1 < e2:
        m1, e1, m2, e2 = m2, e2, m1, e1
    sh = e1 - e2
    if sh > RADBITS + 4:
        return _rnorm(m1 + 1, e1)
    return _rnorm((m1 << sh) + m2, e2)


def _rmul(m1, e1, m2, e2) -> tuple[mpz, int]:
    if not m1 or not m2:
        return _MZ, 0
    return _rnorm(m1 * m2, e1 + e2)


def _rcmp(m1, e1, m2, e2) -> int:
    """Compare m1*2^e1 with m2*2^e2."""
    if not m1:
        return 0 if not m2 else -1
    if not m2:
        return 1
    b1 = e1 + m1.bit_length()
    b2 = e2 + m2.bit_length()
    if b1 != b2:
        return -1 if b1 < b2 else 1
    sh = e1 - e2
    v1 = m1 << sh if sh > 0 else m1
    v2 = m2 << -sh if sh < 0 else m2
    return -1 if v1 < v2 else (1 if v1 > v2 else 0)


def _round_mid(man: mpz, exp: int, prec: int):
    """Round man*2^exp to prec bits (nearest); returns (man, exp, rman, rexp)
    with the rounding error bounded by rman*2^rexp."""
    if not man:
        return _MZ, 0, _MZ, 0
    b = man.bit_length()
    sh = b - prec
    if sh <= 0:
        return man, exp, _MZ, 0
    neg = man < 0
    am = -man if neg else man
    q = am >> sh
    r = am & ((_M1 << sh) - 1)
    if (r << 1) >= (_M1 << sh):
        q += 1
    return (-q if neg else q), exp + sh, _M1, exp + sh - 1


class Ball:
    """Midpoint-radius enclosure of a real number."""

    __slots__ = ("man", "exp", "rman", "rexp", "prec")

    def __init__(self, man, exp, rman, rexp, prec):
        self.man = mpz(man)
        self.exp = exp
        self.rman = mpz(rman)
        self.rexp = rexp
        self.prec = prec

    # -- constructors ---------------------------------------------------

    @staticmethod
    def exact_int(n, prec=53) -> "Ball":
        return Ball(n, 0, 0, 0, prec)

    @staticmethod
    def exact_dyadic(man, exp, prec=53) -> "Ball":
        return Ball(man, exp, 0, 0, prec)

    @staticmethod
    def zero(prec=53) -> "Ball":
        return Ball(0, 0, 0, 0, prec)

    @staticmethod
    def from_fraction(q, prec=53) -> "Ball":
        q = mpq(q)
        num, den = q.numerator, q.denominator
        if den == 1:
            return Ball(num, 0, 0, 0, prec)
        # scaled integer division with explicit remainder
        sh = prec + max(0, den.bit_length() - num.bit_length()) + 8
        qq, r = divmod(num << sh, den)
        rman, rexp = (_MZ, 0) if not r else (_M1, -sh)
        man, exp, rm2, re2 = _round_mid(qq, -sh, prec)
        rman, rexp = _radd(rman, rexp, rm2, re2)
        return Ball(man, exp, rman, rexp, prec)

    @staticmethod
    def from_interval(lo: mpq, hi: mpq, prec=53) -> "Ball":
        lo, hi = mpq(lo), mpq(hi)
        mid = Ball.from_fraction((lo + hi) / 2, prec)
        half = Ball.from_fraction((hi - lo) / 2, 24)
        hm, he = half.mag_upper()
        rman, rexp = _radd(hm, he, mid.rman, mid.rexp)
        return Ball(mid.man, mid.exp, rman, rexp, prec)

    @staticmethod
    def with_radius_2exp(mid_ball: "Ball", e: int) -> "Ball":
        rman, rexp = _radd(mid_ball.rman, mid_ball.rexp, _M1, e)
        return Ball(mid_ball.man, mid_ball.exp, rman, rexp, mid_ball.prec)

    # -- queries ----------------------------------------------------------

    def is_exact(self) -> bool:
        return not self.rman

    def is_exact_zero(self) -> bool:
        return not self.man and not self.rman

    def midpoint_fraction(self) -> mpq:
        e = self.exp
        return mpq(self.man) * (mpq(2) ** e if e >= 0 else mpq(1, _M1 << -e))

    def radius_fraction(self) -> mpq:
        e = self.rexp
        return mpq(self.rman) * (mpq(2) ** e if e >= 0 else mpq(1, _M1 << -e))

    def width_log2_upper(self):
        """ceil(log2(2*rad)); None for exact balls."""
        if not self.rman:
            return None
        return self.rexp + self.rman.bit_length() + 1

    def mag_upper(self) -> tuple[mpz, int]:
        """(m, e) with |x| <= m*2^e for all x in the ball, m < 2^(RADBITS+1)."""
        am = abs(self.man)
        m, e = _rnorm(am + 1, self.exp) if am else (_MZ, 0)
        return _radd(m, e, self.rman, self.rexp)

    def mag_lower(self) -> tuple[mpz, int]:
        """(m, e) with |x| >= m*2^e for all x in the ball (0 if 0 possible)."""
        am = abs(self.man)
        if not am:
            return _MZ, 0
        # |mid| lower bound minus radius, rounded down
        b = am.bit_length()
        sh = max(0, b - (RADBITS + 2))
        mlo, elo = am >> sh, self.exp + sh  # <= |mid|
        if not self.rman:
            return mlo, elo
        c = _rcmp(mlo, elo, self.rman, self.rexp)
        if c <= 0:
            return _MZ, 0
        # align and subtract (shift bounded because the compare passed)
        if elo <= self.rexp:
            diff = mlo - (self.rman << (self.rexp - elo))
            return diff, elo
        sh2 = elo - self.rexp
        if sh2 > 4 * RADBITS:
            return mlo - 1, elo
        return (mlo << sh2) - self.rman, self.rexp

    def contains_zero(self) -> bool:
        m, _ = self.mag_lower()
        return not m

    def contains_fraction(self, q) -> bool:
        q = mpq(q)
        d = abs(self.midpoint_fraction() - q)
        return d <= self.radius_fraction()

    def same_value_possible(self, other: "Ball") -> bool:
        d = abs(self.midpoint_fraction() - other.midpoint_fraction())
        return d <= self.radius_fraction() + other.radius_fraction()

    def __repr__(self):
        return f"Ball({self.decimal_str(25)})"

    def __float__(self):
        m = self.midpoint_fraction()
        return float(m.numerator) / float(m.denominator) if m else 0.0

    # -- arithmetic ---------------------------------------------------------

    def neg(self) -> "Ball":
        return Ball(-self.man, self.exp, self.rman, self.rexp, self.prec)

    __neg__ = neg

    def abs(self) -> "Ball":
        return Ball(abs(self.man), self.exp, self.rman, self.rexp, self.prec)

    def add(self, other: "Ball", prec=None) -> "Ball":
        prec = prec or max(self.prec, other.prec)
        a, b = self, other
        if not a.man and not a.rman:
            return Ball(b.man, b.exp, b.rman, b.rexp, prec)
        if not b.man and not b.rman:
            return Ball(a.man, a.exp, a.rman, a.rexp, prec)
        rman, rexp = _radd(a.rman, a.rexp, b.rman, b.rexp)
        if not a.man or not b.man:
            man, exp = (a.man or b.man), (a.exp if a.man else b.exp)
        else:
            ea, eb = a.exp, b.exp
            if ea < eb:
                a, b = b, a
                ea, eb = eb, ea
            sh = ea - eb
            cap = prec + 4 * RADBITS + b.man.bit_length() + 8
            if sh > cap:
                # b is far below the ulp of a at this precision: absorb it
                bm, be = b.mag_upper()
                rman, rexp = _radd(rman, rexp, bm, be)
                man, exp = a.man, a.exp
            else:
                man, exp = (a.man << sh) + b.man, eb
        man, exp, rm2, re2 = _round_mid(man, exp, prec)
        rman, rexp = _radd(rman, rexp, rm2, re2)
        return Ball(man, exp, rman, rexp, prec)

    def __add__(self, other):
        if isinstance(other, (int, mpz)):
            other = Ball.exact_int(other, self.prec)
        elif isinstance(other, mpq):
            other = Ball.from_fraction(other, self.prec)
        if not isinstance(other, Ball):
            return NotImplemented
        return self.add(other)

    __radd__ = __add__

    def sub(self, other: "Ball", prec=None) -> "Ball":
        return self.add(other.neg(), prec)

    def __sub__(self, other):
        if isinstance(other, (int, mpz)):
            other = Ball.exact_int(other, self.prec)
        elif isinstance(other, mpq):
            other = Ball.from_fraction(other, self.prec)
        if not isinstance(other, Ball):
            return NotImplemented
        return self.sub(other)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def mul(self, other: "Ball", prec=None) -> "Ball":
        prec = prec or max(self.prec, other.prec)
        a, b = self, other
        # radius: |a| rb + |b| ra + ra rb
        if a.rman or b.rman:
            am, ae = _rnorm(abs(a.man) + 1, a.exp) if a.man else (_MZ, 0)
            bm, be = _rnorm(abs(b.man) + 1, b.exp) if b.man else (_MZ, 0)
            r1 = _rmul(am, ae, b.rman, b.rexp)
            r2 = _rmul(bm, be, a.rman, a.rexp)
            r3 = _rmul(a.rman, a.rexp, b.rman, b.rexp)
            rman, rexp = _radd(*r1, *r2)
            rman, rexp = _radd(rman, rexp, *r3)
        else:
            rman, rexp = _MZ, 0
        man, exp, rm2, re2 = _round_mid(a.man * b.man, a.exp + b.exp, prec)
        rman, rexp = _radd(rman, rexp, rm2, re2)
        return Ball(man, exp, rman, rexp, prec)

    def __mul__(self, other):
        if isinstance(other, (int, mpz)):
            other = Ball.exact_int(other, self.prec)
        elif isinstance(other, mpq):
            other = Ball.from_fraction(other, self.prec)
        if not isinstance(other, Ball):
            return NotImplemented
        return self.mul(other)

    __rmul__ = __mul__

    def mul_2exp(self, e: int) -> "Ball":
        return Ball(self.man, self.exp + e, self.rman,
                    self.rexp + e if self.rman else 0, self.prec)

    def inverse(self, prec=None) -> "Ball":
        prec = prec or self.prec
        lo_m, lo_e = self.mag_lower()
        if not lo_m:
            raise PossibleSingularity("division by a ball containing zero")
        am = abs(self.man)
        neg = self.man < 0
        sh = prec + am.bit_length() + 8
        q, r = divmod(_M1 << sh, am)
        # 1/mid enclosed by q*2^(-sh-exp) with error < 2^(-sh-exp) ... exponent
        e0 = -sh - self.exp
        man, exp, rm2, re2 = _round_mid(-q if neg else q, e0, prec)
        rman, rexp = _radd(_M1, e0, rm2, re2)
        if self.rman:
            # |1/x - 1/mid| <= rad / (|x||mid|) <= rad / lo^2 ; lo^2 exact here
            den_m, den_e = lo_m * lo_m, 2 * lo_e
            k = 2 * RADBITS + 8
            t = (self.rman << k) // den_m + 1
            rman, rexp = _radd(rman, rexp,
                               *_rnorm(t, self.rexp - den_e - k))
        return Ball(man, exp, rman, rexp, prec)

    def div(self, other: "Ball", prec=None) -> "Ball":
        prec = prec or max(self.prec, other.prec)
        return self.mul(other.inverse(prec + 8), prec)

    def __truediv__(self, other):
        if isinstance(other, (int, mpz)):
            other = Ball.exact_int(other, self.prec)
        elif isinstance(other, mpq):
            other = Ball.from_fraction(other, self.prec)
        if not isinstance(other, Ball):
            return NotImplemented
        return self.div(other)

    def __rtruediv__(self, other):
        inv = self.inverse()
        return inv.__mul__(other)

    def round(self, prec: int) -> "Ball":
        man, exp, rm, re = _round_mid(self.man, self.exp, prec)
        rman, rexp = _radd(self.rman, self.rexp, rm, re)
        return Ball(man, exp, rman, rexp, prec)

    def pow_int(self, n: int, prec=None) -> "Ball":
        prec = prec or self.prec
        if n == 0:
            return Ball.exact_int(1, prec)
        if n < 0:
            return self.pow_int(-n, prec).inverse(prec)
        result = None
        base = self
        while n:
            if n & 1:
                result = base if result is None else result.mul(base, prec)
            n >>= 1
            if n:
                base = base.mul(base, prec)
        return result

    # -- ordering queries --------------------------------------------------

    def lower_fraction(self) -> mpq:
        return self.midpoint_fraction() - self.radius_fraction()

    def upper_fraction(self) -> mpq:
        return self.midpoint_fraction() + self.radius_fraction()

    def is_positive(self) -> bool:
        return self.man > 0 and not self.contains_zero()

    def is_negative(self) -> bool:
        return self.man < 0 and not self.contains_zero()

    # -- decimal I/O ---------------------------------------------------------

    def decimal_str(self, max_digits: int | None = None) -> str:
        """Midpoint to as many digits as the radius supports, then the radius:
        `39.47841760435743447533 +/- 3e-21`."""
        if self.is_exact_zero():
            return "0"
        if self.rman:
            # digits d with 10^-d >= 4*rad
            wl = self.rexp + self.rman.bit_length() + 2
            d = max(0, int((-wl) * 30103 // 100000))
        else:
            d = int(self.prec * 30103 // 100000)
        if max_digits is not None:
            d = min(d, max_digits)
        mid = self.midpoint_fraction()
        scaled = mid * mpq(10) ** d
        n, den = scaled.numerator, scaled.denominator
        q, r = divmod(n, den)
        if 2 * r >= den:
            q += 1
        neg = q < 0
        digits = str(-q if neg else q)
        if d > 0:
            digits = digits.rjust(d + 1, "0")
            int_part, frac_part = digits[:-d], digits[-d:]
            mid_str = f"{int_part}.{frac_part}"
        else:
            mid_str = digits
        if neg:
            mid_str = "-" + mid_str
        # total radius bound: stored radius + decimal rounding (<= 10^-d)
        rad = self.radius_fraction() + mpq(1, mpq(10) ** d)
        if not self.rman and r == 0:
            return mid_str
        # one significant digit, rounded up: a * 10^-m
        m = d
        a_num = rad * mpq(10) ** m
        a = int(a_num) + (0 if a_num == int(a_num) else 1)
        while a >= 10:
            m -= 1
            a_num = rad * mpq(10) ** m
            a = int(a_num) + (0 if a_num == int(a_num) else 1)
        exp_str = f"e-{m}" if m > 0 else (f"e+{-m}" if m < 0 else "")
        return f"{mid_str} +/- {a}{exp_str}"

    @staticmethod
    def from_decimal(text: str, prec: int = 64) -> "Ball":
        """Parse the decimal_str format back into a containing ball."""
        text = text.strip()
        if "+/-" in text:
            mid_s, rad_s = [t.strip() for t in text.split("+/-")]
        else:
            mid_s, rad_s = text, "0"
        mid = _parse_decimal(mid_s)
        rad = _parse_decimal(rad_s)
        b = Ball.from_fraction(mid, prec)
        if rad:
            rb = Ball.from_fraction(rad, 24)
            rm, re = rb.mag_upper()
            rman, rexp = _radd(b.rman, b.rexp, rm, re)
            return Ball(b.man, b.exp, rman, rexp, prec)
        return b


def _parse_decimal(s: str) -> mpq:
    s = s.strip()
    if not s:
        return mpq(0)
    exp10 = 0
    for marker in ("e", "E"):
        if marker in s:
            s, e = s.split(marker)
            exp10 = int(e)
            break
    if "." in s:
        intp, frac = s.split(".")
        exp10 -= len(frac)
        s = (intp or "0") + frac
    v = mpq(int(s))
    return v * mpq(10) ** exp10 if exp10 >= 0 else v / mpq(10) ** (-exp10)


# ---------------------------------------------------------------------------
# elementary functions
# ---------------------------------------------------------------------------

def _atan_inv_partial(m: int, K: int) -> mpq:
    """Exact partial sum of atan(1/m), K terms, by binary splitting."""

    def rec(a, b):
        if b - a == 1:
            k = a
            return mpq((-1) ** (k % 2), (2 * k + 1) * mpz(m) ** (2 * k + 1))
        mid = (a + b) // 2
        return rec(a, mid) + rec(mid, b)

    return rec(0, K) if K > 0 else mpq(0)


def _atanh_inv_partial(m: int, K: int) -> mpq:
    def rec(a, b):
        if b - a == 1:
            k = a
            return mpq(1, (2 * k + 1) * mpz(m) ** (2 * k + 1))
        mid = (a + b) // 2
        return rec(a, mid) + rec(mid, b)

    return rec(0, K) if K > 0 else mpq(0)


_pi_cache: dict[int, Ball] = {}
_log2_cache: dict[int, Ball] = {}


def _bucket(prec: int) -> int:
    b = 64
    while b < prec + 16:
        b <<= 1
    return b


def const_pi(prec: int) -> Ball:
    """Enclosure of pi: Machin's formula, binary-splitting partial sums,
    alternating-series tail bounds."""
    b = _bucket(prec)
    got = _pi_cache.get(b)
    if got is None:
        # pi = 16 atan(1/5) - 4 atan(1/239)
        k5 = (b + 12) // (2 * 4) + 2      # log2(5^2) > 4
        k239 = (b + 12) // (2 * 15) + 2   # log2(239^2) > 15
        s = 16 * _atan_inv_partial(5, k5) - 4 * _atan_inv_partial(239, k239)
        ball = Ball.from_fraction(s, b)
        tail5 = mpq(16, (2 * k5 + 1) * mpz(5) ** (2 * k5 + 1))
        tail239 = mpq(4, (2 * k239 + 1) * mpz(239) ** (2 * k239 + 1))
        tb = Ball.from_fraction(tail5 + tail239, 24)
        tm, te = tb.mag_upper()
        rman, rexp = _radd(ball.rman, ball.rexp, tm, te)
        got = Ball(ball.man, ball.exp, rman, rexp, b)
        _pi_cache[b] = got
    return got.round(prec) if got.prec > prec + 64 else got


def const_log2(prec: int) -> Ball:
    """Enclosure of log 2 = 2 atanh(1/3)."""
    b = _bucket(prec)
    got = _log2_cache.get(b)
    if got is None:
        K = (b + 12) // 6 + 2             # log2(3^2) > 3; be generous
        s = 2 * _atanh_inv_partial(3, K)
        ball = Ball.from_fraction(s, b)
        tail = mpq(2, (2 * K + 1) * mpz(3) ** (2 * K + 1)) * mpq(9, 8)
        tb = Ball.from_fraction(tail, 24)
        tm, te = tb.mag_upper()
        rman, rexp = _radd(ball.rman, ball.rexp, tm, te)
        got = Ball(ball.man, ball.exp, rman, rexp, b)
        _log2_cache[b] = got
    return got.round(prec) if got.prec > prec + 64 else got


def _log_dyadic(man: mpz, exp: int, prec: int) -> Ball:
    """Enclosure of log(man * 2^exp) for man > 0."""
    wp = prec + 24
    # normalize to m in [1,2)
    bl = man.bit_length()
    e2 = exp + bl - 1
    m = mpq(man, _M1 << (bl - 1))
    if m == 1:
        series = Ball.zero(wp)
    else:
        u = Ball.from_fraction((m - 1) / (m + 1), wp)   # in (0, 1/3]
        w = u.mul(u, wp)
        K = (wp + 16) // 3 + 2
        acc = Ball.from_fraction(mpq(1, 2 * K + 1), wp)
        for k in range(K - 1, -1, -1):
            acc = acc.mul(w, wp).add(Ball.from_fraction(mpq(1, 2 * k + 1), wp), wp)
        series = acc.mul(u, wp).mul_2exp(1)
        # tail <= u^(2K+1)/((2K+1)(1-u^2)) <= 3^-(2K+1) * 9/8 * 2
        tail_log2 = -(2 * K + 1) * 3 // 2  # log2(3) > 3/2
        series = Ball.with_radius_2exp(series, tail_log2 + 2)
    if e2:
        series = series.add(const_log2(wp).mul(Ball.exact_int(e2, wp), wp), wp)
    return series.round(prec)


def ball_log(x: Ball, prec: int | None = None) -> Ball:
    """Enclosure of log(x) for a strictly positive ball."""
    prec = prec or x.prec
    lo_m, lo_e = x.mag_lower()
    if not lo_m or x.man <= 0:
        raise PossibleSingularity("log of a ball not strictly positive")
    res = _log_dyadic(x.man, x.exp, prec + 8)
    if x.rman:
        # |log x - log mid| <= rad / lo
        k = 2 * RADBITS + 8
        t = (x.rman << k) // lo_m + 1
        rman, rexp = _radd(res.rman, res.rexp, *_rnorm(t, x.rexp - lo_e - k))
        res = Ball(res.man, res.exp, rman, rexp, prec)
    return res.round(prec)


def _froot_floor(n: mpz, d: mpz, b: int, sbits: int) -> tuple[mpz, int]:
    """(r, -sbits) with r*2^-sbits <= (n/d)^(1/b), dyadic floor."""
    N = (n << (b * sbits)) // d
    r, _ = iroot(N, b)
    return r, -sbits


def ball_pow_rational(x: Ball, q, prec: int | None = None) -> Ball:
    """Enclosure of x^q for rational q; x must be strictly positive
    (an exact zero is allowed when q > 0)."""
    prec = prec or x.prec
    q = mpq(q)
    a, b = int(q.numerator), int(q.denominator)
    if x.is_exact_zero():
        if a > 0:
            return Ball.zero(prec)
        raise PossibleSingularity("zero base with nonpositive exponent")
    lo_m, lo_e = x.mag_lower()
    if not lo_m or x.man <= 0:
        raise PossibleSingularity("rational power of a ball not strictly positive")
    if b == 1:
        return x.pow_int(a, prec)
    wp = prec + 16
    lo = x.lower_fraction()
    hi = x.upper_fraction()
    sbits = wp // 1 + 8
    rl, el = _froot_floor(lo.numerator, lo.denominator, b, sbits)
    rh, eh = _froot_floor(hi.numerator, hi.denominator, b, sbits)
    root = Ball.from_interval(mpq(rl, _M1 << sbits),
                              mpq(rh + 1, _M1 << sbits), wp)
    return root.pow_int(a, wp).round(prec)


def ball_sqrt(x: Ball, prec: int | None = None) -> Ball:
    return ball_pow_rational(x, mpq(1, 2), prec)


def ball_sqrt_upper0(x: Ball, prec: int | None = None) -> Ball:
    """sqrt of a nonnegative-valued ball whose enclosure may dip below 0:
    clips the lower end to 0 (sound when the enclosed value is known >= 0)."""
    prec = prec or x.prec
    lo = max(x.lower_fraction(), mpq(0))
    hi = max(x.upper_fraction(), mpq(0))
    wp = prec + 16
    sbits = wp + 8
    rl, _ = _froot_floor(lo.numerator, lo.denominator, 2, sbits)
    rh, _ = _froot_floor(hi.numerator, hi.denominator, 2, sbits)
    return Ball.from_interval(mpq(rl, _M1 << sbits),
                              mpq(rh + 1, _M1 << sbits), prec)


# -- cos/sin of pi*q via Chebyshev polynomials (exact algebraic route) -------

_cheb_cache: dict[int, list] = {}
_cospi_cache: dict[tuple, tuple] = {}


def _chebyshev_t(n: int) -> list[mpz]:
    got = _cheb_cache.get(n)
    if got is not None:
        return got
    t0, t1 = [mpz(1)], [mpz(0), mpz(1)]
    if n == 0:
        out = t0
    elif n == 1:
        out = t1
    else:
        for _ in range(n - 1):
            t2 = [mpz(0)] + [2 * c for c in t1]
            for i, c in enumerate(t0):
                t2[i] -= c
            t0, t1 = t1, t2
        out = t1
    _cheb_cache[n] = out
    return out


def cospi_sinpi(q, prec: int) -> tuple[Ball, Ball]:
    """Enclosures of (cos(pi q), sin(pi q)) for rational q.

    Needed to evaluate branch factors zeta^gamma on the upper side of the
    slit; computed from exact Chebyshev root isolation, no trig series.
    """
    from .exact import isolate_real_roots, squarefree_part, Polynomial

    q = mpq(q) % 2  # cos/sin have period 2 in q
    a, b = int(q.numerator), int(q.denominator)
    if b == 1:
        one = Ball.exact_int(1, prec)
        return (one if a == 0 else one.neg()), Ball.zero(prec)
    if b == 2:  # a odd
        return Ball.zero(prec), (Ball.exact_int(1, prec) if a % 4 == 1
                                 else Ball.exact_int(-1, prec))
    key = (a, b, _bucket(prec))
    got = _cospi_cache.get(key)
    if got is not None:
        return got
    j = a if a <= b else 2 * b - a
    sin_sign = 1 if a <= b else -1
    cheb = _chebyshev_t(b)
    target = [mpq(c) for c in cheb]
    target[0] -= (-1) ** (j % 2)
    poly = squarefree_part(Polynomial.univariate(target, "c"))
    roots = [r for r in isolate_real_roots(poly)
             if r.compare_rational(mpq(-1)) >= 0 and r.compare_rational(mpq(1)) <= 0]
    roots.sort(key=lambda r: -(r.lo + r.hi) / 2)  # descending
    idx = j // 2
    root = roots[idx]
    wp = prec + 16
    lo, hi = root.refine(wp)
    c = Ball.from_interval(lo, hi, wp)
    one = Ball.exact_int(1, wp)
    s2 = one.sub(c.mul(c, wp), wp)
    s = ball_sqrt_upper0(s2, wp)
    if sin_sign < 0:
        s = s.neg()
    out = (c.round(prec), s.round(prec))
    _cospi_cache[key] = out
    return out


# ---------------------------------------------------------------------------
# complex balls
# ---------------------------------------------------------------------------

class ComplexBall:
    """Pair of real balls enclosing a complex number componentwise."""

    __slots__ = ("re", "im")

    def __init__(self, re: Ball, im: Ball):
        self.re = re
        self.im = im

    @staticmethod
    def from_real(b: Ball) -> "ComplexBall":
        return ComplexBall(b, Ball.zero(b.prec))

    @staticmethod
    def exact_int(n, prec=53) -> "ComplexBall":
        return ComplexBall(Ball.exact_int(n, prec), Ball.zero(prec))

    @staticmethod
    def zero(prec=53) -> "ComplexBall":
        return ComplexBall(Ball.zero(prec), Ball.zero(prec))

    @property
    def prec(self):
        return max(self.re.prec, self.im.prec)

    def is_exact_zero(self):
        return self.re.is_exact_zero() and self.im.is_exact_zero()

    def conjugate(self) -> "ComplexBall":
        return ComplexBall(self.re, self.im.neg())

    def neg(self) -> "ComplexBall":
        return ComplexBall(self.re.neg(), self.im.neg())

    __neg__ = neg

    def add(self, other: "ComplexBall", prec=None) -> "ComplexBall":
        return ComplexBall(self.re.add(other.re, prec), self.im.add(other.im, prec))

    def sub(self, other: "ComplexBall", prec=None) -> "ComplexBall":
        return ComplexBall(self.re.sub(other.re, prec), self.im.sub(other.im, prec))

    def mul(self, other: "ComplexBall", prec=None) -> "ComplexBall":
        a, b, c, d = self.re, self.im, other.re, other.im
        re = a.mul(c, prec).sub(b.mul(d, prec), prec)
        im = a.mul(d, prec).add(b.mul(c, prec), prec)
        return ComplexBall(re, im)

    def mul_real(self, other: Ball, prec=None) -> "ComplexBall":
        return ComplexBall(self.re.mul(other, prec), self.im.mul(other, prec))

    def inverse(self, prec=None) -> "ComplexBall":
        prec = prec or self.prec
        a, b = self.re, self.im
        n = a.mul(a, prec).add(b.mul(b, prec), prec)
        ninv = n.inverse(prec)
        return ComplexBall(a.mul(ninv, prec), b.neg().mul(ninv, prec))

    def div(self, other: "ComplexBall", prec=None) -> "ComplexBall":
        prec = prec or max(self.prec, other.prec)
        return self.mul(other.inverse(prec), prec)

    def __add__(self, other):
        other = _as_cb(other, self.prec)
        return self.add(other) if other is not None else NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_cb(other, self.prec)
        return self.sub(other) if other is not None else NotImplemented

    def __mul__(self, other):
        other = _as_cb(other, self.prec)
        return self.mul(other) if other is not None else NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_cb(other, self.prec)
        return self.div(other) if other is not None else NotImplemented

    def contains_zero(self) -> bool:
        return self.re.contains_zero() and self.im.contains_zero()

    def mag_lower(self) -> tuple[mpz, int]:
        """Lower bound on |z| over the ball (max of component bounds)."""
        r = self.re.mag_lower()
        i = self.im.mag_lower()
        return r if _rcmp(*r, *i) >= 0 else i

    def mag_upper(self) -> tuple[mpz, int]:
        """Upper bound on |z| via |re| + |im|."""
        return _radd(*self.re.mag_upper(), *self.im.mag_upper())

    def round(self, prec: int) -> "ComplexBall":
        return ComplexBall(self.re.round(prec), self.im.round(prec))

    def pow_int(self, n: int, prec=None) -> "ComplexBall":
        prec = prec or self.prec
        if n == 0:
            return ComplexBall.exact_int(1, prec)
        if n < 0:
            return self.pow_int(-n, prec).inverse(prec)
        result = None
        base = self
        while n:
            if n & 1:
                result = base if result is None else result.mul(base, prec)
            n >>= 1
            if n:
                base = base.mul(base, prec)
        return result

    def __repr__(self):
        if self.im.is_exact_zero():
            return f"CBall({self.re.decimal_str(20)})"
        return f"CBall({self.re.decimal_str(20)} + {self.im.decimal_str(20)}*I)"


def _as_cb(x, prec):
    if isinstance(x, ComplexBall):
        return x
    if isinstance(x, Ball):
        return ComplexBall.from_real(x)
    if isinstance(x, (int, mpz)):
        return ComplexBall.exact_int(x, prec)
    if isinstance(x, mpq):
        return ComplexBall.from_real(Ball.from_fraction(x, prec))
    return None


# ---------------------------------------------------------------------------
# enclosure linear algebra
# ---------------------------------------------------------------------------

def mat_identity(n: int, prec: int) -> list[list[ComplexBall]]:
    return [[ComplexBall.exact_int(1 if i == j else 0, prec)
             for j in range(n)] for i in range(n)]


def mat_mul(A, B, prec: int) -> list[list[ComplexBall]]:
    n, k, m = len(A), len(B), len(B[0])
    out = []
    for i in range(n):
        row = []
        Ai = A[i]
        for j in range(m):
            acc = Ai[0].mul(B[0][j], prec)
            for l in range(1, k):
                acc = acc.add(Ai[l].mul(B[l][j], prec), prec)
            row.append(acc)
        out.append(row)
    return out


def mat_vec(A, v, prec: int) -> list[ComplexBall]:
    out = []
    for row in A:
        acc = row[0].mul(v[0], prec)
        for l in range(1, len(v)):
            acc = acc.add(row[l].mul(v[l], prec), prec)
        out.append(acc)
    return out


def solve_linear(A, b, prec: int) -> list[ComplexBall]:
    """Certified solve of a (possibly over-determined) interval system.

    Greedy pivoting selects a square subsystem whose interval elimination
    succeeds with pivots excluding zero (the invertibility witness); the
    remaining rows are residual-checked against the solution enclosure.
    Raises InsufficientPrecision / InconsistentSystem per the two failure
    modes.
    """
    nrows = len(A)
    ncols = len(A[0]) if nrows else 0
    if nrows < ncols:
        raise ValueError("system has fewer rows than unknowns")
    work = [[_as_cb(x, prec) for x in row] + [_as_cb(b[i], prec)]
            for i, row in enumerate(A)]
    used: list[int] = []
    free = set(range(nrows))
    for col in range(ncols):
        best, best_mag = None, (_MZ, 0)
        for r in free:
            m = work[r][col].mag_lower()
            if m[0] and (best is None or _rcmp(*m, *best_mag) > 0):
                best, best_mag = r, m
        if best is None:
            raise InsufficientPrecision(
                "insufficient precision: no certified pivot in column %d" % col)
        free.discard(best)
        used.append(best)
        inv = work[best][col].inverse(prec)
        work[best] = [x.mul(inv, prec) for x in work[best]]
        for r in range(nrows):
            if r == best:
                continue
            factor = work[r][col]
            if factor.is_exact_zero():
                continue
            work[r] = [work[r][j].sub(factor.mul(work[best][j], prec), prec)
                       for j in range(ncols + 1)]
    x = [None] * ncols
    for col, r in enumerate(used):
        x[col] = work[r][ncols]
    # residual membership test on the unused rows
    for r in free:
        res = _as_cb(b[r], prec)
        for j in range(ncols):
            res = res.sub(_as_cb(A[r][j], prec).mul(x[j], prec), prec)
        if not res.contains_zero():
            raise InconsistentSystem("inconsistent system: residual excludes 0")
    return x


def mat_inverse(A, prec: int) -> list[list[ComplexBall]]:
    """Enclosure of the inverse of a square interval matrix."""
    n = len(A)
    work = [[_as_cb(x, prec) for x in row] +
            [ComplexBall.exact_int(1 if i == j else 0, prec) for j in range(n)]
            for i, row in enumerate(A)]
    row_of_col = [None] * n
    free = set(range(n))
    for col in range(n):
        best, best_mag = None, (_MZ, 0)
        for r in free:
            m = work[r][col].mag_lower()
            if m[0] and (best is None or _rcmp(*m, *best_mag) > 0):
                best, best_mag = r, m
        if best is None:
            raise InsufficientPrecision(
                "insufficient precision: matrix inverse pivot in column %d" % col)
        free.discard(best)
        row_of_col[col] = best
        inv = work[best][col].inverse(prec)
        work[best] = [x.mul(inv, prec) for x in work[best]]
        for r in range(n):
            if r == best:
                continue
            factor = work[r][col]
            if factor.is_exact_zero():
                continue
            work[r] = [work[r][j].sub(factor.mul(work[best][j], prec), prec)
                       for j in range(2 * n)]
    out = [[None] * n for _ in range(n)]
    for col in range(n):
        r = row_of_col[col]
        for j in range(n):
            out[col][j] = work[r][n + j]
    return out
