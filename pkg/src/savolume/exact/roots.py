"""Real root isolation (Descartes/VCA bisection) and algebraic numbers.

An AlgebraicNumber is a square-free defining polynomial together with an
isolating interval with dyadic rational endpoints.  The defining polynomial
is not required to be minimal; refinement never changes the identified root.
"""

from __future__ import annotations

from gmpy2 import mpq, mpz, gcd, lcm

from .poly import Polynomial, uni_gcd, uni_divmod, squarefree_part, _uni_trim


def _to_int_coeffs(coeffs: list[mpq]) -> list[mpz]:
    """Scale rational coefficients to a primitive integer vector."""
    den = mpz(1)
    for c in coeffs:
        den = lcm(den, c.denominator)
    ints = [mpz(c * den) for c in coeffs]
    g = mpz(0)
    for x in ints:
        g = gcd(g, x)
    if g > 1:
        ints = [x // g for x in ints]
    if ints and ints[-1] < 0:
        ints = [-x for x in ints]
    return ints


def _sign_variations(coeffs) -> int:
    count = 0
    prev = 0
    for c in coeffs:
        s = 1 if c > 0 else (-1 if c < 0 else 0)
        if s and prev and s != prev:
            count += 1
        if s:
            prev = s
    return count


def _taylor_shift_1(c: list[mpz]) -> list[mpz]:
    """Coefficients of P(x+1) by repeated synthetic division."""
    res = list(c)
    n = len(c)
    for i in range(n):
        for j in range(n - 2, i - 1, -1):
            res[j] += res[j + 1]
    return res


def _descartes_bound_01(c: list[mpz]) -> int:
    """Descartes bound for the number of roots of P in (0,1).

    Uses the transform x -> 1/(x+1): variations of (1+x)^n P(1/(1+x)).
    """
    n = len(c) - 1
    rev = list(reversed(c))          # x^n P(1/x)
    shifted = _taylor_shift_1(rev)   # then x -> x+1
    return _sign_variations(shifted)


def _scale_half(c: list[mpz]) -> list[mpz]:
    """2^n P(x/2), integer coefficients."""
    n = len(c) - 1
    return [c[i] << (n - i) for i in range(len(c))]


def eval_int_at_dyadic(c: list[mpz], num: mpz, log2_den: int) -> mpz:
    """Integer sign-equivalent of P(num/2^log2_den): P(x)*2^(n*log2_den)."""
    n = len(c) - 1
    acc = mpz(0)
    for i in range(n, -1, -1):
        acc = acc * num + (c[i] << (log2_den * (n - i)))
    return acc


def sign_at_rational(coeffs_q: list[mpq], x: mpq) -> int:
    acc = mpq(0)
    for c in reversed(coeffs_q):
        acc = acc * x + c
    return 1 if acc > 0 else (-1 if acc < 0 else 0)


class AlgebraicNumber:
    """A real algebraic number: square-free defining poly + isolating interval.

    Invariants: exactly one real root of `poly` lies in (lo, hi); neither
    endpoint is a root; endpoints are dyadic rationals.
    """

    __slots__ = ("poly", "lo", "hi", "rational_value", "_ipoly")

    def __init__(self, poly: list[mpq], lo: mpq, hi: mpq, rational_value=None):
        self.poly = [mpq(c) for c in poly]
        self.lo = mpq(lo)
        self.hi = mpq(hi)
        self.rational_value = mpq(rational_value) if rational_value is not None else None
        self._ipoly = _to_int_coeffs(self.poly)

    @staticmethod
    def from_rational(q) -> "AlgebraicNumber":
        q = mpq(q)
        return AlgebraicNumber([-q, mpq(1)], q - mpq(1, 4), q + mpq(1, 4),
                               rational_value=q)

    def degree(self) -> int:
        return len(self.poly) - 1

    def defining_polynomial(self, var: str = "y") -> Polynomial:
        return Polynomial.univariate(self.poly, var)

    def interval(self) -> tuple[mpq, mpq]:
        return (self.lo, self.hi)

    def width(self) -> mpq:
        return self.hi - self.lo

    def _sign_at_endpoint(self, x: mpq) -> int:
        return sign_at_rational(self.poly, x)

    def refine(self, p: int) -> tuple[mpq, mpq]:
        """Isolating interval of width <= 2^-p (Newton with bisection fallback).

        Returns a new interval; the stored one is updated as a cache, which
        is sound because any refinement still isolates the same root.
        """
        if self.rational_value is not None:
            v = self.rational_value
            eps = mpq(1, mpz(1) << (p + 1))
            lo, hi = v - eps, v + eps
            if lo > self.lo and hi < self.hi:
                self.lo, self.hi = lo, hi
            return (self.lo, self.hi) if self.width() <= mpq(1, mpz(1) << p) \
                else (lo, hi)
        target = mpq(1, mpz(1) << p)
        lo, hi = self.lo, self.hi
        if hi - lo <= target:
            return (lo, hi)
        c = self.poly
        dc = [k * c[k] for k in range(1, len(c))]
        s_lo = sign_at_rational(c, lo)
        while hi - lo > target:
            width = hi - lo
            done = False
            # Newton candidate from the midpoint, truncated to a dyadic
            mid = (lo + hi) / 2
            fm = _eval_q(c, mid)
            dfm = _eval_q(dc, mid)
            if dfm:
                cand = mid - fm / dfm
                cand = _dyadic_round(cand, 2 * _frac_bits(width) + 8)
                if lo < cand < hi:
                    w2 = width * width
                    lo2 = cand - w2
                    hi2 = cand + w2
                    if lo2 > lo and hi2 < hi:
                        s_lo2 = sign_at_rational(c, lo2)
                        s_hi2 = sign_at_rational(c, hi2)
                        if s_lo2 == 0:
                            self._set_rational(lo2)
                            return self.refine(p)
                        if s_hi2 == 0:
                            self._set_rational(hi2)
                            return self.refine(p)
                        if s_lo2 != s_hi2:
                            lo, hi, s_lo = lo2, hi2, s_lo2
                            done = True
            if not done:
                mid = (lo + hi) / 2
                s_mid = sign_at_rational(c, mid)
                if s_mid == 0:
                    self._set_rational(mid)
                    return self.refine(p)
                if s_mid == s_lo:
                    lo = mid
                else:
                    hi = mid
        if hi - lo < self.hi - self.lo:
            self.lo, self.hi = lo, hi
        return (lo, hi)

    def _set_rational(self, v: mpq):
        self.rational_value = v
        eps = (self.hi - self.lo) / 8
        lo, hi = v - eps, v + eps
        while sign_at_rational(self.poly, lo) == 0 or sign_at_rational(self.poly, hi) == 0:
            eps /= 2
            lo, hi = v - eps, v + eps
        self.lo, self.hi = max(lo, self.lo), min(hi, self.hi)

    # -- comparisons ----------------------------------------------------

    def _disjoint_after_refine(self, other: "AlgebraicNumber") -> bool | None:
        """True if provably a != b, False if provably equal, None undecided."""
        if self.hi <= other.lo or other.hi <= self.lo:
            return True
        g = uni_gcd(self.poly, other.poly)
        if len(g) <= 1:
            return True  # no common root at all
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        if lo < hi and sign_at_rational(g, lo) * sign_at_rational(g, hi) < 0:
            return False
        return None

    def equals(self, other: "AlgebraicNumber") -> bool:
        if self.rational_value is not None and other.rational_value is not None:
            return self.rational_value == other.rational_value
        p = 4
        while True:
            d = self._disjoint_after_refine(other)
            if d is not None:
                return not d
            self.refine(p)
            other.refine(p)
            p *= 2

    def compare(self, other: "AlgebraicNumber") -> int:
        if self.equals(other):
            return 0
        p = 4
        while True:
            if self.hi <= other.lo:
                return -1
            if other.hi <= self.lo:
                return 1
            self.refine(p)
            other.refine(p)
            p *= 2

    def compare_rational(self, q) -> int:
        q = mpq(q)
        if self.rational_value is not None:
            v = self.rational_value
            return -1 if v < q else (1 if v > q else 0)
        if sign_at_rational(self.poly, q) == 0:
            # q might be this root: check if q lies in our isolating interval
            if self.lo < q < self.hi:
                return 0
        p = 4
        while True:
            if self.hi <= q:
                return -1
            if self.lo >= q:
                return 1
            if self.lo < q < self.hi and sign_at_rational(self.poly, q) == 0:
                return 0
            self.refine(p)
            p *= 2

    def __lt__(self, other):
        return self.compare(other) < 0

    def __eq__(self, other):
        return isinstance(other, AlgebraicNumber) and self.equals(other)

    def __repr__(self):
        lo, hi = self.lo, self.hi
        mid = float((lo + hi) / 2)
        return f"AlgebraicNumber(~{mid:.6g})"

    def float_approx(self) -> float:
        lo, hi = self.refine(60)
        return float((lo + hi) / 2)


def _eval_q(c: list[mpq], x: mpq) -> mpq:
    acc = mpq(0)
    for cc in reversed(c):
        acc = acc * x + cc
    return acc


def _frac_bits(w: mpq) -> int:
    """ceil(-log2 w) for 0 < w <= 1, crude but monotone."""
    n, d = w.numerator, w.denominator
    return max(1, d.bit_length() - n.bit_length() + 1)


def _dyadic_round(x: mpq, bits: int) -> mpq:
    scaled = x * (mpz(1) << bits)
    return mpq(scaled.numerator // scaled.denominator, mpz(1) << bits)


def _root_bound(c: list[mpz]) -> mpz:
    """Cauchy bound, rounded up to a power of two."""
    lead = abs(c[-1])
    m = max(abs(x) for x in c[:-1]) if len(c) > 1 else mpz(0)
    # 1 + max|a_i|/|a_n|
    q = mpq(m, lead) + 1
    b = mpz(1)
    while b < q:
        b <<= 1
    return b


def isolate_real_roots(P: Polynomial | list) -> list[AlgebraicNumber]:
    """All distinct real roots, sorted increasingly, as AlgebraicNumbers."""
    if isinstance(P, Polynomial):
        coeffs = P.univariate_coeffs()
    else:
        coeffs = [mpq(c) for c in P]
    coeffs = _uni_trim(list(coeffs))
    if not coeffs:
        raise ValueError("cannot isolate roots of the zero polynomial")
    if len(coeffs) == 1:
        return []
    sf = _sqfree_q(coeffs)
    c = _to_int_coeffs(sf)

    exacts: list[mpq] = []
    ivals: list[tuple[mpq, mpq]] = []

    if c[0] == 0:
        exacts.append(mpq(0))
        c_def = c[1:]  # square-free, so the zero root is simple
    else:
        c_def = c

    def vca(q: list[mpz], lo: mpq, hi: mpq):
        # roots of q in the open (0,1) <-> roots of the input in (lo,hi)
        v = _descartes_bound_01(q)
        if v == 0:
            return
        if v == 1:
            ivals.append((lo, hi))
            return
        mid = (lo + hi) / 2
        if eval_int_at_dyadic(q, mpz(1), 1) == 0:
            exacts.append(mid)
        qh = _scale_half(q)            # roots in (0,1/2) -> (0,1)
        vca(qh, lo, mid)
        vca(_taylor_shift_1(qh), mid, hi)

    if len(c_def) > 1:
        B = _root_bound(c_def)
        cpos = [c_def[i] * B ** i for i in range(len(c_def))]
        vca(cpos, mpq(0), mpq(B))
        cneg = [(-1) ** i * x for i, x in enumerate(c_def)]
        cneg = [cneg[i] * B ** i for i in range(len(cneg))]
        pos_ivals = list(ivals)
        pos_exacts = list(exacts)
        ivals.clear()
        exacts.clear()
        vca(cneg, mpq(0), mpq(B))
        ivals[:] = [(-hi, -lo) for (lo, hi) in ivals]
        exacts[:] = [-v for v in exacts]
        ivals.extend(pos_ivals)
        exacts.extend(pos_exacts)

    sfq = [mpq(x) for x in c]

    # shrink intervals whose endpoints happen to be roots (adjacent exact
    # roots recorded at dyadic subdivision points)
    fixed_ivals = []
    for lo, hi in ivals:
        slo = sign_at_rational(sfq, lo)
        shi = sign_at_rational(sfq, hi)
        if slo != 0 and shi != 0:
            fixed_ivals.append((lo, hi))
            continue
        w = hi - lo
        k = 2
        while True:
            a = lo + w / (1 << k)
            b = hi - w / (1 << k)
            sa = sign_at_rational(sfq, a)
            sb = sign_at_rational(sfq, b)
            if sa == 0:
                exacts.append(a)
                break
            if sb == 0:
                exacts.append(b)
                break
            if sa * sb < 0:
                fixed_ivals.append((a, b))
                break
            k += 1

    out = []
    exacts = sorted(set(exacts))
    fixed_ivals.sort()
    all_points = exacts + [p for iv in fixed_ivals for p in iv]
    for v in exacts:
        eps = mpq(1, 4)
        others = [x for x in all_points if x != v]
        while True:
            lo, hi = v - eps, v + eps
            if (sign_at_rational(sfq, lo) != 0 and sign_at_rational(sfq, hi) != 0
                    and all(not (lo <= x <= hi) for x in others)):
                break
            eps /= 2
        out.append(AlgebraicNumber(sfq, lo, hi, rational_value=v))
    for lo, hi in fixed_ivals:
        out.append(AlgebraicNumber(sfq, lo, hi))
    out.sort(key=lambda a: (a.lo + a.hi) / 2)
    # ensure isolating intervals are pairwise disjoint
    for a, b in zip(out, out[1:]):
        guard = 0
        while not (a.hi <= b.lo):
            bits = _frac_bits(min(a.width(), b.width())) + 4 + guard
            a.refine(bits)
            b.refine(bits)
            guard += 4
    return out


def _sqfree_q(coeffs: list[mpq]) -> list[mpq]:
    dc = [k * coeffs[k] for k in range(1, len(coeffs))]
    g = uni_gcd(coeffs, dc)
    q, r = uni_divmod(coeffs, g)
    assert not r
    return q


def refine_root(a: AlgebraicNumber, p: int) -> tuple[mpq, mpq]:
    """Dyadic interval of width <= 2^-p around the root of `a`."""
    return a.refine(p)


def sign_at(P: Polynomial | list, a: AlgebraicNumber) -> int:
    """Exact sign of a univariate rational polynomial at an algebraic point."""
    if isinstance(P, Polynomial):
        coeffs = P.univariate_coeffs()
    else:
        coeffs = [mpq(c) for c in P]
    coeffs = _uni_trim(list(coeffs))
    if not coeffs:
        return 0
    if len(coeffs) == 1:
        return 1 if coeffs[0] > 0 else -1
    if a.rational_value is not None:
        return sign_at_rational(coeffs, a.rational_value)
    g = uni_gcd(coeffs, a.poly)
    if len(g) > 1:
        lo, hi = a.lo, a.hi
        if sign_at_rational(g, lo) * sign_at_rational(g, hi) < 0:
            return 0
        # the common factor might still vanish at a after refinement
        p = 8
        while len(g) > 1:
            lo, hi = a.refine(p)
            if sign_at_rational(g, lo) * sign_at_rational(g, hi) < 0:
                return 0
            s = _interval_sign(coeffs, lo, hi)
            if s is not None:
                return s
            p *= 2
    p = 8
    while True:
        lo, hi = a.refine(p)
        s = _interval_sign(coeffs, lo, hi)
        if s is not None:
            return s
        p *= 2


def _interval_sign(coeffs: list[mpq], lo: mpq, hi: mpq) -> int | None:
    """Sign of P on [lo,hi] if the interval Horner evaluation is definite."""
    alo, ahi = mpq(0), mpq(0)
    for c in reversed(coeffs):
        # [alo,ahi] * [lo,hi] + c, exact rational interval product
        cands = (alo * lo, alo * hi, ahi * lo, ahi * hi)
        alo, ahi = min(cands) + c, max(cands) + c
    if alo > 0:
        return 1
    if ahi < 0:
        return -1
    return None


def rational_between(a, b) -> mpq:
    """Some dyadic rational strictly between a and b (AlgebraicNumber/mpq)."""
    p = 8
    while True:
        lo_a, hi_a = (a.refine(p) if isinstance(a, AlgebraicNumber)
                      else (mpq(a), mpq(a)))
        lo_b, hi_b = (b.refine(p) if isinstance(b, AlgebraicNumber)
                      else (mpq(b), mpq(b)))
        if hi_a < lo_b:
            mid = (hi_a + lo_b) / 2
            return _dyadic_round(mid, 2 * p)
        p *= 2
        if p > 1 << 20:
            raise ValueError("rational_between: endpoints not separated")
