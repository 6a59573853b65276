"""Arithmetic in the residue ring Q[y]/(q) for a square-free q.

Used to compute exactly with the coordinates of an algebraic number u
without its minimal polynomial: q need not be irreducible.  When a zero
divisor shows up during inversion the ring is split (D5-style dynamic
evaluation): `DefiningSplit` carries the discovered factor and the caller
restarts with the factor that still isolates u.
"""

from __future__ import annotations

from gmpy2 import mpq, mpz

from .poly import Polynomial, uni_gcd, uni_divmod, _uni_trim
from .roots import AlgebraicNumber, sign_at_rational


class DefiningSplit(Exception):
    """The defining polynomial factored; retry with a smaller modulus."""

    def __init__(self, factor: list[mpq]):
        self.factor = factor
        super().__init__("defining polynomial split into factors")


class ResidueRing:
    """Q[y]/(q), q monic square-free.  Elements are dense mpq tuples."""

    def __init__(self, modulus: list[mpq]):
        modulus = _uni_trim([mpq(c) for c in modulus])
        if len(modulus) < 2:
            raise ValueError("modulus must be nonconstant")
        inv = 1 / modulus[-1]
        self.modulus = tuple(c * inv for c in modulus)
        self.deg = len(self.modulus) - 1

    def reduce(self, coeffs) -> tuple[mpq, ...]:
        c = [mpq(x) for x in coeffs]
        m = self.modulus
        d = self.deg
        while len(c) > d:
            lead = c.pop()
            if lead:
                k = len(c) - d
                for i in range(d):
                    c[k + i] -= lead * m[i]
        while len(c) < d:
            c.append(mpq(0))
        return tuple(c)

    def zero(self):
        return (mpq(0),) * self.deg

    def one(self):
        return self.reduce([mpq(1)])

    def from_rational(self, x):
        return self.reduce([mpq(x)])

    def generator(self):
        return self.reduce([mpq(0), mpq(1)])

    def add(self, a, b):
        return tuple(x + y for x, y in zip(a, b))

    def sub(self, a, b):
        return tuple(x - y for x, y in zip(a, b))

    def neg(self, a):
        return tuple(-x for x in a)

    def scale(self, a, c):
        c = mpq(c)
        return tuple(x * c for x in a)

    def mul(self, a, b):
        d = self.deg
        out = [mpq(0)] * (2 * d - 1)
        for i, x in enumerate(a):
            if not x:
                continue
            for j, y in enumerate(b):
                if y:
                    out[i + j] += x * y
        return self.reduce(out)

    def is_unit_or_zero(self, a) -> bool:
        """True if a is 0 or invertible without splitting the ring."""
        c = _uni_trim(list(a))
        if not c:
            return True
        g = uni_gcd(c, list(self.modulus))
        return len(g) == 1

    def inverse(self, a):
        """Inverse of a; raises DefiningSplit on a zero divisor,
        ZeroDivisionError on exact zero."""
        c = _uni_trim(list(a))
        if not c:
            raise ZeroDivisionError("inverse of zero in residue ring")
        # extended Euclid over Q[y]
        r0, r1 = list(self.modulus), c
        s0, s1 = [], [mpq(1)]
        while r1:
            q, r = uni_divmod(r0, r1)
            r0, r1 = r1, r
            s0, s1 = s1, _poly_sub(s0, _poly_mul(q, s1))
        if len(r0) > 1:
            raise DefiningSplit([mpq(x) for x in r0])
        inv_lead = 1 / r0[0]
        return self.reduce([x * inv_lead for x in s0])

    def pow(self, a, n: int):
        result = self.one()
        base = a
        while n:
            if n & 1:
                result = self.mul(result, base)
            n >>= 1
            if n:
                base = self.mul(base, base)
        return result

    def eval_poly(self, coeffs):
        """Image of a univariate rational polynomial at the generator."""
        acc = self.zero()
        g = self.generator()
        for c in reversed(list(coeffs)):
            acc = self.add(self.scale(self.mul(acc, g), 1), self.from_rational(c))
        return acc

    def as_poly_list(self, a) -> list[mpq]:
        return _uni_trim(list(a))


def _poly_mul(a: list[mpq], b: list[mpq]) -> list[mpq]:
    if not a or not b:
        return []
    out = [mpq(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return _uni_trim(out)


def _poly_sub(a: list[mpq], b: list[mpq]) -> list[mpq]:
    n = max(len(a), len(b))
    out = [mpq(0)] * n
    for i, x in enumerate(a):
        out[i] += x
    for i, x in enumerate(b):
        out[i] -= x
    return _uni_trim(out)


def split_defining(a: AlgebraicNumber, factor: list[mpq]) -> AlgebraicNumber:
    """Replace a's defining polynomial by whichever of (factor, cofactor)
    isolates the same root, refining the interval as needed."""
    q = a.poly
    g = [mpq(c) for c in factor]
    cof, rem = uni_divmod(q, g)
    assert not rem, "claimed factor does not divide the defining polynomial"
    p = 8
    while True:
        lo, hi = a.lo, a.hi
        g_changes = sign_at_rational(g, lo) * sign_at_rational(g, hi) < 0
        c_changes = sign_at_rational(cof, lo) * sign_at_rational(cof, hi) < 0
        if g_changes != c_changes:
            chosen = g if g_changes else cof
            return AlgebraicNumber(chosen, lo, hi,
                                   rational_value=a.rational_value)
        a.refine(p)
        p *= 2
        if p > 1 << 16:
            raise RuntimeError("failed to split defining polynomial")


def zero_test_at(ring: ResidueRing, elem, a: AlgebraicNumber) -> bool:
    """Does the residue-ring element vanish at the specific root a?

    May raise DefiningSplit when the answer exposes a factorization that the
    caller should adopt (the element vanishes at a but not in the ring).
    """
    c = ring.as_poly_list(elem)
    if not c:
        return True
    g = uni_gcd(c, list(ring.modulus))
    if len(g) == 1:
        return False
    # g is a proper divisor of the modulus: does it vanish at a?
    p = 8
    while True:
        lo, hi = a.lo, a.hi
        if sign_at_rational(g, lo) * sign_at_rational(g, hi) < 0:
            raise DefiningSplit(g)
        cof, rem = uni_divmod(list(ring.modulus), g)
        assert not rem
        if sign_at_rational(cof, lo) * sign_at_rational(cof, hi) < 0:
            return False
        a.refine(p)
        p *= 2
        if p > 1 << 16:
            raise RuntimeError("zero test failed to converge")
