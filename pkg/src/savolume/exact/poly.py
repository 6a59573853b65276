"""Exact sparse multivariate polynomials over arbitrary-precision rationals.

Coefficients are gmpy2.mpq (canonical reduced form, positive denominator).
Monomials are exponent tuples aligned with an ordered variable list; printing
and iteration use graded lexicographic order so output is deterministic.
"""

from __future__ import annotations

from gmpy2 import mpq, mpz, gcd, lcm

Rational = mpq
Integer = mpz

QONE = mpq(1)
QZERO = mpq(0)


def _as_mpq(x) -> mpq:
    if isinstance(x, mpq):
        return x
    return mpq(x)


def grlex_key(expts: tuple[int, ...]) -> tuple:
    return (sum(expts), expts)


class Polynomial:
    """Sparse polynomial with rational coefficients.

    Zero coefficients are never stored.  Instances are immutable; all
    operations return new polynomials over the union of the variable lists.
    """

    __slots__ = ("vars", "coeffs", "_hash")

    def __init__(self, variables, coeffs):
        self.vars = tuple(variables)
        clean = {}
        for e, c in coeffs.items():
            c = _as_mpq(c)
            if c:
                clean[tuple(e)] = c
        self.coeffs = clean
        self._hash = None

    # -- constructors -------------------------------------------------

    @staticmethod
    def constant(c, variables=()) -> "Polynomial":
        variables = tuple(variables)
        z = (0,) * len(variables)
        return Polynomial(variables, {z: _as_mpq(c)})

    @staticmethod
    def variable(name: str, variables=None) -> "Polynomial":
        if variables is None:
            variables = (name,)
        variables = tuple(variables)
        i = variables.index(name)
        e = tuple(1 if j == i else 0 for j in range(len(variables)))
        return Polynomial(variables, {e: QONE})

    @staticmethod
    def univariate(coeffs, name: str) -> "Polynomial":
        """Build a univariate polynomial from dense ascending coefficients."""
        return Polynomial((name,), {(i,): c for i, c in enumerate(coeffs) if c})

    # -- basic queries ------------------------------------------------

    def is_zero(self) -> bool:
        return not self.coeffs

    def is_constant(self) -> bool:
        return all(all(k == 0 for k in e) for e in self.coeffs)

    def constant_value(self) -> mpq:
        if not self.coeffs:
            return QZERO
        [(e, c)] = self.coeffs.items()
        if any(e):
            raise ValueError("not a constant polynomial")
        return c

    def total_degree(self) -> int:
        if not self.coeffs:
            return -1
        return max(sum(e) for e in self.coeffs)

    def degree(self, var: str) -> int:
        if not self.coeffs:
            return -1
        i = self.vars.index(var)
        return max(e[i] for e in self.coeffs)

    def __bool__(self):
        return bool(self.coeffs)

    def __hash__(self):
        if self._hash is None:
            items = tuple(sorted(self.coeffs.items(), key=lambda t: grlex_key(t[0])))
            self._hash = hash((self.vars, items))
        return self._hash

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            if isinstance(other, (int, mpq, mpz)):
                return (self - Polynomial.constant(other, self.vars)).is_zero()
            return NotImplemented
        if self.vars == other.vars:
            return self.coeffs == other.coeffs
        return (self - other).is_zero()

    # -- variable management -------------------------------------------

    def with_vars(self, variables) -> "Polynomial":
        """Reinterpret over a variable list containing all current vars."""
        variables = tuple(variables)
        if variables == self.vars:
            return self
        pos = [variables.index(v) for v in self.vars]
        n = len(variables)
        out = {}
        for e, c in self.coeffs.items():
            ne = [0] * n
            for p, k in zip(pos, e):
                ne[p] = k
            out[tuple(ne)] = c
        return Polynomial(variables, out)

    def used_vars(self) -> tuple[str, ...]:
        used = [False] * len(self.vars)
        for e in self.coeffs:
            for i, k in enumerate(e):
                if k:
                    used[i] = True
        return tuple(v for v, u in zip(self.vars, used) if u)

    def drop_unused(self) -> "Polynomial":
        keep = self.used_vars()
        if keep == self.vars:
            return self
        idx = [self.vars.index(v) for v in keep]
        return Polynomial(keep, {tuple(e[i] for i in idx): c
                                 for e, c in self.coeffs.items()})

    @staticmethod
    def _common(a: "Polynomial", b: "Polynomial"):
        if a.vars == b.vars:
            return a, b
        merged = list(a.vars)
        for v in b.vars:
            if v not in merged:
                merged.append(v)
        merged = tuple(merged)
        return a.with_vars(merged), b.with_vars(merged)

    # -- arithmetic -----------------------------------------------------

    def __neg__(self):
        return Polynomial(self.vars, {e: -c for e, c in self.coeffs.items()})

    def __add__(self, other):
        if isinstance(other, (int, mpq, mpz)):
            other = Polynomial.constant(other, self.vars)
        if not isinstance(other, Polynomial):
            return NotImplemented
        a, b = Polynomial._common(self, other)
        out = dict(a.coeffs)
        for e, c in b.coeffs.items():
            s = out.get(e, QZERO) + c
            if s:
                out[e] = s
            else:
                out.pop(e, None)
        return Polynomial(a.vars, out)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other if isinstance(other, Polynomial) else -_as_mpq(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, mpq, mpz)):
            c = _as_mpq(other)
            if not c:
                return Polynomial(self.vars, {})
            return Polynomial(self.vars, {e: c * v for e, v in self.coeffs.items()})
        if not isinstance(other, Polynomial):
            return NotImplemented
        a, b = Polynomial._common(self, other)
        out = {}
        bitems = list(b.coeffs.items())
        for ea, ca in a.coeffs.items():
            for eb, cb in bitems:
                e = tuple(x + y for x, y in zip(ea, eb))
                s = out.get(e)
                if s is None:
                    out[e] = ca * cb
                else:
                    s = s + ca * cb
                    if s:
                        out[e] = s
                    else:
                        del out[e]
        return Polynomial(a.vars, out)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative power of a polynomial")
        result = Polynomial.constant(1, self.vars)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base if n > 1 else base
            n >>= 1
        return result

    def derivative(self, var: str) -> "Polynomial":
        i = self.vars.index(var)
        out = {}
        for e, c in self.coeffs.items():
            if e[i]:
                ne = list(e)
                ne[i] -= 1
                out[tuple(ne)] = c * e[i]
        return Polynomial(self.vars, out)

    # -- substitution / evaluation --------------------------------------

    def substitute(self, var: str, value) -> "Polynomial":
        """Substitute a rational or a Polynomial for a variable."""
        i = self.vars.index(var)
        rest = tuple(v for v in self.vars if v != var)
        if isinstance(value, Polynomial):
            out = Polynomial.constant(0, rest)
            for k, coeff_poly in enumerate(self.coeffs_in(var)):
                if coeff_poly.is_zero():
                    continue
                out = out + coeff_poly * (value ** k)
            return out
        val = _as_mpq(value)
        out = {}
        for e, c in self.coeffs.items():
            ne = tuple(k for j, k in enumerate(e) if j != i)
            term = c * val ** e[i]
            s = out.get(ne, QZERO) + term
            if s:
                out[ne] = s
            else:
                out.pop(ne, None)
        return Polynomial(rest, out)

    def rename(self, mapping: dict) -> "Polynomial":
        return Polynomial(tuple(mapping.get(v, v) for v in self.vars), self.coeffs)

    def eval_rational(self, point) -> mpq:
        """Evaluate at a full rational point (sequence aligned with vars)."""
        if len(point) != len(self.vars):
            raise ValueError("point dimension mismatch")
        vals = [_as_mpq(x) for x in point]
        total = QZERO
        powers = [{} for _ in vals]

        def pw(i, k):
            if k == 0:
                return QONE
            cache = powers[i]
            got = cache.get(k)
            if got is None:
                got = vals[i] ** k
                cache[k] = got
            return got

        for e, c in self.coeffs.items():
            term = c
            for i, k in enumerate(e):
                if k:
                    term = term * pw(i, k)
            total += term
        return total

    # -- univariate views -------------------------------------------------

    def coeffs_in(self, var: str) -> list["Polynomial"]:
        """Dense coefficient list (ascending degree) w.r.t. one variable."""
        i = self.vars.index(var)
        rest = tuple(v for v in self.vars if v != var)
        d = self.degree(var)
        buckets: list[dict] = [dict() for _ in range(d + 1)]
        for e, c in self.coeffs.items():
            ne = tuple(k for j, k in enumerate(e) if j != i)
            buckets[e[i]][ne] = c
        return [Polynomial(rest, b) for b in buckets]

    @staticmethod
    def from_coeffs_in(coeffs: list["Polynomial"], var: str) -> "Polynomial":
        out = Polynomial.constant(0, (var,))
        x = Polynomial.variable(var)
        for k, c in enumerate(coeffs):
            if c is not None and not c.is_zero():
                out = out + c * x ** k
        return out

    def univariate_coeffs(self) -> list[mpq]:
        """Dense mpq coefficients; requires at most one used variable."""
        used = self.used_vars()
        if len(used) > 1:
            raise ValueError("polynomial is not univariate")
        if not used:
            return [self.constant_value()] if self.coeffs else []
        i = self.vars.index(used[0])
        d = self.degree(used[0])
        out = [QZERO] * (d + 1)
        for e, c in self.coeffs.items():
            out[e[i]] = c
        return out

    def leading_coeff_in(self, var: str) -> "Polynomial":
        return self.coeffs_in(var)[-1]

    # -- normalization ----------------------------------------------------

    def content(self) -> mpq:
        """Positive rational content (gcd of numerators / lcm of denominators)."""
        if not self.coeffs:
            return QZERO
        num = mpz(0)
        den = mpz(1)
        for c in self.coeffs.values():
            num = gcd(num, c.numerator)
            den = lcm(den, c.denominator)
        return mpq(num, den)

    def primitive(self) -> "Polynomial":
        """Divide by the content; leading grlex coefficient made positive."""
        if not self.coeffs:
            return self
        c = self.content()
        lead = self.coeffs[max(self.coeffs, key=grlex_key)]
        if lead < 0:
            c = -c
        return self * (1 / c)

    # -- printing -----------------------------------------------------------

    def __repr__(self):
        return f"Polynomial({self})"

    def __str__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for e in sorted(self.coeffs, key=grlex_key, reverse=True):
            c = self.coeffs[e]
            mono = "*".join(
                f"{v}^{k}" if k > 1 else v
                for v, k in zip(self.vars, e) if k
            )
            if not mono:
                term = str(c)
            elif c == 1:
                term = mono
            elif c == -1:
                term = f"-{mono}"
            else:
                term = f"{c}*{mono}"
            if parts and not term.startswith("-"):
                parts.append("+" + term)
            else:
                parts.append(term)
        return " ".join(parts).replace("+", "+ ").replace("-", "- ").replace("e- ", "e-").strip()


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

class ParseError(ValueError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        loc = f" at line {line}, column {col}" if line is not None else ""
        super().__init__(f"{message}{loc}")


_TOKEN_KINDS = ("int", "name", "op", "end")


def _tokenize(text: str, line0: int = 1):
    toks = []
    i, line, col = 0, line0, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in " \t":
            i += 1
            col += 1
            continue
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and (text[j] == "." or (text[j] in "eE" and j + 1 < n and
                                             (text[j + 1].isdigit() or text[j + 1] in "+-"))):
                raise ParseError("floating-point literals are not accepted; "
                                 "use exact rationals like 3/2", line, col)
            toks.append(("int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha():
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(("name", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch in "+-*/^()":
            toks.append(("op", ch, line, col))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", line, col)
    toks.append(("end", "", line, col))
    return toks


class _Parser:
    """Recursive-descent parser for `+ - * / ^` polynomial expressions."""

    def __init__(self, tokens, variables=None):
        self.toks = tokens
        self.pos = 0
        self.variables = tuple(variables) if variables is not None else None
        self.seen = []

    def peek(self):
        return self.toks[self.pos]

    def next(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def fail(self, msg):
        kind, val, line, col = self.peek()
        raise ParseError(msg, line, col)

    def parse(self) -> Polynomial:
        p = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        if self.variables is not None:
            return p.with_vars(self.variables)
        return p

    def expr(self):
        kind, val, _, _ = self.peek()
        neg = False
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            if self.next()[1] == "-":
                neg = not neg
        p = self.term()
        if neg:
            p = -p
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.next()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self):
        p = self.factor()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            op = self.next()[1]
            q = self.factor()
            if op == "*":
                p = p * q
            else:
                if not q.is_constant() or q.is_zero():
                    self.fail("division only by nonzero rational constants")
                p = p * (1 / q.constant_value())
        return p

    def factor(self):
        p = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.next()
            kind, val, line, col = self.next()
            if kind != "int":
                raise ParseError("exponent must be a nonnegative integer", line, col)
            p = p ** int(val)
        return p

    def atom(self):
        kind, val, line, col = self.next()
        if kind == "int":
            return Polynomial.constant(mpq(val))
        if kind == "name":
            if self.variables is not None and val not in self.variables:
                raise ParseError(f"unknown variable {val!r}", line, col)
            if val not in self.seen:
                self.seen.append(val)
            return Polynomial.variable(val)
        if (kind, val) == ("op", "("):
            p = self.expr()
            kind, val, line, col = self.next()
            if (kind, val) != ("op", ")"):
                raise ParseError("expected ')'", line, col)
            return p
        if (kind, val) == ("op", "-"):
            return -self.atom()
        if (kind, val) == ("op", "+"):
            return self.atom()
        raise ParseError(f"unexpected token {val!r}", line, col)


def parse_polynomial(text: str, variables=None, line0: int = 1) -> Polynomial:
    """Parse an expression with integer/rational coefficients and `+ - * / ^`."""
    return _Parser(_tokenize(text, line0), variables).parse()


# ---------------------------------------------------------------------------
# univariate algorithms over Q
# ---------------------------------------------------------------------------

def _uni_trim(c: list[mpq]) -> list[mpq]:
    while c and not c[-1]:
        c.pop()
    return c


def uni_divmod(a: list[mpq], b: list[mpq]):
    """Exact division with remainder of dense univariate mpq polynomials."""
    if not b:
        raise ZeroDivisionError("polynomial division by zero")
    a = list(a)
    q = [QZERO] * max(0, len(a) - len(b) + 1)
    inv = 1 / b[-1]
    while len(a) >= len(b) and _uni_trim(a):
        k = len(a) - len(b)
        c = a[-1] * inv
        q[k] = c
        for i, bc in enumerate(b):
            a[k + i] -= c * bc
        _uni_trim(a)
    return _uni_trim(q), a


def uni_gcd(a: list[mpq], b: list[mpq]) -> list[mpq]:
    """Monic gcd of univariate rational polynomials (primitive PRS inside)."""

    def to_primitive_int(c):
        den = mpz(1)
        for x in c:
            den = lcm(den, x.denominator)
        ints = [mpz(x * den) for x in c]
        g = mpz(0)
        for x in ints:
            g = gcd(g, x)
        if g:
            ints = [x // g for x in ints]
        return ints

    a = _uni_trim([_as_mpq(x) for x in a])
    b = _uni_trim([_as_mpq(x) for x in b])
    if not a:
        A = b
    elif not b:
        A = a
    else:
        A, B = to_primitive_int(a), to_primitive_int(b)
        if len(A) < len(B):
            A, B = B, A
        while B:
            # pseudo-remainder keeps everything integral
            d = len(A) - len(B)
            R = [mpq(x) for x in A]
            lcb = B[-1]
            for _ in range(d + 1):
                R = [x * lcb for x in R]
                if len(R) >= len(B) and R[-1]:
                    k = len(R) - len(B)
                    c = R[-1] / lcb
                    for i, bc in enumerate(B):
                        R[k + i] -= c * bc
                _uni_trim(R)
                if len(R) < len(B):
                    break
            A, B = B, to_primitive_int(R) if R else []
        A = [mpq(x) for x in A]
    if not A:
        return []
    inv = 1 / A[-1]
    return [c * inv for c in A]


def squarefree_part(P: Polynomial) -> Polynomial:
    """P / gcd(P, P'), monic-normalized: same roots, all simple.

    P must be a nonzero polynomial in (at most) one variable.
    """
    if P.is_zero():
        raise ValueError("square-free part of the zero polynomial")
    used = P.used_vars()
    if not used:
        return Polynomial.constant(1, P.vars)
    var = used[0]
    c = P.univariate_coeffs()
    dc = [k * c[k] for k in range(1, len(c))]
    g = uni_gcd(c, dc)
    q, r = uni_divmod(c, g)
    assert not r, "gcd division was not exact"
    inv = 1 / q[-1]
    return Polynomial.univariate([x * inv for x in q], var)


# ---------------------------------------------------------------------------
# multivariate exact division, pseudo-remainders, resultants
# ---------------------------------------------------------------------------

def poly_exact_div(num: Polynomial, den: Polynomial) -> Polynomial:
    """Exact multivariate division; raises if den does not divide num."""
    if den.is_zero():
        raise ZeroDivisionError("division by zero polynomial")
    num, den = Polynomial._common(num, den)
    if den.is_constant():
        return num * (1 / den.constant_value())
    rem = dict(num.coeffs)
    dlead = max(den.coeffs, key=grlex_key)
    dlc = den.coeffs[dlead]
    ditems = [(e, c) for e, c in den.coeffs.items() if e != dlead]
    out = {}
    while rem:
        e = max(rem, key=grlex_key)
        diff = tuple(a - b for a, b in zip(e, dlead))
        if any(d < 0 for d in diff):
            raise ArithmeticError("inexact polynomial division")
        c = rem.pop(e) / dlc
        out[diff] = c
        for ed, cd in ditems:
            t = tuple(a + b for a, b in zip(diff, ed))
            s = rem.get(t, QZERO) - c * cd
            if s:
                rem[t] = s
            else:
                rem.pop(t, None)
    return Polynomial(num.vars, out)


def _prem(a: list[Polynomial], b: list[Polynomial]):
    """Pseudo-remainder of coefficient lists: exactly lc(b)^(da-db+1) a mod b
    (the full power even when the degree collapses early)."""
    da, db = len(a) - 1, len(b) - 1
    delta = da - db + 1
    lcb = b[-1]
    r = list(a)
    mults = 0
    while r and len(r) - 1 >= db:
        r = [lcb * x for x in r]
        mults += 1
        k = len(r) - 1 - db
        c = poly_exact_div(r[-1], lcb)
        for i in range(db + 1):
            r[k + i] = r[k + i] - c * b[i]
        while r and r[-1].is_zero():
            r.pop()
    if r and mults < delta:
        scale = lcb ** (delta - mults)
        r = [scale * x for x in r]
    return r


def resultant(P: Polynomial, Q: Polynomial, var: str) -> Polynomial:
    """Resultant w.r.t. var, Sylvester determinant convention.

    Subresultant-style pseudo-remainder sequence; every scalar factor picked
    up along the way is tracked exactly and divided out at the end, so signs
    and content agree with det Sylvester(P, Q).
    """
    P2, Q2 = Polynomial._common(P, Q)
    if var not in P2.vars:
        P2 = P2.with_vars(P2.vars + (var,))
        Q2 = Q2.with_vars(P2.vars)
    a = P2.coeffs_in(var)
    b = Q2.coeffs_in(var)
    while a and a[-1].is_zero():
        a.pop()
    while b and b[-1].is_zero():
        b.pop()
    if not a or not b:
        raise ValueError("resultant of a zero polynomial")
    n, m = len(a) - 1, len(b) - 1
    if n == 0 and m == 0:
        raise ValueError("resultant: both inputs constant in the variable")
    rest_vars = a[0].vars if a else ()
    one = Polynomial.constant(1, rest_vars)

    sign = 1
    if n < m:
        a, b = b, a
        n, m = m, n
        if (n * m) % 2:
            sign = -sign

    num: list[tuple[Polynomial, int]] = []
    den: list[tuple[Polynomial, int]] = []

    def push(base: Polynomial, e: int):
        if e > 0:
            num.append((base, e))
        elif e < 0:
            den.append((base, -e))

    while True:
        if m == 0:
            push(b[0], n)
            break
        delta = n - m + 1
        r = _prem(a, b)
        if not r:
            return Polynomial.constant(0, rest_vars)
        dr = len(r) - 1
        lcb = b[-1]
        if (n * m) % 2:
            sign = -sign
        push(lcb, n - dr - delta * m)
        # content-style reduction: strip rational content to limit growth
        qc = r[0].content()
        for x in r[1:]:
            xc = x.content()
            num_g = gcd(qc.numerator, xc.numerator)
            den_l = lcm(qc.denominator, xc.denominator)
            qc = mpq(num_g, den_l)
        if qc and qc != 1:
            r = [x * (1 / qc) for x in r]
            push(Polynomial.constant(qc, rest_vars), m)
        a, b = b, r
        n, m = m, dr

    res = one
    for base, e in num:
        res = res * base ** e
    den_total = one
    for base, e in den:
        den_total = den_total * base ** e
    if not den_total.is_constant() or den_total.constant_value() != 1:
        res = poly_exact_div(res, den_total)
    if sign < 0:
        res = -res
    return res.with_vars(tuple(v for v in P2.vars if v != var))


def sylvester_resultant(P: Polynomial, Q: Polynomial, var: str) -> Polynomial:
    """Resultant as a Bareiss determinant of the Sylvester matrix.

    Reference implementation used to cross-check the PRS route; fine for
    small degrees only.
    """
    P2, Q2 = Polynomial._common(P, Q)
    if var not in P2.vars:
        P2 = P2.with_vars(P2.vars + (var,))
        Q2 = Q2.with_vars(P2.vars)
    a = P2.coeffs_in(var)
    b = Q2.coeffs_in(var)
    n, m = len(a) - 1, len(b) - 1
    if n == 0 and m == 0:
        raise ValueError("resultant: both inputs constant in the variable")
    rest = a[0].vars
    size = n + m
    zero = Polynomial.constant(0, rest)
    M = []
    for i in range(m):
        row = [zero] * size
        for k, c in enumerate(reversed(a)):
            row[i + k] = c
        M.append(row)
    for i in range(n):
        row = [zero] * size
        for k, c in enumerate(reversed(b)):
            row[i + k] = c
        M.append(row)
    # Bareiss fraction-free elimination
    sign = 1
    prev = Polynomial.constant(1, rest)
    for k in range(size - 1):
        if M[k][k].is_zero():
            for i in range(k + 1, size):
                if not M[i][k].is_zero():
                    M[k], M[i] = M[i], M[k]
                    sign = -sign
                    break
            else:
                return zero.with_vars(tuple(v for v in P2.vars if v != var))
        for i in range(k + 1, size):
            for j in range(k + 1, size):
                t = M[k][k] * M[i][j] - M[i][k] * M[k][j]
                M[i][j] = poly_exact_div(t, prev)
            M[i][k] = zero
        prev = M[k][k]
    det = M[size - 1][size - 1]
    if sign < 0:
        det = -det
    return det.with_vars(tuple(v for v in P2.vars if v != var))
