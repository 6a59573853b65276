"""Exact arithmetic substrate: rationals, polynomials, resultants,
square-free parts, real root isolation, algebraic numbers, sign tests."""

from .poly import (
    Rational,
    Integer,
    Polynomial,
    ParseError,
    parse_polynomial,
    squarefree_part,
    resultant,
    sylvester_resultant,
    poly_exact_div,
    uni_gcd,
    uni_divmod,
)
from .roots import (
    AlgebraicNumber,
    isolate_real_roots,
    refine_root,
    sign_at,
    sign_at_rational,
    rational_between,
)
from .numberfield import ResidueRing, DefiningSplit, split_defining, zero_test_at

__all__ = [
    "Rational",
    "Integer",
    "Polynomial",
    "ParseError",
    "parse_polynomial",
    "squarefree_part",
    "resultant",
    "sylvester_resultant",
    "poly_exact_div",
    "uni_gcd",
    "uni_divmod",
    "AlgebraicNumber",
    "isolate_real_roots",
    "refine_root",
    "sign_at",
    "sign_at_rational",
    "rational_between",
    "ResidueRing",
    "DefiningSplit",
    "split_defining",
    "zero_test_at",
]
