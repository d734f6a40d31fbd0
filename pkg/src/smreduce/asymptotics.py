"""Exact algebra of asymptotically comparable functions of a perturbation parameter.

Functions are represented as ratios of generalized posynomials in ``eps``:
each term is ``a * eps**b * exp(-c/eps) * (1 + ln(1/eps))**(-d)`` with exact
rational ``a, b, c, d``.  The family with exponential factors (c != 0) and the
family with logarithmic factors (d != 0) are never mixed inside one function.

Every function in this algebra has a limit in [0, oo] as eps -> 0, determined
by comparing the leading terms of numerator and denominator lexicographically
on (c, b, d); a larger order tuple vanishes faster.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

Rational = Union[int, Fraction, str, float]


class FamilyMixError(ValueError):
    """Raised when exponential-family and logarithmic-family terms are combined."""


class NonpositiveValueError(ValueError):
    """Raised when a function that must be positive evaluates to <= 0."""


def as_fraction(x: Rational) -> Fraction:
    """Coerce ints, fraction/decimal strings, and floats to an exact Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        # interpret the float via its shortest decimal repr, so 0.1 -> 1/10
        return Fraction(str(x))
    raise TypeError(f"cannot interpret {x!r} as a rational number")


@dataclass(frozen=True)
class Monomial:
    """One term ``coeff * eps**b * exp(-c/eps) * (1 + ln(1/eps))**(-d)``."""

    coeff: Fraction
    b: Fraction = Fraction(0)
    c: Fraction = Fraction(0)
    d: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        if self.c != 0 and self.d != 0:
            raise FamilyMixError(
                "a monomial may carry an exponential factor or a logarithmic "
                "factor, not both"
            )

    @property
    def order(self) -> tuple[Fraction, Fraction, Fraction]:
        """Asymptotic order key; lexicographically larger vanishes faster."""
        return (self.c, self.b, self.d)

    def __mul__(self, other: "Monomial") -> "Monomial":
        if (self.c != 0 and other.d != 0) or (self.d != 0 and other.c != 0):
            raise FamilyMixError("cannot multiply exponential- and logarithmic-family terms")
        return Monomial(self.coeff * other.coeff, self.b + other.b,
                        self.c + other.c, self.d + other.d)

    def eval(self, eps: Fraction) -> Union[Fraction, float]:
        """Value at eps; exact Fraction whenever only integral eps-powers occur."""
        exact = self.c == 0 and self.d == 0 and self.b.denominator == 1
        if exact:
            return self.coeff * eps ** int(self.b)
        value = float(self.coeff) * float(eps) ** float(self.b)
        if self.c != 0:
            value *= math.exp(-float(self.c) / float(eps))
        if self.d != 0:
            value *= (1.0 + math.log(1.0 / float(eps))) ** (-float(self.d))
        return value

    def pretty(self) -> str:
        parts = [str(self.coeff)]
        if self.b != 0:
            parts.append(f"e^{self.b}")
        if self.c != 0:
            parts.append(f"exp(-{self.c}/e)")
        if self.d != 0:
            parts.append(f"log^-{self.d}")
        return " * ".join(parts)


def mono(coeff: Rational, b: Rational = 0, c: Rational = 0, d: Rational = 0) -> Monomial:
    return Monomial(as_fraction(coeff), as_fraction(b), as_fraction(c), as_fraction(d))


def _canonical(terms: Iterable[Monomial]) -> tuple[Monomial, ...]:
    """Sort by asymptotic order (dominant first), merge like terms, drop zeros."""
    merged: dict[tuple[Fraction, Fraction, Fraction], Fraction] = {}
    for t in terms:
        merged[t.order] = merged.get(t.order, Fraction(0)) + t.coeff
    out = [Monomial(a, b=o[1], c=o[0], d=o[2]) for o, a in sorted(merged.items()) if a != 0]
    return tuple(out)


def _check_family(terms: Iterable[Monomial]) -> None:
    has_c = any(t.c != 0 for t in terms)
    has_d = any(t.d != 0 for t in terms)
    if has_c and has_d:
        raise FamilyMixError("exponential- and logarithmic-family terms mixed in one function")


def _mul_posy(p: tuple[Monomial, ...], q: tuple[Monomial, ...]) -> tuple[Monomial, ...]:
    return _canonical(a * b for a in p for b in q)


def _add_posy(p: tuple[Monomial, ...], q: tuple[Monomial, ...]) -> tuple[Monomial, ...]:
    return _canonical(list(p) + list(q))


def _eval_posy(terms: tuple[Monomial, ...], eps: Fraction) -> Union[Fraction, float]:
    values = [t.eval(eps) for t in terms]
    if all(isinstance(v, Fraction) for v in values):
        return sum(values, Fraction(0))
    return math.fsum(float(v) for v in values)


@dataclass(frozen=True)
class ExtendedLimit:
    """A limit in [0, oo]: kind is 'zero', 'finite' or 'infinite'."""

    kind: str
    value: Fraction | None = None

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    @property
    def is_infinite(self) -> bool:
        return self.kind == "infinite"

    def finite_value(self) -> Fraction:
        if self.kind == "zero":
            return Fraction(0)
        if self.kind == "finite":
            assert self.value is not None
            return self.value
        raise ValueError("limit is infinite")

    def __str__(self) -> str:
        if self.kind == "finite":
            return str(self.value)
        return "0" if self.kind == "zero" else "oo"


ZERO_LIMIT = ExtendedLimit("zero")
INFINITE_LIMIT = ExtendedLimit("infinite")


def finite(value: Rational) -> ExtendedLimit:
    v = as_fraction(value)
    return ZERO_LIMIT if v == 0 else ExtendedLimit("finite", v)


class ComparableFn:
    """A ratio of generalized posynomials, canonicalized on construction.

    The numerator may be the zero posynomial (empty term tuple); the
    denominator never is.  Functions used as model data must additionally be
    positive on (0, 1], which is checked by :meth:`check_positive`.
    """

    __slots__ = ("num", "den")

    def __init__(self, num: Iterable[Monomial], den: Iterable[Monomial] = (mono(1),)):
        n = _canonical(num)
        d = _canonical(den)
        if not d:
            raise ZeroDivisionError("denominator of a ComparableFn is the zero function")
        if d[0].coeff < 0:
            n = tuple(Monomial(-t.coeff, t.b, t.c, t.d) for t in n)
            d = tuple(Monomial(-t.coeff, t.b, t.c, t.d) for t in d)
        _check_family(list(n) + list(d))
        object.__setattr__(self, "num", n)
        object.__setattr__(self, "den", d)

    def __setattr__(self, name, value):  # immutable after construction
        raise AttributeError("ComparableFn is immutable")

    # -- constructors -----------------------------------------------------

    @staticmethod
    def constant(value: Rational) -> "ComparableFn":
        v = as_fraction(value)
        return ComparableFn((mono(v),) if v != 0 else ())

    @staticmethod
    def monomial(coeff: Rational, b: Rational = 0, c: Rational = 0, d: Rational = 0) -> "ComparableFn":
        return ComparableFn((mono(coeff, b, c, d),))

    # -- structure --------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.num

    def constant_value(self) -> Fraction | None:
        """The constant this function is identically equal to, if any."""
        if not self.num:
            return Fraction(0)
        if len(self.num) != len(self.den):
            return None
        ratio = None
        for tn, td in zip(self.num, self.den):
            if tn.order != td.order:
                return None
            r = tn.coeff / td.coeff
            if ratio is None:
                ratio = r
            elif r != ratio:
                return None
        return ratio

    @property
    def is_one(self) -> bool:
        return self.constant_value() == 1

    def family(self) -> str:
        terms = list(self.num) + list(self.den)
        if any(t.c != 0 for t in terms):
            return "H2"
        if any(t.d != 0 for t in terms):
            return "H3"
        return "H1"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ComparableFn):
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self) -> int:
        return hash((self.num, self.den))

    def __repr__(self) -> str:
        return f"ComparableFn({self.pretty()})"

    def pretty(self) -> str:
        num = " + ".join(t.pretty() for t in self.num) or "0"
        if len(self.den) == 1 and self.den[0] == mono(1):
            return num
        den = " + ".join(t.pretty() for t in self.den)
        return f"({num}) / ({den})"

    # -- algebra ----------------------------------------------------------

    def __add__(self, other: "ComparableFn") -> "ComparableFn":
        if self.den == other.den:
            return ComparableFn(_add_posy(self.num, other.num), self.den)
        return ComparableFn(
            _add_posy(_mul_posy(self.num, other.den), _mul_posy(other.num, self.den)),
            _mul_posy(self.den, other.den),
        )

    def __sub__(self, other: "ComparableFn") -> "ComparableFn":
        return self + (-other)

    def __neg__(self) -> "ComparableFn":
        return ComparableFn(
            tuple(Monomial(-t.coeff, t.b, t.c, t.d) for t in self.num), self.den
        )

    def __mul__(self, other: "ComparableFn") -> "ComparableFn":
        return ComparableFn(_mul_posy(self.num, other.num), _mul_posy(self.den, other.den))

    def __truediv__(self, other: "ComparableFn") -> "ComparableFn":
        if other.is_zero:
            raise ZeroDivisionError("division by the zero function")
        return ComparableFn(_mul_posy(self.num, other.den), _mul_posy(self.den, other.num))

    # -- asymptotics --------------------------------------------------------

    def limit(self) -> ExtendedLimit:
        """Limit as eps -> 0, by leading-order comparison."""
        if not self.num:
            return ZERO_LIMIT
        on, od = self.num[0].order, self.den[0].order
        if on > od:
            return ZERO_LIMIT
        if on == od:
            return finite(self.num[0].coeff / self.den[0].coeff)
        return INFINITE_LIMIT

    def leading(self) -> Monomial:
        """Monomial ``(a, b, c, d)`` with f(eps) ~ a*eps**b*exp(-c/eps)*(1+ln(1/eps))**(-d)."""
        if not self.num:
            raise ValueError("the zero function has no leading term")
        tn, td = self.num[0], self.den[0]
        return Monomial(tn.coeff / td.coeff, tn.b - td.b, tn.c - td.c, tn.d - td.d)

    # -- evaluation ---------------------------------------------------------

    def eval_exact(self, eps: Rational) -> Union[Fraction, float]:
        e = as_fraction(eps)
        if not (0 < e <= 1):
            raise ValueError("eps must lie in (0, 1]")
        num = _eval_posy(self.num, e)
        den = _eval_posy(self.den, e)
        if isinstance(num, Fraction) and isinstance(den, Fraction):
            return num / den
        return float(num) / float(den)

    def eval(self, eps: Rational) -> float:
        """Positive float value at eps; rejects nonpositive results."""
        value = float(self.eval_exact(eps))
        if value <= 0.0:
            raise NonpositiveValueError(
                f"{self.pretty()} evaluates to {value} at eps={eps}; positivity violated"
            )
        return value

    def check_positive(self, sample: tuple[float, ...] = (1.0, 0.1, 0.01, 0.001)) -> bool:
        """Leading-term positivity of num and den plus numeric spot checks.

        Stochastic-matrix entries such as 1 - eps may legitimately vanish at
        the unperturbed endpoint, so a zero value is tolerated at eps = 1 but
        nowhere in the interior of the interval.
        """
        if not self.num or self.num[0].coeff <= 0 or self.den[0].coeff <= 0:
            return False
        for eps in sample:
            value = float(self.eval_exact(eps))
            if value < 0.0 or (value == 0.0 and eps != 1.0):
                return False
        return True


ONE = ComparableFn.constant(1)
ZERO = ComparableFn.constant(0)


# -- operation-style aliases -------------------------------------------------

def cf_add(f: ComparableFn, g: ComparableFn) -> ComparableFn:
    return f + g


def cf_mul(f: ComparableFn, g: ComparableFn) -> ComparableFn:
    return f * g


def cf_div(f: ComparableFn, g: ComparableFn) -> ComparableFn:
    return f / g


def cf_limit(f: ComparableFn) -> ExtendedLimit:
    return f.limit()


def cf_eval(f: ComparableFn, eps: Rational) -> float:
    return f.eval(eps)


def cf_leading(f: ComparableFn) -> Monomial:
    return f.leading()


# -- parsing and serialization ----------------------------------------------

_NUM = r"-?\d+(?:\.\d+)?(?:/\d+)?"
_LITERAL = re.compile(
    rf"^\s*(?P<a>{_NUM})\s*"
    rf"(?:\*\s*e\^\(?(?P<b>{_NUM})\)?\s*)?"
    rf"(?:\*\s*exp\(\s*-\s*(?P<c>{_NUM})\s*/\s*e\s*\)\s*)?"
    rf"(?:\*\s*log\^\(?-\s*(?P<d>{_NUM})\)?\s*)?$"
)


class MonomialSyntaxError(ValueError):
    pass


def parse_monomial(text: str) -> Monomial:
    """Parse ``"a * e^b"``-style literals, with optional exp/log factors."""
    m = _LITERAL.match(text)
    if not m:
        raise MonomialSyntaxError(f"cannot parse monomial literal {text!r}")
    a = as_fraction(m.group("a"))
    b = as_fraction(m.group("b") or 0)
    c = as_fraction(m.group("c") or 0)
    d = as_fraction(m.group("d") or 0)
    return Monomial(a, b, c, d)


def monomial_from_json(obj) -> Monomial:
    if isinstance(obj, str):
        return parse_monomial(obj)
    if isinstance(obj, (int, float)):
        return mono(obj)
    if isinstance(obj, dict):
        unknown = set(obj) - {"a", "b", "c", "d"}
        if unknown:
            raise MonomialSyntaxError(f"unknown monomial keys {sorted(unknown)}")
        if "a" not in obj:
            raise MonomialSyntaxError("monomial object requires key 'a'")
        return mono(obj["a"], obj.get("b", 0), obj.get("c", 0), obj.get("d", 0))
    raise MonomialSyntaxError(f"cannot interpret {obj!r} as a monomial")


def monomial_to_json(m: Monomial) -> dict:
    out = {"a": str(m.coeff), "b": str(m.b)}
    if m.c != 0:
        out["c"] = str(m.c)
    if m.d != 0:
        out["d"] = str(m.d)
    return out


def fn_from_json(obj) -> ComparableFn:
    """Read a ComparableFn from JSON: object with num/den, list, or literal."""
    if isinstance(obj, dict) and ("num" in obj or "den" in obj):
        num = [monomial_from_json(t) for t in obj.get("num", [])]
        den = [monomial_from_json(t) for t in obj.get("den", [{"a": "1", "b": "0"}])]
        return ComparableFn(num, den)
    if isinstance(obj, list):
        return ComparableFn([monomial_from_json(t) for t in obj])
    return ComparableFn([monomial_from_json(obj)])


def fn_to_json(f: ComparableFn) -> dict:
    out = {"num": [monomial_to_json(t) for t in f.num]}
    if f.den != (mono(1),):
        out["den"] = [monomial_to_json(t) for t in f.den]
    return out
