"""Closed symbolic algebra of limiting transition-time laws via Laplace transforms.

Laws are kept as expression trees over transforms, never inverted to densities.
Leaves are point masses, exponentials and uniforms; composite nodes are
argument scaling, sub-stochastic mixtures, convolutions and the geometric
compounding produced by removing self-transitions.  ``canonical`` rewrites a
tree to a normal form so that algebraically equal limits compare equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .asymptotics import as_fraction

Number = Union[Fraction, float]


def _num(x) -> Number:
    if isinstance(x, (Fraction, float)):
        return x
    return as_fraction(x)


class LaplaceExpr:
    """Base class for transform-tree nodes."""

    def eval(self, s: float) -> float:
        raise NotImplementedError

    def mean(self) -> Number:
        raise NotImplementedError

    def mass(self) -> Number:
        """Total mass of the underlying (possibly defective) law; value at s=0."""
        raise NotImplementedError

    def _key(self) -> str:
        import json

        return json.dumps(expr_to_json(self), sort_keys=True)


@dataclass(frozen=True)
class DiracAt(LaplaceExpr):
    a: Number

    def eval(self, s: float) -> float:
        return math.exp(-float(self.a) * s)

    def mean(self) -> Number:
        return self.a

    def mass(self) -> Number:
        return Fraction(1)


@dataclass(frozen=True)
class ExponentialWithMean(LaplaceExpr):
    m: Number

    def eval(self, s: float) -> float:
        return 1.0 / (1.0 + float(self.m) * s)

    def mean(self) -> Number:
        return self.m

    def mass(self) -> Number:
        return Fraction(1)


@dataclass(frozen=True)
class UniformOn(LaplaceExpr):
    """Uniform law on (0, a)."""

    a: Number

    def eval(self, s: float) -> float:
        x = float(self.a) * s
        if x == 0.0:
            return 1.0
        return -math.expm1(-x) / x

    def mean(self) -> Number:
        return self.a / 2

    def mass(self) -> Number:
        return Fraction(1)


@dataclass(frozen=True)
class ExponentialLimit(LaplaceExpr):
    """Exponential law arising as the limit around an asymptotically absorbing state."""

    mean_value: Number

    def eval(self, s: float) -> float:
        return 1.0 / (1.0 + float(self.mean_value) * s)

    def mean(self) -> Number:
        return self.mean_value

    def mass(self) -> Number:
        return Fraction(1)


@dataclass(frozen=True)
class Scale(LaplaceExpr):
    """Argument scaling: represents phi(w * s)."""

    w: Number
    child: LaplaceExpr

    def eval(self, s: float) -> float:
        return self.child.eval(float(self.w) * s)

    def mean(self) -> Number:
        return self.w * self.child.mean()

    def mass(self) -> Number:
        return self.child.mass()


@dataclass(frozen=True)
class Mixture(LaplaceExpr):
    """Weighted sum of transforms; weights >= 0 with total mass <= 1."""

    items: tuple[tuple[Number, LaplaceExpr], ...]

    def eval(self, s: float) -> float:
        return math.fsum(float(w) * child.eval(s) for w, child in self.items)

    def mean(self) -> Number:
        # unnormalized first moment of the sub-stochastic law
        return sum((w * child.mean() for w, child in self.items), Fraction(0))

    def mass(self) -> Number:
        return sum((w * child.mass() for w, child in self.items), Fraction(0))


@dataclass(frozen=True)
class Convolution(LaplaceExpr):
    children: tuple[LaplaceExpr, ...]

    def eval(self, s: float) -> float:
        out = 1.0
        for child in self.children:
            out *= child.eval(s)
        return out

    def mean(self) -> Number:
        total: Number = Fraction(0)
        masses = [child.mass() for child in self.children]
        for i, child in enumerate(self.children):
            term = child.mean()
            for j, m in enumerate(masses):
                if j != i:
                    term = term * m
            total = total + term
        return total

    def mass(self) -> Number:
        out: Number = Fraction(1)
        for child in self.children:
            out = out * child.mass()
        return out


@dataclass(frozen=True)
class GeometricCompound(LaplaceExpr):
    """Transform ``exit(s) * (1 - p) / (1 - p * loop(s))`` with p in [0, 1)."""

    p: Number
    loop: LaplaceExpr
    exit: LaplaceExpr

    def __post_init__(self) -> None:
        if not 0 <= self.p < 1:
            raise ValueError("geometric compounding requires p in [0, 1)")

    def eval(self, s: float) -> float:
        p = float(self.p)
        return self.exit.eval(s) * (1.0 - p) / (1.0 - p * self.loop.eval(s))

    def mean(self) -> Number:
        return self.exit.mean() + self.p / (1 - self.p) * self.loop.mean()

    def mass(self) -> Number:
        p = self.p
        return self.exit.mass() * (1 - p) / (1 - p * self.loop.mass())


ATOM_TYPES = (DiracAt, ExponentialWithMean, UniformOn)


class MissingMeanError(ValueError):
    """Raised when removing virtual transitions around a fully absorbing state
    without a usable limiting mean for the self-transition time."""


# -- operations on transform trees --------------------------------------------

def lt_eval(x: LaplaceExpr, s: float) -> float:
    if s < 0:
        raise ValueError("transforms are defined for s >= 0")
    return x.eval(float(s))


def lt_mean(x: LaplaceExpr) -> float:
    return float(x.mean())


def lt_mass(x: LaplaceExpr) -> float:
    return float(x.mass())


def lt_remove_virtual(p0, phi_loop: LaplaceExpr, phi_exit: LaplaceExpr,
                      e_loop=None) -> LaplaceExpr:
    """Limiting transform after aggregating self-transitions with limit weight p0.

    For p0 < 1 the aggregated law is a geometric compound of the loop and exit
    laws, both time-compressed by (1 - p0).  For p0 = 1 the sojourn collapses
    to an exponential law whose mean is the limiting self-transition mean.
    """
    p0 = _num(p0)
    if not 0 <= p0 <= 1:
        raise ValueError("p0 must lie in [0, 1]")
    if p0 == 1:
        if e_loop is None or not float(e_loop) > 0:
            raise MissingMeanError(
                "a positive limiting self-transition mean is required when p0 = 1"
            )
        return ExponentialLimit(_num(e_loop))
    if p0 == 0:
        return phi_exit
    q = 1 - p0
    return GeometricCompound(p0, Scale(q, phi_loop), Scale(q, phi_exit))


# -- canonicalization --------------------------------------------------------

def _scaled(w: Number, x: LaplaceExpr) -> LaplaceExpr:
    """Push an argument scaling through a canonical tree."""
    if w == 1:
        return x
    if isinstance(x, DiracAt):
        return DiracAt(w * x.a)
    if isinstance(x, (ExponentialWithMean, ExponentialLimit)):
        return ExponentialLimit(w * x.mean())
    if isinstance(x, UniformOn):
        return DiracAt(Fraction(0)) if w == 0 else UniformOn(w * x.a)
    if isinstance(x, Mixture):
        return Mixture(tuple((wi, _scaled(w, c)) for wi, c in x.items))
    if isinstance(x, Convolution):
        return Convolution(tuple(_scaled(w, c) for c in x.children))
    if isinstance(x, GeometricCompound):
        return GeometricCompound(x.p, _scaled(w, x.loop), _scaled(w, x.exit))
    if isinstance(x, Scale):
        return _scaled(w * x.w, x.child)
    raise TypeError(f"unknown node {x!r}")


def canonical(x: LaplaceExpr) -> LaplaceExpr:
    """Rewrite to normal form: scalings pushed to leaves, degenerate nodes
    collapsed, mixtures and convolutions flattened and sorted."""
    if isinstance(x, ExponentialWithMean):
        x = ExponentialLimit(x.m)
    if isinstance(x, ExponentialLimit):
        return DiracAt(Fraction(0)) if x.mean_value == 0 else x
    if isinstance(x, UniformOn):
        return DiracAt(Fraction(0)) if x.a == 0 else x
    if isinstance(x, DiracAt):
        return x
    if isinstance(x, Scale):
        return canonical(_scaled(_num(x.w), canonical(x.child)))
    if isinstance(x, Convolution):
        children: list[LaplaceExpr] = []
        shift: Number = Fraction(0)
        for raw in x.children:
            c = canonical(raw)
            if isinstance(c, Convolution):
                grand = c.children
            else:
                grand = (c,)
            for g in grand:
                if isinstance(g, DiracAt):
                    shift = shift + g.a
                else:
                    children.append(g)
        if shift != 0:
            children.append(DiracAt(shift))
        if not children:
            return DiracAt(Fraction(0))
        if len(children) == 1:
            return children[0]
        return Convolution(tuple(sorted(children, key=lambda c: c._key())))
    if isinstance(x, Mixture):
        flat: list[tuple[Number, LaplaceExpr]] = []
        for w, raw in x.items:
            w = _num(w)
            if w == 0:
                continue
            c = canonical(raw)
            if isinstance(c, Mixture):
                flat.extend((w * wi, ci) for wi, ci in c.items)
            else:
                flat.append((w, c))
        merged: dict[str, tuple[Number, LaplaceExpr]] = {}
        for w, c in flat:
            k = c._key()
            if k in merged:
                merged[k] = (merged[k][0] + w, c)
            else:
                merged[k] = (w, c)
        items = tuple(sorted(merged.values(), key=lambda it: it[1]._key()))
        if len(items) == 1 and items[0][0] == 1:
            return items[0][1]
        return Mixture(items)
    if isinstance(x, GeometricCompound):
        p = _num(x.p)
        loop = canonical(x.loop)
        exit_ = canonical(x.exit)
        if p == 0 or loop == DiracAt(Fraction(0)):
            return exit_
        if (isinstance(loop, ExponentialLimit) and loop == exit_):
            return ExponentialLimit(loop.mean_value / (1 - p))
        return GeometricCompound(p, loop, exit_)
    raise TypeError(f"unknown node {x!r}")


ZERO_MASS = Mixture(())


def divide_mass(x: LaplaceExpr, c: Number) -> LaplaceExpr:
    """Rescale a sub-stochastic tree by 1/c, turning mass c into mass 1."""
    c = _num(c)
    if c == 1:
        return x
    if c <= 0:
        raise ValueError("mass must be positive")
    if isinstance(x, Mixture):
        return Mixture(tuple((w / c, child) for w, child in x.items))
    if isinstance(x, Scale):
        return Scale(x.w, divide_mass(x.child, c))
    if isinstance(x, Convolution):
        children = list(x.children)
        for i, child in enumerate(children):
            if child.mass() != 1:
                children[i] = divide_mass(child, c)
                return Convolution(tuple(children))
    raise ValueError(f"cannot renormalize node {type(x).__name__} of mass != 1")


# -- serialization and pretty printing ----------------------------------------

def _num_to_json(v: Number):
    return str(v) if isinstance(v, Fraction) else float(v)


def _num_from_json(v) -> Number:
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, int):
        return Fraction(v)
    return float(v)


def expr_to_json(x: LaplaceExpr) -> dict:
    if isinstance(x, DiracAt):
        return {"node": "dirac", "a": _num_to_json(x.a)}
    if isinstance(x, ExponentialWithMean):
        return {"node": "exponential", "mean": _num_to_json(x.m)}
    if isinstance(x, UniformOn):
        return {"node": "uniform", "a": _num_to_json(x.a)}
    if isinstance(x, ExponentialLimit):
        return {"node": "exp_limit", "mean": _num_to_json(x.mean_value)}
    if isinstance(x, Scale):
        return {"node": "scale", "w": _num_to_json(x.w), "child": expr_to_json(x.child)}
    if isinstance(x, Mixture):
        return {
            "node": "mixture",
            "terms": [{"w": _num_to_json(w), "child": expr_to_json(c)} for w, c in x.items],
        }
    if isinstance(x, Convolution):
        return {"node": "convolution", "children": [expr_to_json(c) for c in x.children]}
    if isinstance(x, GeometricCompound):
        return {
            "node": "geometric",
            "p": _num_to_json(x.p),
            "loop": expr_to_json(x.loop),
            "exit": expr_to_json(x.exit),
        }
    raise TypeError(f"unknown node {x!r}")


def expr_from_json(obj: dict) -> LaplaceExpr:
    node = obj.get("node")
    if node == "dirac":
        return DiracAt(_num_from_json(obj["a"]))
    if node == "exponential":
        return ExponentialWithMean(_num_from_json(obj["mean"]))
    if node == "uniform":
        return UniformOn(_num_from_json(obj["a"]))
    if node == "exp_limit":
        return ExponentialLimit(_num_from_json(obj["mean"]))
    if node == "scale":
        return Scale(_num_from_json(obj["w"]), expr_from_json(obj["child"]))
    if node == "mixture":
        return Mixture(tuple((_num_from_json(t["w"]), expr_from_json(t["child"]))
                             for t in obj["terms"]))
    if node == "convolution":
        return Convolution(tuple(expr_from_json(c) for c in obj["children"]))
    if node == "geometric":
        return GeometricCompound(_num_from_json(obj["p"]),
                                 expr_from_json(obj["loop"]),
                                 expr_from_json(obj["exit"]))
    raise ValueError(f"unknown transform node {node!r}")


def _fmt(v: Number) -> str:
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return f"{float(v):g}"


def pretty(x: LaplaceExpr) -> str:
    """Closed-form string for recognized shapes, compact fallback otherwise."""
    x = canonical(x)
    return _pretty(x)


def _pretty(x: LaplaceExpr) -> str:
    if isinstance(x, DiracAt):
        if x.a == 0:
            return "1"
        return f"exp(-{_fmt(x.a)}*s)" if x.a != 1 else "exp(-s)"
    if isinstance(x, (ExponentialLimit, ExponentialWithMean)):
        m = x.mean()
        return "1/(1+s)" if m == 1 else f"1/(1+{_fmt(m)}*s)"
    if isinstance(x, UniformOn):
        return f"(1-exp(-{_fmt(x.a)}*s))/({_fmt(x.a)}*s)"
    if isinstance(x, GeometricCompound) and isinstance(x.loop, DiracAt) \
            and isinstance(x.exit, DiracAt):
        p, a, b = _fmt(x.p), _fmt(x.exit.a), _fmt(x.loop.a)
        q = _fmt(1 - x.p)
        return f"{q}*exp(-{a}*s)/(1-{p}*exp(-{b}*s))"
    if isinstance(x, Mixture):
        if not x.items:
            return "0"
        return " + ".join(f"{_fmt(w)}*[{_pretty(c)}]" for w, c in x.items)
    if isinstance(x, Convolution):
        return " . ".join(f"[{_pretty(c)}]" for c in x.children)
    if isinstance(x, GeometricCompound):
        return (f"geom(p={_fmt(x.p)}; loop=[{_pretty(x.loop)}]; "
                f"exit=[{_pretty(x.exit)}])")
    if isinstance(x, Scale):
        return f"[{_pretty(x.child)}](s*{_fmt(x.w)})"
    return repr(x)
