"""Shared model builders for the test suite."""

from __future__ import annotations

import random
from fractions import Fraction
from pathlib import Path

from smreduce.asymptotics import ComparableFn, ONE, mono
from smreduce.laplace import DiracAt, ExponentialWithMean, UniformOn
from smreduce.model import SemiMarkovModel, TransitionTimeSpec

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

HALF = Fraction(1, 2)


def three_state(alpha, beta, gamma, allow_zero_mass: bool = False) -> SemiMarkovModel:
    """The singularly perturbed three-state chain with one absorbing target.

    Exits from state 1 carry weights eps**alpha/2 and eps**beta/2, state 2
    leaks at rate eps, and all transition times are unit point masses on the
    natural time scale of the starting state (eps**-gamma for state 1).
    """
    a, b, g = Fraction(alpha), Fraction(beta), Fraction(gamma)
    p = {
        ("1", "1"): ComparableFn([mono(1), mono(-HALF, a), mono(-HALF, b)]),
        ("1", "2"): ComparableFn([mono(HALF, a)]),
        ("1", "3"): ComparableFn([mono(HALF, b)]),
        ("2", "1"): ComparableFn([mono(HALF, 1)]),
        ("2", "2"): ComparableFn([mono(1), mono(-1, 1)]),
        ("2", "3"): ComparableFn([mono(HALF, 1)]),
    }
    p = {k: f for k, f in p.items() if not f.is_zero}  # structural zero at a = b = 0
    v1 = ComparableFn([mono(1, -g)])
    times = {}
    for (i, j) in p:
        scale = v1 if i == "1" else ONE
        times[(i, j)] = TransitionTimeSpec("dirac", scale, DiracAt(Fraction(1)), Fraction(1))
    v = {"1": v1, "2": ONE}
    return SemiMarkovModel(("1", "2", "3"), ("3",), "H1", allow_zero_mass, p, times, v)


def two_target_toy() -> SemiMarkovModel:
    """Two transient states leaking symmetrically into a two-state target set."""
    p = {
        ("1", "1"): ComparableFn([mono(1), mono(-1, 1)]),
        ("1", "3"): ComparableFn([mono(HALF, 1)]),
        ("1", "4"): ComparableFn([mono(HALF, 1)]),
        ("2", "2"): ComparableFn([mono(1), mono(-1, 1)]),
        ("2", "3"): ComparableFn([mono(HALF, 1)]),
        ("2", "4"): ComparableFn([mono(HALF, 1)]),
    }
    times = {k: TransitionTimeSpec("dirac", ONE, DiracAt(Fraction(1)), Fraction(1))
             for k in p}
    v = {"1": ONE, "2": ONE}
    return SemiMarkovModel(("1", "2", "3", "4"), ("3", "4"), "H1", False, p, times, v)


_SAMPLER_ATOMS = {
    "dirac": lambda c: (DiracAt(c), c),
    "exponential": lambda c: (ExponentialWithMean(c), c),
    "uniform": lambda c: (UniformOn(c), c / 2),
}


def _time_spec(rng: random.Random, v: ComparableFn) -> TransitionTimeSpec:
    sampler = rng.choice(("dirac", "exponential", "uniform"))
    c = rng.choice((HALF, Fraction(1), Fraction(2)))
    atom, mean = _SAMPLER_ATOMS[sampler](c)
    return TransitionTimeSpec(sampler, ComparableFn.constant(c) * v, atom, mean)


def random_model(rng: random.Random, n_states: int | None = None) -> SemiMarkovModel:
    """A random valid model: stable supports, symbolic row sums equal to one,
    guaranteed access to the target domain, and declared limits consistent
    with the samplers."""
    n = n_states if n_states is not None else rng.randint(4, 6)
    n_dbar = rng.randint(2, min(3, n - 1))
    states = tuple(str(i + 1) for i in range(n))
    dbar = list(states[:n_dbar])
    domain = tuple(states[n_dbar:])

    v = {i: ComparableFn([mono(1, -rng.randint(0, 2))]) for i in dbar}
    ladder = dbar[:]
    rng.shuffle(ladder)
    guaranteed: dict[str, str] = {}
    safe: list[str] = list(domain)
    for i in ladder:
        guaranteed[i] = rng.choice(safe)
        safe.append(i)

    p: dict[tuple[str, str], ComparableFn] = {}
    times: dict[tuple[str, str], TransitionTimeSpec] = {}
    for i in dbar:
        targets = {guaranteed[i]}
        for _ in range(rng.randint(1, 3)):
            targets.add(rng.choice(states))
        weights = {}
        for j in sorted(targets):
            a = rng.choice((HALF, Fraction(1), Fraction(2), Fraction(3)))
            b = rng.randint(0, 2)
            weights[j] = ComparableFn([mono(a, b)])
        total = None
        for f in weights.values():
            total = f if total is None else total + f
        for j, f in weights.items():
            p[(i, j)] = f / total
            times[(i, j)] = _time_spec(rng, v[i])
    return SemiMarkovModel(states, domain, "H1", False, p, times, v)


def interior_row_model(direct_prob: ComparableFn) -> SemiMarkovModel:
    """One exterior state plus a target pair, with a genuine interior row from
    state 2 that splits between a direct exit and a detour through state 1."""
    through = ONE - direct_prob
    p = {
        ("1", "1"): ComparableFn([mono(1), mono(-1, 1)]),
        ("1", "3"): ComparableFn([mono(1, 1)]),
        ("2", "3"): direct_prob,
        ("3", "3"): ONE,
    }
    if not through.is_zero:
        p[("2", "1")] = through
    spec = TransitionTimeSpec("dirac", ONE, DiracAt(Fraction(1)), Fraction(1))
    times = {k: spec for k in p}
    v = {"1": ONE, "2": ONE, "3": ONE}
    return SemiMarkovModel(("1", "2", "3"), ("2", "3"), "H1", False, p, times, v,
                           interior_given=True)
