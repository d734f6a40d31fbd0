"""Data model for perturbed finite semi-Markov processes.

A model consists of a finite state set, a target domain D, a matrix of
perturbation-dependent transition probabilities (absent entries are structural
zeros), per-edge transition-time specifications, and local normalization
functions for the states outside D.  ``validate_model`` checks the standing
structural conditions and returns a report rather than raising.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .asymptotics import (ComparableFn, FamilyMixError, MonomialSyntaxError,
                          ONE, as_fraction, cf_limit, fn_from_json, fn_to_json)
from .laplace import (DiracAt, ExponentialWithMean, LaplaceExpr, UniformOn)

SAMPLERS = ("dirac", "exponential", "uniform")


class SchemaError(ValueError):
    """Raised on malformed model files; the message names the offending key."""


@dataclass(frozen=True)
class TransitionTimeSpec:
    """Pre-limit sampler family plus the declared limiting law and mean.

    sampler: one of "dirac" (point mass at scale), "exponential" (mean equal
    to scale) or "uniform" (on (0, scale)); scale is a positive function of
    the perturbation parameter.
    """

    sampler: str
    scale: ComparableFn
    limit_atom: LaplaceExpr
    limit_mean: Fraction

    def __post_init__(self) -> None:
        if self.sampler not in SAMPLERS:
            raise SchemaError(f"unknown sampler {self.sampler!r}; expected one of {SAMPLERS}")

    def analytic_atom_mean(self) -> Fraction:
        atom = self.limit_atom
        if isinstance(atom, DiracAt):
            return as_fraction(atom.a)
        if isinstance(atom, ExponentialWithMean):
            return as_fraction(atom.m)
        if isinstance(atom, UniformOn):
            return as_fraction(atom.a) / 2
        raise SchemaError("limit_atom must be a dirac, exponential or uniform law")

    def expected_atom(self, v: ComparableFn) -> LaplaceExpr | None:
        """The limiting law the sampler actually produces under normalization v."""
        lim = cf_limit(self.scale / v)
        if not (lim.is_finite or lim.is_zero):
            return None
        c = lim.finite_value()
        if self.sampler == "dirac":
            return DiracAt(c)
        if c == 0:
            return None
        if self.sampler == "exponential":
            return ExponentialWithMean(c)
        return UniformOn(c)


@dataclass(frozen=True)
class SemiMarkovModel:
    states: tuple[str, ...]
    domain_D: tuple[str, ...]
    family: str
    allow_zero_mass: bool
    p: dict[tuple[str, str], ComparableFn]
    times: dict[tuple[str, str], TransitionTimeSpec]
    v: dict[str, ComparableFn]
    interior_given: bool = False

    @property
    def dbar(self) -> tuple[str, ...]:
        dset = set(self.domain_D)
        return tuple(s for s in self.states if s not in dset)

    def support(self, i: str) -> tuple[str, ...]:
        return tuple(j for j in self.states if (i, j) in self.p)

    def normalization(self, i: str) -> ComparableFn:
        return self.v.get(i, ONE)

    def with_bhat_rows(self) -> "SemiMarkovModel":
        """Replace interior rows by the canonical frozen form: uniform jumps
        over D with unit transition times.  Used whenever only the exterior
        asymptotics are requested."""
        m = len(self.domain_D)
        p = {k: v for k, v in self.p.items() if k[0] not in self.domain_D}
        times = {k: v for k, v in self.times.items() if k[0] not in self.domain_D}
        spec = TransitionTimeSpec("dirac", ONE, DiracAt(Fraction(1)), Fraction(1))
        for i in self.domain_D:
            for j in self.domain_D:
                p[(i, j)] = ComparableFn.constant(Fraction(1, m))
                times[(i, j)] = spec
        v = {k: f for k, f in self.v.items() if k not in self.domain_D}
        for i in self.domain_D:
            v[i] = ONE
        return SemiMarkovModel(self.states, self.domain_D, self.family,
                               self.allow_zero_mass, p, times, v,
                               interior_given=False)


@dataclass
class ConditionEntry:
    ok: bool
    witnesses: list = field(default_factory=list)


@dataclass
class ConditionReport:
    condition_A: ConditionEntry
    condition_B: ConditionEntry
    condition_Db: ConditionEntry
    stochastic_rows: ConditionEntry
    family_membership: ConditionEntry
    normalization: ConditionEntry

    @property
    def all_ok(self) -> bool:
        return all(e.ok for e in (self.condition_A, self.condition_B,
                                  self.condition_Db, self.stochastic_rows,
                                  self.family_membership, self.normalization))

    def to_json(self) -> dict:
        def entry(e: ConditionEntry) -> dict:
            return {"ok": e.ok, "witnesses": e.witnesses}

        return {
            "condition_A": entry(self.condition_A),
            "condition_B": entry(self.condition_B),
            "condition_Db": entry(self.condition_Db),
            "stochastic_rows": entry(self.stochastic_rows),
            "family_membership": entry(self.family_membership),
            "normalization": entry(self.normalization),
            "all_ok": self.all_ok,
        }


def validate_model(m: SemiMarkovModel) -> ConditionReport:
    """Check the standing conditions; findings go into the report, not errors."""
    rows_to_check = list(m.dbar) + (list(m.domain_D) if m.interior_given else [])

    # regularity: the built-in samplers never place pre-limit mass at zero,
    # so instantaneous-jump degeneracy can only enter through declared
    # zero-mass limit atoms, which are reported under condition D(b).
    cond_a = ConditionEntry(True)

    # condition B(b): reachability of D through the positive-support digraph
    unreachable = []
    reach = set(m.domain_D)
    frontier = True
    while frontier:
        frontier = False
        for i in m.dbar:
            if i not in reach and any(j in reach for j in m.support(i) if j != i):
                reach.add(i)
                frontier = True
    for i in m.dbar:
        if i not in reach:
            unreachable.append(i)
    cond_b = ConditionEntry(not unreachable, unreachable)

    # row stochasticity, checked symbolically
    bad_rows = []
    for i in rows_to_check:
        sup = m.support(i)
        if not sup:
            bad_rows.append({"row": i, "reason": "no outgoing transitions"})
            continue
        total = m.p[(i, sup[0])]
        for j in sup[1:]:
            total = total + m.p[(i, j)]
        if not total.is_one:
            bad_rows.append({"row": i, "reason": f"row sums to {total.pretty()}"})
    stochastic = ConditionEntry(not bad_rows, bad_rows)

    # condition D(b) and the declared-limit cross-checks, per edge
    bad_edges = []
    for (i, j), spec in m.times.items():
        if i not in rows_to_check:
            continue
        if isinstance(spec.limit_atom, DiracAt) and spec.limit_atom.a == 0 \
                and not m.allow_zero_mass:
            bad_edges.append({"edge": [i, j], "reason": "limit law has mass at zero"})
            continue
        if spec.limit_mean != spec.analytic_atom_mean():
            bad_edges.append({
                "edge": [i, j],
                "reason": f"limit_mean {spec.limit_mean} != atom mean "
                          f"{spec.analytic_atom_mean()}",
            })
            continue
        expected = spec.expected_atom(m.normalization(i))
        if expected is None or expected != spec.limit_atom:
            bad_edges.append({
                "edge": [i, j],
                "reason": "declared limit law inconsistent with sampler scale "
                          "under the row normalization",
            })
    cond_db = ConditionEntry(not bad_edges, bad_edges)

    # family membership: positivity of every probability entry plus a single
    # comparable family across probabilities, normalizations and time scales
    family_bad = []
    for (i, j), f in m.p.items():
        if i not in rows_to_check:
            continue
        if f.family() not in ("H1", m.family):
            family_bad.append({"edge": [i, j], "reason": f"entry in family {f.family()}"})
        if not f.check_positive():
            family_bad.append({"edge": [i, j], "reason": "entry not positive on (0, 1]"})
    for i, f in m.v.items():
        if f.family() not in ("H1", m.family):
            family_bad.append({"state": i, "reason": f"normalization in family {f.family()}"})
    family = ConditionEntry(not family_bad, family_bad)

    # normalization functions must be >= 1 on (0, 1] (sampled)
    norm_bad = []
    for i in m.dbar:
        f = m.normalization(i)
        try:
            if any(f.eval(e) < 1.0 - 1e-12 for e in (1.0, 0.1, 0.01, 0.001)):
                norm_bad.append({"state": i, "reason": "normalization < 1 on (0, 1]"})
        except Exception:
            norm_bad.append({"state": i, "reason": "normalization not positive"})
    norm = ConditionEntry(not norm_bad, norm_bad)

    return ConditionReport(cond_a, cond_b, cond_db, stochastic, family, norm)


# -- JSON parsing and serialization -------------------------------------------

def _atom_from_json(obj) -> LaplaceExpr:
    if not isinstance(obj, dict) or "type" not in obj:
        raise SchemaError("limit_atom must be an object with a 'type' key")
    t = obj["type"]
    if t == "dirac":
        return DiracAt(as_fraction(obj.get("a", 1)))
    if t == "exponential":
        return ExponentialWithMean(as_fraction(obj.get("mean", 1)))
    if t == "uniform":
        return UniformOn(as_fraction(obj.get("a", 1)))
    raise SchemaError(f"unknown limit_atom type {t!r}")


def _atom_to_json(atom: LaplaceExpr) -> dict:
    if isinstance(atom, DiracAt):
        return {"type": "dirac", "a": str(as_fraction(atom.a))}
    if isinstance(atom, ExponentialWithMean):
        return {"type": "exponential", "mean": str(as_fraction(atom.m))}
    if isinstance(atom, UniformOn):
        return {"type": "uniform", "a": str(as_fraction(atom.a))}
    raise SchemaError("limit_atom must be a dirac, exponential or uniform law")


def parse_model(text: str) -> SemiMarkovModel:
    """Parse a UTF-8 JSON model description; errors carry key context."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    for key in ("states", "domain_D", "transitions"):
        if key not in doc:
            raise SchemaError(f"missing required key '{key}'")
    states = tuple(str(s) for s in doc["states"])
    if len(set(states)) != len(states):
        raise SchemaError("duplicate state labels in 'states'")
    domain = tuple(str(s) for s in doc["domain_D"])
    if not domain or not set(domain) <= set(states):
        raise SchemaError("'domain_D' must be a nonempty subset of 'states'")
    if set(domain) == set(states):
        raise SchemaError("'domain_D' must be a proper subset of 'states'")
    family = doc.get("family", "H1")
    if family not in ("H1", "H2", "H3"):
        raise SchemaError(f"unknown family {family!r}")
    allow_zero = bool(doc.get("allow_zero_mass", False))

    p: dict[tuple[str, str], ComparableFn] = {}
    times: dict[tuple[str, str], TransitionTimeSpec] = {}
    interior_given = False
    for idx, tr in enumerate(doc["transitions"]):
        where = f"transitions[{idx}]"
        for key in ("from", "to", "prob", "time"):
            if key not in tr:
                raise SchemaError(f"{where}: missing key '{key}'")
        i, j = str(tr["from"]), str(tr["to"])
        if i not in states or j not in states:
            raise SchemaError(f"{where}: unknown state in edge {i}->{j}")
        if (i, j) in p:
            raise SchemaError(f"{where}: duplicate edge {i}->{j}")
        try:
            p[(i, j)] = fn_from_json(tr["prob"])
        except (MonomialSyntaxError, FamilyMixError) as exc:
            raise SchemaError(f"{where}.prob: {exc}") from None
        t = tr["time"]
        for key in ("sampler", "scale", "limit_atom", "limit_mean"):
            if key not in t:
                raise SchemaError(f"{where}.time: missing key '{key}'")
        try:
            times[(i, j)] = TransitionTimeSpec(
                sampler=str(t["sampler"]),
                scale=fn_from_json(t["scale"]),
                limit_atom=_atom_from_json(t["limit_atom"]),
                limit_mean=as_fraction(t["limit_mean"]),
            )
        except (MonomialSyntaxError, FamilyMixError) as exc:
            raise SchemaError(f"{where}.time: {exc}") from None
        if i in domain:
            interior_given = True

    v: dict[str, ComparableFn] = {}
    for state, fn in doc.get("normalization", {}).items():
        if state not in states:
            raise SchemaError(f"normalization: unknown state {state!r}")
        try:
            v[state] = fn_from_json(fn)
        except (MonomialSyntaxError, FamilyMixError) as exc:
            raise SchemaError(f"normalization[{state}]: {exc}") from None
    dset = set(domain)
    for i in states:
        if i not in dset and i not in v:
            raise SchemaError(f"normalization: missing entry for exterior state {i!r}")
        if i not in dset and not any(key[0] == i for key in p):
            raise SchemaError(f"transitions: exterior state {i!r} has no outgoing edges")

    return SemiMarkovModel(states, domain, family, allow_zero, p, times, v,
                           interior_given=interior_given)


def model_to_json(m: SemiMarkovModel) -> dict:
    transitions = []
    for (i, j) in sorted(m.p):
        spec = m.times[(i, j)]
        transitions.append({
            "from": i,
            "to": j,
            "prob": fn_to_json(m.p[(i, j)]),
            "time": {
                "sampler": spec.sampler,
                "scale": fn_to_json(spec.scale),
                "limit_atom": _atom_to_json(spec.limit_atom),
                "limit_mean": str(spec.limit_mean),
            },
        })
    return {
        "states": list(m.states),
        "domain_D": list(m.domain_D),
        "family": m.family,
        "allow_zero_mass": m.allow_zero_mass,
        "transitions": transitions,
        "normalization": {s: fn_to_json(f) for s, f in sorted(m.v.items())},
    }


def serialize_model(m: SemiMarkovModel) -> str:
    return json.dumps(model_to_json(m), indent=2, sort_keys=True)
