"""Backward recurrences over a reduction trace.

Starting from the most absorbing exterior state, these assemble the limiting
Laplace transforms of hitting laws, the limiting hitting probabilities, and
the limiting normalized expectations, together with the normalization
functions under which each limit holds.  A final pass extends everything to
initial states inside the target domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .asymptotics import ComparableFn, cf_limit
from .laplace import (Convolution, LaplaceExpr, Mixture, Scale, ZERO_MASS,
                      canonical, divide_mass)
from .model import SemiMarkovModel
from .reduction import ReductionTrace

Edge = tuple[str, str]


class MissingInteriorDataError(ValueError):
    """The model has no genuine interior rows to extend the asymptotics to."""


@dataclass
class HittingEntry:
    """Limits for one (initial state, entry state) pair."""

    psi: LaplaceExpr
    check_v: ComparableFn
    hit_prob: Fraction
    switch_index: int
    phi: LaplaceExpr | None = None
    bar_v: ComparableFn | None = None
    bar_E: Fraction | None = None
    e_check: Fraction | None = None
    e_check_infinite: bool = False
    moment_match: bool | None = None


@dataclass
class HittingResult:
    domain: tuple[str, ...]
    initial_states: tuple[str, ...]
    entries: dict[Edge, HittingEntry] = field(default_factory=dict)

    def psi(self, i: str, j: str) -> LaplaceExpr:
        return self.entries[(i, j)].psi

    def hit_prob(self, i: str, j: str) -> Fraction:
        return self.entries[(i, j)].hit_prob

    def check_v(self, i: str) -> ComparableFn:
        for j in self.domain:
            if (i, j) in self.entries:
                return self.entries[(i, j)].check_v
        raise KeyError(i)

    def bar_v(self, i: str) -> ComparableFn:
        for j in self.domain:
            entry = self.entries.get((i, j))
            if entry is not None and entry.bar_v is not None:
                return entry.bar_v
        raise KeyError(i)


def _finite_ratio(num: ComparableFn, den: ComparableFn, what: str) -> Fraction:
    lim = cf_limit(num / den)
    if lim.is_infinite:
        raise ValueError(f"{what}: normalization ratio diverges")
    return lim.finite_value()


def _switch_index(trace: ReductionTrace, n: int) -> int:
    """Largest later order position directly reachable in the limit chain, else n."""
    mbar = len(trace.order)
    st = trace.removed(n - 1)
    k_n = trace.order[n - 1]
    for l in range(mbar, n, -1):
        if st.p0.get((k_n, trace.order[l - 1]), Fraction(0)) > 0:
            return l
    return n


def hitting_probabilities(trace: ReductionTrace) -> dict[Edge, Fraction]:
    """Limiting hitting probabilities via the plain backward recursion."""
    mbar = len(trace.order)
    out: dict[Edge, Fraction] = {}
    for n in range(mbar, 0, -1):
        k_n = trace.order[n - 1]
        st = trace.removed(n - 1)
        for j in trace.domain:
            total = st.p0.get((k_n, j), Fraction(0))
            for l in range(n + 1, mbar + 1):
                k_l = trace.order[l - 1]
                total += out[(k_l, j)] * st.p0.get((k_n, k_l), Fraction(0))
            out[(k_n, j)] = total
    return out


def hitting_summary(trace: ReductionTrace) -> HittingResult:
    """Assemble the limiting hitting-law transforms for every exterior state.

    For the state at order position n the normalization is the pre-exclusion
    normalization of the switch target; the direct-exit transform and every
    downstream law enter with their own normalization ratios against it, each
    a finite limit by the least-absorbing selection.
    """
    mbar = len(trace.order)
    result = HittingResult(trace.domain, tuple(trace.order))
    psi: dict[Edge, LaplaceExpr] = {}
    for n in range(mbar, 0, -1):
        k_n = trace.order[n - 1]
        st = trace.removed(n - 1)
        nbar = _switch_index(trace, n)
        check_v = trace.tilde_v(nbar - 1, trace.order[nbar - 1])
        a = _finite_ratio(st.v[k_n], check_v, f"state {k_n}")
        down_scale = {}
        for l in range(n + 1, mbar + 1):
            k_l = trace.order[l - 1]
            if st.p0.get((k_n, k_l), Fraction(0)) > 0:
                down_scale[l] = _finite_ratio(trace.tilde_v(l - 1, k_l), check_v,
                                              f"state {k_l}")
        for j in trace.domain:
            terms: list[tuple[Fraction, LaplaceExpr]] = []
            direct = st.p0.get((k_n, j), Fraction(0))
            if direct > 0:
                terms.append((direct, Scale(a, st.phi0[(k_n, j)])))
            for l, b in down_scale.items():
                k_l = trace.order[l - 1]
                weight = st.p0[(k_n, k_l)]
                terms.append((weight, Convolution((
                    Scale(a, st.phi0[(k_n, k_l)]),
                    Scale(b, psi[(k_l, j)]),
                ))))
            tree = canonical(Mixture(tuple(terms)))
            psi[(k_n, j)] = tree
            prob = Fraction(tree.mass())
            result.entries[(k_n, j)] = HittingEntry(
                psi=tree, check_v=check_v, hit_prob=prob, switch_index=nbar)
    _attach_conditional(result)
    return result


def _attach_conditional(result: HittingResult) -> None:
    """Conditional transforms: psi / P where P > 0, probability-weighted
    average over the positive entries otherwise."""
    for i in result.initial_states:
        positive = [(j, result.entries[(i, j)]) for j in result.domain
                    if (i, j) in result.entries and result.entries[(i, j)].hit_prob > 0]
        fallback = canonical(Mixture(tuple(
            (Fraction(1), e.psi) for _, e in positive))) if positive else ZERO_MASS
        for j in result.domain:
            entry = result.entries.get((i, j))
            if entry is None:
                continue
            if entry.hit_prob > 0:
                entry.phi = canonical(divide_mass(entry.psi, entry.hit_prob))
            else:
                entry.phi = fallback


def expectation_summary(trace: ReductionTrace,
                        base: HittingResult | None = None) -> HittingResult:
    """Attach expectation limits to a hitting summary.

    The expectation normalization of the state at order position n is its own
    pre-exclusion normalization plus the downstream normalizations weighted by
    the symbolic transition probabilities; the limit splits accordingly into a
    local part and downstream parts.  Against the distribution normalization,
    the expectation either converges to a rescaled value or diverges, which is
    reported with an explicit flag.
    """
    result = base if base is not None else hitting_summary(trace)
    mbar = len(trace.order)
    probs = hitting_probabilities(trace)
    bar_v: dict[str, ComparableFn] = {}
    bar_e: dict[Edge, Fraction] = {}
    for n in range(mbar, 0, -1):
        k_n = trace.order[n - 1]
        st = trace.removed(n - 1)
        own = st.v[k_n]
        vbar = own
        ubar: dict[int, Fraction] = {}
        down_edges = []
        for l in range(n + 1, mbar + 1):
            k_l = trace.order[l - 1]
            if (k_n, k_l) in st.p:
                down_edges.append((l, k_l))
                vbar = vbar + bar_v[k_l] * st.p[(k_n, k_l)]
        for l, k_l in down_edges:
            ubar[l] = _finite_ratio(bar_v[k_l] * st.p[(k_n, k_l)], vbar,
                                    f"expectation weight {k_n}->{k_l}")
        bar_v[k_n] = vbar
        self_weight = 1 - sum(ubar.values(), Fraction(0))
        for j in trace.domain:
            local = st.e0.get((k_n, j), Fraction(0)) * st.p0.get((k_n, j), Fraction(0))
            for l, k_l in down_edges:
                local += (st.e0[(k_n, k_l)] * st.p0[(k_n, k_l)] * probs[(k_l, j)])
            total = self_weight * local
            for l, k_l in down_edges:
                total += ubar[l] * bar_e[(k_l, j)]
            bar_e[(k_n, j)] = total
            entry = result.entries[(k_n, j)]
            entry.bar_v = vbar
            entry.bar_E = total
            ratio = cf_limit(vbar / entry.check_v)
            if ratio.is_infinite:
                entry.e_check = None
                entry.e_check_infinite = True
                entry.moment_match = False
            else:
                entry.e_check = total * ratio.finite_value()
                entry.e_check_infinite = False
                law_mean = entry.psi.mean()
                entry.moment_match = abs(float(law_mean) - float(entry.e_check)) \
                    <= 1e-12 * max(1.0, abs(float(entry.e_check)))
    return result


@dataclass
class InteriorWeights:
    """Mixing weights for initial states inside the target domain."""

    psi_weights: dict[Edge, dict[str, Fraction]] = field(default_factory=dict)
    exp_weights: dict[str, dict[str, Fraction]] = field(default_factory=dict)
    dot_v: dict[Edge, ComparableFn] = field(default_factory=dict)
    ddot_v: dict[str, ComparableFn] = field(default_factory=dict)


def extend_to_interior(trace: ReductionTrace, m: SemiMarkovModel,
                       exterior: HittingResult | None = None,
                       ) -> tuple[HittingResult, InteriorWeights]:
    """Limits for initial states inside D, per the entry-state-dependent
    normalizations built from the exterior results."""
    if not m.interior_given:
        raise MissingInteriorDataError(
            "the model supplies no interior transition rows; asymptotics for "
            "initial states inside the domain are unavailable"
        )
    ext = exterior if exterior is not None else expectation_summary(trace)
    covered = tuple(i for i in m.domain_D if m.support(i))
    result = HittingResult(trace.domain, covered)
    weights = InteriorWeights()
    dbar = [s for s in m.states if s not in m.domain_D]

    p0: dict[Edge, Fraction] = {}
    for i in covered:
        for j in m.support(i):
            lim = cf_limit(m.p[(i, j)])
            p0[(i, j)] = lim.finite_value()

    probs: dict[Edge, Fraction] = {}
    for i in covered:
        for j in trace.domain:
            total = p0.get((i, j), Fraction(0))
            for l in dbar:
                total += p0.get((i, l), Fraction(0)) * ext.hit_prob(l, j)
            probs[(i, j)] = total

    for i in covered:
        v_i = m.normalization(i)
        reachable = [l for l in dbar if (i, l) in m.p]
        # expectation normalization and weights for this initial state
        ddot = v_i
        for l in reachable:
            ddot = ddot + ext.bar_v(l)
        exp_w: dict[str, Fraction] = {}
        for l in reachable:
            exp_w[l] = _finite_ratio(ext.bar_v(l), ddot, f"interior weight {i}|{l}")
        exp_w[i] = 1 - sum(exp_w.values(), Fraction(0))
        weights.exp_weights[i] = exp_w
        weights.ddot_v[i] = ddot
        ddot_self = _finite_ratio(v_i, ddot, f"interior weight {i}")

        for j in trace.domain:
            direct_p = p0.get((i, j), Fraction(0))
            through = [l for l in reachable
                       if p0.get((i, l), Fraction(0)) * ext.hit_prob(l, j) > 0]
            if probs[(i, j)] == 0:
                result.entries[(i, j)] = HittingEntry(
                    psi=ZERO_MASS, check_v=v_i, hit_prob=Fraction(0), switch_index=0,
                    bar_v=ddot, bar_E=Fraction(0), e_check=Fraction(0),
                    moment_match=None)
                continue
            dot_v = v_i if direct_p > 0 else None
            for l in through:
                dot_v = ext.check_v(l) if dot_v is None else dot_v + ext.check_v(l)
            assert dot_v is not None
            self_scale = _finite_ratio(v_i, dot_v, f"interior scale {i}{j}")
            w_map: dict[str, Fraction] = {}
            terms: list[tuple[Fraction, LaplaceExpr]] = []
            if direct_p > 0:
                w_map[i] = self_scale
                terms.append((direct_p, Scale(self_scale, m.times[(i, j)].limit_atom)))
            else:
                w_map[i] = Fraction(0)
            for l in through:
                u_l = _finite_ratio(ext.check_v(l), dot_v, f"interior weight {i}{j}|{l}")
                w_map[l] = u_l
                terms.append((p0[(i, l)], Convolution((
                    Scale(self_scale, m.times[(i, l)].limit_atom),
                    Scale(u_l, ext.psi(l, j)),
                ))))
            tree = canonical(Mixture(tuple(terms)))
            weights.psi_weights[(i, j)] = w_map
            weights.dot_v[(i, j)] = dot_v

            # expectation limit under the expectation normalization
            local = Fraction(0)
            if (i, j) in m.times:
                local += m.times[(i, j)].limit_mean * direct_p
            for l in reachable:
                local += (m.times[(i, l)].limit_mean * p0.get((i, l), Fraction(0))
                          * ext.hit_prob(l, j))
            total_e = ddot_self * local
            for l in reachable:
                entry_l = ext.entries[(l, j)]
                assert entry_l.bar_E is not None
                total_e += exp_w[l] * entry_l.bar_E * p0.get((i, l), Fraction(0))

            entry = HittingEntry(psi=tree, check_v=dot_v,
                                 hit_prob=Fraction(tree.mass()), switch_index=0,
                                 bar_v=ddot, bar_E=total_e)
            ratio = cf_limit(ddot / dot_v)
            if ratio.is_infinite:
                entry.e_check_infinite = True
                entry.moment_match = False
            else:
                entry.e_check = total_e * ratio.finite_value()
                law_mean = entry.psi.mean()
                entry.moment_match = abs(float(law_mean) - float(entry.e_check)) \
                    <= 1e-12 * max(1.0, abs(float(entry.e_check)))
            result.entries[(i, j)] = entry
    _attach_conditional(result)
    return result, weights
