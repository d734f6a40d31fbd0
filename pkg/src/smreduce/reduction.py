"""Recurrent phase-space reduction for perturbed semi-Markov processes.

One pass removes virtual self-transitions from every exterior row and
compensates the time aggregation in the local normalization functions; one
pass excludes a single least-absorbing exterior state, rerouting paths
through it.  ``reduce`` alternates the two until a single exterior state
remains, keeping the full symbolic pre-limit matrices and all limit objects
at every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .asymptotics import ComparableFn, ExtendedLimit, ONE, cf_limit
from .laplace import (Convolution, LaplaceExpr, MissingMeanError, Mixture,
                      Scale, canonical, expr_to_json, lt_remove_virtual)
from .model import SemiMarkovModel

Edge = tuple[str, str]


class ReductionError(RuntimeError):
    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class DegenerateRowError(ReductionError):
    """A row keeps all its mass on the diagonal; the exterior condition fails."""


class PreconditionError(ReductionError):
    """The chosen state is not least absorbing in the current exterior domain."""


@dataclass
class StepState:
    """A semi-Markov process snapshot during reduction.

    Only exterior rows are tracked: ``p`` holds the symbolic pre-limit
    probabilities over the support, ``p0`` their limits, ``phi0`` the limiting
    transforms of the transition laws normalized by the current ``v``, and
    ``e0`` the corresponding limiting means.
    """

    states: tuple[str, ...]
    dbar: tuple[str, ...]
    domain: tuple[str, ...]
    p: dict[Edge, ComparableFn]
    p0: dict[Edge, Fraction]
    phi0: dict[Edge, LaplaceExpr]
    e0: dict[Edge, Fraction]
    v: dict[str, ComparableFn]

    def support(self, i: str) -> tuple[str, ...]:
        return tuple(j for j in self.states if (i, j) in self.p)

    def row_sum(self, i: str) -> ComparableFn:
        total = None
        for j in self.support(i):
            total = self.p[(i, j)] if total is None else total + self.p[(i, j)]
        if total is None:
            raise ReductionError(f"state {i} has no outgoing transitions")
        return total

    def check_rows(self) -> None:
        for i in self.dbar:
            if not self.row_sum(i).is_one:
                raise ReductionError(f"row {i} is not symbolically stochastic")


def initial_state(m: SemiMarkovModel) -> StepState:
    p = {k: f for k, f in m.p.items() if k[0] not in m.domain_D}
    p0 = {}
    for k, f in p.items():
        lim = cf_limit(f)
        if lim.is_infinite:
            raise ReductionError(f"probability entry {k} diverges")
        p0[k] = lim.finite_value()
    phi0 = {k: m.times[k].limit_atom for k in p}
    e0 = {k: m.times[k].limit_mean for k in p}
    v = {i: m.normalization(i) for i in m.dbar}
    return StepState(m.states, m.dbar, m.domain_D, p, p0, phi0, e0, v)


def _limits(p: dict[Edge, ComparableFn]) -> dict[Edge, Fraction]:
    out = {}
    for k, f in p.items():
        lim = cf_limit(f)
        if lim.is_infinite:
            raise ReductionError(f"probability entry {k} diverges")
        out[k] = lim.finite_value()
    return out


def remove_virtual(state: StepState) -> StepState:
    """Aggregate self-transitions in every exterior row.

    Produces the usual rational update of probabilities, the compensated
    normalizations, and the limiting transforms picked by the exact dichotomy
    on the limit of the diagonal entry.
    """
    p: dict[Edge, ComparableFn] = {}
    phi0: dict[Edge, LaplaceExpr] = {}
    e0: dict[Edge, Fraction] = {}
    v: dict[str, ComparableFn] = {}
    for i in state.dbar:
        pii = state.p.get((i, i))
        targets = [j for j in state.support(i) if j != i]
        if pii is None:
            v[i] = state.v[i]
            for j in targets:
                p[(i, j)] = state.p[(i, j)]
                phi0[(i, j)] = state.phi0[(i, j)]
                e0[(i, j)] = state.e0[(i, j)]
            continue
        stay = ONE - pii
        if stay.is_zero:
            raise DegenerateRowError(
                f"row {i} keeps all mass on the diagonal for every eps"
            )
        v[i] = state.v[i] / stay
        p0ii = state.p0[(i, i)]
        for j in targets:
            p[(i, j)] = state.p[(i, j)] / stay
            if p0ii == 1:
                mean_ii = state.e0[(i, i)]
                if mean_ii <= 0:
                    raise MissingMeanError(
                        f"row {i}: limiting self-transition mean must be positive"
                    )
                phi0[(i, j)] = lt_remove_virtual(Fraction(1), state.phi0[(i, i)],
                                                 state.phi0[(i, j)], mean_ii)
            else:
                phi0[(i, j)] = canonical(lt_remove_virtual(
                    p0ii, state.phi0[(i, i)], state.phi0[(i, j)]))
            e0[(i, j)] = (1 - p0ii) * state.e0[(i, j)] + p0ii * state.e0[(i, i)]
    return StepState(state.states, state.dbar, state.domain,
                     p, _limits(p), phi0, e0, v)


def w_limit(state: StepState, j: str, i: str) -> ExtendedLimit:
    """Limit of the normalization ratio v_j / v_i over the current exterior set."""
    return cf_limit(state.v[j] / state.v[i])


def select_least_absorbing(state: StepState) -> str:
    """Pick the state to exclude next.

    Runs the incumbent/candidate sweep over the exterior states in model
    order, then returns the first state whose normalization is of the same
    asymptotic order as the winner's (deterministic tie-break).
    """
    if len(state.dbar) < 2:
        raise ReductionError("selection needs at least two exterior states")
    incumbent = state.dbar[0]
    for cand in state.dbar[1:]:
        if not w_limit(state, cand, incumbent).is_infinite:
            incumbent = cand
    for i in state.dbar:
        lim = w_limit(state, i, incumbent)
        if lim.is_finite:
            return i
    raise ReductionError("no least absorbing state found")  # pragma: no cover


def exclude_state(state: StepState, k: str) -> tuple[StepState, dict]:
    """Exclude exterior state k, rerouting paths through it.

    Returns the reduced step state plus a record of the comparability limits
    used: the normalization ratios w0[k, i] and the direct-path weights
    qhat0[i, j].
    """
    if k not in state.dbar:
        raise ReductionError(f"state {k} is not in the current exterior domain")
    w0: dict[str, Fraction] = {}
    for i in state.dbar:
        lim = w_limit(state, k, i)
        if lim.is_infinite:
            raise PreconditionError(
                f"state {k} is not least absorbing: v_{k}/v_{i} diverges"
            )
        w0[i] = lim.finite_value()

    new_states = tuple(s for s in state.states if s != k)
    new_dbar = tuple(s for s in state.dbar if s != k)
    p: dict[Edge, ComparableFn] = {}
    phi0: dict[Edge, LaplaceExpr] = {}
    e0: dict[Edge, Fraction] = {}
    qhat: dict[Edge, Fraction] = {}
    for i in new_dbar:
        through_k = (i, k) in state.p
        for j in new_states:
            direct = state.p.get((i, j))
            through = None
            if through_k and (k, j) in state.p:
                through = state.p[(i, k)] * state.p[(k, j)]
            if direct is None and through is None:
                continue
            if through is None:
                p[(i, j)] = direct
                phi0[(i, j)] = state.phi0[(i, j)]
                e0[(i, j)] = state.e0[(i, j)]
                continue
            path_phi = canonical(Convolution((
                state.phi0[(i, k)],
                Scale(w0[i], state.phi0[(k, j)]),
            )))
            path_e = state.e0[(i, k)] + w0[i] * state.e0[(k, j)]
            if direct is None:
                p[(i, j)] = through
                phi0[(i, j)] = path_phi
                e0[(i, j)] = path_e
                continue
            total = direct + through
            lim = cf_limit(direct / total)
            if not (lim.is_finite or lim.is_zero):
                raise ReductionError(f"direct-path weight for {(i, j)} diverges")
            q = lim.finite_value()
            if not 0 <= q <= 1:
                raise ReductionError(f"direct-path weight {q} outside [0, 1]")
            qhat[(i, j)] = q
            p[(i, j)] = total
            phi0[(i, j)] = canonical(Mixture((
                (q, state.phi0[(i, j)]),
                (1 - q, path_phi),
            )))
            e0[(i, j)] = q * state.e0[(i, j)] + (1 - q) * path_e
    v = {i: state.v[i] for i in new_dbar}
    reduced = StepState(new_states, new_dbar, state.domain,
                        p, _limits(p), phi0, e0, v)
    record = {"w0": w0, "qhat": qhat}
    return reduced, record


@dataclass
class StepRecord:
    """One step of the alternating reduction."""

    index: int
    excluded: str | None
    after_exclusion: StepState | None
    after_removal: StepState
    w0: dict[str, Fraction] = field(default_factory=dict)
    qhat: dict[Edge, Fraction] = field(default_factory=dict)


@dataclass
class ReductionTrace:
    """The ordered record of reduction steps.

    ``order`` lists the excluded states followed by the final surviving
    exterior state; ``steps[t].after_removal`` is the process right after the
    t-th removal pass, whose exterior domain is ``order[t:]``.
    """

    model: SemiMarkovModel
    order: tuple[str, ...]
    steps: list[StepRecord]

    @property
    def final_state(self) -> str:
        return self.order[-1]

    @property
    def domain(self) -> tuple[str, ...]:
        return self.model.domain_D

    def removed(self, t: int) -> StepState:
        return self.steps[t].after_removal

    def tilde_v(self, t: int, i: str) -> ComparableFn:
        """Local normalization of state i right after the t-th removal pass."""
        return self.steps[t].after_removal.v[i]

    def to_json(self, symbolic: bool = True) -> dict:
        def fn_json(f: ComparableFn):
            from .asymptotics import fn_to_json

            return fn_to_json(f)

        def state_json(st: StepState) -> dict:
            out = {
                "states": list(st.states),
                "dbar": list(st.dbar),
                "p_limit": {f"{i}->{j}": str(val) for (i, j), val in sorted(st.p0.items())},
                "e_limit": {f"{i}->{j}": str(val) for (i, j), val in sorted(st.e0.items())},
                "phi_limit": {f"{i}->{j}": expr_to_json(val)
                              for (i, j), val in sorted(st.phi0.items())},
            }
            if symbolic:
                out["p"] = {f"{i}->{j}": fn_json(val) for (i, j), val in sorted(st.p.items())}
                out["v"] = {i: fn_json(val) for i, val in sorted(st.v.items())}
            return out

        steps = []
        for rec in self.steps:
            entry: dict = {"index": rec.index, "excluded": rec.excluded}
            if rec.w0:
                entry["w0"] = {i: str(val) for i, val in sorted(rec.w0.items())}
            if rec.qhat:
                entry["qhat"] = {f"{i}->{j}": str(val) for (i, j), val in sorted(rec.qhat.items())}
            if rec.after_exclusion is not None:
                entry["after_exclusion"] = state_json(rec.after_exclusion)
            entry["after_removal"] = state_json(rec.after_removal)
            steps.append(entry)
        return {"order": list(self.order), "final_state": self.final_state, "steps": steps}


def reduce(m: SemiMarkovModel, check: bool = True) -> ReductionTrace:
    """Run the full alternating reduction until one exterior state remains."""
    state = initial_state(m)
    try:
        current = remove_virtual(state)
    except ReductionError as exc:
        raise type(exc)(str(exc), step=0) from None
    if check:
        current.check_rows()
    steps = [StepRecord(0, None, None, current)]
    order: list[str] = []
    t = 1
    while len(current.dbar) > 1:
        try:
            k = select_least_absorbing(current)
            excluded, record = exclude_state(current, k)
            if check:
                excluded.check_rows()
            current = remove_virtual(excluded)
            if check:
                current.check_rows()
        except ReductionError as exc:
            raise type(exc)(str(exc), step=t) from None
        order.append(k)
        steps.append(StepRecord(t, k, excluded, current,
                                w0=record["w0"], qhat=record["qhat"]))
        t += 1
    order.append(current.dbar[0])
    return ReductionTrace(m, tuple(order), steps)
