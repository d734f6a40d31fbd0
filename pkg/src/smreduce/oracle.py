"""Ground-truth machinery at fixed values of the perturbation parameter.

Hitting-time transforms and expectations solve small linear systems built
from the evaluated model; the phase-space reduction is mirrored numerically so
invariance can be checked step by step; trajectory simulation provides an
independent stochastic check; and the convergence report tabulates the gaps
between fixed-eps truth and the computed limits along an eps-grid.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable

from .hitting import HittingResult
from .model import SemiMarkovModel, TransitionTimeSpec
from .reduction import ReductionTrace

Edge = tuple[str, str]


class SingularSystemError(RuntimeError):
    """The hitting-time system is singular; the exterior condition fails at this eps."""


class StepBudgetExceeded(RuntimeError):
    """Simulation exceeded the global step budget; absorption is too slow at this eps."""


def _transform(spec: TransitionTimeSpec, scale: float) -> Callable[[float], float]:
    if spec.sampler == "dirac":
        return lambda s: math.exp(-scale * s)
    if spec.sampler == "exponential":
        return lambda s: 1.0 / (1.0 + scale * s)

    def uniform(s: float) -> float:
        x = scale * s
        if x == 0.0:
            return 1.0
        return -math.expm1(-x) / x

    return uniform


def _mean(spec: TransitionTimeSpec, scale: float) -> float:
    if spec.sampler == "uniform":
        return scale / 2.0
    return scale


@dataclass
class FixedEpsModel:
    """The model with every perturbation-dependent quantity evaluated at one eps."""

    states: tuple[str, ...]
    domain: tuple[str, ...]
    eps: float
    p: dict[Edge, float]
    phi: dict[Edge, Callable[[float], float]]
    e: dict[Edge, float]

    @property
    def dbar(self) -> tuple[str, ...]:
        dset = set(self.domain)
        return tuple(s for s in self.states if s not in dset)

    def support(self, i: str) -> tuple[str, ...]:
        return tuple(j for j in self.states if (i, j) in self.p)

    def check_rows(self, tol: float = 1e-12) -> None:
        for i in self.states:
            sup = self.support(i)
            if not sup:
                continue
            total = math.fsum(self.p[(i, j)] for j in sup)
            if abs(total - 1.0) > tol:
                raise ValueError(f"row {i} sums to {total} at eps={self.eps}")


def fix_model(m: SemiMarkovModel, eps: float) -> FixedEpsModel:
    """Evaluate a model at one eps; interior rows default to the frozen form.

    Probability entries may legitimately evaluate to zero at the unperturbed
    endpoint, so they bypass the strict positivity check of ``eval``.
    """
    mm = m if m.interior_given else m.with_bhat_rows()
    p = {}
    for k, f in mm.p.items():
        value = float(f.eval_exact(eps))
        if value < 0.0:
            raise ValueError(f"probability entry {k} is negative at eps={eps}")
        p[k] = value
    phi = {}
    e = {}
    for k, spec in mm.times.items():
        scale = spec.scale.eval(eps)
        phi[k] = _transform(spec, scale)
        e[k] = _mean(spec, scale)
    return FixedEpsModel(mm.states, mm.domain_D, eps, p, phi, e)


def fixed_remove_virtual(fem: FixedEpsModel) -> FixedEpsModel:
    """Numeric mirror of the virtual-transition removal pass."""
    p: dict[Edge, float] = {}
    phi: dict[Edge, Callable[[float], float]] = {}
    e: dict[Edge, float] = {}
    dset = set(fem.domain)
    for i in fem.states:
        if i in dset:
            for j in fem.support(i):
                p[(i, j)] = fem.p[(i, j)]
                phi[(i, j)] = fem.phi[(i, j)]
                e[(i, j)] = fem.e[(i, j)]
            continue
        pii = fem.p.get((i, i), 0.0)
        if pii >= 1.0:
            raise SingularSystemError(f"row {i} is fully absorbing at eps={fem.eps}")
        stay = 1.0 - pii
        for j in fem.support(i):
            if j == i:
                continue
            p[(i, j)] = fem.p[(i, j)] / stay
            if pii > 0.0:
                loop = fem.phi[(i, i)]
                exit_ = fem.phi[(i, j)]
                phi[(i, j)] = (lambda s, lo=loop, ex=exit_, q=pii:
                               ex(s) * (1.0 - q) / (1.0 - q * lo(s)))
                e[(i, j)] = fem.e[(i, j)] + pii / stay * fem.e[(i, i)]
            else:
                phi[(i, j)] = fem.phi[(i, j)]
                e[(i, j)] = fem.e[(i, j)]
    return FixedEpsModel(fem.states, fem.domain, fem.eps, p, phi, e)


def fixed_exclude(fem: FixedEpsModel, k: str) -> FixedEpsModel:
    """Numeric mirror of the one-state exclusion (expects removed virtuals)."""
    states = tuple(s for s in fem.states if s != k)
    p: dict[Edge, float] = {}
    phi: dict[Edge, Callable[[float], float]] = {}
    e: dict[Edge, float] = {}
    for i in states:
        through_k = (i, k) in fem.p
        for j in states:
            direct = fem.p.get((i, j))
            through = None
            if through_k and (k, j) in fem.p:
                through = fem.p[(i, k)] * fem.p[(k, j)]
            if direct is None and through is None:
                continue
            total = (direct or 0.0) + (through or 0.0)
            p[(i, j)] = total
            if through is None:
                phi[(i, j)] = fem.phi[(i, j)]
                e[(i, j)] = fem.e[(i, j)]
                continue
            path_phi_a = fem.phi[(i, k)]
            path_phi_b = fem.phi[(k, j)]
            path_e = fem.e[(i, k)] + fem.e[(k, j)]
            if direct is None:
                phi[(i, j)] = (lambda s, a=path_phi_a, b=path_phi_b: a(s) * b(s))
                e[(i, j)] = path_e
            else:
                q = direct / total
                dphi = fem.phi[(i, j)]
                phi[(i, j)] = (lambda s, d=dphi, a=path_phi_a, b=path_phi_b, w=q:
                               w * d(s) + (1.0 - w) * a(s) * b(s))
                e[(i, j)] = q * fem.e[(i, j)] + (1.0 - q) * path_e
    return FixedEpsModel(states, fem.domain, fem.eps, p, phi, e)


def fixed_reduction_sequence(m: SemiMarkovModel, order: tuple[str, ...],
                             eps: float) -> list[FixedEpsModel]:
    """Fixed-eps snapshots after each removal pass, mirroring a reduction trace."""
    fem = fixed_remove_virtual(fix_model(m, eps))
    out = [fem]
    for k in order[:-1]:
        fem = fixed_remove_virtual(fixed_exclude(fem, k))
        out.append(fem)
    return out


# -- linear solvers ------------------------------------------------------------

def _solve(a: list[list[float]], b: list[float]) -> list[float]:
    """Gaussian elimination with row equilibration and partial pivoting."""
    n = len(b)
    m = [row[:] + [rhs] for row, rhs in zip(a, b)]
    for row in m:
        scale = max(abs(x) for x in row[:n]) or 1.0
        for c in range(n + 1):
            row[c] /= scale
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(m[r][col]))
        if abs(m[pivot][col]) < 1e-14:
            raise SingularSystemError("hitting-time system is singular")
        m[col], m[pivot] = m[pivot], m[col]
        for r in range(col + 1, n):
            f = m[r][col] / m[col][col]
            if f:
                for c in range(col, n + 1):
                    m[r][c] -= f * m[col][c]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        acc = m[r][n] - math.fsum(m[r][c] * x[c] for c in range(r + 1, n))
        x[r] = acc / m[r][r]
    return x


def exact_laplace(fem: FixedEpsModel, s: float) -> dict[Edge, float]:
    """Hitting-law transforms at one (eps, s), for every initial state.

    For each entry state the exterior unknowns solve a linear system whose
    matrix is the transform-damped exterior transition matrix; interior rows
    follow by one first-step decomposition.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    dbar = list(fem.dbar)
    index = {i: r for r, i in enumerate(dbar)}
    n = len(dbar)
    weight = {key: fem.phi[key](s) * fem.p[key] for key in fem.p}
    a = [[(1.0 if r == c else 0.0) for c in range(n)] for r in range(n)]
    for i in dbar:
        for j in fem.support(i):
            if j in index:
                a[index[i]][index[j]] -= weight[(i, j)]
    out: dict[Edge, float] = {}
    for j in fem.domain:
        b = [weight.get((i, j), 0.0) for i in dbar]
        x = _solve(a, b) if n else []
        for i in dbar:
            out[(i, j)] = x[index[i]]
        for i in fem.domain:
            acc = weight.get((i, j), 0.0)
            for l in dbar:
                if (i, l) in weight:
                    acc += weight[(i, l)] * x[index[l]]
            out[(i, j)] = acc
    return out


def exact_expectation(fem: FixedEpsModel) -> dict[Edge, float]:
    """Per-entry-state expectations of the hitting time at one eps.

    Solves the probability system first, then for each entry state the linear
    system for E_i = E[tau; entry = j], whose drift terms carry the hitting
    probability of the remaining path.
    """
    probs = exact_laplace(fem, 0.0)
    dbar = list(fem.dbar)
    index = {i: r for r, i in enumerate(dbar)}
    n = len(dbar)
    a = [[(1.0 if r == c else 0.0) for c in range(n)] for r in range(n)]
    for i in dbar:
        for j in fem.support(i):
            if j in index:
                a[index[i]][index[j]] -= fem.p[(i, j)]
    out: dict[Edge, float] = {}
    for j in fem.domain:
        b = []
        for i in dbar:
            drift = fem.p.get((i, j), 0.0) * fem.e.get((i, j), 0.0)
            for l in fem.support(i):
                if l in index:
                    drift += fem.p[(i, l)] * fem.e[(i, l)] * probs[(l, j)]
            b.append(drift)
        x = _solve(a, b) if n else []
        for i in dbar:
            out[(i, j)] = x[index[i]]
        for i in fem.domain:
            acc = fem.p.get((i, j), 0.0) * fem.e.get((i, j), 0.0)
            for l in dbar:
                if (i, l) in fem.p:
                    acc += fem.p[(i, l)] * (fem.e[(i, l)] * probs[(l, j)]
                                            + out[(l, j)])
            out[(i, j)] = acc
    return out


# -- trajectory simulation ------------------------------------------------------

STEP_BUDGET = 100_000_000


def _draw_time(rng: random.Random, sampler: str, scale: float) -> float:
    if sampler == "dirac":
        return scale
    if sampler == "exponential":
        return rng.expovariate(1.0 / scale)
    return rng.uniform(0.0, scale)


def _run_time(rng: random.Random, sampler: str, scale: float, count: int) -> float:
    """Total of `count` independent sojourn draws, aggregated where exact."""
    if count == 0:
        return 0.0
    if sampler == "dirac":
        return count * scale
    if sampler == "exponential":
        return rng.gammavariate(count, scale)
    return math.fsum(rng.uniform(0.0, scale) for _ in range(count))


def simulate_hitting(m: SemiMarkovModel, eps: float, start: str, n_samples: int,
                     seed: int) -> list[tuple[float, str]]:
    """Simulate hitting times; deterministic given the seed.

    Each trajectory draws from an independently derived stream, so results do
    not depend on batching.  Runs of self-transitions are aggregated through
    their exact geometric length, which keeps the walk on the jump skeleton.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    mm = m if m.interior_given else m.with_bhat_rows()
    fem = fix_model(mm, eps)
    if start not in fem.states:
        raise ValueError(f"unknown start state {start!r}")
    dset = set(fem.domain)
    rows: dict[str, tuple[list[str], list[float], float]] = {}
    scales = {k: spec.scale.eval(eps) for k, spec in mm.times.items()}
    samplers = {k: spec.sampler for k, spec in mm.times.items()}
    for i in fem.states:
        targets = [j for j in fem.support(i) if j != i]
        weights = [fem.p[(i, j)] for j in targets]
        rows[i] = (targets, weights, fem.p.get((i, i), 0.0))

    out: list[tuple[float, str]] = []
    budget = STEP_BUDGET
    for trajectory in range(n_samples):
        rng = random.Random((seed * 0x9E3779B97F4A7C15 + trajectory) % 2 ** 64)
        state = start
        tau = 0.0
        while True:
            targets, weights, p_self = rows[state]
            if p_self > 0.0:
                if p_self >= 1.0:
                    raise StepBudgetExceeded(f"state {state} is absorbing at eps={eps}")
                u = rng.random()
                runs = int(math.log(max(u, 1e-300)) / math.log(p_self))
                # budget counts simulation events: an aggregated run is one
                # event unless each sojourn must be drawn individually
                budget -= runs if samplers[(state, state)] == "uniform" else 1
                if budget < 0:
                    raise StepBudgetExceeded("simulation step budget exhausted")
                tau += _run_time(rng, samplers[(state, state)],
                                 scales[(state, state)], runs)
            nxt = rng.choices(targets, weights=weights)[0]
            budget -= 1
            if budget < 0:
                raise StepBudgetExceeded("simulation step budget exhausted")
            tau += _draw_time(rng, samplers[(state, nxt)], scales[(state, nxt)])
            if nxt in dset:
                out.append((tau, nxt))
                break
            state = nxt
    return out


# -- convergence report ----------------------------------------------------------

@dataclass
class ConvergenceRow:
    initial: str
    kind: str  # "transform" or "expectation"
    eps_grid: tuple[float, ...]
    gaps: list[float]
    monotone: bool
    final_ok: bool

    @property
    def ok(self) -> bool:
        return self.monotone and self.final_ok


@dataclass
class ConvergenceReport:
    rows: list[ConvergenceRow] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def to_json(self) -> dict:
        return {
            "all_ok": self.all_ok,
            "rows": [
                {
                    "initial": r.initial,
                    "kind": r.kind,
                    "eps_grid": list(r.eps_grid),
                    "gaps": r.gaps,
                    "monotone": r.monotone,
                    "final_ok": r.final_ok,
                    "ok": r.ok,
                }
                for r in self.rows
            ],
        }

    def render_text(self) -> str:
        lines = []
        head = f"{'initial':>8} {'kind':>12} " + "gaps (decreasing eps)"
        lines.append(head)
        for r in self.rows:
            gaps = "  ".join(f"{g:.3e}" for g in r.gaps)
            status = "ok" if r.ok else "FAIL"
            lines.append(f"{r.initial:>8} {r.kind:>12} {gaps}  [{status}]")
        lines.append(f"overall: {'ok' if self.all_ok else 'FAIL'}")
        return "\n".join(lines)


def convergence_check(m: SemiMarkovModel, trace: ReductionTrace,
                      results: HittingResult,
                      eps_grid: tuple[float, ...] = (1e-2, 1e-3, 1e-4),
                      s_grid: tuple[float, ...] = (0.5, 1.0, 2.0),
                      tol_transform: float = 1e-2,
                      tol_expectation: float = 2e-2,
                      slack: float = 1e-9) -> ConvergenceReport:
    """Tabulate fixed-eps-versus-limit gaps along a decreasing eps grid.

    A row passes when its gaps are nonincreasing (up to slack) and the final
    gap is within tolerance.
    """
    if list(eps_grid) != sorted(eps_grid, reverse=True):
        raise ValueError("eps_grid must be decreasing")
    report = ConvergenceReport()
    initial_states = list(trace.order)
    for i in initial_states:
        check_v = results.check_v(i)
        gaps = []
        for eps in eps_grid:
            fem = fix_model(m, eps)
            scale = check_v.eval(eps)
            worst = 0.0
            for s in s_grid:
                truth = exact_laplace(fem, s / scale)
                for j in trace.domain:
                    limit = results.psi(i, j).eval(s)
                    worst = max(worst, abs(truth[(i, j)] - limit))
            gaps.append(worst)
        monotone = all(gaps[t] >= gaps[t + 1] - slack for t in range(len(gaps) - 1))
        report.rows.append(ConvergenceRow(i, "transform", tuple(eps_grid), gaps,
                                          monotone, gaps[-1] <= tol_transform))
    has_expectations = all(
        results.entries[(i, j)].bar_E is not None
        for i in initial_states for j in trace.domain
        if (i, j) in results.entries)
    if has_expectations:
        for i in initial_states:
            bar_v = results.bar_v(i)
            gaps = []
            for eps in eps_grid:
                fem = fix_model(m, eps)
                scale = bar_v.eval(eps)
                truth = exact_expectation(fem)
                worst = 0.0
                for j in trace.domain:
                    entry = results.entries[(i, j)]
                    assert entry.bar_E is not None
                    worst = max(worst, abs(truth[(i, j)] / scale - float(entry.bar_E)))
                gaps.append(worst)
            monotone = all(gaps[t] >= gaps[t + 1] - slack for t in range(len(gaps) - 1))
            report.rows.append(ConvergenceRow(i, "expectation", tuple(eps_grid),
                                              gaps, monotone,
                                              gaps[-1] <= tol_expectation))
    return report
