"""Exact distortion evaluation.

`min_cost_matching` is an exact Hungarian solver.  `adversarial_distortion`
maximizes cost(M)/cost(OPT) over every metric consistent with the preference
profile: one exact LP per candidate optimal matching M* (normalized to
cost(M*) = 1), after a combinatorial probe for the infinite case (a
consistent metric with cost(OPT) = 0 but positive mechanism cost).

The LPs run over the agent-item distances only; a bipartite distance matrix
extends to a metric on all 2n points exactly when every entry is at most any
3-edge detour (d(a,b) <= d(a,b') + d(a',b') + d(a',b)), and the witness
metric is recovered by shortest-path completion.  These detour rows are
generated lazily.  The explicit LP over all point pairs with full triangle
rows is available via `adversary_lp` + `lp_solve` and agrees with the
projected computation (see tests).
"""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

from ._simplex import EQUAL, LESS, solve_lp
from .core import (
    FractionalMatching,
    Instance,
    InvalidInputError,
    Matching,
    Metric,
    consistent,
    cost,
    fractional_cost,
)

INFINITE = math.inf


# ---------------------------------------------------------------------------
# minimum-cost matching
# ---------------------------------------------------------------------------


def _hungarian(costs: Sequence[Sequence]) -> tuple[list[int], object]:
    """O(n^3) assignment on exact entries (ints or Fractions)."""
    n = len(costs)
    INF = math.inf
    zero = costs[0][0] - costs[0][0]
    u = [zero] * (n + 1)
    v = [zero] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = -1
            row = costs[i0 - 1]
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = [0] * n
    for j in range(1, n + 1):
        if p[j]:
            assign[p[j] - 1] = j - 1
    total = sum(costs[i][assign[i]] for i in range(n))
    return assign, total


def min_cost_matching(metric: Metric) -> tuple[Matching, Fraction]:
    """A minimum-cost perfect matching and its exact cost.

    Ties between optimal matchings break to the lexicographically smallest
    assignment vector, enforced by an exact priority perturbation.
    """
    n = metric.n
    rows = [[metric.agent_item(i, j) for j in range(n)] for i in range(n)]
    denom = 1
    for row in rows:
        for val in row:
            denom = denom * val.denominator // math.gcd(denom, val.denominator)
    big = (n + 1) ** (n + 1)
    perturbed = [
        [int(rows[i][j] * denom) * big + j * (n + 1) ** (n - 1 - i) for j in range(n)]
        for i in range(n)
    ]
    assign, _ = _hungarian(perturbed)
    total = sum(rows[i][assign[i]] for i in range(n))
    return Matching.from_permutation(assign), total


# ---------------------------------------------------------------------------
# explicit linear program over all point pairs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearProgram:
    """Max c.x over x >= 0 with rows (coeffs, sense, rhs); for adversary LPs
    the variables are the pairwise distances among the 2n points.
    """

    n_vars: int
    objective: tuple[Fraction, ...]
    rows: tuple[tuple[tuple[Fraction, ...], str, Fraction], ...]
    n: int = 0  # 2n-point metric LPs record n for reconstruction
    pairs: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "unbounded" | "infeasible"
    value: Optional[Fraction] = None
    x: Optional[tuple[Fraction, ...]] = None
    ray: Optional[tuple[Fraction, ...]] = None


def lp_solve(lp: LinearProgram, pivot_rule: str = "bland") -> LpSolution:
    """Exact two-phase simplex with Bland's anti-cycling rule."""
    res = solve_lp(
        lp.objective,
        [r[0] for r in lp.rows],
        [r[1] for r in lp.rows],
        [r[2] for r in lp.rows],
        maximize=True,
        pivot_rule=pivot_rule,
    )
    return LpSolution(
        status=res.status,
        value=res.value,
        x=tuple(res.x) if res.x is not None else None,
        ray=tuple(res.ray) if res.ray is not None else None,
    )


def adversary_lp(
    inst: Instance,
    target: Union[Matching, FractionalMatching],
    m_star: Matching,
) -> LinearProgram:
    """The full adversary LP: maximize the target's cost over all metrics
    consistent with the instance, normalized by cost(m_star) = 1.  Variables
    are all unordered point pairs; rows are the triangle inequalities for all
    triples, the per-agent ordinal chains, and the normalization.
    """
    n = inst.n
    m = 2 * n
    pairs = [(x, y) for x in range(m) for y in range(x + 1, m)]
    idx = {pq: t for t, pq in enumerate(pairs)}
    nv = len(pairs)

    def var(x: int, y: int) -> int:
        return idx[(x, y) if x < y else (y, x)]

    zero = Fraction(0)
    rows = []
    for x, y, z in itertools.combinations(range(m), 3):
        for a, b, c in ((x, y, z), (y, z, x), (z, x, y)):
            row = [zero] * nv
            row[var(a, b)] += 1
            row[var(a, c)] -= 1
            row[var(c, b)] -= 1
            rows.append((tuple(row), LESS, zero))
    for i in range(n):
        p = inst.prefs[i]
        for k in range(n - 1):
            row = [zero] * nv
            row[var(i, n + p[k])] += 1
            row[var(i, n + p[k + 1])] -= 1
            rows.append((tuple(row), LESS, zero))
    norm = [zero] * nv
    for i, j in m_star.assign.items():
        norm[var(i, n + j)] += 1
    rows.append((tuple(norm), EQUAL, Fraction(1)))

    obj = [zero] * nv
    if isinstance(target, Matching):
        for i, j in target.assign.items():
            obj[var(i, n + j)] += 1
    else:
        for i in range(n):
            for j in range(n):
                obj[var(i, n + j)] += target.p[i][j]
    return LinearProgram(
        n_vars=nv, objective=tuple(obj), rows=tuple(rows), n=n, pairs=tuple(pairs)
    )


def metric_from_lp_point(lp: LinearProgram, x: Sequence[Fraction]) -> Metric:
    """Rebuild the full metric from an adversary-LP vertex and verify it."""
    if not lp.pairs:
        raise InvalidInputError("this LP does not carry point-pair metadata")
    m = 2 * lp.n
    rows = [[Fraction(0)] * m for _ in range(m)]
    for (a, b), v in zip(lp.pairs, x):
        rows[a][b] = rows[b][a] = Fraction(v)
    metric = Metric(lp.n, tuple(tuple(r) for r in rows))
    metric.check_triangle()
    return metric


# ---------------------------------------------------------------------------
# adversarial distortion oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistortionReport:
    """Outcome of a worst-consistent-metric maximization.

    In strict mode `strict_margin` is the largest common gap (capped at 1)
    between consecutive preferences that the witness can afford while staying
    worst-case; 0 means the supremum is only attained with ties.
    """

    value: Union[Fraction, float]  # exact rational, or math.inf
    mechanism_cost: Fraction
    opt_cost: Fraction
    witness_metric: Optional[Metric] = None
    witness_opt: Optional[Matching] = None
    strict_margin: Optional[Fraction] = None


def _support_pairs(target: Union[Matching, FractionalMatching]) -> list[tuple[int, int]]:
    if isinstance(target, Matching):
        return sorted(target.assign.items())
    return [
        (i, j)
        for i in range(target.n)
        for j in range(target.n)
        if target.p[i][j] > 0
    ]


def _zero_closure(inst: Instance, m0: Sequence[int]) -> list[int]:
    """Union-find roots after forcing the matching m0 to cost 0: zero
    distances propagate along each agent's preference prefix and by
    transitivity through the zero components.
    """
    n = inst.n
    parent = list(range(2 * n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x: int, y: int) -> bool:
        rx, ry = find(x), find(y)
        if rx == ry:
            return False
        parent[rx] = ry
        return True

    for i in range(n):
        union(i, n + m0[i])
    changed = True
    while changed:
        changed = False
        for a in range(n):
            ra = find(a)
            deepest = -1
            ranks = inst.ranks[a]
            for j in range(n):
                if find(n + j) == ra and ranks[j] > deepest:
                    deepest = ranks[j]
            for pos in range(deepest):
                if union(n + inst.prefs[a][pos], a):
                    changed = True
    return [find(x) for x in range(2 * n)]


def _infinite_witness(
    inst: Instance, target: Union[Matching, FractionalMatching]
) -> Optional[tuple[Metric, Matching]]:
    """A consistent metric with cost(OPT) = 0 but positive target cost, if
    one exists: scan all candidate zero-cost optima and their zero closures.
    """
    n = inst.n
    support = _support_pairs(target)
    for m0 in itertools.permutations(range(n)):
        roots = _zero_closure(inst, m0)
        if any(roots[i] != roots[n + j] for i, j in support):
            rows = tuple(
                tuple(
                    Fraction(0) if roots[x] == roots[y] else Fraction(1)
                    for y in range(2 * n)
                )
                for x in range(2 * n)
            )
            return Metric(n, rows), Matching.from_permutation(m0)
    return None


def _complete_bipartite(n: int, d: Sequence[Sequence[Fraction]]) -> Metric:
    """Shortest-path completion of an agent-item distance matrix that already
    satisfies the 3-edge detour inequalities (so two-edge paths suffice for
    same-side pairs and the given entries are never shortcut).
    """
    m = 2 * n
    rows = [[Fraction(0)] * m for _ in range(m)]
    for i in range(n):
        for j in range(n):
            rows[i][n + j] = rows[n + j][i] = d[i][j]
    for a in range(n):
        for b in range(a + 1, n):
            v = min(d[a][j] + d[b][j] for j in range(n))
            rows[a][b] = rows[b][a] = v
    for a in range(n):
        for b in range(a + 1, n):
            v = min(d[i][a] + d[i][b] for i in range(n))
            rows[n + a][n + b] = rows[n + b][n + a] = v
    return Metric(n, tuple(tuple(r) for r in rows))


class _BipartiteAdversary:
    """Shared state for the per-M* maximizations of one oracle call.

    Works in increment space: agent i's distance to its rank-t item is the
    prefix sum g[i][0] + ... + g[i][t] with g >= 0, which absorbs both the
    ordinal chains and nonnegativity structurally.  Detour rows discovered
    while refining one candidate optimum remain valid for all others, and a
    relaxation value at most the incumbent prunes the candidate outright.
    """

    def __init__(self, inst: Instance, pair_weights: Sequence[Fraction]):
        self.n = n = inst.n
        self.nv = n * n
        self.ranks = inst.ranks
        self.objective = self._to_increments(pair_weights)
        self.detour_rows: list[list[Fraction]] = []
        self.detour_seen: set[tuple[int, int, int, int]] = set()

    def _to_increments(self, pair_weights: Sequence[Fraction]) -> list[Fraction]:
        """Row vector over g for sum_{i,j} w[i*n+j] * d(a_i, b_j)."""
        n = self.n
        out = [Fraction(0)] * self.nv
        for i in range(n):
            for j in range(n):
                w = pair_weights[i * n + j]
                if w:
                    for t in range(self.ranks[i][j] + 1):
                        out[i * n + t] += w
        return out

    def _distances(self, g: Sequence[Fraction]) -> list[list[Fraction]]:
        n = self.n
        d = [[Fraction(0)] * n for _ in range(n)]
        for i in range(n):
            acc = Fraction(0)
            row = d[i]
            prefs_row = self.ranks[i]
            prefix = []
            for t in range(n):
                acc += g[i * n + t]
                prefix.append(acc)
            for j in range(n):
                row[j] = prefix[prefs_row[j]]
        return d

    def _violated_detours(self, g: Sequence[Fraction]) -> bool:
        """Add detour rows violated at g; works for points and for rays,
        where violation means a strictly positive row value along the ray.
        """
        n = self.n
        d = self._distances(g)
        added = False
        for a in range(n):
            da = d[a]
            for a2 in range(n):
                if a2 == a:
                    continue
                da2 = d[a2]
                for b in range(n):
                    lhs = da[b] - da2[b]
                    for b2 in range(n):
                        if b2 == b:
                            continue
                        if lhs > da[b2] + da2[b2] and (
                            (a, b, a2, b2) not in self.detour_seen
                        ):
                            self.detour_seen.add((a, b, a2, b2))
                            w = [Fraction(0)] * self.nv
                            w[a * n + b] += 1
                            w[a * n + b2] -= 1
                            w[a2 * n + b2] -= 1
                            w[a2 * n + b] -= 1
                            self.detour_rows.append(self._to_increments(w))
                            added = True
        return added

    def _norm_row(self, m_star: Sequence[int]) -> list[Fraction]:
        n = self.n
        norm = [Fraction(0)] * self.nv
        for i, j in enumerate(m_star):
            norm[i * n + j] += 1
        return self._to_increments(norm)

    def maximize(self, m_star: Sequence[int], prune_below=None):
        """Exact LP value and point for one candidate optimum, or None when
        the relaxation already shows the value cannot beat `prune_below`.
        """
        norm = self._norm_row(m_star)
        while True:
            rows = self.detour_rows + [norm]
            senses = [LESS] * len(self.detour_rows) + [EQUAL]
            rhs = [Fraction(0)] * len(self.detour_rows) + [Fraction(1)]
            res = solve_lp(self.objective, rows, senses, rhs, maximize=True)
            if res.status == "optimal":
                if prune_below is not None and res.value <= prune_below:
                    return None
                if not self._violated_detours(res.x):
                    d = self._distances(res.x)
                    return res.value, d
            elif res.status == "unbounded":
                if not self._violated_detours(res.ray):
                    raise RuntimeError(
                        "adversary LP unbounded after the infinite-case probe"
                    )
            else:
                raise RuntimeError("adversary LP infeasible; this cannot happen")

    def maximize_margin(self, m_star: Sequence[int], value: Fraction):
        """Second lexicographic stage: holding the objective at `value`,
        maximize a common lower bound on every consecutive-preference gap
        (capped at 1 -- scaling can inflate margins whenever any positive
        margin is feasible).  Returns (margin, distance matrix).
        """
        n = self.n
        zero = Fraction(0)
        margin_col = self.nv
        norm = self._norm_row(m_star)
        objective = [zero] * self.nv + [Fraction(1)]
        while True:
            rows = []
            senses = []
            rhs = []
            for row in self.detour_rows:
                rows.append(row + [zero])
                senses.append(LESS)
                rhs.append(zero)
            rows.append(norm + [zero])
            senses.append(EQUAL)
            rhs.append(Fraction(1))
            rows.append(self.objective + [zero])
            senses.append(EQUAL)
            rhs.append(value)
            for i in range(n):
                for t in range(1, n):
                    gap = [zero] * (self.nv + 1)
                    gap[i * n + t] -= 1
                    gap[margin_col] += 1
                    rows.append(gap)
                    senses.append(LESS)
                    rhs.append(zero)
            cap = [zero] * (self.nv + 1)
            cap[margin_col] += 1
            rows.append(cap)
            senses.append(LESS)
            rhs.append(Fraction(1))
            res = solve_lp(objective, rows, senses, rhs, maximize=True)
            if res.status != "optimal":
                raise RuntimeError("margin stage must be feasible and bounded")
            if not self._violated_detours(res.x[: self.nv]):
                return res.value, self._distances(res.x[: self.nv])


def _adversarial(
    inst: Instance,
    target: Union[Matching, FractionalMatching],
    cap: int,
    strict: bool,
) -> DistortionReport:
    n = inst.n
    if n > cap:
        raise InvalidInputError(
            f"n={n} exceeds the oracle cap {cap}; evaluate on a known metric instead"
        )
    witness = _infinite_witness(inst, target)
    if witness is not None:
        metric, m0 = witness
        mech_cost = (
            cost(target, metric)
            if isinstance(target, Matching)
            else fractional_cost(target, metric)
        )
        return DistortionReport(
            value=INFINITE,
            mechanism_cost=mech_cost,
            opt_cost=Fraction(0),
            witness_metric=metric,
            witness_opt=m0,
        )

    zero = Fraction(0)
    objective = [zero] * (n * n)
    if isinstance(target, Matching):
        for i, j in target.assign.items():
            objective[i * n + j] += 1
    else:
        for i in range(n):
            for j in range(n):
                objective[i * n + j] += target.p[i][j]

    solver = _BipartiteAdversary(inst, objective)
    best_value = None
    best_d = None
    best_mstar = None
    for m_star in itertools.permutations(range(n)):
        result = solver.maximize(m_star, prune_below=best_value)
        if result is None:
            continue
        value, d = result
        if best_value is None or value > best_value:
            best_value, best_d, best_mstar = value, d, m_star

    margin = None
    if strict:
        margin, best_d = solver.maximize_margin(best_mstar, best_value)
    metric = _complete_bipartite(n, best_d)
    mech_cost = (
        cost(target, metric)
        if isinstance(target, Matching)
        else fractional_cost(target, metric)
    )
    _, opt_cost = min_cost_matching(metric)
    assert mech_cost == best_value and opt_cost == 1
    return DistortionReport(
        value=best_value,
        mechanism_cost=mech_cost,
        opt_cost=opt_cost,
        witness_metric=metric,
        witness_opt=Matching.from_permutation(best_mstar),
        strict_margin=margin,
    )


def adversarial_distortion(
    inst: Instance, matching: Matching, cap: int = 6, strict: bool = False
) -> DistortionReport:
    """Exact sup of cost(M)/cost(OPT) over all metrics consistent with the
    instance; +inf when a consistent metric has free optimum but charges M.

    Consistency is the weak-inequality relation; `strict=True` additionally
    maximizes the smallest consecutive-preference gap of the (finite-case)
    witness after the value, reporting it as `strict_margin`.
    """
    if not matching.is_perfect(inst.n):
        raise InvalidInputError("adversarial distortion needs a perfect matching")
    return _adversarial(inst, matching, cap, strict)


def adversarial_distortion_fractional(
    inst: Instance, p: FractionalMatching, cap: int = 6, strict: bool = False
) -> DistortionReport:
    """Worst-case expected distortion of a doubly stochastic matching."""
    if p.n != inst.n or not p.is_doubly_stochastic():
        raise InvalidInputError("need a doubly stochastic fractional matching")
    return _adversarial(inst, p, cap, strict)


# ---------------------------------------------------------------------------
# expectation on a known metric
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpectedDistortion:
    value: Fraction
    halfwidth: Optional[float] = None  # 95% normal half-width, Monte Carlo only


OrderMechanism = Callable[[Instance, Sequence[int]], Matching]


def expected_distortion_known_metric(
    mechanism: OrderMechanism,
    inst: Instance,
    metric: Metric,
    mode: str = "exact",
    trials: int = 2000,
    seed: int = 0,
    deterministic: bool = False,
    cap: int = 8,
) -> ExpectedDistortion:
    """E[cost]/cost(OPT) for an order-driven mechanism on a known metric.

    `mechanism(inst, order)` must be deterministic given the order; exact
    mode averages over all n! orders, Monte-Carlo mode over seeded samples.
    """
    if not consistent(inst, metric):
        raise InvalidInputError("metric is not consistent with the instance")
    _, opt = min_cost_matching(metric)
    if opt == 0:
        raise InvalidInputError("optimal cost is 0; the distortion ratio is undefined")
    n = inst.n
    if deterministic:
        value = cost(mechanism(inst, tuple(range(n))), metric) / opt
        return ExpectedDistortion(value=value)
    if mode == "exact":
        if n > cap:
            raise InvalidInputError(f"exact expectation needs n <= {cap}")
        total = Fraction(0)
        for order in itertools.permutations(range(n)):
            total += cost(mechanism(inst, order), metric)
        return ExpectedDistortion(value=total / math.factorial(n) / opt)
    if mode != "mc":
        raise InvalidInputError(f"unknown mode {mode!r}")
    costs = []
    for t in range(trials):
        order = list(range(n))
        random.Random(f"edist:{seed}:{t}").shuffle(order)
        costs.append(cost(mechanism(inst, order), metric))
    mean = sum(costs, Fraction(0)) / trials
    var = sum((c - mean) ** 2 for c in costs) / trials
    halfwidth = 1.96 * math.sqrt(float(var) / trials) / float(opt)
    return ExpectedDistortion(value=mean / opt, halfwidth=halfwidth)


# ---------------------------------------------------------------------------
# consistent-metric sampling (oracle cross-validation, known-metric corpora)
# ---------------------------------------------------------------------------


def sample_consistent_metric(
    inst: Instance, rng: random.Random, grid: int = 8
) -> Metric:
    """A random metric consistent with the instance: each agent's item
    distances are drawn from the grid [1, 3] (so every 3-edge detour bound
    holds trivially) and sorted along its preference list; the remaining
    pairs are shortest-path completions.
    """
    n = inst.n
    d = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        vals = sorted(Fraction(grid + rng.randrange(2 * grid + 1), grid) for _ in range(n))
        for pos, j in enumerate(inst.prefs[i]):
            d[i][j] = vals[pos]
    return _complete_bipartite(n, d)
