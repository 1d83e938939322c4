import itertools
import random
from fractions import Fraction

from ordmatch.core import Instance, Matching, Metric, WeightedGraph


def random_profile(n, rng):
    prefs = []
    for _ in range(n):
        p = list(range(n))
        rng.shuffle(p)
        prefs.append(tuple(p))
    return Instance(n, tuple(prefs))


def random_doubly_stochastic(n, rng, max_terms=None):
    terms = rng.randint(1, max_terms or 2 * n)
    rows = [[Fraction(0)] * n for _ in range(n)]
    weights = [rng.randint(1, 8) for _ in range(terms)]
    total = sum(weights)
    for w in weights:
        perm = list(range(n))
        rng.shuffle(perm)
        for i, j in enumerate(perm):
            rows[i][j] += Fraction(w, total)
    from ordmatch.core import FractionalMatching

    return FractionalMatching(n, tuple(tuple(r) for r in rows))


def brute_force_min_cost(metric):
    """Factorial oracle: minimum cost with lexicographic tie-breaking."""
    n = metric.n
    best_cost = None
    best_perm = None
    for perm in itertools.permutations(range(n)):
        c = sum(metric.agent_item(i, perm[i]) for i in range(n))
        if best_cost is None or c < best_cost:
            best_cost, best_perm = c, perm
    return Matching.from_permutation(best_perm), best_cost


def random_l1_metric(n, rng, dim=2, denom=4):
    """An L1 metric on 2n random grid points (no instance attached)."""
    points = [
        tuple(rng.randrange(64) for _ in range(dim)) for _ in range(2 * n)
    ]
    rows = tuple(
        tuple(
            Fraction(sum(abs(x - y) for x, y in zip(p, q)), denom) for q in points
        )
        for p in points
    )
    return Metric(n, rows)


def random_connected_graph(n, rng, denom=4):
    """A random spanning tree over the 2n points plus a few extra edges."""
    m = 2 * n
    nodes = list(range(m))
    rng.shuffle(nodes)
    edges = []
    for idx in range(1, m):
        other = nodes[rng.randrange(idx)]
        edges.append((nodes[idx], other, Fraction(rng.randrange(0, 5 * denom), denom)))
    for _ in range(rng.randrange(0, m)):
        x, y = rng.sample(range(m), 2)
        edges.append((x, y, Fraction(rng.randrange(0, 5 * denom), denom)))
    return WeightedGraph(n, tuple(edges))
