"""Exact stationary analysis of the first-come-first-matched chain.

Under first-come-first-matched and a measure inside the stability region,
the queue-word chain has a product-form stationary law: the probability of a
word is a normalizing constant times the product, over its prefixes, of the
arriving class's mass divided by the prefix's neighborhood mass.  The
normalizing constant alpha sums one contribution per ordered independent
sequence of the loop-free subgraph.

Everything here is evaluated exactly when the measure is rational, which is
what lets balance residuals be checked against a 1e-12 target rather than a
loose statistical tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .chain import enumerate_states, check_admissible, kernel_row, predecessors
from .graphs import Multigraph, Node
from .measures import ProbMeasure, Weight, ncond_check
from .policies import Fcfm, Word


class StationaryError(ValueError):
    """Product form requested outside its domain of validity."""


def _ordered_independent_sequences(check: Multigraph):
    """Every ordering of every independent set of a loop-free graph."""
    nodes = sorted(check.nodes)
    adj = check.adjacency

    def extend(seq: list[Node], chosen: set[Node]):
        for c in nodes:
            if c in chosen or any(c in adj[m] for m in chosen):
                continue
            seq.append(c)
            chosen.add(c)
            yield tuple(seq)
            yield from extend(seq, chosen)
            chosen.remove(c)
            seq.pop()

    yield from extend([], set())


def alpha(g: Multigraph, mu: ProbMeasure) -> Weight:
    """Normalizing constant of the product-form stationary distribution.

    Raises unless the graph is stabilizable (not a bipartite graph) and the
    measure satisfies the stability condition, which is exactly what keeps
    every denominator strictly positive.
    """
    mu.check_support(g)
    bip, _ = g.is_bipartite()
    if bip:
        raise StationaryError("a bipartite graph has an empty stability region")
    report = ncond_check(g, mu)
    if not report.satisfied:
        raise StationaryError(
            f"measure violates the stability condition (margin {report.margin}, "
            f"witness {sorted(report.witness) if report.witness else None})"
        )
    check = g.maximal_subgraph()
    total: Weight = Fraction(1)
    for seq in _ordered_independent_sequences(check):
        term: Weight = Fraction(1)
        prefix: set[Node] = set()
        for e in seq:
            prefix.add(e)
            denom = mu.mass(g.neighborhood(prefix)) - mu.mass(prefix & g.v2)
            term *= mu[e] / denom
        total += term
    return 1 / total


@dataclass(frozen=True)
class ProductFormDistribution:
    """Evaluator for the first-come-first-matched stationary law."""

    graph: Multigraph
    measure: ProbMeasure
    alpha: Weight

    def pi(self, w: Word) -> Weight:
        """Stationary probability of an admissible queue word."""
        check_admissible(self.graph, w)
        value = self.alpha
        prefix: set[Node] = set()
        for letter in w:
            prefix.add(letter)
            value *= self.measure[letter] / self.measure.mass(
                self.graph.neighborhood(prefix)
            )
        return value

    def truncated_mass(self, max_len: int) -> Weight:
        """Total stationary mass on words of length at most ``max_len``."""
        return sum(
            (self.pi(w) for w in enumerate_states(self.graph, max_len)),
            Fraction(0),
        )


def product_form(g: Multigraph, mu: ProbMeasure) -> ProductFormDistribution:
    return ProductFormDistribution(graph=g, measure=mu, alpha=alpha(g, mu))


def pi_w(dist: ProductFormDistribution, w: Word) -> Weight:
    return dist.pi(w)


def finite_stationary(g: Multigraph, mu: ProbMeasure) -> dict[Word, Weight]:
    """Full stationary table for an all-self-loop model.

    With every class self-looped the state space is finite (each class stored
    at most once), so the product form can be tabulated completely.  The
    table sums to one; a discrepancy flags a bug, not sampling error.
    """
    if g.v2:
        raise StationaryError(
            f"finite table needs every node self-looped; {sorted(g.v2)} are not"
        )
    dist = product_form(g, mu)
    table = {w: dist.pi(w) for w in enumerate_states(g, len(g.nodes))}
    total = sum(table.values())
    if isinstance(total, Fraction):
        assert total == 1, f"finite table sums to {total}"
    else:
        assert abs(total - 1.0) <= 1e-9, f"finite table sums to {total!r}"
    return table


def linear_solve_stationary(
    states: Sequence[Word],
    rows: Mapping[Word, Mapping[Word, Weight]],
) -> dict[Word, float]:
    """Stationary law of a finite chain by dense linear algebra.

    ``rows`` must be closed over ``states``.  Solves pi P = pi with the
    normalization replacing one equation; irreducibility makes the solution
    unique.  This is the oracle used to cross-check the product form.
    """
    index = {w: k for k, w in enumerate(states)}
    n = len(states)
    P = np.zeros((n, n))
    for w, row in rows.items():
        for target, p in row.items():
            if target not in index:
                raise StationaryError(
                    f"state set not closed: {w!r} reaches {target!r}"
                )
            P[index[w], index[target]] = float(p)
    if not np.allclose(P.sum(axis=1), 1.0, atol=1e-9):
        raise StationaryError("kernel rows do not sum to 1")
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise StationaryError("singular balance system") from exc
    if pi.min() < -1e-9:
        raise StationaryError("negative stationary mass; chain not irreducible?")
    return {w: float(pi[index[w]]) for w in states}


def solve_finite_chain(
    g: Multigraph, mu: ProbMeasure, policy, max_len: Optional[int] = None
) -> dict[Word, float]:
    """Convenience wrapper: enumerate the (finite) state space and solve it."""
    if max_len is None:
        if g.v2:
            raise StationaryError("state space is infinite; give max_len")
        max_len = len(g.nodes)
    states = enumerate_states(g, max_len)
    rows = {w: kernel_row(g, mu, policy, w) for w in states}
    return linear_solve_stationary(states, rows)


def balance_residual(
    g: Multigraph,
    mu: ProbMeasure,
    max_len: int,
    report: Optional[Callable[[Word, float], None]] = None,
) -> tuple[float, Optional[Word]]:
    """Worst global-balance violation of the product form, up to a length.

    For each admissible word the full-balance equation is a finite sum over
    the word's one-step predecessors (their lengths differ by exactly one),
    so the check is exact rather than truncated.  Returns the maximum
    absolute residual and the word attaining it.
    """
    dist = product_form(g, mu)
    policy = Fcfm()
    worst = 0.0
    worst_word: Optional[Word] = None
    for w in enumerate_states(g, max_len):
        inflow = sum(
            (dist.pi(u) * p for u, p in predecessors(g, mu, policy, w).items()),
            Fraction(0),
        )
        residual = abs(float(dist.pi(w) - inflow))
        if report is not None:
            report(w, residual)
        if residual > worst or worst_word is None:
            worst = residual
            worst_word = w
    return worst, worst_word


def truncated_mass(dist: ProductFormDistribution, max_len: int) -> Weight:
    return dist.truncated_mass(max_len)
