"""Queue-word state space, one-step dynamics, exact kernels, and simulation.

The Markov state is the word of unmatched item classes in arrival order.  A
word is admissible when no two adjacent classes are both present and each
self-looped class appears at most once.  Transition kernels are computed
exactly (policy randomness enumerated with its probabilities); Monte-Carlo
runs use a compact per-class FIFO engine so long trajectories stay cheap.
"""

from __future__ import annotations

import random
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from itertools import accumulate
from typing import Mapping, Optional

import numpy as np

from .graphs import Multigraph, Node
from .measures import ProbMeasure, Weight
from .policies import (
    Fcfm,
    Lcfm,
    MatchDecision,
    Policy,
    Word,
    decision_distribution,
    decide,
    is_class_admissible,
    match_candidates,
    _sample_class,
)


class ChainError(ValueError):
    """Inadmissible state or ill-posed chain computation."""


def word_counts(w: Word) -> dict[Node, int]:
    counts: dict[Node, int] = {}
    for c in w:
        counts[c] = counts.get(c, 0) + 1
    return counts


def is_admissible_word(g: Multigraph, w: Word) -> bool:
    counts = word_counts(w)
    for c, n in counts.items():
        if c not in g.adjacency:
            return False
        if c in g.v1 and n > 1:
            return False
    present = list(counts)
    for idx, a in enumerate(present):
        for b in present[idx + 1 :]:
            if b in g.adjacency[a]:
                return False
    return True


def check_admissible(g: Multigraph, w: Word) -> None:
    if not is_admissible_word(g, w):
        raise ChainError(f"word {w!r} is not admissible")


def apply_decision(w: Word, v: Node, decision: MatchDecision) -> Word:
    if decision.is_match:
        k = decision.position
        return w[:k] + w[k + 1 :]
    return w + (v,)


def step(
    g: Multigraph, policy: Policy, w: Word, v: Node, rng: Optional[random.Random] = None
) -> Word:
    """One arrival applied to a queue word.  ``rng`` is only touched on draws."""
    decision = decide(g, policy, w, v, rng if rng is not None else random.Random(0))
    return apply_decision(w, v, decision)


def class_step(
    g: Multigraph,
    policy: Policy,
    counts: Mapping[Node, int],
    v: Node,
    rng: Optional[random.Random] = None,
) -> dict[Node, int]:
    """Arrival applied to a class-count vector under a class-admissible policy."""
    if not is_class_admissible(policy):
        raise ChainError("class_step needs a class-admissible policy")
    out = {i: counts.get(i, 0) for i in g.nodes}
    candidates = match_candidates(g, out, v)
    if not candidates:
        out[v] += 1
        return out
    chosen = _sample_class(
        g, policy, out, v, candidates, rng if rng is not None else random.Random(0)
    )
    out[chosen] -= 1
    return out


def enumerate_states(g: Multigraph, max_len: int) -> list[Word]:
    """All admissible words up to a length, sorted by (length, letters)."""
    if max_len < 0:
        raise ChainError("max_len must be >= 0")
    out: list[Word] = [()]
    frontier: list[Word] = [()]
    for _ in range(max_len):
        nxt: list[Word] = []
        for w in frontier:
            present = set(w)
            counts = word_counts(w)
            for c in g.nodes:
                if c in g.v1 and counts.get(c, 0) >= 1:
                    continue
                if any(c != a and c in g.adjacency[a] for a in present):
                    continue
                nxt.append(w + (c,))
        out.extend(nxt)
        frontier = nxt
        if not frontier:
            break
    out.sort(key=lambda w: (len(w), w))
    return out


def kernel_row(
    g: Multigraph, mu: ProbMeasure, policy: Policy, w: Word
) -> dict[Word, Weight]:
    """Exact one-step transition law out of ``w``.

    Arrival classes and any policy randomness (permutations, tie sets) are
    enumerated with their exact probabilities, so with rational inputs the
    row is rational and sums to one exactly.
    """
    check_admissible(g, w)
    mu.check_support(g)
    row: dict[Word, Weight] = {}
    for v in g.nodes:
        pv = mu[v]
        for decision, p in decision_distribution(g, policy, w, v).items():
            target = apply_decision(w, v, decision)
            mass = pv * p
            row[target] = row.get(target, Fraction(0)) + mass
    return row


def predecessors(
    g: Multigraph, mu: ProbMeasure, policy: Policy, w: Word
) -> dict[Word, Weight]:
    """Every state reaching ``w`` in one step, with its transition probability.

    One arrival changes the length by exactly one, so the candidates are the
    word with its last letter dropped (the no-match case, reversed) and every
    admissible single-letter insertion (the match case, reversed).  The
    returned probabilities are the kernel entries ``P(u, w)``.
    """
    check_admissible(g, w)
    candidates: set[Word] = set()
    if w:
        candidates.add(w[:-1])
    for pos in range(len(w) + 1):
        for c in g.nodes:
            u = w[:pos] + (c,) + w[pos:]
            if is_admissible_word(g, u):
                candidates.add(u)
    out: dict[Word, Weight] = {}
    for u in sorted(candidates, key=lambda x: (len(x), x)):
        p = kernel_row(g, mu, policy, u).get(w, Fraction(0))
        if p > 0:
            out[u] = p
    return out


# -- simulation ---------------------------------------------------------------

def draw_arrivals(mu: ProbMeasure, steps: int, rng: random.Random) -> list[Node]:
    """I.i.d. class sequence; one uniform draw per arrival."""
    nodes = sorted(mu.weights)
    cum = list(accumulate(float(mu[c]) for c in nodes))
    cum[-1] = 1.0
    return [nodes[bisect_right(cum, rng.random())] for _ in range(steps)]


class BufferEngine:
    """Mutable queue state with O(degree) matching steps.

    Items live in an insertion-ordered dict (arrival counter -> class) plus
    one FIFO of arrival counters per class, which is enough to resolve any
    supported policy without materializing the word.
    """

    def __init__(self, g: Multigraph, policy: Policy):
        self.g = g
        self.policy = policy
        self._items: dict[int, Node] = {}
        self._fifo: dict[Node, deque[int]] = {c: deque() for c in g.nodes}
        self.counts: dict[Node, int] = {c: 0 for c in g.nodes}
        self.length = 0
        self._clock = 0

    def word(self) -> Word:
        return tuple(self._items.values())

    def offer(self, v: Node, rng: random.Random) -> Optional[Node]:
        """Process one arrival; returns the matched class or None."""
        g, policy = self.g, self.policy
        candidates = [j for j in g.adjacency[v] if self.counts[j] > 0]
        self._clock += 1
        if not candidates:
            self._items[self._clock] = v
            self._fifo[v].append(self._clock)
            self.counts[v] += 1
            self.length += 1
            return None
        if isinstance(policy, Fcfm):
            chosen = min(candidates, key=lambda c: self._fifo[c][0])
            key = self._fifo[chosen].popleft()
        elif isinstance(policy, Lcfm):
            chosen = max(candidates, key=lambda c: self._fifo[c][-1])
            key = self._fifo[chosen].pop()
        else:
            chosen = _sample_class(g, policy, self.counts, v, frozenset(candidates), rng)
            key = self._fifo[chosen].popleft()
        del self._items[key]
        self.counts[chosen] -= 1
        self.length -= 1
        return chosen


@dataclass(frozen=True)
class SimulationResult:
    """Post-burn-in visit statistics of one simulated trajectory.

    ``counts`` holds visit counts of words no longer than ``word_cap``;
    longer states are lumped into ``overflow_steps`` so that
    ``sum(counts.values()) + overflow_steps == recorded_steps``.
    """

    total_steps: int
    burn_in: int
    recorded_steps: int
    seed: int
    word_cap: int
    counts: dict[Word, int]
    overflow_steps: int
    max_queue_len: int
    mean_queue_len: float
    class_occupancy: dict[Node, float]
    final_queue_len: int
    tail_slope: float

    def frequency(self, w: Word) -> float:
        return self.counts.get(w, 0) / self.recorded_steps


def simulate(
    g: Multigraph,
    mu: ProbMeasure,
    policy: Policy,
    steps: int,
    burn_in: Optional[int] = None,
    seed: int = 0,
    word_cap: int = 16,
) -> SimulationResult:
    """Run the matching chain from the empty buffer and tally visited words.

    The default burn-in is 1% of the step count.  Given a seed the result is
    bit-identical across runs; the per-step draw order is fixed (arrival
    first, then any policy draws).
    """
    if steps <= 0:
        raise ChainError("steps must be positive")
    mu.check_support(g)
    if burn_in is None:
        burn_in = steps // 100
    rng = random.Random(seed)
    nodes = sorted(mu.weights)
    cum = list(accumulate(float(mu[c]) for c in nodes))
    cum[-1] = 1.0

    engine = BufferEngine(g, policy)
    counts: dict[Word, int] = {}
    overflow = 0
    max_len = 0
    len_sum = 0
    occ_sum = {c: 0 for c in g.nodes}
    recorded = 0
    # least-squares accumulators for the queue-length slope over the last half
    half = steps // 2
    sx = sy = sxy = sxx = 0.0
    n_fit = 0
    for n in range(steps):
        v = nodes[bisect_right(cum, rng.random())]
        engine.offer(v, rng)
        ln = engine.length
        if n >= half:
            x = float(n - half)
            sx += x
            sy += ln
            sxy += x * ln
            sxx += x * x
            n_fit += 1
        if n < burn_in:
            continue
        recorded += 1
        len_sum += ln
        if ln > max_len:
            max_len = ln
        for c, k in engine.counts.items():
            if k:
                occ_sum[c] += k
        if ln <= word_cap:
            w = engine.word()
            counts[w] = counts.get(w, 0) + 1
        else:
            overflow += 1
    denom = n_fit * sxx - sx * sx
    slope = (n_fit * sxy - sx * sy) / denom if denom > 0 else 0.0
    return SimulationResult(
        total_steps=steps,
        burn_in=burn_in,
        recorded_steps=recorded,
        seed=seed,
        word_cap=word_cap,
        counts=counts,
        overflow_steps=overflow,
        max_queue_len=max_len,
        mean_queue_len=len_sum / max(recorded, 1),
        class_occupancy={c: occ_sum[c] / max(recorded, 1) for c in g.nodes},
        final_queue_len=engine.length,
        tail_slope=slope,
    )


def queue_length_trajectory(
    g: Multigraph, mu: ProbMeasure, policy: Policy, steps: int, seed: int = 0
) -> np.ndarray:
    """Total queue length after each arrival; the cheap path for slope checks."""
    mu.check_support(g)
    rng = random.Random(seed)
    nodes = sorted(mu.weights)
    cum = list(accumulate(float(mu[c]) for c in nodes))
    cum[-1] = 1.0
    engine = BufferEngine(g, policy)
    lengths = np.empty(steps, dtype=np.int64)
    for n in range(steps):
        v = nodes[bisect_right(cum, rng.random())]
        engine.offer(v, rng)
        lengths[n] = engine.length
    return lengths


def stability_slope(
    g: Multigraph, mu: ProbMeasure, policy: Policy, steps: int, seed: int = 0
) -> float:
    """Least-squares growth rate of the queue length over the trajectory tail.

    A slope bounded away from zero signals transience; a slope near zero is
    consistent with stability.  This is a heuristic screen, not a recurrence
    test.  The fit uses the last half of the run to discard the transient.
    """
    lengths = queue_length_trajectory(g, mu, policy, steps, seed)
    tail = lengths[steps // 2 :]
    x = np.arange(tail.size, dtype=float)
    slope, _ = np.polyfit(x, tail.astype(float), 1)
    return float(slope)
