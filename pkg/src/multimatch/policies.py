"""Matching policies: who an arriving item pairs with, if anyone.

Supported rules: first/last come first matched (word order), random
preference permutations, fixed priorities, max-weight scoring, and a wrapper
that favors classes without self-loops.  Within a chosen class the oldest
stored item is always taken, so every class-level rule also acts on queue
words.

Two evaluation modes exist side by side: :func:`decide` samples one decision
with an explicit RNG, while :func:`decision_distribution` enumerates every
possible decision with its exact probability (used by transition kernels and
drift computations).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

from .graphs import BlowupMap, Multigraph, Node
from .measures import Weight, _to_weight

Word = tuple[Node, ...]


class PolicyError(ValueError):
    """Policy specification not valid for the given graph."""


@dataclass(frozen=True)
class MatchDecision:
    """Either no match, or the 0-based queue position that gets matched."""

    position: Optional[int]
    matched_class: Optional[Node]

    @property
    def is_match(self) -> bool:
        return self.position is not None


NO_MATCH = MatchDecision(None, None)


# -- policy kinds ----------------------------------------------------------

@dataclass(frozen=True)
class Fcfm:
    pass


@dataclass(frozen=True)
class Lcfm:
    pass


@dataclass(frozen=True)
class RandomPolicy:
    """Preference permutation drawn per arrival; ``perms=None`` means uniform.

    Explicit distributions map each class to ``((permutation, prob), ...)``
    over orderings of that class's neighborhood.
    """

    perms: Optional[Mapping[Node, tuple[tuple[tuple[Node, ...], Weight], ...]]] = None


Group = tuple[Node, ...]


@dataclass(frozen=True)
class Priority:
    """Fixed preference order per class.

    Each order is a sequence of groups; classes inside one group are tied and
    broken uniformly at random among those present.  Plain (ungrouped)
    priorities use singleton groups throughout and are fully deterministic.
    """

    order: Mapping[Node, tuple[Group, ...]]

    @staticmethod
    def from_lists(order: Mapping[Node, Sequence[object]]) -> "Priority":
        canon: dict[Node, tuple[Group, ...]] = {}
        for v, seq in order.items():
            groups: list[Group] = []
            for entry in seq:
                if isinstance(entry, str):
                    groups.append((entry,))
                else:
                    groups.append(tuple(entry))
            canon[v] = tuple(groups)
        return Priority(canon)


@dataclass(frozen=True)
class MaxWeight:
    """Pick the class maximizing beta * queue_length + reward(arrival, class).

    Missing reward entries count as zero.  ``beta > 0`` with flat rewards is
    match-the-longest, ``beta < 0`` match-the-shortest, and ``beta = 0`` with
    strictly ordered rewards reduces to a priority rule.
    """

    beta: Weight
    rewards: Mapping[tuple[Node, Node], Weight] = field(default_factory=dict)

    def reward(self, v: Node, j: Node) -> Weight:
        return self.rewards.get((v, j), 0)


@dataclass(frozen=True)
class V2Favorable:
    """Restrict candidates to the favored classes whenever one is available.

    ``favored=None`` resolves to the graph's loop-free classes at decision
    time; transforms between related graphs freeze the set explicitly so the
    original preference survives.  The inner policy must be class-admissible.
    """

    inner: "Policy"
    favored: Optional[frozenset[Node]] = None

    def resolve_favored(self, g: Multigraph) -> frozenset[Node]:
        return self.favored if self.favored is not None else g.v2


Policy = Union[Fcfm, Lcfm, RandomPolicy, Priority, MaxWeight, V2Favorable]


def is_class_admissible(policy: Policy) -> bool:
    if isinstance(policy, (RandomPolicy, Priority, MaxWeight)):
        return True
    if isinstance(policy, V2Favorable):
        return is_class_admissible(policy.inner)
    return False


def match_the_longest(beta: Weight = 1) -> MaxWeight:
    if not beta > 0:
        raise PolicyError("match-the-longest needs beta > 0")
    return MaxWeight(beta=beta)


def match_the_shortest(beta: Weight = -1) -> MaxWeight:
    if not beta < 0:
        raise PolicyError("match-the-shortest needs beta < 0")
    return MaxWeight(beta=beta)


def validate_policy(policy: Policy, g: Multigraph) -> None:
    """Check a policy's data against a graph's adjacency."""
    if isinstance(policy, Priority):
        for v, groups in policy.order.items():
            g.check_node(v)
            flat = [j for grp in groups for j in grp]
            if sorted(flat) != sorted(g.adjacency[v]):
                raise PolicyError(
                    f"priority order for {v!r} is not a permutation of its "
                    f"neighborhood {sorted(g.adjacency[v])}"
                )
    elif isinstance(policy, RandomPolicy) and policy.perms is not None:
        for v, dist in policy.perms.items():
            g.check_node(v)
            total = sum((p for _, p in dist), Fraction(0))
            if not (abs(total - 1) <= 1e-12 if isinstance(total, float) else total == 1):
                raise PolicyError(f"permutation weights for {v!r} do not sum to 1")
            for perm, _ in dist:
                if sorted(perm) != sorted(g.adjacency[v]):
                    raise PolicyError(
                        f"{perm} is not a permutation of the neighborhood of {v!r}"
                    )
    elif isinstance(policy, MaxWeight):
        for (a, b) in policy.rewards:
            g.check_node(a)
            g.check_node(b)
            if b not in g.adjacency[a]:
                raise PolicyError(f"reward given for non-adjacent pair ({a},{b})")
    elif isinstance(policy, V2Favorable):
        if not is_class_admissible(policy.inner):
            raise PolicyError("the favored-class wrapper needs a class-admissible inner policy")
        validate_policy(policy.inner, g)


# -- candidate sets and class choice ----------------------------------------

def match_candidates(g: Multigraph, counts: Mapping[Node, int], v: Node) -> frozenset[Node]:
    """Compatible classes with at least one stored item."""
    g.check_node(v)
    return frozenset(j for j in g.adjacency[v] if counts.get(j, 0) > 0)


def _class_distribution(
    g: Multigraph,
    policy: Policy,
    counts: Mapping[Node, int],
    v: Node,
    candidates: frozenset[Node],
) -> dict[Node, Weight]:
    """Exact law of the chosen class, given a nonempty candidate set."""
    if isinstance(policy, RandomPolicy):
        if policy.perms is None or v not in policy.perms:
            # A uniform permutation's first hit is uniform on the candidates.
            k = len(candidates)
            return {j: Fraction(1, k) for j in candidates}
        out: dict[Node, Weight] = {}
        for perm, p in policy.perms[v]:
            first = next(j for j in perm if j in candidates)
            out[first] = out.get(first, Fraction(0)) + p
        return out
    if isinstance(policy, Priority):
        if v not in policy.order:
            raise PolicyError(f"priority policy lacks an order for class {v!r}")
        for group in policy.order[v]:
            present = sorted(set(group) & candidates)
            if present:
                k = len(present)
                return {j: Fraction(1, k) for j in present}
        raise PolicyError(f"priority order for {v!r} missed candidates {sorted(candidates)}")
    if isinstance(policy, MaxWeight):
        scores = {j: policy.beta * counts.get(j, 0) + policy.reward(v, j) for j in candidates}
        top = max(scores.values())
        ties = sorted(j for j, s in scores.items() if s == top)
        return {j: Fraction(1, len(ties)) for j in ties}
    if isinstance(policy, V2Favorable):
        favored = policy.resolve_favored(g)
        restricted = candidates & favored or candidates
        return _class_distribution(g, policy.inner, counts, v, frozenset(restricted))
    raise PolicyError(f"{type(policy).__name__} is not class-admissible")


def class_choice_distribution(
    g: Multigraph, policy: Policy, counts: Mapping[Node, int], v: Node
) -> dict[Node, Weight]:
    """Law of the matched class for a class-admissible policy; {} if no match."""
    candidates = match_candidates(g, counts, v)
    if not candidates:
        return {}
    return _class_distribution(g, policy, counts, v, candidates)


# -- word-level decisions ----------------------------------------------------

def _word_counts(w: Word) -> dict[Node, int]:
    counts: dict[Node, int] = {}
    for c in w:
        counts[c] = counts.get(c, 0) + 1
    return counts


def decision_distribution(
    g: Multigraph, policy: Policy, w: Word, v: Node
) -> dict[MatchDecision, Weight]:
    """Exact law of the decision from queue word ``w`` on arrival ``v``.

    Class-level choices land on the oldest stored item of the chosen class.
    """
    counts = _word_counts(w)
    candidates = match_candidates(g, counts, v)
    if not candidates:
        return {NO_MATCH: Fraction(1)}
    if isinstance(policy, Fcfm):
        pos = next(k for k, c in enumerate(w) if c in candidates)
        return {MatchDecision(pos, w[pos]): Fraction(1)}
    if isinstance(policy, Lcfm):
        pos = max(k for k, c in enumerate(w) if c in candidates)
        return {MatchDecision(pos, w[pos]): Fraction(1)}
    law = _class_distribution(g, policy, counts, v, candidates)
    return {MatchDecision(w.index(j), j): p for j, p in law.items()}


def decide(
    g: Multigraph, policy: Policy, w: Word, v: Node, rng: random.Random
) -> MatchDecision:
    """Sample one decision.  Deterministic rules ignore ``rng``.

    Random policies draw their preference permutation first; any tie-break
    draw comes after, so a seeded stream replays identically.
    """
    counts = _word_counts(w)
    candidates = match_candidates(g, counts, v)
    if not candidates:
        return NO_MATCH
    if isinstance(policy, Fcfm):
        pos = next(k for k, c in enumerate(w) if c in candidates)
        return MatchDecision(pos, w[pos])
    if isinstance(policy, Lcfm):
        pos = max(k for k, c in enumerate(w) if c in candidates)
        return MatchDecision(pos, w[pos])
    chosen = _sample_class(g, policy, counts, v, candidates, rng)
    return MatchDecision(w.index(chosen), chosen)


def _sample_class(
    g: Multigraph,
    policy: Policy,
    counts: Mapping[Node, int],
    v: Node,
    candidates: frozenset[Node],
    rng: random.Random,
) -> Node:
    if isinstance(policy, RandomPolicy):
        if policy.perms is None or v not in policy.perms:
            perm = sorted(g.adjacency[v])
            rng.shuffle(perm)
        else:
            dist = policy.perms[v]
            u = rng.random()
            acc = 0.0
            perm = dist[-1][0]
            for cand_perm, p in dist:
                acc += float(p)
                if u < acc:
                    perm = cand_perm
                    break
        return next(j for j in perm if j in candidates)
    if isinstance(policy, Priority):
        for group in policy.order[v]:
            present = sorted(set(group) & candidates)
            if len(present) == 1:
                return present[0]
            if present:
                return present[rng.randrange(len(present))]
        raise PolicyError(f"priority order for {v!r} missed candidates {sorted(candidates)}")
    if isinstance(policy, MaxWeight):
        scores = {j: policy.beta * counts.get(j, 0) + policy.reward(v, j) for j in candidates}
        top = max(scores.values())
        ties = sorted(j for j, s in scores.items() if s == top)
        if len(ties) == 1:
            return ties[0]
        return ties[rng.randrange(len(ties))]
    if isinstance(policy, V2Favorable):
        favored = policy.resolve_favored(g)
        restricted = candidates & favored or candidates
        return _sample_class(g, policy.inner, counts, v, frozenset(restricted), rng)
    raise PolicyError(f"cannot sample a class under {type(policy).__name__}")


# -- transforms between a multigraph and its blow-up / loop-free versions ----

def extend_policy(policy: Policy, bmap: BlowupMap) -> Policy:
    """Canonical counterpart of a policy on the blown (loop-free) graph.

    Copies inherit the preference data of their originals; where an original
    entry and its copy both end up available they are tied and broken evenly.
    On states without copies the extension reproduces the source policy's
    decisions exactly.
    """
    g = bmap.original
    if isinstance(policy, (Fcfm, Lcfm)):
        return policy
    if isinstance(policy, RandomPolicy):
        if policy.perms is not None:
            raise PolicyError(
                "only the uniform random policy has a canonical extension"
            )
        return policy
    if isinstance(policy, Priority):

        def lift(v: Node, groups: tuple[Group, ...], self_partner: Node) -> tuple[Group, ...]:
            # Entry j keeps its rank; looped classes j expand to the tied
            # pair {j, copy(j)}; the self entry becomes the pair partner.
            lifted: list[Group] = []
            for grp in groups:
                members: list[Node] = []
                for j in grp:
                    if j == v:
                        members.append(self_partner)
                    elif j in g.v1:
                        members.extend((j, bmap.copy_of[j]))
                    else:
                        members.append(j)
                lifted.append(tuple(members))
            return tuple(lifted)

        new_order: dict[Node, tuple[Group, ...]] = {}
        for v, groups in policy.order.items():
            new_order[v] = lift(v, groups, bmap.copy_of.get(v, v))
            if v in g.v1:
                new_order[bmap.copy_of[v]] = lift(v, groups, v)
        return Priority(new_order)
    if isinstance(policy, MaxWeight):
        new_rewards: dict[tuple[Node, Node], Weight] = {}
        blown = bmap.blown
        for a in blown.nodes:
            for b in blown.adjacency[a]:
                r = policy.reward(bmap.base(a), bmap.base(b))
                if r != 0:
                    new_rewards[(a, b)] = r
        return MaxWeight(beta=policy.beta, rewards=new_rewards)
    if isinstance(policy, V2Favorable):
        favored = policy.resolve_favored(g)
        return V2Favorable(extend_policy(policy.inner, bmap), favored=favored)
    raise PolicyError(f"cannot extend {type(policy).__name__}")


def reduce_policy(policy: Policy, g: Multigraph) -> Policy:
    """Same policy reread on the loop-free subgraph; self-preferences drop out."""
    if isinstance(policy, (Fcfm, Lcfm, RandomPolicy)):
        return policy
    if isinstance(policy, Priority):
        new_order: dict[Node, tuple[Group, ...]] = {}
        for v, groups in policy.order.items():
            kept = tuple(
                tuple(j for j in grp if j != v) for grp in groups
            )
            new_order[v] = tuple(grp for grp in kept if grp)
        return Priority(new_order)
    if isinstance(policy, MaxWeight):
        return policy  # loop rewards simply become unreachable
    if isinstance(policy, V2Favorable):
        favored = policy.resolve_favored(g)
        return V2Favorable(reduce_policy(policy.inner, g), favored=favored)
    raise PolicyError(f"cannot reduce {type(policy).__name__}")


# -- serialization ------------------------------------------------------------

def policy_to_json_dict(policy: Policy) -> dict:
    if isinstance(policy, Fcfm):
        return {"kind": "fcfm"}
    if isinstance(policy, Lcfm):
        return {"kind": "lcfm"}
    if isinstance(policy, RandomPolicy):
        out: dict = {"kind": "random"}
        if policy.perms is not None:
            out["perms"] = {
                v: [[list(perm), str(p)] for perm, p in dist]
                for v, dist in sorted(policy.perms.items())
            }
        return out
    if isinstance(policy, Priority):
        return {
            "kind": "priority",
            "order": {
                v: [list(grp) if len(grp) != 1 else grp[0] for grp in groups]
                for v, groups in sorted(policy.order.items())
            },
        }
    if isinstance(policy, MaxWeight):
        return {
            "kind": "maxweight",
            "beta": str(policy.beta),
            "rewards": {f"{a},{b}": str(r) for (a, b), r in sorted(policy.rewards.items())},
        }
    if isinstance(policy, V2Favorable):
        out = {"kind": "v2favorable", "inner": policy_to_json_dict(policy.inner)}
        if policy.favored is not None:
            out["favored"] = sorted(policy.favored)
        return out
    raise PolicyError(f"cannot serialize {type(policy).__name__}")


def policy_from_json_dict(data: dict) -> Policy:
    kind = data.get("kind")
    if kind == "fcfm":
        return Fcfm()
    if kind == "lcfm":
        return Lcfm()
    if kind == "random":
        perms = data.get("perms")
        if perms is None:
            return RandomPolicy()
        parsed = {
            v: tuple((tuple(perm), _to_weight(p)) for perm, p in dist)
            for v, dist in perms.items()
        }
        return RandomPolicy(parsed)
    if kind == "priority":
        return Priority.from_lists(data["order"])
    if kind == "maxweight":
        rewards = {}
        for key, r in data.get("rewards", {}).items():
            a, b = key.split(",")
            rewards[(a, b)] = _to_weight(r)
        return MaxWeight(beta=_to_weight(data.get("beta", 1)), rewards=rewards)
    if kind == "ml":
        return match_the_longest()
    if kind == "ms":
        return match_the_shortest()
    if kind == "v2favorable":
        favored = data.get("favored")
        return V2Favorable(
            policy_from_json_dict(data["inner"]),
            favored=None if favored is None else frozenset(favored),
        )
    raise PolicyError(f"unknown policy kind {kind!r}")


def policy_dumps(policy: Policy) -> str:
    return json.dumps(policy_to_json_dict(policy), sort_keys=True, indent=2) + "\n"


def policy_loads(text: str) -> Policy:
    return policy_from_json_dict(json.loads(text))
