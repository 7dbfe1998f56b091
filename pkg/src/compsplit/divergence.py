"""Sparse frequency distributions and Chernoff-coefficient divergences.

The atom divergence of two instance sets is 1 - C_0.5 over their atom
distributions; the compound divergence is 1 - C_0.1 over their compound
distributions, where C_a(P||Q) = sum_k p_k^a q_k^(1-a). The asymmetric 0.1
exponent weights presence of a compound in the first (train) argument more
than an exact probability match.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .errors import IncrementalError, InvalidParameter

ATOM_ALPHA = 0.5
COMPOUND_ALPHA = 0.1


@dataclass(frozen=True)
class FreqDist:
    """Integer-count-backed sparse distribution; probabilities are counts/total."""

    counts: dict = field(default_factory=dict)
    total: int = 0

    @classmethod
    def from_counter(cls, counter) -> "FreqDist":
        counts = {k: int(v) for k, v in counter.items() if v}
        return cls(counts=counts, total=sum(counts.values()))

    def prob(self, key) -> float:
        if self.total == 0:
            return 0.0
        return self.counts.get(key, 0) / self.total

    def adding(self, counter) -> "FreqDist":
        merged = dict(self.counts)
        for k, v in counter.items():
            merged[k] = merged.get(k, 0) + v
        return FreqDist(counts=merged, total=self.total + sum(counter.values()))

    def removing(self, counter) -> "FreqDist":
        merged = dict(self.counts)
        for k, v in counter.items():
            have = merged.get(k, 0)
            if have < v:
                raise IncrementalError(f"cannot remove {v} of {k!r}, only {have} present")
            if have == v:
                del merged[k]
            else:
                merged[k] = have - v
        return FreqDist(counts=merged, total=self.total - sum(counter.values()))


def freq_atoms(instances) -> FreqDist:
    counts: Counter = Counter()
    for inst in instances:
        counts.update(inst.atoms)
    return FreqDist.from_counter(counts)


def freq_compounds(instances) -> FreqDist:
    counts: Counter = Counter()
    for inst in instances:
        counts.update(inst.compounds)
    return FreqDist.from_counter(counts)


def with_instance(dist: FreqDist, instance, direction: str, kind: str = "compounds") -> FreqDist:
    """Return dist with one instance's atom or compound multiset added/removed."""
    counter = instance.compounds if kind == "compounds" else instance.atoms
    if direction == "add":
        return dist.adding(counter)
    if direction == "remove":
        return dist.removing(counter)
    raise InvalidParameter(f"direction must be add or remove, got {direction!r}")


def chernoff(p: FreqDist, q: FreqDist, alpha: float) -> float:
    """C_alpha(P||Q) = sum_k p_k^alpha q_k^(1-alpha); 0 if either side is empty."""
    if not 0.0 < alpha < 1.0:
        raise InvalidParameter(f"alpha must lie in (0,1), got {alpha}")
    if p.total == 0 or q.total == 0:
        return 0.0
    # Terms vanish off the support intersection; accumulate in sorted key
    # order so the result does not depend on argument dict ordering.
    small, large = (p, q) if len(p.counts) <= len(q.counts) else (q, p)
    shared = sorted(k for k in small.counts if k in large.counts)
    acc = 0.0
    for key in shared:
        pk = p.counts[key] / p.total
        qk = q.counts[key] / q.total
        acc += math.exp(alpha * math.log(pk) + (1.0 - alpha) * math.log(qk))
    return min(acc, 1.0)


def atom_divergence(u_instances, w_instances) -> float:
    return 1.0 - chernoff(freq_atoms(u_instances), freq_atoms(w_instances), ATOM_ALPHA)


def compound_divergence(u_instances, w_instances) -> float:
    return 1.0 - chernoff(freq_compounds(u_instances), freq_compounds(w_instances), COMPOUND_ALPHA)


@dataclass(frozen=True)
class DivergencePair:
    atom_divergence: float
    compound_divergence: float

    def as_dict(self) -> dict:
        return {
            "atom_divergence": round(self.atom_divergence, 6),
            "compound_divergence": round(self.compound_divergence, 6),
        }


def divergences_between(u_instances, w_instances) -> DivergencePair:
    return DivergencePair(
        atom_divergence=atom_divergence(u_instances, w_instances),
        compound_divergence=compound_divergence(u_instances, w_instances),
    )
