"""Planted-structure synthetic corpora for desk-scale experiments.

Compounds (verb i, noun j) are partitioned into two families by the parity
of i + j. Every instance is a verb chain over a single noun, stepping the
verb index by 2 so the whole chain stays inside one family. Both families
use every verb and every noun, so atoms stay balanced across families while
the family compound sets are disjoint: an ideal corpus for divergence-based
splitting.
"""

from __future__ import annotations

import random
from collections import Counter

from .corpus import Instance, Token, Utterance, Vocab, build_instance
from .errors import InvalidParameter


def make_synth_vocab(n_verbs: int, n_nouns: int) -> Vocab:
    return Vocab(
        verb_classes={f"verb{i}": i for i in range(n_verbs)},
        noun_classes={f"noun{j}": j for j in range(n_nouns)},
        verb_categories={i: i // 2 for i in range(n_verbs)},
        noun_categories={j: j // 2 for j in range(n_nouns)},
    )


def _chain_instance(idx: int, i0: int, j: int, n_verbs: int, context_len: int) -> Instance:
    utts = []
    for k in range(context_len + 1):
        i = (i0 + 2 * k) % n_verbs
        verb = Token(f"verb{i}", i)
        noun = Token(f"noun{j}", j)
        utts.append(
            Utterance(
                raw_text=f"verb{i} noun{j}",
                verb=verb,
                primary_noun=noun,
                all_nouns=(noun,),
                clip_id=f"c{idx:05d}_{k}",
            )
        )
    return build_instance("synth", utts, compounds_scope="all")


def generate_planted_corpus(
    n_instances: int,
    n_verbs: int = 8,
    n_nouns: int = 6,
    seed: int = 0,
    context_len: int = 3,
) -> tuple[list, Vocab]:
    """Generate n_instances chain instances, balanced across both families."""
    if n_verbs < 4 or n_verbs % 2 != 0:
        raise InvalidParameter("n_verbs must be even and >= 4")
    if n_nouns < 2:
        raise InvalidParameter("n_nouns must be >= 2")
    if n_instances < 2:
        raise InvalidParameter("n_instances must be >= 2")
    # Enumerate chain starts round-robin by family so atom usage stays even,
    # then shuffle the order with the seed.
    per_family = {0: [], 1: []}
    for j in range(n_nouns):
        for i0 in range(n_verbs):
            per_family[(i0 + j) % 2].append(((i0 + j) % 2, i0, j))
    # Alternate families so any prefix of the plan stays balanced.
    starts = [s for pair in zip(per_family[0], per_family[1]) for s in pair]
    plan = [starts[i % len(starts)] for i in range(n_instances)]
    rng = random.Random(seed)
    rng.shuffle(plan)
    instances = [
        _chain_instance(idx, i0, j, n_verbs, context_len)
        for idx, (_, i0, j) in enumerate(plan)
    ]
    return instances, make_synth_vocab(n_verbs, n_nouns)


_PAIRING_A = ((0, 0), (1, 1), (2, 0), (3, 1))
_PAIRING_B = ((0, 1), (1, 0), (2, 1), (3, 0))


def _pairing_instance(idx: int, pairing) -> Instance:
    utts = []
    for k, (v, n) in enumerate(pairing):
        verb = Token(f"verb{v}", v)
        noun = Token(f"noun{n}", n)
        utts.append(
            Utterance(
                raw_text=f"verb{v} noun{n}",
                verb=verb,
                primary_noun=noun,
                all_nouns=(noun,),
                clip_id=f"c{idx:03d}_{k}",
            )
        )
    return build_instance("small", utts, compounds_scope="all")


def generate_two_family_corpus(seed: int, min_n: int = 8, max_n: int = 12) -> tuple[list, Vocab]:
    """Tiny corpora for exhaustive-enumeration experiments.

    Every instance pairs verbs 0..3 with nouns of matching or opposite
    parity, so all instances share one atom multiset (any bipartition has
    zero atom divergence) while the two pairing families have disjoint
    compound sets (a family-clean bipartition has compound divergence 1).
    """
    rng = random.Random(seed)
    n = rng.randint(min_n, max_n)
    plan = [_PAIRING_A if i % 2 == 0 else _PAIRING_B for i in range(n)]
    rng.shuffle(plan)
    instances = [_pairing_instance(i, p) for i, p in enumerate(plan)]
    return instances, make_synth_vocab(4, 2)


def family_of(instance: Instance) -> int:
    """Which planted compound family an instance belongs to."""
    v, n = instance.target_compound
    return (v + n) % 2


def family_sizes(instances) -> Counter:
    return Counter(family_of(inst) for inst in instances)
