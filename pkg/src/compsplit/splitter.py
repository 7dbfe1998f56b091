"""Greedy maximum-compound-divergence split generation.

Instances are assigned one at a time to train or held-out: a seeded coin
picks the side, candidates are scored by the atom/compound divergences that
would result from adding them, candidates keeping the atom divergence under
threshold are preferred, and the one maximizing compound divergence wins.
The held-out set is then shuffled into validation and test halves.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, asdict

from .divergence import (
    ATOM_ALPHA,
    COMPOUND_ALPHA,
    DivergencePair,
    divergences_between,
)
from .errors import CoverageError, EmptyCorpus, InvalidParameter


@dataclass
class SplitConfig:
    atom_threshold: float = 0.02
    compound_threshold: float = 0.6
    train_fraction: float = 0.5
    seed: int = 0
    mode: str = "mcd"
    val_fraction_of_heldout: float = 0.5
    strict_target_disjoint: bool = False
    candidate_sample: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.atom_threshold <= 1.0 or not 0.0 <= self.compound_threshold <= 1.0:
            raise InvalidParameter("thresholds must lie in [0,1]")
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidParameter("train_fraction must lie in (0,1)")
        if not 0.0 < self.val_fraction_of_heldout < 1.0:
            raise InvalidParameter("val_fraction_of_heldout must lie in (0,1)")
        if self.mode not in ("mcd", "random"):
            raise InvalidParameter(f"unknown mode: {self.mode}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SplitAssignment:
    train: list
    val: list
    test: list
    divergences: DivergencePair
    trace: list = field(default_factory=list)
    constraints_met: bool = False
    dropped_ids: list = field(default_factory=list)
    mode: str = "mcd"

    @property
    def heldout(self) -> list:
        return self.val + self.test


class _PairState:
    """One side-pair Chernoff accumulator over unnormalized counts.

    Keeps raw = sum_k u_k^alpha * w_k^(1-alpha) updated per add, so scoring a
    candidate costs O(candidate support) instead of O(distribution support).
    """

    def __init__(self, alpha: float):
        self.alpha = alpha
        self.u: dict = {}
        self.w: dict = {}
        self.u_total = 0
        self.w_total = 0
        self.raw = 0.0

    def _raw_delta(self, counter, side: str) -> float:
        a = self.alpha
        mine = self.u if side == "u" else self.w
        other = self.w if side == "u" else self.u
        exp_mine = a if side == "u" else 1.0 - a
        exp_other = 1.0 - a if side == "u" else a
        delta = 0.0
        for key, d in counter.items():
            oc = other.get(key, 0)
            if oc == 0:
                continue
            old = mine.get(key, 0)
            delta += (pow(old + d, exp_mine) - pow(old, exp_mine)) * pow(oc, exp_other)
        return delta

    def _coeff(self, raw: float, u_total: int, w_total: int) -> float:
        if u_total == 0 or w_total == 0:
            return 0.0
        c = raw / (pow(u_total, self.alpha) * pow(w_total, 1.0 - self.alpha))
        return min(max(c, 0.0), 1.0)

    def divergence(self) -> float:
        return 1.0 - self._coeff(self.raw, self.u_total, self.w_total)

    def divergence_if_added(self, counter, side: str) -> float:
        raw = self.raw + self._raw_delta(counter, side)
        size = sum(counter.values())
        u_total = self.u_total + (size if side == "u" else 0)
        w_total = self.w_total + (size if side == "w" else 0)
        return 1.0 - self._coeff(raw, u_total, w_total)

    def add(self, counter, side: str) -> None:
        self.raw += self._raw_delta(counter, side)
        mine = self.u if side == "u" else self.w
        for key, d in counter.items():
            mine[key] = mine.get(key, 0) + d
        size = sum(counter.values())
        if side == "u":
            self.u_total += size
        else:
            self.w_total += size


def _cut(ids: list, fraction: float) -> tuple[list, list]:
    n_first = int(len(ids) * fraction)
    return ids[:n_first], ids[n_first:]


def generate_mcd_split(instances: list, config: SplitConfig) -> SplitAssignment:
    """Run the greedy divergence-maximizing assignment over the whole corpus."""
    if len(instances) < 2:
        raise EmptyCorpus("need at least 2 instances to split")
    rng = random.Random(config.seed)
    by_id = {inst.id: inst for inst in instances}
    pool = sorted(by_id)
    atoms = _PairState(ATOM_ALPHA)
    compounds = _PairState(COMPOUND_ALPHA)
    train: list = []
    heldout: list = []
    trace: list = []

    first = True
    while pool:
        side = "u" if rng.random() < config.train_fraction else "w"
        if first:
            chosen = pool.pop(rng.randrange(len(pool)))
            first = False
        else:
            candidates = pool
            if config.candidate_sample is not None and config.candidate_sample < len(pool):
                candidates = sorted(rng.sample(pool, config.candidate_sample))
            best = None  # (passes_filter, d_c, id)
            for cid in candidates:
                inst = by_id[cid]
                d_a = atoms.divergence_if_added(inst.atoms, side)
                d_c = compounds.divergence_if_added(inst.compounds, side)
                passes = d_a < config.atom_threshold
                key = (passes, d_c)
                if best is None or key > best[0] or (key == best[0] and cid < best[1]):
                    best = (key, cid)
            chosen = best[1]
            pool.remove(chosen)
        inst = by_id[chosen]
        atoms.add(inst.atoms, side)
        compounds.add(inst.compounds, side)
        (train if side == "u" else heldout).append(chosen)
        trace.append(
            {
                "side": "train" if side == "u" else "heldout",
                "id": chosen,
                "atom_divergence": atoms.divergence(),
                "compound_divergence": compounds.divergence(),
            }
        )

    shuffled = sorted(heldout)
    rng.shuffle(shuffled)
    val, test = _cut(shuffled, config.val_fraction_of_heldout)

    train_insts = [by_id[i] for i in train]
    heldout_insts = [by_id[i] for i in heldout]
    div = divergences_between(train_insts, heldout_insts)
    assignment = SplitAssignment(
        train=sorted(train),
        val=sorted(val),
        test=sorted(test),
        divergences=div,
        trace=trace,
        constraints_met=(
            div.atom_divergence < config.atom_threshold
            and div.compound_divergence > config.compound_threshold
        ),
        mode="mcd",
    )
    if config.strict_target_disjoint:
        assignment = strict_filter(assignment, instances)
    return assignment


def generate_random_split(instances: list, config: SplitConfig) -> SplitAssignment:
    """Seeded shuffle split; divergences are computed for comparison only."""
    if len(instances) < 2:
        raise EmptyCorpus("need at least 2 instances to split")
    rng = random.Random(config.seed)
    by_id = {inst.id: inst for inst in instances}
    ids = sorted(by_id)
    rng.shuffle(ids)
    train, heldout = _cut(ids, config.train_fraction)
    val, test = _cut(heldout, config.val_fraction_of_heldout)
    div = divergences_between([by_id[i] for i in train], [by_id[i] for i in heldout])
    assignment = SplitAssignment(
        train=sorted(train),
        val=sorted(val),
        test=sorted(test),
        divergences=div,
        constraints_met=(
            div.atom_divergence < config.atom_threshold
            and div.compound_divergence > config.compound_threshold
        ),
        mode="random",
    )
    if config.strict_target_disjoint:
        assignment = strict_filter(assignment, instances)
    return assignment


def _train_compound_set(train_instances: list) -> set:
    keys = set()
    for inst in train_instances:
        keys.update(inst.compounds.keys())
    return keys


def verify_constraints(assignment: SplitAssignment, instances: list, config: SplitConfig) -> dict:
    """Recompute divergences from scratch and count eval/train compound overlap."""
    by_id = {inst.id: inst for inst in instances}
    all_ids = [*assignment.train, *assignment.val, *assignment.test]
    if len(all_ids) != len(set(all_ids)):
        raise CoverageError("duplicate instance ids across splits")
    covered = set(all_ids) | set(assignment.dropped_ids)
    missing = set(by_id) - covered
    unknown = set(all_ids) - set(by_id)
    if missing or unknown:
        raise CoverageError(
            f"assignment does not cover the corpus (missing={sorted(missing)[:5]}, unknown={sorted(unknown)[:5]})"
        )
    train_insts = [by_id[i] for i in assignment.train]
    eval_insts = [by_id[i] for i in assignment.heldout]
    div = divergences_between(train_insts, eval_insts)
    train_compounds = _train_compound_set(train_insts)
    overlap = sum(1 for inst in eval_insts if inst.target_compound in train_compounds)
    return {
        "d_a": div.atom_divergence,
        "d_c": div.compound_divergence,
        "constraints_met": (
            div.atom_divergence < config.atom_threshold
            and div.compound_divergence > config.compound_threshold
        ),
        "target_compound_overlap_count": overlap,
    }


def strict_filter(assignment: SplitAssignment, instances: list) -> SplitAssignment:
    """Drop eval instances whose target compound occurs in training compounds."""
    by_id = {inst.id: inst for inst in instances}
    train_compounds = _train_compound_set([by_id[i] for i in assignment.train])

    def keep(ids: list) -> tuple[list, list]:
        kept, dropped = [], []
        for iid in ids:
            if by_id[iid].target_compound in train_compounds:
                dropped.append(iid)
            else:
                kept.append(iid)
        return kept, dropped

    val, dropped_val = keep(assignment.val)
    test, dropped_test = keep(assignment.test)
    dropped = sorted([*assignment.dropped_ids, *dropped_val, *dropped_test])
    div = divergences_between(
        [by_id[i] for i in assignment.train], [by_id[i] for i in val + test]
    )
    return SplitAssignment(
        train=list(assignment.train),
        val=val,
        test=test,
        divergences=div,
        trace=list(assignment.trace),
        constraints_met=assignment.constraints_met,
        dropped_ids=dropped,
        mode=assignment.mode,
    )
