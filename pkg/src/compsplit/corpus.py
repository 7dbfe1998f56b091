"""Data model, annotation ingestion and microsegment extraction.

Annotation tables (CSV or JSONL with EK-100-style columns) are parsed into
per-video utterance streams, which are deduplicated, windowed and filtered
into instances: K context utterances plus one prediction target, annotated
with atom and compound multisets.
"""

from __future__ import annotations

import ast
import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import InvalidToken, SchemaError, VocabError

DEFAULT_WINDOW = 4

REQUIRED_COLUMNS = (
    "video_id",
    "narration",
    "verb",
    "verb_class",
    "noun",
    "noun_class",
    "all_nouns",
    "all_noun_classes",
)

_WS_OR_HYPHEN = re.compile(r"[\s\-]+")


def normalize_token(raw: str) -> str:
    """Lowercase a token and join multiword/hyphenated forms with underscores."""
    if raw is None:
        raise InvalidToken("token is empty")
    stripped = raw.strip()
    if not stripped:
        raise InvalidToken("token is empty")
    return _WS_OR_HYPHEN.sub("_", stripped.lower())


def verb_atom(class_id: int) -> str:
    return f"v:{class_id}"


def noun_atom(class_id: int) -> str:
    return f"n:{class_id}"


@dataclass(frozen=True)
class Token:
    surface: str
    class_id: int


@dataclass(frozen=True)
class Utterance:
    raw_text: str
    verb: Token
    primary_noun: Token
    all_nouns: tuple[Token, ...]
    clip_id: str
    media_refs: tuple[str, ...] = ()

    def noun_class_ids(self) -> set[int]:
        return {t.class_id for t in self.all_nouns} | {self.primary_noun.class_id}


@dataclass(frozen=True)
class Instance:
    id: str
    context: tuple[Utterance, ...]
    target: Utterance
    atoms: Counter = field(compare=False)
    compounds: Counter = field(compare=False)
    target_compound: tuple[int, int] = (0, 0)

    @property
    def utterances(self) -> tuple[Utterance, ...]:
        return self.context + (self.target,)


@dataclass(frozen=True)
class Vocab:
    verb_classes: dict
    noun_classes: dict
    verb_categories: dict
    noun_categories: dict

    def __post_init__(self):
        for cid in set(self.verb_classes.values()):
            if cid not in self.verb_categories:
                raise VocabError(f"verb class {cid} has no category")
        for cid in set(self.noun_classes.values()):
            if cid not in self.noun_categories:
                raise VocabError(f"noun class {cid} has no category")


def load_vocab(path) -> Vocab:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    for key in ("verbs", "nouns", "verb_categories", "noun_categories"):
        if key not in doc:
            raise SchemaError(f"vocab file missing key: {key}")
    return Vocab(
        verb_classes={normalize_token(k): int(v) for k, v in doc["verbs"].items()},
        noun_classes={normalize_token(k): int(v) for k, v in doc["nouns"].items()},
        verb_categories={int(k): int(v) for k, v in doc["verb_categories"].items()},
        noun_categories={int(k): int(v) for k, v in doc["noun_categories"].items()},
    )


def _parse_listish(value):
    """Accept a real list (JSONL) or a stringified list (EK-100 CSV)."""
    if isinstance(value, (list, tuple)):
        return list(value)
    text = str(value).strip()
    if not text:
        return []
    try:
        parsed = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return [text]
    if isinstance(parsed, (list, tuple)):
        return list(parsed)
    return [parsed]


def _parse_timestamp(value) -> float:
    text = str(value).strip()
    if not text:
        return 0.0
    parts = text.split(":")
    try:
        if len(parts) == 3:
            h, m, s = parts
            return int(h) * 3600 + int(m) * 60 + float(s)
        return float(text)
    except ValueError:
        return 0.0


def _row_to_utterance(row: dict, row_num: int, vocab: Vocab | None) -> tuple[str, float, Utterance]:
    for col in REQUIRED_COLUMNS:
        if col not in row or row[col] is None:
            raise SchemaError(f"row {row_num}: missing column '{col}'")
    try:
        verb = Token(normalize_token(str(row["verb"])), int(row["verb_class"]))
        primary = Token(normalize_token(str(row["noun"])), int(row["noun_class"]))
    except ValueError as exc:
        raise SchemaError(f"row {row_num}: non-integer class id ({exc})") from exc
    noun_surfaces = [normalize_token(str(s)) for s in _parse_listish(row["all_nouns"])]
    noun_ids = [int(c) for c in _parse_listish(row["all_noun_classes"])]
    if len(noun_surfaces) != len(noun_ids):
        raise SchemaError(f"row {row_num}: all_nouns / all_noun_classes length mismatch")
    all_nouns = [Token(s, c) for s, c in zip(noun_surfaces, noun_ids)]
    if primary not in all_nouns:
        all_nouns.insert(0, primary)
    if vocab is not None:
        if vocab.verb_classes.get(verb.surface) != verb.class_id:
            raise VocabError(f"row {row_num}: unknown verb {verb.surface!r} (class {verb.class_id})")
        for tok in all_nouns:
            if vocab.noun_classes.get(tok.surface) != tok.class_id:
                raise VocabError(f"row {row_num}: unknown noun {tok.surface!r} (class {tok.class_id})")
    video_id = str(row["video_id"])
    clip_id = str(row.get("narration_id") or f"{video_id}_{row_num}")
    media_refs = tuple(
        str(row[k]) for k in ("video_path", "audio_path") if row.get(k)
    )
    start = _parse_timestamp(row.get("start_timestamp", row_num))
    return video_id, start, Utterance(
        raw_text=str(row["narration"]),
        verb=verb,
        primary_noun=primary,
        all_nouns=tuple(all_nouns),
        clip_id=clip_id,
        media_refs=media_refs,
    )


def parse_annotations(path, format: str | None = None, vocab: Vocab | None = None) -> dict:
    """Parse an annotation table into temporally ordered utterances per video."""
    fmt = format
    if fmt is None:
        fmt = "jsonl" if str(path).endswith((".jsonl", ".json")) else "csv"
    if fmt not in ("csv", "jsonl"):
        raise SchemaError(f"unsupported format: {fmt}")

    rows = []
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            header = reader.fieldnames or []
            for col in REQUIRED_COLUMNS:
                if col not in header:
                    raise SchemaError(f"missing column '{col}'")
            rows = list(reader)
    else:
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    rows.append(json.loads(line))

    by_video: dict[str, list] = {}
    for i, row in enumerate(rows):
        video_id, start, utt = _row_to_utterance(row, i, vocab)
        by_video.setdefault(video_id, []).append((start, i, utt))
    return {
        vid: [utt for _, _, utt in sorted(entries, key=lambda e: (e[0], e[1]))]
        for vid, entries in by_video.items()
    }


def dedup_utterances(utterances: list) -> list:
    """Collapse consecutive utterances sharing (verb_class, primary_noun_class)."""
    out = []
    prev_key = None
    for utt in utterances:
        key = (utt.verb.class_id, utt.primary_noun.class_id)
        if key != prev_key:
            out.append(utt)
        prev_key = key
    return out


def build_instance(video_id: str, window_utts: list, compounds_scope: str = "all") -> Instance:
    context = tuple(window_utts[:-1])
    target = window_utts[-1]
    atoms: Counter = Counter()
    compounds: Counter = Counter()
    for utt in window_utts:
        atoms[verb_atom(utt.verb.class_id)] += 1
        atoms[noun_atom(utt.primary_noun.class_id)] += 1
    target_compound = (target.verb.class_id, target.primary_noun.class_id)
    if compounds_scope == "all":
        for utt in window_utts:
            compounds[(utt.verb.class_id, utt.primary_noun.class_id)] += 1
    else:
        compounds[target_compound] += 1
    return Instance(
        id=f"{video_id}:{window_utts[0].clip_id}",
        context=context,
        target=target,
        atoms=atoms,
        compounds=compounds,
        target_compound=target_compound,
    )


@dataclass
class ExtractionResult:
    instances: list
    raw_window_count: int = 0
    dropped_by_noun_filter: int = 0
    utterances_removed_by_dedup: int = 0
    videos_shorter_than_window: int = 0

    def report(self) -> dict:
        return {
            "raw_window_count": self.raw_window_count,
            "dropped_by_noun_filter": self.dropped_by_noun_filter,
            "utterances_removed_by_dedup": self.utterances_removed_by_dedup,
            "videos_shorter_than_window": self.videos_shorter_than_window,
            "final_count": len(self.instances),
        }


def extract_instances(
    utterances_by_video: dict,
    window: int = DEFAULT_WINDOW,
    dedup: bool = True,
    noun_filter: bool = True,
    compounds_scope: str = "all",
) -> ExtractionResult:
    """Slide a window over each video's utterances and build instances.

    Consecutive same-compound utterances are collapsed before windowing;
    instances whose target noun class never appears among the context nouns
    are dropped when the noun filter is on.
    """
    if window < 2:
        raise SchemaError("window must be >= 2")
    if compounds_scope not in ("all", "target-only"):
        raise SchemaError(f"unknown compounds scope: {compounds_scope}")
    result = ExtractionResult(instances=[])
    for video_id, utts in utterances_by_video.items():
        stream = utts
        if dedup:
            stream = dedup_utterances(utts)
            result.utterances_removed_by_dedup += len(utts) - len(stream)
        if len(stream) < window:
            result.videos_shorter_than_window += 1
            continue
        for start in range(len(stream) - window + 1):
            window_utts = stream[start : start + window]
            result.raw_window_count += 1
            instance = build_instance(video_id, window_utts, compounds_scope)
            if noun_filter:
                target_noun = instance.target.primary_noun.class_id
                if not any(target_noun in utt.noun_class_ids() for utt in instance.context):
                    result.dropped_by_noun_filter += 1
                    continue
            result.instances.append(instance)
    return result


def corpus_stats(instances: list) -> dict:
    """Atom and compound histograms plus totals, in CLI-report form."""
    atoms: Counter = Counter()
    compounds: Counter = Counter()
    for inst in instances:
        atoms.update(inst.atoms)
        compounds.update(inst.compounds)
    return {
        "n_instances": len(instances),
        "atoms": {k: atoms[k] for k in sorted(atoms)},
        "compounds": {compound_key(k): compounds[k] for k in sorted(compounds)},
        "atoms_total": sum(atoms.values()),
        "compounds_total": sum(compounds.values()),
    }


def compound_key(pair: tuple) -> str:
    return f"{pair[0]},{pair[1]}"


def parse_compound_key(key: str) -> tuple[int, int]:
    v, n = key.split(",")
    return int(v), int(n)


def _token_to_dict(tok: Token) -> dict:
    return {"surface": tok.surface, "class_id": tok.class_id}


def _token_from_dict(d: dict) -> Token:
    return Token(d["surface"], int(d["class_id"]))


def _utterance_to_dict(utt: Utterance) -> dict:
    return {
        "clip_id": utt.clip_id,
        "raw_text": utt.raw_text,
        "verb": _token_to_dict(utt.verb),
        "primary_noun": _token_to_dict(utt.primary_noun),
        "all_nouns": [_token_to_dict(t) for t in utt.all_nouns],
        "media_refs": list(utt.media_refs),
    }


def _utterance_from_dict(d: dict) -> Utterance:
    return Utterance(
        raw_text=d["raw_text"],
        verb=_token_from_dict(d["verb"]),
        primary_noun=_token_from_dict(d["primary_noun"]),
        all_nouns=tuple(_token_from_dict(t) for t in d["all_nouns"]),
        clip_id=d["clip_id"],
        media_refs=tuple(d.get("media_refs", [])),
    )


def instance_to_dict(inst: Instance) -> dict:
    return {
        "id": inst.id,
        "context": [_utterance_to_dict(u) for u in inst.context],
        "target": _utterance_to_dict(inst.target),
        "atoms": {k: inst.atoms[k] for k in sorted(inst.atoms)},
        "compounds": {compound_key(k): inst.compounds[k] for k in sorted(inst.compounds)},
        "target_compound": list(inst.target_compound),
    }


def instance_from_dict(d: dict) -> Instance:
    return Instance(
        id=d["id"],
        context=tuple(_utterance_from_dict(u) for u in d["context"]),
        target=_utterance_from_dict(d["target"]),
        atoms=Counter(d["atoms"]),
        compounds=Counter({parse_compound_key(k): v for k, v in d["compounds"].items()}),
        target_compound=tuple(d["target_compound"]),
    )


def write_instances_jsonl(instances: list, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(json.dumps(instance_to_dict(inst)) + "\n")


def read_instances_jsonl(path) -> list:
    instances = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                instances.append(instance_from_dict(json.loads(line)))
    return instances
