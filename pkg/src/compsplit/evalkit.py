"""Metrics, heuristic baselines, few-shot selection and prompt rendering.

Metrics operate on normalized whitespace-tokenized text: corpus-level
unigram BLEU with brevity penalty, Exact Match, and Categorical Accuracy
(verb/noun category equality, e.g. slice/dice both counting as cut).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
import math

from .corpus import Instance, Token, Vocab, normalize_token
from .errors import InvalidParameter

TEXT_PROMPT_INSTRUCTION = (
    "Predict the next narration given 3 sequential previous narrations from a cooking video"
)
INTERLEAVED_PROMPT_INSTRUCTION = (
    "Predict the next action narration given 3 sequential previous actions "
    "(image-narration pairs) in a cooking video."
)


@dataclass
class EvalRecord:
    instance_id: str
    prediction_text: str
    reference_text: str
    ref_verb: Token
    ref_noun: Token
    pred_verb: Token | None = None
    pred_noun: Token | None = None
    per_metric: dict = field(default_factory=dict)


def normalize_text(text: str) -> str:
    """Whitespace-tokenize and normalize each token; empty input stays empty."""
    tokens = [normalize_token(t) for t in text.split()]
    return " ".join(tokens)


def bleu1(pairs, sentence_level: bool = False) -> float:
    """Corpus-level unigram BLEU in [0,100] over (prediction, reference) token lists.

    With sentence_level=True, returns the mean of per-pair BLEU-1 instead
    (diagnostic only).
    """
    pairs = list(pairs)
    if not pairs:
        raise InvalidParameter("bleu1 needs a non-empty corpus")
    if sentence_level:
        return sum(bleu1([pair]) for pair in pairs) / len(pairs)
    matched = 0
    pred_len = 0
    ref_len = 0
    for pred, ref in pairs:
        pred_counts = Counter(pred)
        ref_counts = Counter(ref)
        matched += sum(min(c, ref_counts[t]) for t, c in pred_counts.items())
        pred_len += len(pred)
        ref_len += len(ref)
    if pred_len == 0 or matched == 0:
        return 0.0
    precision = matched / pred_len
    bp = min(1.0, math.exp(1.0 - ref_len / pred_len))
    return 100.0 * precision * bp


def exact_match(records) -> float:
    records = list(records)
    if not records:
        raise InvalidParameter("exact_match needs records")
    hits = sum(
        1
        for r in records
        if normalize_text(r.prediction_text) == normalize_text(r.reference_text)
    )
    return 100.0 * hits / len(records)


def _longest_prefix_token(tokens: list, classes: dict) -> Token | None:
    for end in range(len(tokens), 0, -1):
        joined = "_".join(tokens[:end])
        if joined in classes:
            return Token(joined, classes[joined])
    return None


def parse_prediction_atoms(
    text: str, vocab: Vocab, kind: str | None = None
) -> tuple[Token | None, Token | None]:
    """Map free-text prediction to atoms.

    Full-utterance predictions: first token is the verb, the noun is the
    longest underscore-joined prefix of the remainder found in the noun
    vocabulary. Single-atom predictions (kind='verb'/'noun') match the whole
    text against that atom's vocabulary.
    """
    tokens = normalize_text(text).split()
    if not tokens:
        return None, None
    if kind == "verb":
        return _longest_prefix_token(tokens, vocab.verb_classes), None
    if kind == "noun":
        return None, _longest_prefix_token(tokens, vocab.noun_classes)
    verb = None
    if tokens[0] in vocab.verb_classes:
        verb = Token(tokens[0], vocab.verb_classes[tokens[0]])
    noun = _longest_prefix_token(tokens[1:], vocab.noun_classes)
    return verb, noun


def categorical_accuracy(records, vocab: Vocab, kind: str | None = None) -> dict:
    """Category-level accuracy; returns {'score', 'oov'}.

    kind=None scores verb and noun categories jointly; 'verb'/'noun' score
    that atom alone. Predictions whose atoms cannot be mapped to the vocab
    score 0 and are tallied as out-of-vocabulary.
    """
    records = list(records)
    if not records:
        raise InvalidParameter("categorical_accuracy needs records")
    if kind not in (None, "verb", "noun"):
        raise InvalidParameter(f"unknown atom kind: {kind}")
    hits = 0
    oov = 0
    for r in records:
        pred_verb, pred_noun = parse_prediction_atoms(r.prediction_text, vocab, kind)
        r.pred_verb, r.pred_noun = pred_verb, pred_noun
        need_verb = kind in (None, "verb")
        need_noun = kind in (None, "noun")
        if (need_verb and pred_verb is None) or (need_noun and pred_noun is None):
            oov += 1
            continue
        ok = True
        if need_verb:
            ok = ok and vocab.verb_categories.get(pred_verb.class_id) == vocab.verb_categories.get(
                r.ref_verb.class_id
            )
        if need_noun:
            ok = ok and vocab.noun_categories.get(pred_noun.class_id) == vocab.noun_categories.get(
                r.ref_noun.class_id
            )
        if ok:
            hits += 1
    return {"score": 100.0 * hits / len(records), "oov": oov}


def mrh_predict(instance: Instance, kind: str) -> Token:
    """Most-recent heuristic: last context utterance's verb or primary noun."""
    if kind not in ("verb", "noun"):
        raise InvalidParameter(f"unknown atom kind: {kind}")
    last = instance.context[-1]
    return last.verb if kind == "verb" else last.primary_noun


def mrh_predict_text(instance: Instance) -> str:
    last = instance.context[-1]
    return f"{last.verb.surface} {last.primary_noun.surface}"


@dataclass
class MemorizerModel:
    """Count table P(target compound | last-context compound) with surfaces."""

    table: dict = field(default_factory=dict)

    def predict_text(self, instance: Instance) -> str:
        key = (
            instance.context[-1].verb.class_id,
            instance.context[-1].primary_noun.class_id,
        )
        options = self.table.get(key)
        if not options:
            return mrh_predict_text(instance)
        best_count = max(options.values())
        return min(s for s, c in options.items() if c == best_count)


def memorizer_fit(train_instances) -> MemorizerModel:
    train_instances = list(train_instances)
    if not train_instances:
        raise InvalidParameter("memorizer needs a non-empty training set")
    table: dict = {}
    for inst in train_instances:
        key = (
            inst.context[-1].verb.class_id,
            inst.context[-1].primary_noun.class_id,
        )
        surface = f"{inst.target.verb.surface} {inst.target.primary_noun.surface}"
        table.setdefault(key, Counter())[surface] += 1
    return MemorizerModel(table=table)


def memorizer_predict(model: MemorizerModel, instance: Instance) -> str:
    return model.predict_text(instance)


def _atom_subrecords(records, vocab: Vocab, kind: str) -> list:
    out = []
    for r in records:
        verb, noun = parse_prediction_atoms(r.prediction_text, vocab)
        pred = verb if kind == "verb" else noun
        ref = r.ref_verb if kind == "verb" else r.ref_noun
        out.append(
            EvalRecord(
                instance_id=r.instance_id,
                prediction_text=pred.surface if pred else "",
                reference_text=ref.surface,
                ref_verb=r.ref_verb,
                ref_noun=r.ref_noun,
            )
        )
    return out


def evaluate_records(records, vocab: Vocab, task: str = "nup") -> dict:
    """Full metric report over joined prediction/reference records."""
    records = list(records)
    if not records:
        raise InvalidParameter("no records to evaluate")
    if task not in ("nup", "verb", "noun"):
        raise InvalidParameter(f"unknown task: {task}")
    pairs = [
        (normalize_text(r.prediction_text).split(), normalize_text(r.reference_text).split())
        for r in records
    ]
    report: dict = {"n": len(records), "bleu1": bleu1(pairs), "em": exact_match(records)}
    if task == "nup":
        ca = categorical_accuracy(records, vocab, None)
        report["ca"] = ca["score"]
        report["oov"] = ca["oov"]
        per_atom = {}
        for kind in ("verb", "noun"):
            sub = _atom_subrecords(records, vocab, kind)
            sub_ca = categorical_accuracy(sub, vocab, kind)
            per_atom[kind] = {"em": exact_match(sub), "ca": sub_ca["score"]}
        report["per_atom"] = per_atom
    else:
        ca = categorical_accuracy(records, vocab, task)
        report["ca"] = ca["score"]
        report["oov"] = ca["oov"]
        report["per_atom"] = {task: {"em": report["em"], "ca": ca["score"]}}
    for key in ("bleu1", "em", "ca"):
        report[key] = round(report[key], 6)
    return report


def _atom_class_sets(instance: Instance) -> tuple[set, set]:
    verbs = set()
    nouns = set()
    for utt in instance.utterances:
        verbs.add(utt.verb.class_id)
        nouns.update(utt.noun_class_ids())
    return verbs, nouns


def select_fewshot(query: Instance, pool, k: int) -> list:
    """Top-k pool instances by verb-set plus noun-set class overlap with the query."""
    pool = list(pool)
    if k > len(pool):
        raise InvalidParameter(f"k={k} exceeds pool size {len(pool)}")
    if k < 0:
        raise InvalidParameter("k must be non-negative")
    q_verbs, q_nouns = _atom_class_sets(query)
    scored = []
    for inst in pool:
        verbs, nouns = _atom_class_sets(inst)
        score = len(q_verbs & verbs) + len(q_nouns & nouns)
        scored.append((-score, inst.id, inst))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [inst for _, _, inst in scored[:k]]


def _display_text(utt) -> str:
    # Rendering undoes multiword underscores; metrics never see this form.
    return utt.raw_text.replace("_", " ")


def render_prompt(query: Instance, shots, template: str = "text-only") -> str:
    if template not in ("text-only", "interleaved"):
        raise InvalidParameter(f"unknown template: {template}")
    lines = []
    if template == "text-only":
        lines.append(TEXT_PROMPT_INSTRUCTION)
        for shot in shots:
            ctx = " . ".join(_display_text(u) for u in shot.context)
            lines.append(f"{ctx} => {_display_text(shot.target)}")
        ctx = " . ".join(_display_text(u) for u in query.context)
        lines.append(f"{ctx} =>")
    else:
        lines.append(INTERLEAVED_PROMPT_INSTRUCTION)

        def interleave(inst: Instance) -> str:
            return " . ".join(
                f"{_display_text(u)} <Image {i + 1}>" for i, u in enumerate(inst.context)
            )

        for shot in shots:
            lines.append(f"{interleave(shot)} => {_display_text(shot.target)}")
        lines.append(f"{interleave(query)} =>")
    return "\n".join(lines)
