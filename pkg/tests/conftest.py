import json

import pytest

from compsplit.corpus import Token, Utterance, Vocab, build_instance


def make_utterance(verb, verb_id, noun, noun_id, clip_id="c0", extra_nouns=(), raw_text=None):
    verb_tok = Token(verb, verb_id)
    noun_tok = Token(noun, noun_id)
    all_nouns = (noun_tok,) + tuple(Token(s, c) for s, c in extra_nouns)
    return Utterance(
        raw_text=raw_text if raw_text is not None else f"{verb} {noun}",
        verb=verb_tok,
        primary_noun=noun_tok,
        all_nouns=all_nouns,
        clip_id=clip_id,
    )


def make_instance(video_id, rows, inst_idx=0, compounds_scope="all"):
    """rows: list of (verb, verb_id, noun, noun_id) for K context + 1 target."""
    utts = [
        make_utterance(v, vi, n, ni, clip_id=f"i{inst_idx}_u{k}")
        for k, (v, vi, n, ni) in enumerate(rows)
    ]
    return build_instance(video_id, utts, compounds_scope=compounds_scope)


@pytest.fixture
def kitchen_vocab():
    return Vocab(
        verb_classes={
            "cut": 0, "slice": 1, "dice": 2, "wash": 3, "close": 4,
            "put_down": 5, "take": 6, "pick_up": 7, "stir": 8, "place": 9,
        },
        noun_classes={
            "celery": 0, "tap": 1, "knife": 2, "paneer": 3, "parmesan": 4,
            "milk": 5, "bowl": 6, "dishwasher": 7, "olive_oil": 8, "pan": 9,
        },
        # slice/dice/cut share a category; paneer/parmesan are both cheese
        verb_categories={0: 0, 1: 0, 2: 0, 3: 1, 4: 2, 5: 3, 6: 4, 7: 4, 8: 5, 9: 3},
        noun_categories={0: 0, 1: 1, 2: 2, 3: 3, 4: 3, 5: 4, 6: 5, 7: 6, 8: 7, 9: 8},
    )


def write_vocab_json(vocab, path):
    doc = {
        "verbs": vocab.verb_classes,
        "nouns": vocab.noun_classes,
        "verb_categories": {str(k): v for k, v in vocab.verb_categories.items()},
        "noun_categories": {str(k): v for k, v in vocab.noun_categories.items()},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
    return path
