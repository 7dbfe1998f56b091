import csv
import json
from collections import Counter

import pytest

from compsplit.corpus import (
    Token,
    build_instance,
    compound_key,
    corpus_stats,
    dedup_utterances,
    extract_instances,
    instance_from_dict,
    instance_to_dict,
    load_vocab,
    normalize_token,
    noun_atom,
    parse_annotations,
    parse_compound_key,
    read_instances_jsonl,
    verb_atom,
    write_instances_jsonl,
)
from compsplit.errors import InvalidToken, SchemaError, VocabError

from conftest import make_instance, make_utterance, write_vocab_json

# One video whose deduped stream is:
#   wash celery, cut celery, slice celery (knife in all_nouns),
#   put_down knife, take celery, stir milk
# Window 4 gives 3 raw windows; the stir-milk target fails the noun filter.
ANNOTATION_ROWS = [
    # (narration_id, start, narration, verb, v_cls, noun, n_cls, all_nouns, all_cls)
    ("P01_01_0", "00:00:01.00", "wash celery", "wash", 3, "celery", 0, ["celery"], [0]),
    ("P01_01_1", "00:00:05.00", "cut celery", "cut", 0, "celery", 0, ["celery"], [0]),
    ("P01_01_2", "00:00:09.00", "cut celery again", "cut", 0, "celery", 0, ["celery"], [0]),
    ("P01_01_3", "00:00:12.00", "slice celery", "slice", 1, "celery", 0, ["celery", "knife"], [0, 2]),
    ("P01_01_4", "00:00:20.00", "put-down knife", "put-down", 5, "knife", 2, ["knife"], [2]),
    ("P01_01_5", "00:00:25.00", "take celery", "take", 6, "celery", 0, ["celery"], [0]),
    ("P01_01_6", "00:00:30.00", "stir milk", "stir", 8, "milk", 5, ["milk"], [5]),
]

SHORT_VIDEO_ROWS = [
    ("P02_03_0", "00:00:01.00", "wash celery", "wash", 3, "celery", 0, ["celery"], [0]),
    ("P02_03_1", "00:00:04.00", "cut celery", "cut", 0, "celery", 0, ["celery"], [0]),
]


def _write_csv(path, rows_by_video, shuffle=False):
    header = [
        "narration_id", "video_id", "start_timestamp", "narration",
        "verb", "verb_class", "noun", "noun_class", "all_nouns", "all_noun_classes",
    ]
    flat = []
    for video_id, rows in rows_by_video.items():
        for nid, start, narration, verb, vc, noun, nc, alln, allc in rows:
            flat.append([nid, video_id, start, narration, verb, vc, noun, nc, str(alln), str(allc)])
    if shuffle:
        flat = flat[::-1]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(flat)
    return path


@pytest.fixture
def annotations_csv(tmp_path):
    return _write_csv(
        tmp_path / "annotations.csv",
        {"P01_01": ANNOTATION_ROWS, "P02_03": SHORT_VIDEO_ROWS},
    )


class TestNormalizeToken:
    def test_lowercases(self):
        assert normalize_token("Celery") == "celery"

    def test_multiword_joined_with_underscore(self):
        assert normalize_token("olive oil") == "olive_oil"

    def test_hyphen_joined_with_underscore(self):
        assert normalize_token("put-down") == "put_down"

    def test_mixed_separators_collapse(self):
        assert normalize_token("  Put -  Down ") == "put_down"

    def test_single_token_unchanged(self):
        assert normalize_token("knife") == "knife"

    @pytest.mark.parametrize("bad", ["", "   ", None])
    def test_empty_rejected(self, bad):
        with pytest.raises(InvalidToken):
            normalize_token(bad)


class TestAtomKeys:
    def test_namespaces_disambiguate_shared_class_ids(self):
        assert verb_atom(3) == "v:3"
        assert noun_atom(3) == "n:3"
        assert verb_atom(3) != noun_atom(3)


class TestVocab:
    def test_round_trip(self, tmp_path, kitchen_vocab):
        path = write_vocab_json(kitchen_vocab, tmp_path / "vocab.json")
        loaded = load_vocab(path)
        assert loaded == kitchen_vocab

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "vocab.json"
        path.write_text(json.dumps({"verbs": {"cut": 0}, "nouns": {"celery": 0}}))
        with pytest.raises(SchemaError, match="verb_categories"):
            load_vocab(path)

    def test_class_without_category_rejected(self, tmp_path):
        path = tmp_path / "vocab.json"
        path.write_text(
            json.dumps(
                {
                    "verbs": {"cut": 0},
                    "nouns": {"celery": 0},
                    "verb_categories": {},
                    "noun_categories": {"0": 0},
                }
            )
        )
        with pytest.raises(VocabError, match="verb class 0"):
            load_vocab(path)


class TestParseAnnotations:
    def test_groups_by_video(self, annotations_csv):
        by_video = parse_annotations(annotations_csv)
        assert set(by_video) == {"P01_01", "P02_03"}
        assert len(by_video["P01_01"]) == 7
        assert len(by_video["P02_03"]) == 2

    def test_rows_sorted_by_timestamp(self, tmp_path):
        path = _write_csv(tmp_path / "shuffled.csv", {"P01_01": ANNOTATION_ROWS}, shuffle=True)
        by_video = parse_annotations(path)
        narrations = [u.raw_text for u in by_video["P01_01"]]
        assert narrations[0] == "wash celery"
        assert narrations[-1] == "stir milk"

    def test_tokens_normalized(self, annotations_csv):
        by_video = parse_annotations(annotations_csv)
        put_down = by_video["P01_01"][4]
        assert put_down.verb == Token("put_down", 5)

    def test_all_nouns_contains_primary(self, annotations_csv):
        by_video = parse_annotations(annotations_csv)
        slice_utt = by_video["P01_01"][3]
        assert slice_utt.noun_class_ids() == {0, 2}

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "broken.csv"
        path.write_text("video_id,narration\nP01_01,wash celery\n")
        with pytest.raises(SchemaError, match="verb"):
            parse_annotations(path)

    def test_vocab_validation_names_row(self, tmp_path, annotations_csv, kitchen_vocab):
        # Corrupt one class id so validation trips on that row.
        rows = [list(r) for r in ANNOTATION_ROWS]
        rows[2][4] = 99  # cut -> class 99
        path = _write_csv(tmp_path / "bad.csv", {"P01_01": rows})
        with pytest.raises(VocabError, match="row 2"):
            parse_annotations(path, vocab=kitchen_vocab)

    def test_jsonl_format(self, tmp_path):
        path = tmp_path / "annotations.jsonl"
        with open(path, "w", encoding="utf-8") as f:
            for nid, start, narration, verb, vc, noun, nc, alln, allc in ANNOTATION_ROWS:
                f.write(
                    json.dumps(
                        {
                            "narration_id": nid,
                            "video_id": "P01_01",
                            "start_timestamp": start,
                            "narration": narration,
                            "verb": verb,
                            "verb_class": vc,
                            "noun": noun,
                            "noun_class": nc,
                            "all_nouns": alln,
                            "all_noun_classes": allc,
                        }
                    )
                    + "\n"
                )
        by_video = parse_annotations(path)
        assert len(by_video["P01_01"]) == 7


class TestDedup:
    def test_consecutive_same_compound_collapsed(self, annotations_csv):
        by_video = parse_annotations(annotations_csv)
        deduped = dedup_utterances(by_video["P01_01"])
        assert len(deduped) == 6
        assert [u.verb.surface for u in deduped] == [
            "wash", "cut", "slice", "put_down", "take", "stir",
        ]

    def test_non_consecutive_repeats_kept(self):
        utts = [
            make_utterance("cut", 0, "celery", 0, clip_id="a"),
            make_utterance("wash", 3, "celery", 0, clip_id="b"),
            make_utterance("cut", 0, "celery", 0, clip_id="c"),
        ]
        assert len(dedup_utterances(utts)) == 3

    def test_idempotent(self, annotations_csv):
        by_video = parse_annotations(annotations_csv)
        once = dedup_utterances(by_video["P01_01"])
        assert dedup_utterances(once) == once


class TestBuildInstance:
    def test_atoms_and_compounds(self):
        inst = make_instance(
            "vid",
            [
                ("wash", 3, "celery", 0),
                ("cut", 0, "celery", 0),
                ("slice", 1, "celery", 0),
                ("take", 6, "celery", 0),
            ],
        )
        assert inst.atoms == Counter(
            {"v:3": 1, "v:0": 1, "v:1": 1, "v:6": 1, "n:0": 4}
        )
        assert inst.compounds == Counter({(3, 0): 1, (0, 0): 1, (1, 0): 1, (6, 0): 1})
        assert inst.target_compound == (6, 0)
        assert len(inst.context) == 3
        assert inst.utterances[-1] is inst.target

    def test_target_only_scope(self):
        inst = make_instance(
            "vid",
            [
                ("wash", 3, "celery", 0),
                ("cut", 0, "celery", 0),
                ("slice", 1, "celery", 0),
                ("take", 6, "celery", 0),
            ],
            compounds_scope="target-only",
        )
        assert inst.compounds == Counter({(6, 0): 1})

    def test_id_uses_video_and_first_clip(self):
        inst = make_instance("P01_01", [
            ("wash", 3, "celery", 0),
            ("cut", 0, "celery", 0),
        ], inst_idx=7)
        assert inst.id == "P01_01:i7_u0"


class TestExtractInstances:
    def test_window_dedup_and_noun_filter(self, annotations_csv):
        by_video = parse_annotations(annotations_csv)
        result = extract_instances(by_video, window=4)
        # 6 deduped utterances -> 3 windows; stir-milk target dropped.
        assert result.raw_window_count == 3
        assert result.dropped_by_noun_filter == 1
        assert result.utterances_removed_by_dedup == 1
        assert result.videos_shorter_than_window == 1
        assert len(result.instances) == 2
        assert [i.id for i in result.instances] == ["P01_01:P01_01_0", "P01_01:P01_01_1"]

    def test_noun_filter_off_keeps_all_windows(self, annotations_csv):
        by_video = parse_annotations(annotations_csv)
        result = extract_instances(by_video, window=4, noun_filter=False)
        assert len(result.instances) == 3
        assert result.dropped_by_noun_filter == 0

    def test_dedup_off(self, annotations_csv):
        by_video = parse_annotations(annotations_csv)
        result = extract_instances(by_video, window=4, dedup=False, noun_filter=False)
        assert result.raw_window_count == 4
        assert result.utterances_removed_by_dedup == 0

    def test_window_count_matches_stream_length(self, annotations_csv):
        by_video = parse_annotations(annotations_csv)
        for window in (2, 3, 4, 5):
            result = extract_instances(by_video, window=window, noun_filter=False)
            expected = sum(
                max(0, len(dedup_utterances(utts)) - window + 1)
                for utts in by_video.values()
            )
            assert result.raw_window_count == expected

    def test_window_too_small_rejected(self, annotations_csv):
        by_video = parse_annotations(annotations_csv)
        with pytest.raises(SchemaError):
            extract_instances(by_video, window=1)

    def test_unknown_scope_rejected(self, annotations_csv):
        by_video = parse_annotations(annotations_csv)
        with pytest.raises(SchemaError):
            extract_instances(by_video, compounds_scope="everything")

    def test_report_shape(self, annotations_csv):
        by_video = parse_annotations(annotations_csv)
        report = extract_instances(by_video, window=4).report()
        assert report["final_count"] == 2
        assert report["raw_window_count"] == 3


class TestStatsAndKeys:
    def test_corpus_stats_totals(self, annotations_csv):
        by_video = parse_annotations(annotations_csv)
        instances = extract_instances(by_video, window=4).instances
        stats = corpus_stats(instances)
        assert stats["n_instances"] == 2
        # Each window-4 instance contributes 4 compounds and 8 atoms.
        assert stats["compounds_total"] == 8
        assert stats["atoms_total"] == 16
        assert stats["atoms"]["n:0"] > 0

    def test_compound_key_round_trip(self):
        assert compound_key((3, 12)) == "3,12"
        assert parse_compound_key("3,12") == (3, 12)


class TestSerialization:
    def test_jsonl_round_trip(self, annotations_csv, tmp_path):
        by_video = parse_annotations(annotations_csv)
        instances = extract_instances(by_video, window=4).instances
        path = tmp_path / "corpus.jsonl"
        write_instances_jsonl(instances, path)
        loaded = read_instances_jsonl(path)
        assert [instance_to_dict(i) for i in loaded] == [
            instance_to_dict(i) for i in instances
        ]
        assert loaded[0].atoms == instances[0].atoms
        assert loaded[0].compounds == instances[0].compounds

    def test_round_trip_is_deterministic_bytes(self, annotations_csv, tmp_path):
        by_video = parse_annotations(annotations_csv)
        instances = extract_instances(by_video, window=4).instances
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_instances_jsonl(instances, p1)
        write_instances_jsonl(read_instances_jsonl(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_instance_dict_round_trip(self):
        inst = make_instance("vid", [
            ("wash", 3, "olive_oil", 8),
            ("cut", 0, "celery", 0),
        ])
        again = instance_from_dict(instance_to_dict(inst))
        assert instance_to_dict(again) == instance_to_dict(inst)
