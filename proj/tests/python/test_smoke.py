import json
import os
from pathlib import Path

import pytest

import places

SOURCE = Path(os.environ.get("PLACES_SOURCE_DIR", Path(__file__).resolve().parents[2]))
SEEDS = SOURCE / "data" / "seeds_dyadic.jsonl"
PETS = {"id": "pets", "topic": "pets", "participants": ["Alice", "Bob"], "background": ["Alice love cats."]}


def conv(cid, texts, speakers=("Alice", "Bob")):
    return {
        "id": cid,
        "turns": [{"speaker": speakers[i % len(speakers)], "text": t} for i, t in enumerate(texts)],
    }


def test_tokenize_and_distinct():
    assert places.tokenize("Hello, world!") == ["hello", "world"]
    c = conv("a", ["a b a b", "c d"])
    # bigrams: ab ba ab cd -> 3 unique of 4
    assert places.distinct_n([c], 2) == pytest.approx(0.75)


def test_seed_report():
    report = places.report_dataset(SEEDS)
    assert report["num_conversations"] == 10
    assert report["turns_per_conversation"] == pytest.approx(8.1)


def test_prompt_parse_round_trip():
    header = places.render_header(PETS)
    assert header.startswith("The following is a conversation between Alice and Bob about pets.")
    prompt = places.build_prompt(SEEDS, PETS, rng_seed=7)
    assert prompt["text"].endswith(header + "\nAlice:")
    assert len(prompt["example_ids"]) == 3
    raw = " I adopted a kitten.\nBob: Nice, what is her name?\nAlice: Miso.\nBob: Cute, I have a dog.\n\n"
    parsed = places.parse_completion(raw, PETS, "Alice")
    assert parsed["accepted"]
    assert [t["speaker"] for t in parsed["conversation"]["turns"]] == ["Alice", "Bob", "Alice", "Bob"]
    bad = places.parse_completion("", PETS, "Alice")
    assert not bad["accepted"]
    assert bad["discard_reason"] == "no_turns"


def test_excerpt_and_ratings():
    long = conv("long", [f"turn {i}" for i in range(40)])
    ex = places.sample_excerpt(long, rng_seed=3)
    assert 8 <= len(ex["turns"]) <= 12
    ratings = [
        {"conversation_id": "c", "rater_id": r, "dimension": "natural", "score": s}
        for r, s in (("1", 4), ("2", 5))
    ]
    agg = places.aggregate_ratings(ratings)
    assert agg == [{"conversation_id": "c", "dimension": "natural", "median_score": 4.5, "n_raters": 2}]


def test_welch():
    same = places.welch_t_test([1, 2, 3], [1, 2, 3])
    assert same["p"] == 1.0 and not same["significant"]
    with pytest.raises(places.PlacesError) as err:
        places.welch_t_test([3, 3], [3, 3])
    assert err.value.kind == "undefined_test"


def test_synth_with_mock(tmp_path):
    topics = tmp_path / "topics.jsonl"
    topics.write_text(json.dumps(PETS) + "\n")
    script = tmp_path / "mock.jsonl"
    text = " I adopted a kitten.\nBob: Nice, what is her name?\nAlice: Miso, she loves cats toys.\nBob: My dog would love her.\n\n"
    script.write_text(json.dumps({"match": "*", "text": text}) + "\n")
    config = {
        "seed": 5,
        "target_count": 1,
        "paths": {"seeds": str(SEEDS), "topics": str(topics), "out": str(tmp_path / "out.jsonl")},
    }
    plan = places.synth(config, plan_only=True)
    assert plan["planned"] == 1
    summary = places.synth(config, mock_script=script)
    assert summary["accepted"] == 1
    records = [json.loads(l) for l in (tmp_path / "out.jsonl").read_text().splitlines()]
    assert len(records) == 1 and records[0]["meta"]["topic"] == "pets"
    again = places.synth(config, mock_script=script)
    assert again["skipped_existing"] == 1
