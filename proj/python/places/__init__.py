"""Few-shot conversation synthesis, validation, metrics and rating analysis."""

import json
import os

from . import _places
from ._places import PlacesError, tokenize, welch_t_test

__all__ = [
    "PlacesError",
    "aggregate_ratings",
    "build_prompt",
    "corpus_stats",
    "distinct_n",
    "parse_completion",
    "render_header",
    "report_dataset",
    "sample_excerpt",
    "synth",
    "tokenize",
    "validate",
    "welch_t_test",
]


def _line(obj):
    return obj if isinstance(obj, str) else json.dumps(obj, ensure_ascii=False)


def _lines(objs):
    return [_line(o) for o in objs]


def _result(r):
    if r["conversation"] is not None:
        r["conversation"] = json.loads(r["conversation"])
    return r


def distinct_n(conversations, n, mode="pooled"):
    return _places.distinct_n(_lines(conversations), n, mode)


def corpus_stats(conversations, corpus_id="corpus", per_speaker=False):
    return json.loads(_places.corpus_stats(_lines(conversations), corpus_id, per_speaker))


def report_dataset(path):
    return json.loads(_places.report_dataset(os.fspath(path)))


def render_header(recipe, prefer_subtopic=True):
    return _places.render_header(_line(recipe), prefer_subtopic)


def build_prompt(seeds_path, recipe, rng_seed, k=3):
    return _places.build_prompt(os.fspath(seeds_path), _line(recipe), rng_seed, k)


def parse_completion(raw, recipe, cue_speaker):
    return _result(_places.parse_completion(raw, _line(recipe), cue_speaker))


def validate(conversation, recipe):
    return _result(_places.validate(_line(conversation), _line(recipe)))


def sample_excerpt(conversation, rng_seed, min_len=8, max_len=12):
    return json.loads(_places.sample_excerpt(_line(conversation), rng_seed, min_len, max_len))


def aggregate_ratings(ratings):
    return [json.loads(a) for a in _places.aggregate_ratings(_lines(ratings))]


def synth(config, base_dir="", mock_script="", write_limit=None, plan_only=False):
    summary = _places.synth(
        _line(config), os.fspath(base_dir), os.fspath(mock_script), write_limit, plan_only
    )
    return json.loads(summary)
