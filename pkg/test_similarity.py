"""
test_similarity.py — similarity measures, weight vectors and d_web

Run from the project root:
  python test_similarity.py      (or: pytest test_similarity.py)
"""

import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

from modules.core_model import LocationRegistry, VirtualLocation
from modules.errors import InvalidParameterError, InvalidWeightsError, UnknownLocationError
from modules.similarity import (
    DOMAIN_EQUALITY,
    ContentCorpus,
    DistanceTable,
    SimilarityMeasure,
    WeightVector,
    d_web,
    registrable_domain,
    shingle_jaccard,
    shingle_measure,
    tokenize,
)
from utils.script_runner import run_module_tests


def _registry():
    registry = LocationRegistry()
    registry.register(VirtualLocation("x1", frozenset({"http://www.hotel-x.example/rooms"})))
    registry.register(VirtualLocation("x2", frozenset({"https://book.hotel-x.example/"})))
    registry.register(VirtualLocation("y1", frozenset({"http://hotel-y.example/"})))
    registry.register(VirtualLocation("xy", frozenset({"http://hotel-y.example/a", "http://hotel-x.example/b"})))
    return registry


def _constant(name, value):
    return SimilarityMeasure(name, lambda a, b: value)


# ---------------------------------------------------------------------------
# shingle_jaccard
# ---------------------------------------------------------------------------

def test_identical_streams_score_one():
    tokens = tokenize("The quick brown fox jumps")
    assert shingle_jaccard(tokens, tokens, 3) == 1.0


def test_disjoint_vocabularies_score_zero():
    assert shingle_jaccard(["a", "b", "c"], ["x", "y", "z"], 2) == 0.0


def test_pair_shingles_half_overlap():
    assert shingle_jaccard(tokenize("a b c d"), tokenize("b c d e"), 2) == 0.5


def test_empty_streams():
    assert shingle_jaccard([], [], 3) == 1.0
    assert shingle_jaccard([], ["a"], 3) == 0.0


def test_shingle_length_must_be_positive():
    with pytest.raises(InvalidParameterError):
        shingle_jaccard(["a"], ["a"], 0)


def test_tokenizer_is_unicode_aware():
    assert tokenize("Café_Straße, GALWAY!") == ["café", "straße", "galway"]


# ---------------------------------------------------------------------------
# domain_equality
# ---------------------------------------------------------------------------

def test_registrable_domain_drops_www_and_subdomains():
    assert registrable_domain("www.hotel-x.example") == "hotel-x.example"
    assert registrable_domain("book.hotel-x.example") == "hotel-x.example"
    assert registrable_domain("192.168.0.1") == "192.168.0.1"


def test_registrable_domain_honours_multi_label_suffixes():
    assert registrable_domain("www.hotel-x.co.uk") == "hotel-x.co.uk"
    assert registrable_domain("book.hotel-y.co.uk") == "hotel-y.co.uk"
    assert registrable_domain("galway.gov.ie") == "galway.gov.ie"
    assert registrable_domain("maps.galway.gov.ie") == "galway.gov.ie"
    assert registrable_domain("co.uk") == "co.uk"


def test_sites_under_one_public_suffix_are_different_domains():
    x = VirtualLocation("x", frozenset({"http://www.hotel-x.co.uk/"}))
    y = VirtualLocation("y", frozenset({"http://www.hotel-y.co.uk/"}))
    x_again = VirtualLocation("x2", frozenset({"https://book.hotel-x.co.uk/rooms"}))
    assert DOMAIN_EQUALITY(x, y) == 0.0
    assert DOMAIN_EQUALITY(x, x_again) == 1.0


def test_domain_equality_cases():
    registry = _registry()
    assert DOMAIN_EQUALITY(registry.get("x1"), registry.get("x2")) == 1.0
    assert DOMAIN_EQUALITY(registry.get("x1"), registry.get("y1")) == 0.0
    assert DOMAIN_EQUALITY(registry.get("xy"), registry.get("x1")) == 1.0


# ---------------------------------------------------------------------------
# weights and d_web
# ---------------------------------------------------------------------------

def test_self_closeness_is_one():
    registry = _registry()
    weights = WeightVector((("domain_equality", 1.0),))
    assert d_web(registry, "y1", "y1", [DOMAIN_EQUALITY], weights) == 1.0


def test_weighted_average():
    registry = _registry()
    measures = [_constant("m1", 0.5), _constant("m2", 1.0)]
    weights = WeightVector((("m1", 0.6), ("m2", 0.4)))
    assert d_web(registry, "x1", "y1", measures, weights) == pytest.approx(0.7, abs=1e-12)


def test_weights_must_sum_to_one():
    with pytest.raises(InvalidWeightsError):
        WeightVector((("m1", 0.7), ("m2", 0.7)))


def test_unknown_measure_and_location_rejected():
    registry = _registry()
    weights = WeightVector((("nope", 1.0),))
    with pytest.raises(InvalidWeightsError):
        d_web(registry, "x1", "y1", [DOMAIN_EQUALITY], weights)
    with pytest.raises(UnknownLocationError):
        d_web(registry, "x1", "zz", [DOMAIN_EQUALITY], WeightVector((("domain_equality", 1.0),)))


def test_d_web_bounded_symmetric_and_scale_invariant():
    registry = _registry()
    rng = np.random.default_rng(8)
    ids = registry.ids()
    for _ in range(100):
        values = rng.uniform(0, 1, 3)
        measures = [_constant(f"m{i}", v) for i, v in enumerate(values)]
        raw = {f"m{i}": w for i, w in enumerate(rng.uniform(0.1, 2.0, 3))}
        weights = WeightVector.normalized(raw)
        scaled = WeightVector.normalized({k: 7.5 * w for k, w in raw.items()})
        a, b = rng.choice(ids, 2, replace=False)
        value = d_web(registry, a, b, measures, weights)
        assert values.min() - 1e-12 <= value <= values.max() + 1e-12
        assert value == d_web(registry, b, a, measures, weights)
        assert value == pytest.approx(d_web(registry, a, b, measures, scaled), abs=1e-12)


def test_shingle_measure_contract():
    registry = _registry()
    rng = np.random.default_rng(21)
    vocabulary = ["room", "suite", "pool", "spa", "bar", "view", "sea"]
    corpus = ContentCorpus({i: " ".join(rng.choice(vocabulary, 12)) for i in registry.ids()})
    measure = shingle_measure(corpus, 2)
    for a in registry:
        assert measure(a, a) == 1.0
        for b in registry:
            value = measure(a, b)
            assert 0.0 <= value <= 1.0
            assert value == measure(b, a)


def test_missing_content_contributes_zero():
    registry = _registry()
    measure = shingle_measure(ContentCorpus({"x1": "sea view"}), 2)
    assert measure(registry.get("x1"), registry.get("y1")) == 0.0


def test_corpus_from_directory():
    with tempfile.TemporaryDirectory() as tmp:
        Path(tmp, "x1.txt").write_text("sea view room", encoding="utf-8")
        Path(tmp, "y1.txt").write_text("sea view suite", encoding="utf-8")
        corpus = ContentCorpus.from_directory(tmp)
    assert corpus.tokens("x1") == ["sea", "view", "room"]
    assert "y1" in corpus and "x2" not in corpus


# ---------------------------------------------------------------------------
# DistanceTable
# ---------------------------------------------------------------------------

def test_distance_table_caches_and_fills():
    registry = _registry()
    table = DistanceTable(registry, [DOMAIN_EQUALITY], WeightVector((("domain_equality", 1.0),)))
    assert table("x1", "x2") == 1.0
    assert table("x2", "x1") == 1.0
    filled = table.fill()
    assert filled == {("x1", "x2"): 1.0, ("x1", "xy"): 1.0, ("x2", "xy"): 1.0, ("xy", "y1"): 1.0}


def test_explicit_values_and_default_zero():
    registry = _registry()
    table = DistanceTable(registry)
    table.set("x1", "y1", 0.75)
    assert table("y1", "x1") == 0.75
    assert table("x1", "x2") == 0.0
    with pytest.raises(InvalidParameterError):
        table.set("x1", "y1", 1.5)


if __name__ == "__main__":
    sys.exit(run_module_tests(globals(), "similarity.py"))
