"""
similarity.py — virtual distance between locations

d_web is a weighted average of normalised similarity measures. It is used as
closeness (1 = identical), never inverted. Two measures ship built in:

  shingle_jaccard  — Jaccard overlap of contiguous token shingles of the
                     locations' text corpora (`<location_id>.txt` files)
  domain_equality  — 1 when the locations share a registrable domain

Pairs with no computable measure contribute 0.
"""

from __future__ import annotations

import ipaddress
import math
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

import tldextract

from modules.core_model import LocationRegistry, VirtualLocation, coordinate_host
from modules.errors import InvalidCoordinateError, InvalidParameterError, InvalidWeightsError
from utils.logger import get_logger

logger = get_logger(__name__)

_WEIGHT_TOL = 1e-9
_TOKEN_SPLIT = re.compile(r"[\W_]+", re.UNICODE)

# bundled public-suffix snapshot only; never fetched at runtime
_SUFFIXES = tldextract.TLDExtract(suffix_list_urls=())


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimilarityMeasure:
    name: str
    evaluate: Callable[[VirtualLocation, VirtualLocation], float]

    def __call__(self, a: VirtualLocation, b: VirtualLocation) -> float:
        if a.id == b.id:
            return 1.0
        value = self.evaluate(a, b)
        if value is None or math.isnan(value):
            return 0.0
        return min(1.0, max(0.0, float(value)))


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def shingles(tokens: Sequence[str], shingle_len: int) -> set[tuple[str, ...]]:
    if shingle_len < 1:
        raise InvalidParameterError(f"shingle_len must be ≥ 1, got {shingle_len}.")
    if len(tokens) < shingle_len:
        return {tuple(tokens)} if tokens else set()
    return {tuple(tokens[i:i + shingle_len]) for i in range(len(tokens) - shingle_len + 1)}


def shingle_jaccard(a: Sequence[str], b: Sequence[str], shingle_len: int) -> float:
    """Jaccard overlap of shingle sets; empty vs empty is 1, empty vs non-empty 0."""
    set_a, set_b = shingles(a, shingle_len), shingles(b, shingle_len)
    if not set_a and not set_b:
        return 1.0
    union = set_a | set_b
    return len(set_a & set_b) / len(union)


def registrable_domain(host: str) -> str:
    """
    Registered domain under the public-suffix list (`www.hotel-x.co.uk` ->
    `hotel-x.co.uk`). Hosts on a suffix outside the list keep their last two
    labels; a bare public suffix and IP literals are their own domain.
    """
    host = host.lower().rstrip(".")
    if not host:
        raise InvalidCoordinateError("Empty host.")
    try:
        ipaddress.ip_address(host.strip("[]"))
        return host
    except ValueError:
        pass
    labels = [label for label in host.split(".") if label]
    if labels and labels[0] == "www":
        labels = labels[1:]
    if not labels:
        raise InvalidCoordinateError(f"Unparsable host {host!r}.")
    parts = _SUFFIXES(".".join(labels))
    if parts.suffix:
        return f"{parts.domain}.{parts.suffix}" if parts.domain else parts.suffix
    return ".".join(labels[-2:])


def location_domains(location: VirtualLocation) -> frozenset[str]:
    return frozenset(registrable_domain(coordinate_host(c)) for c in location.coordinates)


def domain_equality(a: VirtualLocation, b: VirtualLocation) -> float:
    return 1.0 if location_domains(a) & location_domains(b) else 0.0


class ContentCorpus:
    """Token streams per location, read from `<location_id>.txt` files."""

    def __init__(self, texts: Optional[Mapping[str, str]] = None):
        self._tokens: dict[str, list[str]] = {k: tokenize(v) for k, v in (texts or {}).items()}

    @classmethod
    def from_directory(cls, directory) -> "ContentCorpus":
        texts = {}
        for path in sorted(Path(directory).glob("*.txt")):
            texts[path.stem] = path.read_text(encoding="utf-8")
        logger.info("Loaded content corpus for %d location(s) from %s.", len(texts), directory)
        return cls(texts)

    def tokens(self, location_id: str) -> Optional[list[str]]:
        return self._tokens.get(location_id)

    def __contains__(self, location_id) -> bool:
        return location_id in self._tokens


def shingle_measure(corpus: ContentCorpus, shingle_len: int = 3) -> SimilarityMeasure:
    if shingle_len < 1:
        raise InvalidParameterError(f"shingle_len must be ≥ 1, got {shingle_len}.")

    def evaluate(a: VirtualLocation, b: VirtualLocation) -> float:
        tokens_a, tokens_b = corpus.tokens(a.id), corpus.tokens(b.id)
        if tokens_a is None or tokens_b is None:
            return 0.0
        return shingle_jaccard(tokens_a, tokens_b, shingle_len)

    return SimilarityMeasure("shingle_jaccard", evaluate)


DOMAIN_EQUALITY = SimilarityMeasure("domain_equality", domain_equality)


def build_measures(names: Iterable[str], corpus: Optional[ContentCorpus] = None,
                   shingle_len: int = 3) -> list[SimilarityMeasure]:
    measures = []
    for name in names:
        if name == "domain_equality":
            measures.append(DOMAIN_EQUALITY)
        elif name == "shingle_jaccard":
            measures.append(shingle_measure(corpus or ContentCorpus(), shingle_len))
        else:
            raise InvalidWeightsError(f"Unknown similarity measure {name!r}.")
    return measures


# ---------------------------------------------------------------------------
# Weights and d_web
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightVector:
    weights: tuple

    def __post_init__(self):
        pairs = tuple((str(name), float(w)) for name, w in self.weights)
        names = [name for name, _ in pairs]
        if len(set(names)) != len(names):
            raise InvalidWeightsError(f"Duplicate measure names in weights: {names}.")
        if any(w < 0 or math.isnan(w) for _, w in pairs):
            raise InvalidWeightsError("Measure weights must be ≥ 0.")
        total = sum(w for _, w in pairs)
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise InvalidWeightsError(f"Measure weights must sum to 1, got {total!r}.")
        object.__setattr__(self, "weights", pairs)

    @classmethod
    def normalized(cls, raw: Mapping[str, float]) -> "WeightVector":
        total = sum(raw.values())
        if total <= 0:
            raise InvalidWeightsError("Weights must have a positive sum to be normalised.")
        return cls(tuple((name, w / total) for name, w in raw.items()))

    def as_dict(self) -> dict[str, float]:
        return dict(self.weights)


def d_web(registry: LocationRegistry, a: str, b: str,
          measures: Sequence[SimilarityMeasure], weights: WeightVector) -> float:
    loc_a, loc_b = registry.get(a), registry.get(b)
    by_name = {m.name: m for m in measures}
    weight_map = weights.as_dict()
    unknown = sorted(set(weight_map) - set(by_name))
    if unknown:
        raise InvalidWeightsError(f"Weights name unknown measure(s): {unknown}.")
    missing = sorted(set(by_name) - set(weight_map))
    if missing:
        raise InvalidWeightsError(f"No weight given for measure(s): {missing}.")
    if a == b:
        return 1.0
    total = sum(w * by_name[name](loc_a, loc_b) for name, w in weights.weights)
    return min(1.0, max(0.0, total))


class DistanceTable:
    """
    Symmetric d_web cache over one registry.

    Values are computed lazily on first request and kept; explicit values set
    with `set()` take precedence. Reads are lock-free, fills are serialised.
    """

    def __init__(self, registry: LocationRegistry,
                 measures: Sequence[SimilarityMeasure] = (),
                 weights: Optional[WeightVector] = None):
        self.registry = registry
        self.measures = list(measures)
        self.weights = weights
        self._cache: dict[tuple[str, str], float] = {}
        self._lock = threading.Lock()
        if self.measures and weights is None:
            raise InvalidWeightsError("Measures were given without a weight vector.")

    @staticmethod
    def _key(a: str, b: str) -> tuple[str, str]:
        return (a, b) if a <= b else (b, a)

    def get(self, a: str, b: str) -> float:
        if a == b:
            self.registry.get(a)
            return 1.0
        key = self._key(a, b)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        with self._lock:
            if key not in self._cache:
                if self.measures:
                    value = d_web(self.registry, a, b, self.measures, self.weights)
                else:
                    self.registry.get(a)
                    self.registry.get(b)
                    value = 0.0
                self._cache[key] = value
            return self._cache[key]

    __call__ = get

    def set(self, a: str, b: str, value: float) -> None:
        if not 0.0 <= value <= 1.0:
            raise InvalidParameterError(f"d_web must lie in [0, 1], got {value}.")
        if a == b and value != 1.0:
            raise InvalidParameterError("d_web of a location with itself is 1.")
        self.registry.get(a)
        self.registry.get(b)
        with self._lock:
            self._cache[self._key(a, b)] = float(value)

    def fill(self) -> dict[tuple[str, str], float]:
        """Compute every registered pair; returns the non-zero entries."""
        ids = self.registry.ids()
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                self.get(a, b)
        return {k: v for k, v in self._cache.items() if v > 0}

    def items(self) -> dict[tuple[str, str], float]:
        return dict(self._cache)
