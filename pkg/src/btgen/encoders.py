"""Text encoders producing fixed-dimension embedding vectors.

Three implementations share the ``TextEncoder`` protocol:

* ``TrigramEncoder`` -- hashed character trigrams, offline and dependency free.
* ``ReferenceEncoder`` -- a hand-authored lexical feature table shipped with
  the package. Words map to weights on named semantic axes; a phrase is the
  normalized sum of its known words. Used by tests and the offline demo.
* ``SentenceTransformerEncoder`` -- wraps a sentence-transformers model when
  one is available locally.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from collections.abc import Iterable
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import EncoderFailure

DEFAULT_DIM = 512


@runtime_checkable
class TextEncoder(Protocol):
    name: str
    dim: int

    def encode(self, text: str) -> np.ndarray: ...


def fingerprint(encoder: TextEncoder) -> str:
    return f"{encoder.name}:{encoder.dim}"


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def _basis(dim: int, index: int = 0) -> np.ndarray:
    vec = np.zeros(dim)
    vec[index] = 1.0
    return vec


def fallback_encode(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Hashed bag of character trigrams, unit-normalized.

    Words are lowercased and padded with a space on each side before
    trigrams are taken. Buckets come from a stable hash (blake2b), so
    vectors are identical across processes. Empty input gives the first
    basis vector.
    """
    words = re.findall(r"\w+", text.lower())
    if not words:
        return _basis(dim)
    vec = np.zeros(dim)
    for word in words:
        padded = f" {word} "
        for i in range(len(padded) - 2):
            digest = hashlib.blake2b(padded[i:i + 3].encode(), digest_size=8).digest()
            bucket = int.from_bytes(digest, "little")
            sign = 1.0 if bucket & (1 << 63) == 0 else -1.0
            vec[bucket % dim] += sign
    if not vec.any():
        return _basis(dim)
    return _unit(vec)


class TrigramEncoder:
    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim
        self.name = "trigram-hash-v1"

    def encode(self, text: str) -> np.ndarray:
        return fallback_encode(text, self.dim)


class ReferenceEncoder:
    """Lexical feature encoder backed by a JSON table.

    The table has ``axes`` (names of the vector dimensions; the first is
    reserved for text with no known word) and ``lexicon`` mapping each word
    to ``{axis: weight}``.
    """

    def __init__(self, axes: list[str], lexicon: dict[str, dict[str, float]], name: str = "reference-lexicon-v1"):
        if not axes or axes[0] != "unknown":
            raise ValueError("first axis must be 'unknown'")
        self.axes = list(axes)
        self.dim = len(axes)
        self.name = name
        index = {a: i for i, a in enumerate(axes)}
        self._vectors: dict[str, np.ndarray] = {}
        for word, weights in lexicon.items():
            vec = np.zeros(self.dim)
            for axis, w in weights.items():
                if axis not in index:
                    raise ValueError(f"lexicon entry {word!r} uses unknown axis {axis!r}")
                vec[index[axis]] = w
            self._vectors[word.lower()] = vec

    @classmethod
    def from_file(cls, path: str | Path) -> ReferenceEncoder:
        data = json.loads(Path(path).read_text())
        return cls(data["axes"], data["lexicon"], data.get("name", "reference-lexicon-v1"))

    @classmethod
    def default(cls) -> ReferenceEncoder:
        from .resources import data_path

        return cls.from_file(data_path("reference_lexicon.json"))

    def lookup(self, word: str) -> np.ndarray | None:
        word = word.lower()
        for candidate in (word, word[:-2] if word.endswith("es") else None, word[:-1] if word.endswith("s") else None):
            if candidate and candidate in self._vectors:
                return self._vectors[candidate]
        return None

    def known(self, word: str) -> bool:
        return self.lookup(word) is not None

    def encode(self, text: str) -> np.ndarray:
        total = np.zeros(self.dim)
        for word in re.findall(r"[a-z]+", text.lower()):
            vec = self.lookup(word)
            if vec is not None:
                total += vec
        if not total.any():
            return _basis(self.dim)
        return _unit(total)


class SentenceTransformerEncoder:
    def __init__(self, model_name: str = "all-MiniLM-L6-v2"):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise EncoderFailure("sentence-transformers is not installed") from exc
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:  # pragma: no cover - needs model files
            raise EncoderFailure(f"cannot load {model_name}: {exc}") from exc
        self.name = f"st:{model_name}"
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, text: str) -> np.ndarray:  # pragma: no cover - needs model files
        return np.asarray(self._model.encode(text), dtype=float)


class CachedEncoder:
    """Memoizes another encoder by exact input string.

    Reads are lock-free dict lookups; the lock only serializes inserts.
    """

    def __init__(self, inner: TextEncoder):
        self.inner = inner
        self.name = inner.name
        self.dim = inner.dim
        self.calls = 0
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def encode(self, text: str) -> np.ndarray:
        hit = self._cache.get(text)
        if hit is not None:
            return hit
        try:
            vec = np.asarray(self.inner.encode(text), dtype=float)
        except EncoderFailure:
            raise
        except Exception as exc:
            raise EncoderFailure(f"{self.name} failed on {text!r}: {exc}") from exc
        if vec.shape != (self.dim,) or not np.all(np.isfinite(vec)):
            raise EncoderFailure(f"{self.name} returned a malformed vector for {text!r}")
        with self._lock:
            self.calls += 1
            self._cache.setdefault(text, vec)
        return self._cache[text]

    def encode_many(self, texts: Iterable[str]) -> list[np.ndarray]:
        return [self.encode(t) for t in texts]


def get_encoder(spec: str) -> TextEncoder:
    """Build an encoder from a CLI name: ``reference``, ``trigram`` or ``st:<model>``."""
    if spec == "reference":
        return CachedEncoder(ReferenceEncoder.default())
    if spec == "trigram":
        return CachedEncoder(TrigramEncoder())
    if spec.startswith("st:"):
        return CachedEncoder(SentenceTransformerEncoder(spec[3:]))
    path = Path(spec)
    if path.suffix == ".json" and path.exists():
        return CachedEncoder(ReferenceEncoder.from_file(path))
    raise ValueError(f"unknown encoder {spec!r}")
