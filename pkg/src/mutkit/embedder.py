"""Code-to-vector embedding backends and a brute-force nearest-neighbor index.

The default backend is a deterministic lexical embedder: code is tokenized,
token trigrams are hashed into a fixed number of buckets, and the vector is
the raw bucket-count histogram.  Hashing uses BLAKE2, so vectors are stable
across processes and platforms.  A remote HTTP embedding service can be
plugged in instead; every index records which backend produced it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import struct
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_DIMENSION = 512
METRICS = ("euclidean", "cosine", "dot")

_BOUNDARY = "\x02"
_SEPARATOR = "\x1f"

_TOKEN_RE = re.compile(
    r"[A-Za-z_$][A-Za-z0-9_$]*"
    r"|\d+(?:\.\d+)?"
    r"|==|!=|<=|>=|&&|\|\||\+\+|--|->|::|<<|>>>|>>|\+=|-=|\*=|/=|%=|&=|\|=|\^="
    r"|[^\sA-Za-z0-9_]"
)

_MAGIC = b"MKIX"
_FORMAT_VERSION = 1


class EmbeddingError(Exception):
    """Raised for unembeddable inputs or backend mismatches."""


class IndexFormatError(Exception):
    """Raised when an index file is truncated, corrupt, or wrong-version."""


class RemoteEmbeddingError(EmbeddingError):
    """Raised when a remote embedding service fails or misbehaves."""


def tokenize(code: str) -> list[str]:
    """Split code into identifiers, numbers, and operator tokens."""
    return _TOKEN_RE.findall(code)


@dataclass(frozen=True)
class CodeEmbedding:
    """A dense vector plus the id of the backend that produced it."""

    values: np.ndarray
    backend_id: str

    @property
    def dimension(self) -> int:
        return int(self.values.shape[0])


def _bucket(trigram: tuple[str, str, str], dimension: int) -> int:
    digest = hashlib.blake2b(_SEPARATOR.join(trigram).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dimension


class LexicalEmbedder:
    """Deterministic hashed token-trigram embedder."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        if dimension < 1:
            raise EmbeddingError(f"dimension must be positive, got {dimension}")
        self.dimension = dimension
        self.backend_id = f"lexical-trigram-{dimension}"

    def embed(self, code: str) -> CodeEmbedding:
        """Embed one code snippet as a trigram-count histogram.

        Token sequences are padded with boundary sentinels on both sides, so
        inputs with fewer than three tokens still produce trigrams.  Raises
        EmbeddingError for empty or whitespace-only input.
        """
        if not code or not code.strip():
            raise EmbeddingError("cannot embed empty code")
        tokens = [_BOUNDARY, _BOUNDARY] + tokenize(code) + [_BOUNDARY, _BOUNDARY]
        values = np.zeros(self.dimension, dtype=np.float32)
        for i in range(len(tokens) - 2):
            values[_bucket((tokens[i], tokens[i + 1], tokens[i + 2]), self.dimension)] += 1.0
        return CodeEmbedding(values=values, backend_id=self.backend_id)

    def embed_batch(self, codes: list[str]) -> list[CodeEmbedding]:
        return [self.embed(code) for code in codes]


class RemoteEmbedder:
    """Client for an HTTP embedding service (POST {"texts": [...]}).

    The service must reply with {"vectors": [[...], ...]} where every vector
    has the configured dimension.  ``transport`` is injectable for tests and
    defaults to requests.post.
    """

    def __init__(self, endpoint: str, dimension: int, backend_id: str | None = None,
                 batch_size: int = 64, timeout: float = 30.0, transport=None):
        if dimension < 1:
            raise EmbeddingError(f"dimension must be positive, got {dimension}")
        self.endpoint = endpoint
        self.dimension = dimension
        self.backend_id = backend_id or f"remote-{dimension}"
        self.batch_size = batch_size
        self.timeout = timeout
        self._transport = transport or self._http_post

    @staticmethod
    def _http_post(endpoint: str, payload: dict, timeout: float) -> dict:
        import requests

        try:
            reply = requests.post(endpoint, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            raise RemoteEmbeddingError(f"embedding service unreachable: {exc}") from exc
        if reply.status_code != 200:
            raise RemoteEmbeddingError(f"embedding service returned HTTP {reply.status_code}")
        return reply.json()

    def embed_batch(self, codes: list[str]) -> list[CodeEmbedding]:
        for code in codes:
            if not code or not code.strip():
                raise EmbeddingError("cannot embed empty code")
        out: list[CodeEmbedding] = []
        for start in range(0, len(codes), self.batch_size):
            batch = codes[start:start + self.batch_size]
            reply = self._transport(self.endpoint, {"texts": batch}, self.timeout)
            vectors = reply.get("vectors") if isinstance(reply, dict) else None
            if not isinstance(vectors, list) or len(vectors) != len(batch):
                raise RemoteEmbeddingError("malformed embedding service reply")
            for vector in vectors:
                values = np.asarray(vector, dtype=np.float32)
                if values.shape != (self.dimension,):
                    raise RemoteEmbeddingError(
                        f"expected dimension {self.dimension}, got {values.shape}")
                out.append(CodeEmbedding(values=values, backend_id=self.backend_id))
        return out

    def embed(self, code: str) -> CodeEmbedding:
        return self.embed_batch([code])[0]


def _as_vector(probe, dimension: int) -> np.ndarray:
    values = probe.values if isinstance(probe, CodeEmbedding) else np.asarray(probe, dtype=np.float32)
    if values.shape != (dimension,):
        raise EmbeddingError(f"probe dimension {values.shape} does not match index ({dimension})")
    if not np.all(np.isfinite(values)):
        raise EmbeddingError("probe vector contains non-finite values")
    return values.astype(np.float32)


class VectorIndex:
    """Exact nearest-neighbor index with linear scan over stored vectors.

    Vectors are stored unnormalized; the cosine metric normalizes at query
    time.  Ranking ties are broken by ascending entry id, so results do not
    depend on insertion order.
    """

    def __init__(self, dimension: int, metric: str = "euclidean",
                 backend_id: str = ""):
        if metric not in METRICS:
            raise EmbeddingError(f"unknown metric {metric!r}; expected one of {METRICS}")
        self.dimension = dimension
        self.metric = metric
        self.backend_id = backend_id
        self.ids: list[str] = []
        self._vectors: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self.ids)

    def add(self, entry_id: str, embedding: CodeEmbedding) -> None:
        if self.backend_id and embedding.backend_id != self.backend_id:
            raise EmbeddingError(
                f"backend mismatch: index built with {self.backend_id!r}, "
                f"got {embedding.backend_id!r}")
        if not self.backend_id:
            self.backend_id = embedding.backend_id
        values = _as_vector(embedding, self.dimension)
        if entry_id in set(self.ids):
            raise EmbeddingError(f"duplicate index entry id {entry_id!r}")
        self.ids.append(entry_id)
        self._vectors.append(values)

    def matrix(self) -> np.ndarray:
        if not self._vectors:
            return np.zeros((0, self.dimension), dtype=np.float32)
        return np.stack(self._vectors)

    def query(self, probe, n: int) -> list[tuple[str, float]]:
        """Return the top-n entries for a probe embedding.

        Euclidean scores are distances (ascending is better); cosine and dot
        scores are similarities (descending is better).
        """
        if n < 1:
            raise EmbeddingError(f"n must be positive, got {n}")
        if not self.ids:
            raise EmbeddingError("cannot query an empty index")
        vector = _as_vector(probe, self.dimension)
        stored = self.matrix()
        if self.metric == "euclidean":
            scores = np.linalg.norm(stored - vector, axis=1)
            ascending = True
        elif self.metric == "dot":
            scores = stored @ vector
            ascending = False
        else:
            norms = np.linalg.norm(stored, axis=1)
            probe_norm = float(np.linalg.norm(vector))
            with np.errstate(invalid="ignore", divide="ignore"):
                scores = (stored @ vector) / (norms * probe_norm)
            scores = np.where((norms == 0) | (probe_norm == 0), 0.0, scores)
            ascending = False
        order = sorted(
            range(len(self.ids)),
            key=lambda i: ((scores[i] if ascending else -scores[i]), self.ids[i]),
        )
        return [(self.ids[i], float(scores[i])) for i in order[:n]]

    def save(self, path: str) -> None:
        """Write the index in the binary format (little-endian float32 records)."""
        metric_bytes = self.metric.encode("utf-8")
        backend_bytes = self.backend_id.encode("utf-8")
        with open(path, "wb") as handle:
            handle.write(_MAGIC)
            handle.write(struct.pack("<IIB", _FORMAT_VERSION, self.dimension, len(metric_bytes)))
            handle.write(metric_bytes)
            handle.write(struct.pack("<H", len(backend_bytes)))
            handle.write(backend_bytes)
            handle.write(struct.pack("<I", len(self.ids)))
            for entry_id, values in zip(self.ids, self._vectors):
                id_bytes = entry_id.encode("utf-8")
                handle.write(struct.pack("<H", len(id_bytes)))
                handle.write(id_bytes)
                handle.write(values.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str) -> "VectorIndex":
        try:
            with open(path, "rb") as handle:
                data = handle.read()
        except OSError as exc:
            raise IndexFormatError(f"cannot read index file {path}: {exc}") from exc
        view = memoryview(data)
        try:
            if bytes(view[:4]) != _MAGIC:
                raise IndexFormatError(f"{path} is not an index file (bad magic)")
            offset = 4
            version, dimension, metric_len = struct.unpack_from("<IIB", view, offset)
            offset += struct.calcsize("<IIB")
            if version != _FORMAT_VERSION:
                raise IndexFormatError(f"unsupported index version {version}")
            metric = bytes(view[offset:offset + metric_len]).decode("utf-8")
            offset += metric_len
            (backend_len,) = struct.unpack_from("<H", view, offset)
            offset += 2
            backend_id = bytes(view[offset:offset + backend_len]).decode("utf-8")
            offset += backend_len
            (count,) = struct.unpack_from("<I", view, offset)
            offset += 4
            index = cls(dimension=dimension, metric=metric, backend_id=backend_id)
            for _ in range(count):
                (id_len,) = struct.unpack_from("<H", view, offset)
                offset += 2
                entry_id = bytes(view[offset:offset + id_len]).decode("utf-8")
                offset += id_len
                vector_bytes = bytes(view[offset:offset + 4 * dimension])
                if len(vector_bytes) != 4 * dimension:
                    raise IndexFormatError(f"{path} is truncated")
                offset += 4 * dimension
                values = np.frombuffer(vector_bytes, dtype="<f4").copy()
                index.ids.append(entry_id)
                index._vectors.append(values)
            if offset != len(data):
                raise IndexFormatError(f"{path} has trailing bytes")
        except struct.error as exc:
            raise IndexFormatError(f"{path} is truncated: {exc}") from exc
        return index


def build_index(corpus, backend=None, metric: str = "euclidean",
                key_side: str = "post_fix") -> VectorIndex:
    """Embed one side of every corpus pair and assemble an index.

    Args:
        corpus: an ingested Corpus (or any iterable of BugFixPair).
        backend: embedding backend; defaults to LexicalEmbedder().
        metric: euclidean, cosine, or dot.
        key_side: which text each pair is keyed on, post_fix (default)
            or pre_fix.

    Returns:
        A VectorIndex with one entry per pair, keyed by pair id.
    """
    if key_side not in ("post_fix", "pre_fix"):
        raise EmbeddingError(f"key_side must be post_fix or pre_fix, got {key_side!r}")
    backend = backend or LexicalEmbedder()
    index = VectorIndex(dimension=backend.dimension, metric=metric,
                        backend_id=backend.backend_id)
    for pair in corpus:
        text = pair.post_fix_code if key_side == "post_fix" else pair.pre_fix_code
        index.add(pair.id, backend.embed(text))
    logger.info("built %s index with %d entries (metric=%s)",
                index.backend_id, len(index), metric)
    return index


def describe_index(index: VectorIndex) -> dict:
    """Small JSON-friendly summary of an index (for CLI output)."""
    return {
        "entries": len(index),
        "dimension": index.dimension,
        "metric": index.metric,
        "backend_id": index.backend_id,
    }


def dumps_neighbors(neighbors: list[tuple[str, float]]) -> str:
    return json.dumps([{"id": i, "score": s} for i, s in neighbors], indent=2)
