"""Workload featurization: query window -> fixed 10-dim context vector.

Layout of the context vector:
  dims 0-5  hashed-token query embedding, averaged over the window
  dim  6    query arrival rate, rescaled into [0,1]
  dims 7-9  optimizer statistics: log-cardinality, filter ratio, index usage

The query encoder is a deterministic seeded-hash random projection; it is the
swappable stand-in for a learned sequence encoder and only needs to map
similar query mixes to nearby vectors.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

CONTEXT_DIM = 10
EMBED_DIM = 6
DEFAULT_EMBED_SEED = 1

_TOKEN_RE = re.compile(r"[a-z0-9_]+")


class FeaturizeError(ValueError):
    pass


@dataclass(frozen=True)
class QueryEvent:
    text: str
    arrival_time: float

    def __post_init__(self) -> None:
        if not self.text:
            raise FeaturizeError("empty query text")


@dataclass(frozen=True)
class OptimizerStats:
    rows_examined_est: float
    filter_pct: float
    index_used: int

    def __post_init__(self) -> None:
        if self.rows_examined_est < 0:
            raise FeaturizeError("rows_examined_est must be nonnegative")
        if not 0.0 <= self.filter_pct <= 100.0:
            raise FeaturizeError("filter_pct must lie in [0,100]")
        if self.index_used not in (0, 1):
            raise FeaturizeError("index_used must be 0 or 1")


@dataclass(frozen=True)
class Context:
    """Fixed-length environment feature vector."""

    vector: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vector, dtype=float)
        if v.shape != (CONTEXT_DIM,):
            raise FeaturizeError(f"context must have {CONTEXT_DIM} dims, got {v.shape}")
        object.__setattr__(self, "vector", v)


@dataclass(frozen=True)
class FeaturizeParams:
    """Rescaling constants; the raw quantities have no natural [0,1] range."""

    max_rate: float = 50.0  # queries/second mapped to dim-6 == 1.0
    max_rows: float = 1e6  # rows_examined_est mapped to dim-7 == 1.0
    embed_seed: int = DEFAULT_EMBED_SEED


def _token_vector(token: str, seed: int) -> np.ndarray:
    coords = np.empty(EMBED_DIM)
    for i in range(EMBED_DIM):
        digest = hashlib.sha256(f"{seed}|{token}|{i}".encode("utf-8")).digest()
        coords[i] = int.from_bytes(digest[:8], "big") / 2.0**64
    norm = float(np.linalg.norm(coords))
    return coords / norm if norm > 0 else coords


def embed_query(text: str, seed: int = DEFAULT_EMBED_SEED) -> np.ndarray:
    """Deterministic 6-dim unit embedding of one SQL text.

    Tokenizes on whitespace/punctuation, lowercases, hashes each token to a
    fixed pseudo-random unit vector, averages, then L2-normalizes (an
    all-zero mean stays zero).
    """
    if not text:
        raise FeaturizeError("empty query text")
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        return np.zeros(EMBED_DIM)
    acc = np.zeros(EMBED_DIM)
    for t in tokens:
        acc += _token_vector(t, seed)
    mean = acc / len(tokens)
    norm = float(np.linalg.norm(mean))
    return mean / norm if norm > 0 else mean


def featurize_window(
    queries: Sequence[QueryEvent],
    stats: Sequence[OptimizerStats],
    window_seconds: float,
    params: FeaturizeParams = FeaturizeParams(),
) -> Context:
    """Aggregate one tuning interval's queries into a context vector.

    Raises on an empty window: the caller is expected to reuse the previous
    context when the system was idle.
    """
    if not queries:
        raise FeaturizeError("empty query window")
    if len(queries) != len(stats):
        raise FeaturizeError("queries and stats must align one-to-one")
    if window_seconds <= 0:
        raise FeaturizeError("window_seconds must be positive")

    emb = np.zeros(EMBED_DIM)
    for q in queries:
        emb += embed_query(q.text, params.embed_seed)
    emb /= len(queries)

    rate = len(queries) / window_seconds
    rate_dim = min(1.0, rate / params.max_rate)

    log_rows = np.array([np.log1p(s.rows_examined_est) for s in stats])
    rows_dim = float(np.mean(np.minimum(1.0, log_rows / np.log1p(params.max_rows))))
    filter_dim = float(np.mean([s.filter_pct / 100.0 for s in stats]))
    index_dim = float(np.mean([s.index_used for s in stats]))

    vec = np.concatenate([emb, [rate_dim, rows_dim, filter_dim, index_dim]])
    return Context(vec)


# --- Trace file format -------------------------------------------------------
#
# Line-delimited JSON, one query event per line:
#   {"timestamp": float, "sql": str, "rows_examined_est": float,
#    "filter_pct": float, "index_used": 0|1}
# Iteration membership is derived from the timestamp: iteration t covers
# [t*window_seconds, (t+1)*window_seconds).


def write_trace(path: str, events: Iterable[tuple[QueryEvent, OptimizerStats]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q, s in events:
            fh.write(
                json.dumps(
                    {
                        "timestamp": q.arrival_time,
                        "sql": q.text,
                        "rows_examined_est": s.rows_examined_est,
                        "filter_pct": s.filter_pct,
                        "index_used": s.index_used,
                    }
                )
            )
            fh.write("\n")


def read_trace(path: str) -> list[tuple[QueryEvent, OptimizerStats]]:
    out: list[tuple[QueryEvent, OptimizerStats]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out.append(
                (
                    QueryEvent(text=rec["sql"], arrival_time=float(rec["timestamp"])),
                    OptimizerStats(
                        rows_examined_est=float(rec["rows_examined_est"]),
                        filter_pct=float(rec["filter_pct"]),
                        index_used=int(rec["index_used"]),
                    ),
                )
            )
    return out


def group_by_iteration(
    events: Sequence[tuple[QueryEvent, OptimizerStats]], window_seconds: float

) -> dict[int, list[tuple[QueryEvent, OptimizerStats]]]:
    groups: dict[int, list[tuple[QueryEvent, OptimizerStats]]] = {}
    for q, s in events:
        t = int(q.arrival_time // window_seconds)
        groups.setdefault(t, []).append((q, s))
    return groups
