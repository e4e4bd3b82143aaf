"""MovieLens / CSV ingestion, tag-genome vectors and the item-distance cache."""

from __future__ import annotations

import csv
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import DenseItemMetric, SparseRatings, VectorItemMetric
from .errors import CacheInvalid, ParseError

log = logging.getLogger(__name__)

SCALE = (1.0, 5.0)

ITEM_CACHE_MAGIC = b"PMDC"
ITEM_CACHE_VERSION = 1
MODES = {"arccos": 0, "one-minus": 1}
_HEADER = struct.Struct("<4sIBI")


# --- ratings ----------------------------------------------------------------

def _finish(users, items, ratings, scale, numeric, label_order=None):
    if numeric:
        user_ids = sorted(set(users))
        item_ids = sorted(set(items))
    else:
        user_ids, item_ids = label_order
    uidx = {u: k for k, u in enumerate(user_ids)}
    iidx = {i: k for k, i in enumerate(item_ids)}
    return SparseRatings([uidx[u] for u in users], [iidx[i] for i in items], ratings,
                         num_users=len(user_ids), num_items=len(item_ids), scale=scale,
                         user_labels=user_ids, item_labels=item_ids)


def _rating(text, scale, lineno, path):
    try:
        r = float(text)
    except ValueError:
        raise ParseError(f"bad rating {text!r}", lineno, path) from None
    if not scale[0] <= r <= scale[1]:
        raise ParseError(f"rating {r:g} outside scale {scale[0]:g}-{scale[1]:g}", lineno, path)
    return r


def _parse_delimited(path, sep, scale):
    users, items, ratings = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split(sep)
            if len(parts) != 4:
                raise ParseError(f"expected 4 fields separated by {sep!r}, got {len(parts)}",
                                 lineno, path)
            try:
                u, i = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError("user and item ids must be integers", lineno, path) from None
            users.append(u)
            items.append(i)
            ratings.append(_rating(parts[2], scale, lineno, path))
    return _finish(users, items, ratings, scale, numeric=True)


def parse_ml100k(path, scale=SCALE) -> SparseRatings:
    """``u.data``: ``user<TAB>item<TAB>rating<TAB>timestamp`` per line."""
    return _parse_delimited(path, "\t", scale)


def parse_ml1m(path, scale=SCALE) -> SparseRatings:
    """``ratings.dat``: ``UserID::MovieID::Rating::Timestamp`` per line."""
    return _parse_delimited(path, "::", scale)


def parse_csv(path, scale=SCALE) -> SparseRatings:
    """Generic ``user,item,rating`` rows with an optional header line.

    Labels may be arbitrary strings; dense ids follow first appearance.
    """
    users, items, ratings = [], [], []
    user_order, item_order = {}, {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 3:
                raise ParseError(f"expected user,item,rating, got {len(row)} fields",
                                 lineno, path)
            u, i = row[0].strip(), row[1].strip()
            if lineno == 1:
                try:
                    float(row[2])
                except ValueError:
                    continue  # header
            r = _rating(row[2].strip(), scale, lineno, path)
            user_order.setdefault(u, len(user_order))
            item_order.setdefault(i, len(item_order))
            users.append(u)
            items.append(i)
            ratings.append(r)
    return _finish(users, items, ratings, scale, numeric=False,
                   label_order=(list(user_order), list(item_order)))


PARSERS = {"ml-100k": parse_ml100k, "ml-1m": parse_ml1m, "csv": parse_csv}


@dataclass
class DatasetManifest:
    """Where a dataset came from and how its raw ids map to dense indices."""

    name: str
    ratings_path: str
    genome_path: Optional[str] = None
    user_ids: list = field(default_factory=list)
    item_ids: list = field(default_factory=list)
    scale: tuple = SCALE

    def __post_init__(self):
        if self.name not in PARSERS:
            raise ValueError(f"unknown dataset {self.name!r}; choose from {sorted(PARSERS)}")
        if len(set(map(str, self.user_ids))) != len(self.user_ids):
            raise ValueError("user remap is not one-to-one")
        if len(set(map(str, self.item_ids))) != len(self.item_ids):
            raise ValueError("item remap is not one-to-one")

    def user_index(self, raw) -> int:
        return [str(u) for u in self.user_ids].index(str(raw))

    def item_index(self, raw) -> int:
        return [str(i) for i in self.item_ids].index(str(raw))


def load_dataset(name, ratings_path, genome_path=None, scale=SCALE):
    """Parse a ratings file and return ``(ratings, manifest)``."""
    if name not in PARSERS:
        raise ValueError(f"unknown dataset {name!r}; choose from {sorted(PARSERS)}")
    ratings = PARSERS[name](ratings_path, scale=scale)
    manifest = DatasetManifest(name, str(ratings_path), genome_path,
                               list(ratings.user_labels), list(ratings.item_labels), scale)
    return ratings, manifest


# --- tag genome ---------------------------------------------------------------

def load_tag_genome(path, item_labels):
    """Relevance vectors for the given movies from ``movieId,tagId,relevance`` rows.

    Returns ``(vectors, missing)``: one row per entry of ``item_labels`` over
    the tag universe ``1..max tagId``, and a flag for movies with no rows.
    Movies not listed in ``item_labels`` are skipped.
    """
    index = {str(lab): k for k, lab in enumerate(item_labels)}
    rows, tags, vals = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, 1):
            if not row:
                continue
            if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
                continue
            if len(row) != 3:
                raise ParseError(f"expected movieId,tagId,relevance, got {len(row)} fields",
                                 lineno, path)
            try:
                tag = int(row[1])
                rel = float(row[2])
            except ValueError:
                raise ParseError("tagId must be an integer and relevance a number",
                                 lineno, path) from None
            if not 0.0 <= rel <= 1.0:
                raise ParseError(f"relevance {rel} outside [0, 1]", lineno, path)
            if tag < 1:
                raise ParseError(f"tagId {tag} must be positive", lineno, path)
            k = index.get(row[0].strip())
            if k is None:
                continue
            rows.append(k)
            tags.append(tag - 1)
            vals.append(rel)
    n_tags = max(tags) + 1 if tags else 0
    vectors = np.zeros((len(item_labels), n_tags))
    rows = np.asarray(rows, np.int64)
    tags = np.asarray(tags, np.int64)
    key = rows * max(n_tags, 1) + tags
    _, last = np.unique(key[::-1], return_index=True)
    keep = len(key) - 1 - last
    if len(keep) != len(key):
        log.warning("tag genome: %d duplicate (movie, tag) rows, keeping the last",
                    len(key) - len(keep))
    vectors[rows[keep], tags[keep]] = np.asarray(vals)[keep]
    missing = np.ones(len(item_labels), bool)
    missing[rows] = False
    return vectors, missing


# --- item metric and its cache ------------------------------------------------

def _tri_index(n):
    return np.tril_indices(n, -1)


def write_triangle(path, magic, version, mode, matrix, dtype):
    """Header (magic, version, mode byte, count) then the strict lower triangle."""
    n = matrix.shape[0]
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(magic, version, mode, n))
        fh.write(np.ascontiguousarray(matrix[_tri_index(n)], dtype=np.dtype(dtype).newbyteorder("<")).tobytes())
    os.replace(tmp, path)


def read_triangle(path, magic, version, mode, n, dtype) -> np.ndarray:
    """Inverse of :func:`write_triangle`; any mismatch raises :class:`CacheInvalid`."""
    dt = np.dtype(dtype).newbyteorder("<")
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise CacheInvalid(f"{path}: truncated header")
        got_magic, got_version, got_mode, got_n = _HEADER.unpack(head)
        if got_magic != magic:
            raise CacheInvalid(f"{path}: bad magic {got_magic!r}")
        if got_version != version:
            raise CacheInvalid(f"{path}: format version {got_version}, expected {version}")
        if got_mode != mode:
            raise CacheInvalid(f"{path}: mode byte {got_mode}, expected {mode}")
        if got_n != n:
            raise CacheInvalid(f"{path}: {got_n} entries, expected {n}")
        body = fh.read()
    count = n * (n - 1) // 2
    if len(body) != count * dt.itemsize:
        raise CacheInvalid(f"{path}: payload is {len(body)} bytes, expected {count * dt.itemsize}")
    tri = np.frombuffer(body, dtype=dt).astype(np.float64)
    out = np.zeros((n, n))
    i, j = _tri_index(n)
    out[i, j] = tri
    out[j, i] = tri
    return out


def _stored(table, d_max):
    # the in-memory table always carries float32 rounding, cached or not
    return np.minimum(table.astype(np.float32).astype(np.float64), d_max)


def build_item_metric(vectors, mode="arccos", missing=None, cache_path=None) -> DenseItemMetric:
    """Item distances from nonnegative feature vectors, optionally cached on disk.

    Items flagged ``missing`` (or with an all-zero vector) sit at ``d_max``
    from every other item. A cache that fails validation is rebuilt.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.size and vectors.min() < 0:
        raise ValueError("tag-genome vectors must be nonnegative")
    source = VectorItemMetric(vectors, mode=mode, missing=missing)
    n = source.n_items
    n_missing = int(source.missing.sum())
    if n_missing:
        log.info("%d of %d items have no genome vector; they sit at d_max", n_missing, n)
    table = None
    if cache_path and os.path.exists(cache_path):
        try:
            table = read_triangle(cache_path, ITEM_CACHE_MAGIC, ITEM_CACHE_VERSION,
                                  MODES[mode], n, np.float32)
        except CacheInvalid as exc:
            log.warning("rebuilding item-distance cache: %s", exc)
    if table is None:
        table = source.dense()
        if cache_path:
            write_triangle(cache_path, ITEM_CACHE_MAGIC, ITEM_CACHE_VERSION, MODES[mode],
                           table, np.float32)
    return DenseItemMetric(_stored(table, source.d_max), d_max=source.d_max,
                           is_metric=source.is_metric, mode=mode, missing=source.missing)


def load_similarity_csv(path):
    """Square item-similarity table: header ``item,<label>...`` then one row per label."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ParseError("empty similarity table", None, path)
    labels = [c.strip() for c in rows[0][1:]]
    if [r[0].strip() for r in rows[1:]] != labels:
        raise ParseError("row labels must repeat the header labels in order", None, path)
    try:
        sim = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    except ValueError as exc:
        raise ParseError(f"non-numeric similarity: {exc}", None, path) from None
    if sim.shape != (len(labels), len(labels)):
        raise ParseError("similarity table is not square", None, path)
    return labels, sim
