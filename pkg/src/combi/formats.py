"""On-disk formats.

CBI1 bitcode file (little-endian)::

    0   4  magic  b"CBI1"
    4   4  u32    format version (1)
    8   8  u64    N, number of codes
    16  4  u32    b, bits per code
    20  4         zero padding so rows start 8-byte aligned
    24            N rows of ceil(b/64) u64 words
                  N u64 sample ids

CGT1 ground-truth cache: magic ``b"CGT1"`` followed, per query, by the
query index (u32), k (u32) and k pairs of (id u64, hd u16).

Vectors are read from CSV (one sample per line) or texmex ``.fvecs``
(per record: i32 dimension, then that many f32).
"""

from __future__ import annotations

import contextlib
import csv
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bitcode import BitDataset, n_words
from .errors import InvalidArgument, InvalidState
from .tree import Neighbor

CBI_MAGIC = b"CBI1"
CBI_VERSION = 1
CBI_HEADER = struct.Struct("<4sIQI4x")
CGT_MAGIC = b"CGT1"
_CGT_REC = struct.Struct("<II")
_GT_PAIR = np.dtype([("id", "<u8"), ("hd", "<u2")])


@contextlib.contextmanager
def atomic_write(path: str | os.PathLike, mode: str = "wb"):
    """Write to a temporary sibling and rename over ``path`` on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def bitcode_file_size(n: int, length: int) -> int:
    return CBI_HEADER.size + n * n_words(length) * 8 + n * 8


def encode_bitcodes(dataset: BitDataset) -> bytes:
    header = CBI_HEADER.pack(CBI_MAGIC, CBI_VERSION, dataset.n, dataset.length)
    return (
        header
        + dataset.words.astype("<u8", copy=False).tobytes()
        + dataset.ids.astype("<u8", copy=False).tobytes()
    )


def decode_bitcodes(raw: bytes, source: str = "<bytes>") -> BitDataset:
    if len(raw) < CBI_HEADER.size:
        raise InvalidState(f"{source}: truncated header")
    magic, version, n, length = CBI_HEADER.unpack_from(raw)
    if magic != CBI_MAGIC:
        raise InvalidState(f"{source}: not a CBI1 file")
    if version != CBI_VERSION:
        raise InvalidState(f"{source}: unsupported version {version}")
    if len(raw) != bitcode_file_size(n, length):
        raise InvalidState(
            f"{source}: size {len(raw)} != {bitcode_file_size(n, length)} expected"
        )
    w = n_words(length)
    off = CBI_HEADER.size
    words = np.frombuffer(raw, dtype="<u8", count=n * w, offset=off).reshape(n, w)
    ids = np.frombuffer(raw, dtype="<u8", count=n, offset=off + n * w * 8)
    try:
        return BitDataset(words.astype(np.uint64), length, ids.astype(np.uint64))
    except InvalidArgument as exc:
        raise InvalidState(f"{source}: {exc}") from exc


def write_bitcodes(dataset: BitDataset, path: str | os.PathLike) -> None:
    with atomic_write(path) as fh:
        fh.write(encode_bitcodes(dataset))


def read_bitcodes(path: str | os.PathLike) -> BitDataset:
    return decode_bitcodes(Path(path).read_bytes(), str(path))


# -- ground truth ------------------------------------------------------------


def write_ground_truth(
    path: str | os.PathLike, results: Sequence[Sequence[Neighbor]]
) -> None:
    with atomic_write(path) as fh:
        fh.write(CGT_MAGIC)
        for q, neighbors in enumerate(results):
            fh.write(_CGT_REC.pack(q, len(neighbors)))
            pairs = np.array([(nb.id, nb.hd) for nb in neighbors], dtype=_GT_PAIR)
            fh.write(pairs.tobytes())


def read_ground_truth(path: str | os.PathLike) -> list[list[Neighbor]]:
    raw = Path(path).read_bytes()
    if raw[:4] != CGT_MAGIC:
        raise InvalidState(f"{path}: not a CGT1 file")
    out: list[list[Neighbor]] = []
    off = 4
    while off < len(raw):
        if off + _CGT_REC.size > len(raw):
            raise InvalidState(f"{path}: truncated record")
        q, k = _CGT_REC.unpack_from(raw, off)
        off += _CGT_REC.size
        end = off + k * _GT_PAIR.itemsize
        if end > len(raw) or q != len(out):
            raise InvalidState(f"{path}: corrupt record for query {q}")
        pairs = np.frombuffer(raw, dtype=_GT_PAIR, count=k, offset=off)
        out.append([Neighbor(int(i), int(h)) for i, h in pairs.tolist()])
        off = end
    return out


# -- vectors -----------------------------------------------------------------


def read_csv_vectors(path: str | os.PathLike) -> np.ndarray:
    rows: list[list[float]] = []
    dim = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise InvalidArgument(f"{path}: row {lineno}: {exc}") from exc
            if dim is None:
                dim = len(vals)
            elif len(vals) != dim:
                raise InvalidArgument(
                    f"{path}: row {lineno} has {len(vals)} values, expected {dim}"
                )
            rows.append(vals)
    if not rows:
        raise InvalidArgument(f"{path}: no vectors")
    return np.array(rows, dtype=np.float64)


def write_csv_vectors(x: np.ndarray, path: str | os.PathLike) -> None:
    with atomic_write(path, "w") as fh:
        np.savetxt(fh, np.asarray(x), delimiter=",", fmt="%.9g")


def read_fvecs(path: str | os.PathLike) -> np.ndarray:
    raw = np.fromfile(path, dtype="<i4")
    if raw.size == 0:
        raise InvalidArgument(f"{path}: no vectors")
    dim = int(raw[0])
    if dim <= 0 or raw.size % (dim + 1):
        raise InvalidArgument(f"{path}: not an fvecs file of dimension {dim}")
    recs = raw.reshape(-1, dim + 1)
    bad = np.flatnonzero(recs[:, 0] != dim)
    if bad.size:
        raise InvalidArgument(f"{path}: row {bad[0] + 1} has dimension {recs[bad[0], 0]}, expected {dim}")
    return recs[:, 1:].copy().view("<f4").astype(np.float64)


def write_fvecs(x: np.ndarray, path: str | os.PathLike) -> None:
    x = np.ascontiguousarray(x, dtype="<f4")
    n, d = x.shape
    recs = np.empty((n, d + 1), dtype="<i4")
    recs[:, 0] = d
    recs[:, 1:] = x.view("<i4")
    with atomic_write(path) as fh:
        fh.write(recs.tobytes())


def read_vectors(path: str | os.PathLike, fmt: str | None = None) -> np.ndarray:
    fmt = fmt or ("fvecs" if str(path).endswith(".fvecs") else "csv")
    if fmt == "fvecs":
        return read_fvecs(path)
    if fmt == "csv":
        return read_csv_vectors(path)
    raise InvalidArgument(f"unknown vector format {fmt!r}")


def write_vectors(x: np.ndarray, path: str | os.PathLike, fmt: str = "csv") -> None:
    if fmt == "fvecs":
        write_fvecs(x, path)
    elif fmt == "csv":
        write_csv_vectors(x, path)
    else:
        raise InvalidArgument(f"unknown vector format {fmt!r}")


def write_jsonl(records: Iterable[dict], path: str | os.PathLike) -> None:
    import json

    with atomic_write(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
