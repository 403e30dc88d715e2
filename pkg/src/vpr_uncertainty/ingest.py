"""Readers and writers for descriptor, pose and score files.

Binary descriptor layout (all little-endian)::

    magic    8 bytes   b"VPRDESC1"
    count    uint64    N
    dim      uint32    D
    ids      N x (uint32 byte length + UTF-8 bytes)
    payload  N*D float32, row-major

Text files are UTF-8 CSV with ``,`` separators and LF line endings. Descriptor
text rows are ``id,v1,...,vD``; pose rows are ``id,x,y[,z]``; score files carry
a ``query_id,score`` header. A leading row whose first field is ``id`` is
treated as a header in descriptor and pose files.
"""

from __future__ import annotations

import enum
import logging
import math
import struct
from pathlib import Path

import numpy as np

from .core import DescriptorSet, MethodKind, PoseSet, UncertaintyRecord
from .errors import BadMagic, DuplicateQueryId, MixedDimensions, ParseError, TruncatedPayload

log = logging.getLogger(__name__)

MAGIC = b"VPRDESC1"
TEXT_SUFFIXES = {".csv", ".txt"}

_HEADER = struct.Struct("<8sQI")
_LEN = struct.Struct("<I")


class Polarity(str, enum.Enum):
    UNCERTAINTY = "uncertainty"
    CONFIDENCE = "confidence"


def _is_text(path: Path, fmt: str) -> bool:
    if fmt == "auto":
        return path.suffix.lower() in TEXT_SUFFIXES
    if fmt not in ("binary", "text"):
        raise ValueError(f"unknown descriptor format {fmt!r}")
    return fmt == "text"


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _read_rows(path: Path) -> list[tuple[int, list[str]]]:
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 ({exc})", str(path)) from None
    rows = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        rows.append((lineno, [field.strip() for field in line.split(",")]))
    return rows


def _parse_float(token: str, path: Path, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"cannot parse {token!r} as a number", str(path), lineno) from None


def save_descriptors(path, descriptors: DescriptorSet, fmt: str = "auto") -> None:
    path = Path(path)
    if _is_text(path, fmt):
        lines = [",".join([ident, *(_fmt_float(v) for v in row)])
                 for ident, row in zip(descriptors.ids, descriptors.values.astype(np.float32))]
        path.write_bytes(("\n".join(lines) + "\n").encode("utf-8") if lines else b"")
        return
    n, d = descriptors.values.shape
    parts = [_HEADER.pack(MAGIC, n, d)]
    for ident in descriptors.ids:
        raw = ident.encode("utf-8")
        parts.append(_LEN.pack(len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(descriptors.values, dtype="<f4").tobytes())
    path.write_bytes(b"".join(parts))


def load_descriptors(path, fmt: str = "auto") -> DescriptorSet:
    """Load a descriptor file, binary or text, preserving file order."""
    path = Path(path)
    if _is_text(path, fmt):
        return _load_descriptors_text(path)
    data = path.read_bytes()
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise BadMagic(f"bad magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}", str(path))
    if len(data) < _HEADER.size:
        raise TruncatedPayload("header is truncated", str(path))
    _, n, d = _HEADER.unpack_from(data, 0)
    offset = _HEADER.size
    ids = []
    for i in range(n):
        if offset + _LEN.size > len(data):
            raise TruncatedPayload(f"id table ends after {i} of {n} entries", str(path))
        (length,) = _LEN.unpack_from(data, offset)
        offset += _LEN.size
        if offset + length > len(data):
            raise TruncatedPayload(f"id {i} is truncated", str(path))
        try:
            ids.append(data[offset:offset + length].decode("utf-8"))
        except UnicodeDecodeError:
            raise ParseError(f"id {i} is not valid UTF-8", str(path)) from None
        offset += length
    expected = n * d * 4
    if len(data) - offset < expected:
        raise TruncatedPayload(
            f"payload has {len(data) - offset} bytes, expected {expected}", str(path))
    if len(data) - offset > expected:
        raise ParseError(f"{len(data) - offset - expected} trailing bytes after payload", str(path))
    values = np.frombuffer(data, dtype="<f4", count=n * d, offset=offset).reshape(n, d)
    log.info("loaded %d descriptors (D=%d) from %s", n, d, path)
    return DescriptorSet(tuple(ids), values.astype(np.float64))


def _load_descriptors_text(path: Path) -> DescriptorSet:
    rows = _read_rows(path)
    if rows and rows[0][1][0].lower() == "id":
        rows = rows[1:]
    if not rows:
        raise ParseError("no descriptor rows", str(path))
    width = len(rows[0][1])
    ids, values = [], []
    for lineno, fields in rows:
        if len(fields) < 2:
            raise ParseError("expected id followed by at least one value", str(path), lineno)
        if len(fields) != width:
            raise ParseError(
                f"expected {width - 1} values, found {len(fields) - 1}", str(path), lineno)
        ids.append(fields[0])
        values.append([_parse_float(tok, path, lineno) for tok in fields[1:]])
    log.info("loaded %d descriptors (D=%d) from %s", len(ids), width - 1, path)
    return DescriptorSet(tuple(ids), np.array(values, dtype=np.float64))


def save_poses(path, poses: PoseSet) -> None:
    lines = [",".join([ident, *(_fmt_float(v) for v in row)])
             for ident, row in zip(poses.ids, poses.coords)]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8") if lines else b"")


def load_poses(path) -> PoseSet:
    """Load ``id,x,y[,z]`` rows; the dimension is inferred from the column count."""
    path = Path(path)
    rows = _read_rows(path)
    if rows and rows[0][1][0].lower() == "id":
        rows = rows[1:]
    if not rows:
        raise ParseError("no pose rows", str(path), 1)
    width = len(rows[0][1])
    ids, coords = [], []
    for lineno, fields in rows:
        if len(fields) not in (3, 4):
            raise ParseError(
                f"expected id plus 2 or 3 coordinates, found {len(fields) - 1} fields",
                str(path), lineno)
        if len(fields) != width:
            raise MixedDimensions(
                f"row has {len(fields) - 1} coordinates, earlier rows have {width - 1}",
                str(path), lineno)
        ids.append(fields[0])
        coords.append([_parse_float(tok, path, lineno) for tok in fields[1:]])
    log.info("loaded %d poses (%dD) from %s", len(ids), width - 1, path)
    return PoseSet(tuple(ids), np.array(coords, dtype=np.float64))


def load_external_scores(path, name: str, polarity: Polarity | str = Polarity.UNCERTAINTY
                         ) -> list[UncertaintyRecord]:
    """Load a ``query_id,score`` file as an external uncertainty channel.

    With ``polarity="confidence"`` the value is an inlier-style count: it is
    kept in ``gv_confidence`` and negated to form the uncertainty score.
    """
    path = Path(path)
    polarity = Polarity(polarity)
    rows = _read_rows(path)
    if not rows:
        raise ParseError("empty score file", str(path), 1)
    header_line, header = rows[0]
    if header != ["query_id", "score"]:
        raise ParseError(f"expected header 'query_id,score', found {','.join(header)!r}",
                         str(path), header_line)
    records = []
    seen: dict[str, int] = {}
    for lineno, fields in rows[1:]:
        if len(fields) != 2:
            raise ParseError(f"expected 2 fields, found {len(fields)}", str(path), lineno)
        qid, token = fields
        if qid in seen:
            raise DuplicateQueryId(f"query {qid!r} repeats line {seen[qid]}", str(path), lineno)
        seen[qid] = lineno
        value = _parse_float(token, path, lineno)
        if not math.isfinite(value):
            raise ParseError(f"non-finite score {token!r}", str(path), lineno)
        if polarity is Polarity.CONFIDENCE:
            if value < 0:
                raise ParseError(f"negative confidence {token!r}", str(path), lineno)
            records.append(UncertaintyRecord(qid, MethodKind.EXTERNAL, 0.0 - value, name, value))
        else:
            records.append(UncertaintyRecord(qid, MethodKind.EXTERNAL, value, name))
    log.info("loaded %d %s scores for channel %r from %s",
             len(records), polarity.value, name, path)
    return records


def save_scores(path, scores: dict[str, float] | list[tuple[str, float]]) -> None:
    items = scores.items() if isinstance(scores, dict) else scores
    lines = ["query_id,score"] + [f"{qid},{_fmt_float(s)}" for qid, s in items]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
