"""Little-endian binary container shared by checkpoints and feature caches.

Layout::

    b"S3DC"                      magic
    u32  format_version
    u32  header_len, header      UTF-8 JSON (sorted keys), e.g. ArchConfig + metadata
    u32  n_sections
    per section:
        4 bytes tag              e.g. b"PARM", b"ADAM", b"ELM_", b"FEAT"
        u32  n_tensors
        per tensor:
            u32 rank, rank x u32 extents, prod(extents) x float32 values
    u32  CRC32 of every preceding byte
"""

import json
import struct
import zlib
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CheckpointError

MAGIC = b"S3DC"
FORMAT_VERSION = 1


def encode(header: dict, sections: Sequence[tuple[bytes, Sequence[np.ndarray]]]) -> bytes:
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    hdr = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts += [struct.pack("<I", len(hdr)), hdr, struct.pack("<I", len(sections))]
    for tag, tensors in sections:
        if len(tag) != 4:
            raise ValueError(f"section tag must be 4 bytes, got {tag!r}")
        parts += [tag, struct.pack("<I", len(tensors))]
        for t in tensors:
            t = np.asarray(t)
            parts.append(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
            parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data, self.pos, self.source = data, 0, source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.source}: truncated at byte {self.pos} "
                                  f"(needed {n} more, file has {len(self.data)})")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def decode(data: bytes, source: str = "<bytes>") -> tuple[dict, dict[str, list[np.ndarray]]]:
    if len(data) < 8 or data[:4] != MAGIC:
        raise CheckpointError(f"{source}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    version = struct.unpack("<I", data[4:8])[0]
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{source}: format_version {version} not supported "
                              f"(expected {FORMAT_VERSION})")
    if len(data) < 12:
        raise CheckpointError(f"{source}: truncated at byte {len(data)}")
    body, stored = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(body) != stored:
        raise CheckpointError(f"{source}: CRC32 mismatch (stored {stored:#010x}, "
                              f"computed {zlib.crc32(body):#010x}); file is corrupted or truncated")
    r = _Reader(body, source)
    r.take(8)
    try:
        header = json.loads(r.take(r.u32()).decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"{source}: unreadable header ({exc})") from exc
    sections: dict[str, list[np.ndarray]] = {}
    for _ in range(r.u32()):
        tag = r.take(4).decode("ascii", errors="replace")
        tensors = []
        for _ in range(r.u32()):
            rank = r.u32()
            shape = struct.unpack(f"<{rank}I", r.take(4 * rank))
            n = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(r.take(4 * n), dtype="<f4").astype(np.float32).reshape(shape)
            tensors.append(arr)
        sections[tag] = tensors
    if r.pos != len(body):
        raise CheckpointError(f"{source}: {len(body) - r.pos} unexpected bytes after byte {r.pos}")
    return header, sections


def write_container(path, header: dict, sections) -> None:
    Path(path).write_bytes(encode(header, sections))


def read_container(path) -> tuple[dict, dict[str, list[np.ndarray]]]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read ({exc})") from exc
    return decode(data, str(path))
