"""
Embedding store: one binary file holding per-slide blocks.

All integers and floats are little-endian.

    header  magic b"MILE" | u8 version | u32 embed_dim | u32 block_count
    block   u32 payload_bytes
            u16 id_len | id (utf-8) | u8 label | u32 t
            t * embed_dim float64   embeddings, row-major
            t * 3 int32             coords (magnification, col, row)
            t uint8                 augmentation flag (0 = original tile)

``payload_bytes`` lets a reader skip blocks; reading back what was written
reproduces every array bit for bit.
"""
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike

from utils.errors import EmptyBagError, FormatError
from utils.logging_config import get_logger

log = get_logger(__name__)

MAGIC = b"MILE"
VERSION = 1
EMBED_DIM = 1024
_HEADER = struct.Struct("<4sBII")
_BLOCK_LEN = struct.Struct("<I")
_ID_LEN = struct.Struct("<H")
_LABEL_T = struct.Struct("<BI")
MAX_ID_BYTES = 0xFFFF


@dataclass
class SlideEmbeddings:
    slide_id: str
    label: int
    embeddings: np.ndarray
    coords: np.ndarray
    aug_flags: np.ndarray

    @classmethod
    def build(cls, slide_id: str, label: int, embeddings: ArrayLike, coords: ArrayLike,
              aug_flags: Optional[ArrayLike] = None) -> "SlideEmbeddings":
        emb = np.ascontiguousarray(embeddings, dtype="<f8")
        crd = np.ascontiguousarray(coords, dtype="<i4")
        flags = np.zeros(emb.shape[0], dtype=np.uint8) if aug_flags is None else np.asarray(aug_flags, dtype=np.uint8)
        rec = cls(slide_id, int(label), emb, crd.reshape(-1, 3) if crd.size else crd.reshape(0, 3), flags)
        rec.validate()
        return rec

    @property
    def tile_count(self) -> int:
        return self.embeddings.shape[0]

    def validate(self) -> None:
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] == 0:
            raise EmptyBagError(f"{self.slide_id}: a slide record needs at least one embedding")
        t = self.embeddings.shape[0]
        if self.coords.shape != (t, 3):
            raise FormatError(f"{self.slide_id}: {self.coords.shape[0]} coords for {t} embeddings")
        if self.aug_flags.shape != (t,):
            raise FormatError(f"{self.slide_id}: {self.aug_flags.shape[0]} flags for {t} embeddings")
        if self.label not in (0, 1):
            raise FormatError(f"{self.slide_id}: label must be 0 or 1")


def store_write(records: Sequence[SlideEmbeddings], path: Path) -> Path:
    if not records:
        raise EmptyBagError("store needs at least one slide record")
    for rec in records:
        rec.validate()
        id_bytes = len(rec.slide_id.encode("utf-8"))
        if id_bytes > MAX_ID_BYTES:
            raise FormatError(f"slide id of {id_bytes} bytes exceeds the {MAX_ID_BYTES}-byte limit")
    dim = records[0].embeddings.shape[1]
    if any(r.embeddings.shape[1] != dim for r in records):
        raise FormatError("all slide records in one store must share the embedding width")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, len(records)))
        for rec in records:
            sid = rec.slide_id.encode("utf-8")
            payload = b"".join([
                _ID_LEN.pack(len(sid)), sid,
                _LABEL_T.pack(rec.label, rec.tile_count),
                np.ascontiguousarray(rec.embeddings, dtype="<f8").tobytes(),
                np.ascontiguousarray(rec.coords, dtype="<i4").tobytes(),
                np.ascontiguousarray(rec.aug_flags, dtype=np.uint8).tobytes(),
            ])
            fh.write(_BLOCK_LEN.pack(len(payload)))
            fh.write(payload)
    log.debug("Wrote %d slide record(s) to %s", len(records), path)
    return path


class _Reader:
    def __init__(self, buf: bytes, path: Path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.path}: truncated at byte {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out


def store_read(path: Path) -> List[SlideEmbeddings]:
    path = Path(path)
    try:
        reader = _Reader(path.read_bytes(), path)
    except OSError as exc:
        raise FormatError(f"cannot read store {path}: {exc}") from exc
    magic, version, dim, count = _HEADER.unpack(reader.take(_HEADER.size))
    if magic != MAGIC:
        raise FormatError(f"{path}: not an embedding store")
    if version != VERSION:
        raise FormatError(f"{path}: store version {version}, this reader understands {VERSION}")

    records = []
    for _ in range(count):
        (size,) = _BLOCK_LEN.unpack(reader.take(_BLOCK_LEN.size))
        block = _Reader(reader.take(size), path)
        (id_len,) = _ID_LEN.unpack(block.take(_ID_LEN.size))
        try:
            slide_id = block.take(id_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: slide id is not valid utf-8: {exc}") from exc
        label, t = _LABEL_T.unpack(block.take(_LABEL_T.size))
        emb = np.frombuffer(block.take(t * dim * 8), dtype="<f8").reshape(t, dim).copy()
        coords = np.frombuffer(block.take(t * 12), dtype="<i4").reshape(t, 3).copy()
        flags = np.frombuffer(block.take(t), dtype=np.uint8).copy()
        if block.pos != size:
            raise FormatError(f"{path}: block for {slide_id} has {size - block.pos} trailing bytes")
        rec = SlideEmbeddings(slide_id, label, emb, coords, flags)
        rec.validate()
        records.append(rec)
    if reader.pos != len(reader.buf):
        raise FormatError(f"{path}: trailing bytes after {count} blocks")
    return records


def import_embeddings(path: Path, slide_id: str, label: int, embeddings: ArrayLike,
                      coords: ArrayLike, aug_flags: Optional[ArrayLike] = None) -> Path:
    """Store embeddings computed by an external extractor."""
    return store_write([SlideEmbeddings.build(slide_id, label, embeddings, coords, aug_flags)], path)
