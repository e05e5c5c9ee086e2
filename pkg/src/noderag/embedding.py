"""Unit-vector store for the embeddable node subset, with a bit-exact binary
file format.

File layout: one ASCII header line `HVEC v1 <dim> <count> <model_tag>`, then
<count> records of (uint32-LE id length, UTF-8 id bytes, dim float32-LE
values), then 32 raw bytes of SHA-256 over everything before them. Records
are written in sorted id order so identical stores serialize identically.
"""
from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import GraphFormatError, ValidationError

NORM_TOLERANCE = 1e-6


class EmbeddingStore:
    FORMAT_HEADER = "HVEC v1"

    def __init__(self, dim: int, model_tag: str) -> None:
        if dim < 1:
            raise ValidationError("embedding dim must be positive")
        self.dim = dim
        self.model_tag = model_tag
        self.vectors: dict[str, np.ndarray] = {}

    def add(self, node_id: str, vector: np.ndarray) -> None:
        v = np.asarray(vector, dtype=np.float32)
        if v.shape != (self.dim,):
            raise ValidationError(f"vector shape {v.shape} does not match dim {self.dim}")
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValidationError(f"vector for {node_id} has norm {norm:.8f}, expected 1")
        self.vectors[node_id] = v

    def get(self, node_id: str) -> np.ndarray:
        return self.vectors[node_id]

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def keys(self):
        return self.vectors.keys()

    def to_bytes(self) -> bytes:
        parts = [f"{self.FORMAT_HEADER} {self.dim} {len(self.vectors)} {self.model_tag}\n"
                 .encode("utf-8")]
        for node_id in sorted(self.vectors):
            id_bytes = node_id.encode("utf-8")
            parts.append(struct.pack("<I", len(id_bytes)))
            parts.append(id_bytes)
            parts.append(self.vectors[node_id].astype("<f4").tobytes())
        body = b"".join(parts)
        return body + hashlib.sha256(body).digest()

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, expected_tag: str | None = None) -> "EmbeddingStore":
        if len(data) < 33:
            raise GraphFormatError("truncated vector store file")
        body, digest = data[:-32], data[-32:]
        if hashlib.sha256(body).digest() != digest:
            raise GraphFormatError("vector store checksum mismatch")
        newline = body.find(b"\n")
        if newline < 0:
            raise GraphFormatError("truncated vector store header")
        header = body[:newline].decode("utf-8")
        fields = header.split(" ", 4)
        if len(fields) != 5 or f"{fields[0]} {fields[1]}" != cls.FORMAT_HEADER:
            raise GraphFormatError(f"unsupported vector store format: {header!r}")
        dim, count, model_tag = int(fields[2]), int(fields[3]), fields[4]
        if expected_tag is not None and model_tag != expected_tag:
            raise GraphFormatError(
                f"vector store model tag {model_tag!r} does not match expected {expected_tag!r}"
            )
        store = cls(dim, model_tag)
        offset = newline + 1
        vec_bytes = dim * 4
        for _ in range(count):
            if offset + 4 > len(body):
                raise GraphFormatError("truncated vector store record")
            (id_len,) = struct.unpack_from("<I", body, offset)
            offset += 4
            if offset + id_len + vec_bytes > len(body):
                raise GraphFormatError("truncated vector store record")
            node_id = body[offset:offset + id_len].decode("utf-8")
            offset += id_len
            vec = np.frombuffer(body, dtype="<f4", count=dim, offset=offset).copy()
            offset += vec_bytes
            store.vectors[node_id] = vec
        if offset != len(body):
            raise GraphFormatError("trailing bytes after final vector record")
        return store

    @classmethod
    def load(cls, path: str | Path, expected_tag: str | None = None) -> "EmbeddingStore":
        return cls.from_bytes(Path(path).read_bytes(), expected_tag)
