"""Checkpoint files.

Layout::

    b"KGECKPT1\\n"
    uint64 little-endian header length
    header: UTF-8 JSON, sorted keys (family, dim, gamma, shapes, vocab hashes, ...)
    entity matrix:   float32 little-endian, row-major
    relation matrix: float32 little-endian, row-major

Nothing time-dependent goes into the header, so equal parameters give
byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from kgeval.graph import KnowledgeGraph
from kgeval.models import ModelParams

MAGIC = b"KGECKPT1\n"
_F32 = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, p: ModelParams, g: KnowledgeGraph | None = None, extra: dict | None = None) -> None:
    header = {
        "family": p.family,
        "dim": p.dim,
        "gamma": p.gamma,
        "entity_shape": list(p.entity_emb.shape),
        "relation_shape": list(p.relation_emb.shape),
        "entity_vocab_hash": g.entity_hash if g is not None else None,
        "relation_vocab_hash": g.relation_hash if g is not None else None,
        "config_hash": p.meta.get("config_hash"),
        "config": p.meta.get("config"),
    }
    if extra:
        header.update(extra)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(p.entity_emb, dtype=_F32).tobytes())
        fh.write(np.ascontiguousarray(p.relation_emb, dtype=_F32).tobytes())


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh, path)


def _read_header(fh, path) -> dict:
    if fh.read(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a kgeval checkpoint")
    (n,) = struct.unpack("<Q", fh.read(8))
    return json.loads(fh.read(n).decode("utf-8"))


def load_checkpoint(path, g: KnowledgeGraph | None = None) -> ModelParams:
    """Load parameters; when ``g`` is given its vocabulary hashes must match."""
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        ne = int(np.prod(header["entity_shape"]))
        nr = int(np.prod(header["relation_shape"]))
        ent = np.frombuffer(fh.read(ne * 4), dtype=_F32).reshape(header["entity_shape"])
        rel = np.frombuffer(fh.read(nr * 4), dtype=_F32).reshape(header["relation_shape"])
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after relation matrix")
    if not (np.isfinite(ent).all() and np.isfinite(rel).all()):
        raise CheckpointError(f"{path}: non-finite parameters")
    if g is not None:
        for key, ours in (("entity_vocab_hash", g.entity_hash), ("relation_vocab_hash", g.relation_hash)):
            if header.get(key) != ours:
                raise CheckpointError(
                    f"{path}: {key} {header.get(key)} does not match the dataset ({ours})"
                )
    meta = {"config": header.get("config"), "config_hash": header.get("config_hash"), "header": header}
    return ModelParams(header["family"], ent.astype(np.float32), rel.astype(np.float32), header["gamma"], meta)
