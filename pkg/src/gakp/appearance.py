"""Appearance embeddings: distances, triplet loss, synthetic generation and the
sidecar file format that stores one embedding per detection line."""
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError

EMBEDDING_DIM = 128
SIDECAR_MAGIC = b"GAKPEMB1"


def normalize(x, axis=-1):
    x = np.asarray(x, dtype=float)
    n = np.linalg.norm(x, axis=axis, keepdims=True)
    return x / np.where(n > 0, n, 1.0)


def appearance_distance(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise InputError(f"appearance: embedding dimension mismatch {a.shape[-1]} != {b.shape[-1]}")
    d = np.linalg.norm(a - b, axis=-1)
    return float(d) if np.ndim(d) == 0 else d


def distance_matrix(a, b):
    """Pairwise Euclidean distances between rows of ``a`` and ``b``."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    if a.shape[1] != b.shape[1]:
        raise InputError(f"appearance: embedding dimension mismatch {a.shape[1]} != {b.shape[1]}")
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(sq, 0.0))


@dataclass
class TripletBatch:
    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    margin: float = 0.2

    def __post_init__(self):
        self.anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        self.positives = np.atleast_2d(np.asarray(self.positives, dtype=float))
        self.negatives = np.atleast_2d(np.asarray(self.negatives, dtype=float))
        n = len(self.anchors)
        if n < 1 or len(self.positives) != n or len(self.negatives) != n:
            raise InputError("appearance: triplet batch needs equal, non-zero numbers of anchors/positives/negatives")
        if self.margin < 0:
            raise InputError("appearance: triplet margin must be non-negative")


def triplet_loss(batch):
    d_pos = np.linalg.norm(batch.anchors - batch.positives, axis=1)
    d_neg = np.linalg.norm(batch.anchors - batch.negatives, axis=1)
    return float(np.maximum(0.0, d_pos - d_neg + batch.margin).sum())


def _entropy(identity_id, rng_seed):
    return [int(rng_seed) & 0xFFFFFFFF, 1 if identity_id < 0 else 0, abs(int(identity_id))]


def identity_direction(identity_id, rng_seed=0, dim=EMBEDDING_DIM):
    rng = np.random.default_rng(np.random.SeedSequence(_entropy(identity_id, rng_seed)))
    return normalize(rng.standard_normal(dim))


def synth_embedding(identity_id, noise_sigma, rng_seed=0, draw=0, dim=EMBEDDING_DIM):
    """Unit embedding for ``identity_id``: a fixed per-identity direction plus
    isotropic Gaussian noise, re-normalized. Deterministic in
    ``(identity_id, rng_seed, draw)``."""
    if noise_sigma < 0:
        raise InputError("appearance: noise_sigma must be non-negative")
    mean = identity_direction(identity_id, rng_seed, dim)
    if noise_sigma == 0:
        return mean
    rng = np.random.default_rng(np.random.SeedSequence(_entropy(identity_id, rng_seed) + [int(draw), 1]))
    return normalize(mean + noise_sigma * rng.standard_normal(dim))


def write_embeddings(path, embeddings, binary=None):
    """Write the sidecar; binary unless the suffix is ``.csv`` / ``.txt``."""
    path = Path(path)
    emb = np.asarray(embeddings, dtype=float).reshape(len(embeddings), -1) if len(embeddings) else \
        np.zeros((0, EMBEDDING_DIM))
    if binary is None:
        binary = path.suffix.lower() not in (".csv", ".txt")
    if binary:
        with open(path, "wb") as fh:
            fh.write(SIDECAR_MAGIC)
            fh.write(struct.pack("<ii", emb.shape[0], emb.shape[1]))
            fh.write(emb.astype("<f4").tobytes())
    else:
        with open(path, "w") as fh:
            for row in emb:
                fh.write(",".join(f"{x:.9g}" for x in row) + "\n")


def read_embeddings(path, expected_count=None, dim=EMBEDDING_DIM):
    """Load a sidecar file (binary or CSV, detected from the magic bytes).

    Rows are re-normalized to unit length."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"appearance: embeddings file not found: {path}")
    raw = path.read_bytes()
    if raw.startswith(SIDECAR_MAGIC):
        if len(raw) < 16:
            raise FormatError(f"appearance: truncated sidecar header in {path}")
        count, file_dim = struct.unpack("<ii", raw[8:16])
        if count < 0 or file_dim <= 0:
            raise FormatError(f"appearance: bad sidecar header count={count} dim={file_dim}")
        body = raw[16:]
        if len(body) != 4 * count * file_dim:
            raise FormatError(f"appearance: sidecar body has {len(body)} bytes, expected {4 * count * file_dim}")
        emb = np.frombuffer(body, dtype="<f4").reshape(count, file_dim).astype(float)
    else:
        rows = []
        for lineno, line in enumerate(raw.decode().splitlines(), 1):
            if not line.strip():
                continue
            try:
                rows.append([float(x) for x in line.split(",")])
            except ValueError as exc:
                raise FormatError(f"appearance: {path}:{lineno}: {exc}") from exc
        if rows and len({len(r) for r in rows}) != 1:
            raise FormatError(f"appearance: {path}: rows have inconsistent lengths")
        emb = np.array(rows, dtype=float).reshape(len(rows), -1) if rows else np.zeros((0, dim))
        file_dim = emb.shape[1]
    if len(emb) and file_dim != dim:
        raise FormatError(f"appearance: {path}: embedding dimension {file_dim}, expected {dim}")
    if expected_count is not None and len(emb) != expected_count:
        raise InputError(f"appearance: {path} holds {len(emb)} embeddings but there are {expected_count} detections")
    return normalize(emb) if len(emb) else emb
