"""Molecular descriptors: folded Morgan bits plus a mean-pooled SMILES token embedding.

Hashing is 64-bit FNV-1a over a flat sequence of integers, each written as
8 little-endian bytes (two's complement for negatives). Bit positions are
therefore reproducible across platforms, but they do not match RDKit.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .chem_parse import Molecule, implicit_h_count, parse_smiles, ring_flags
from .nn.rng import Prng

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = (1 << 64) - 1

BOND_CODES = {"single": 1, "double": 2, "triple": 3, "aromatic": 4}

FP_BITS = 512
EMBED_DIM = 300
FEATURE_DIM = FP_BITS + EMBED_DIM

UNK = "<unk>"


class FeaturizeError(ValueError):
    pass


class EmptyMolecule(FeaturizeError):
    pass


class EmptyCorpus(FeaturizeError):
    pass


class EmptySequence(FeaturizeError):
    pass


class DimensionMismatch(FeaturizeError):
    pass


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def hash_ints(values: Iterable[int]) -> int:
    """FNV-1a of the 8-byte little-endian encoding of each integer."""
    return fnv1a64(b"".join(struct.pack("<Q", int(v) & MASK64) for v in values))


# -- Morgan / ECFP -----------------------------------------------------------


@dataclass(frozen=True)
class FingerprintConfig:
    length: int = FP_BITS
    radius: int = 3

    def __post_init__(self) -> None:
        if self.length < 64 or self.length & (self.length - 1):
            raise ValueError("fingerprint length must be a power of two >= 64")
        if not 0 <= self.radius <= 6:
            raise ValueError("radius must be in [0, 6]")


def hydrogen_count(m: Molecule, index: int) -> int:
    """Implicit/bracket hydrogens plus any hydrogen atoms written in the graph."""
    h_nbrs = sum(1 for n, _ in m.neighbors(index) if m.atoms[n].element == 1)
    return implicit_h_count(m, index) + h_nbrs


def invariant_tuple(m: Molecule, index: int, in_ring: Sequence[bool] | None = None) -> tuple:
    """(element, heavy degree, H count, formal charge, in ring, aromatic)."""
    if in_ring is None:
        in_ring = ring_flags(m)[0]
    atom = m.atoms[index]
    heavy = sum(1 for n, _ in m.neighbors(index) if m.atoms[n].element != 1)
    return (
        atom.element,
        heavy,
        hydrogen_count(m, index),
        atom.formal_charge,
        bool(in_ring[index]),
        atom.aromatic,
    )


def atom_initial_invariant(m: Molecule, index: int, in_ring: Sequence[bool] | None = None) -> int:
    return hash_ints(invariant_tuple(m, index, in_ring))


def environment_id(iteration: int, own: int, neighbors: Iterable[tuple[int, int]]) -> int:
    """Identifier update: hash of (iteration, own id, sorted (bond code, neighbor id) pairs)."""
    flat = [iteration, own]
    for code, nid in sorted(neighbors):
        flat.extend((code, nid))
    return hash_ints(flat)


def morgan_environments(m: Molecule, radius: int) -> list[tuple[int, int, int]]:
    """Unique circular environments as (iteration, atom index, identifier).

    Every radius-0 identifier is kept. From iteration 1 on, an environment
    whose bond set was already seen (at this or an earlier iteration) is
    dropped; within one iteration candidates are visited by (identifier,
    atom index).
    """
    n = m.num_atoms
    if n == 0:
        raise EmptyMolecule("molecule has no atoms")
    in_ring = ring_flags(m)[0]
    adj = m.adjacency()
    codes = [BOND_CODES[b.order] for b in m.bonds]
    ids = [atom_initial_invariant(m, i, in_ring) for i in range(n)]
    envs: list[frozenset[int]] = [frozenset()] * n
    emitted = [(0, i, ids[i]) for i in range(n)]
    seen: set[frozenset[int]] = {frozenset()}
    for it in range(1, radius + 1):
        new_ids = []
        new_envs = []
        for a in range(n):
            new_ids.append(environment_id(it, ids[a], ((codes[k], ids[nb]) for nb, k in adj[a])))
            env = set(envs[a])
            for nb, k in adj[a]:
                env.add(k)
                env |= envs[nb]
            new_envs.append(frozenset(env))
        for a in sorted(range(n), key=lambda i: (new_ids[i], i)):
            if new_envs[a] not in seen:
                seen.add(new_envs[a])
                emitted.append((it, a, new_ids[a]))
        ids, envs = new_ids, new_envs
    return emitted


def morgan_fingerprint(m: Molecule, cfg: FingerprintConfig = FingerprintConfig()) -> np.ndarray:
    """Folded ECFP bit vector (uint8 0/1 array of ``cfg.length``)."""
    bits = np.zeros(cfg.length, dtype=np.uint8)
    for _, _, ident in morgan_environments(m, cfg.radius):
        bits[ident % cfg.length] = 1
    return bits


# -- tokens and skip-gram ----------------------------------------------------

_TOKEN_RE = re.compile(r"\[[^\]]*\]|Br|Cl|%\d\d|.")


def tokenize_smiles(smiles: str) -> list[str]:
    """Greedy longest-match SMILES tokens; the input must parse."""
    parse_smiles(smiles)
    return _TOKEN_RE.findall(smiles)


def detokenize(tokens: Sequence[str]) -> str:
    return "".join(tokens)


@dataclass
class SkipGramConfig:
    dim: int = EMBED_DIM
    window: int = 5
    negatives: int = 5
    epochs: int = 15
    lr: float = 0.025
    batch_size: int = 256
    seed: int = 0


@dataclass
class EmbeddingMatrix:
    vocab: list[str]
    vectors: np.ndarray
    index: dict[str, int] = field(init=False, repr=False)

    MAGIC = b"PQEM"
    VERSION = 1

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or len(self.vectors) != len(self.vocab):
            raise DimensionMismatch("vector rows must match vocabulary size")
        if not np.all(np.isfinite(self.vectors)):
            raise FeaturizeError("embedding contains non-finite values")
        self.index = {tok: i for i, tok in enumerate(self.vocab)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        unk = self.index[UNK]
        return [self.index.get(t, unk) for t in tokens]

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.index.get(token, self.index[UNK])]

    def to_bytes(self) -> bytes:
        """magic, u16 version, u32 dim, u32 vocab size, tokens (u16 len + UTF-8), f64 rows."""
        parts = [self.MAGIC, struct.pack("<HII", self.VERSION, self.dim, len(self.vocab))]
        for tok in self.vocab:
            raw = tok.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(self.vectors.astype("<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "EmbeddingMatrix":
        try:
            if data[:4] != cls.MAGIC:
                raise FeaturizeError("bad embedding magic")
            version, dim, size = struct.unpack_from("<HII", data, 4)
            if version != cls.VERSION:
                raise FeaturizeError(f"unsupported embedding version {version}")
            pos = 14
            vocab = []
            for _ in range(size):
                (length,) = struct.unpack_from("<H", data, pos)
                vocab.append(data[pos + 2 : pos + 2 + length].decode("utf-8"))
                pos += 2 + length
            rows = np.frombuffer(data, "<f8", size * dim, pos).reshape(size, dim)
        except (struct.error, ValueError, UnicodeDecodeError) as exc:
            if isinstance(exc, FeaturizeError):
                raise
            raise FeaturizeError(f"corrupt embedding file: {exc}") from None
        if pos + 8 * size * dim != len(data):
            raise FeaturizeError("embedding file has wrong length")
        return cls(vocab, rows.astype(np.float64))


def build_vocab(corpus: Sequence[Sequence[str]], extra_tokens: Sequence[str] = ()) -> tuple[list[str], np.ndarray]:
    """Vocabulary (UNK first, then by descending count, ties by token) and counts."""
    counts: dict[str, int] = {}
    for seq in corpus:
        for tok in seq:
            counts[tok] = counts.get(tok, 0) + 1
    for tok in extra_tokens:
        counts.setdefault(tok, 0)
    counts.pop(UNK, None)
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    vocab = [UNK] + ordered
    return vocab, np.array([0] + [counts[t] for t in ordered], dtype=np.float64)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def train_skipgram(
    corpus: Sequence[Sequence[str]],
    config: SkipGramConfig = SkipGramConfig(),
    extra_tokens: Sequence[str] = (),
) -> EmbeddingMatrix:
    """Skip-gram with negative sampling.

    Center/context pairs within ``window`` are shuffled each epoch and
    consumed in mini-batches; negatives come from the unigram^0.75 table and
    the learning rate decays linearly to ``lr * 1e-4``. Within a batch, the
    updates to a row are averaged over its occurrences, which keeps small
    vocabularies stable. The UNK row is left at zero.
    """
    corpus = [list(s) for s in corpus if len(s) > 0]
    if not corpus:
        raise EmptyCorpus("skip-gram corpus is empty")
    vocab, counts = build_vocab(corpus, extra_tokens)
    index = {t: i for i, t in enumerate(vocab)}
    rng = Prng(config.seed)
    v_size, dim = len(vocab), config.dim

    centers, contexts = [], []
    for seq in corpus:
        ids = [index[t] for t in seq]
        for i, c in enumerate(ids):
            lo, hi = max(0, i - config.window), min(len(ids), i + config.window + 1)
            for j in range(lo, hi):
                if j != i:
                    centers.append(c)
                    contexts.append(ids[j])
    centers_arr = np.array(centers, dtype=np.int64)
    contexts_arr = np.array(contexts, dtype=np.int64)

    w_in = (rng.uniform((v_size, dim)) - 0.5) / dim
    w_in[0] = 0.0
    w_out = np.zeros((v_size, dim))
    if len(centers_arr) == 0:
        return EmbeddingMatrix(vocab, w_in)

    noise = counts**0.75
    noise_cdf = np.cumsum(noise / noise.sum())
    noise_cdf[-1] = 1.0

    n_pairs = len(centers_arr)
    bs = config.batch_size
    total_batches = config.epochs * (-(-n_pairs // bs))
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(n_pairs)
        for start in range(0, n_pairs, bs):
            idx = order[start : start + bs]
            lr = config.lr * max(1e-4, 1.0 - step / total_batches)
            step += 1
            c = centers_arr[idx]
            pos = contexts_arr[idx]
            neg = np.searchsorted(noise_cdf, rng.uniform((len(idx), config.negatives)), side="right")
            targets = np.concatenate([pos[:, None], neg], axis=1)  # (b, 1+k)
            labels = np.zeros(targets.shape)
            labels[:, 0] = 1.0
            v = w_in[c]  # (b, d)
            u = w_out[targets]  # (b, 1+k, d)
            score = np.einsum("bd,bkd->bk", v, u)
            g = _sigmoid(score) - labels  # d loss / d score
            grad_v = np.einsum("bk,bkd->bd", g, u)
            grad_u = g[:, :, None] * v[:, None, :]
            _averaged_update(w_in, c, grad_v, lr)
            _averaged_update(w_out, targets.reshape(-1), grad_u.reshape(-1, dim), lr)
    w_in[0] = 0.0
    return EmbeddingMatrix(vocab, w_in)


def _averaged_update(table: np.ndarray, rows: np.ndarray, grads: np.ndarray, lr: float) -> None:
    order = np.argsort(rows, kind="stable")
    uniq, starts, hits = np.unique(rows[order], return_index=True, return_counts=True)
    sums = np.add.reduceat(grads[order], starts, axis=0)
    table[uniq] -= lr * sums / hits[:, None]


def embed_molecule(tokens: Sequence[str], emb: EmbeddingMatrix) -> np.ndarray:
    """Mean of the token vectors; unknown tokens use the UNK row."""
    if len(tokens) == 0:
        raise EmptySequence("cannot embed an empty token sequence")
    return emb.vectors[emb.encode(tokens)].mean(axis=0)


def concat_features(fp: np.ndarray, emb: np.ndarray) -> np.ndarray:
    fp = np.asarray(fp)
    emb = np.asarray(emb, dtype=np.float64)
    if fp.shape != (FP_BITS,) or emb.shape != (EMBED_DIM,):
        raise DimensionMismatch(f"expected {FP_BITS} bits and {EMBED_DIM} embedding, got {fp.shape}, {emb.shape}")
    return np.concatenate([fp.astype(np.float64), emb])


# -- fitted feature pipeline -------------------------------------------------


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "Standardizer":
        values = np.asarray(values, dtype=np.float64)
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        std = np.where(std > 1e-12, std, 1.0)
        return cls(np.atleast_1d(mean), np.atleast_1d(std))

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


@dataclass
class Featurizer:
    """Embedding and embedding standardizer, fitted on training SMILES only."""

    embedding: EmbeddingMatrix
    scaler: Standardizer
    fp_config: FingerprintConfig = field(default_factory=FingerprintConfig)

    @classmethod
    def fit(
        cls,
        smiles: Sequence[str],
        skipgram: SkipGramConfig = SkipGramConfig(),
        fp_config: FingerprintConfig = FingerprintConfig(),
    ) -> "Featurizer":
        tokens = [tokenize_smiles(s) for s in smiles]
        emb = train_skipgram(tokens, skipgram)
        raw = np.stack([embed_molecule(t, emb) for t in tokens])
        return cls(emb, Standardizer.fit(raw), fp_config)

    def fingerprints(self, smiles: Sequence[str]) -> np.ndarray:
        return np.stack([morgan_fingerprint(parse_smiles(s), self.fp_config) for s in smiles])

    def embeddings(self, smiles: Sequence[str]) -> np.ndarray:
        raw = np.stack([embed_molecule(tokenize_smiles(s), self.embedding) for s in smiles])
        return self.scaler.transform(raw)

    def transform(self, smiles: Sequence[str]) -> np.ndarray:
        """(n, 812) matrix: fingerprint bits then standardized embedding."""
        return np.hstack([self.fingerprints(smiles).astype(np.float64), self.embeddings(smiles)])
