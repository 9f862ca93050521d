"""Activity-table ingestion, the trained pipeline and its single-file bundle."""

from __future__ import annotations

import csv
import json
import math
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autoencoder import AutoencoderModel, train_autoencoder
from .chem_parse import MultiComponentUnsupported, SmilesError, parse_smiles
from .config import RunConfig
from .featurize import EmbeddingMatrix, Featurizer, Standardizer
from .probcgan import ProbCGANRegressor


class DataError(ValueError):
    """Bad or unusable input data (CLI exit code 2)."""


class FileNotFound(DataError, FileNotFoundError):
    pass


class MissingColumn(DataError):
    pass


class NoValidRows(DataError):
    pass


class BundleError(DataError):
    pass


class VersionMismatch(BundleError):
    pass


class CorruptFile(BundleError):
    pass


PCHEMBL_RANGE = (0.0, 14.0)
SKIP_REASONS = ("missing_value", "out_of_range", "parse_error", "multi_component")


@dataclass(frozen=True)
class ActivityRecord:
    smiles: str
    pchembl: float
    compound_id: str


@dataclass
class Dataset:
    records: list[ActivityRecord]
    source: str = ""
    skipped: dict[str, int] = field(default_factory=lambda: {r: 0 for r in SKIP_REASONS})
    input_rows: int = 0
    merged_rows: int = 0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def smiles(self) -> list[str]:
        return [r.smiles for r in self.records]

    @property
    def values(self) -> np.ndarray:
        return np.array([r.pchembl for r in self.records])

    @property
    def ids(self) -> list[str]:
        return [r.compound_id for r in self.records]

    def provenance(self) -> dict:
        return {
            "source": self.source,
            "input_rows": self.input_rows,
            "kept": len(self.records),
            "merged_duplicates": self.merged_rows,
            "skipped": dict(self.skipped),
        }


def _sniff_delimiter(header: str) -> str:
    return "\t" if header.count("\t") > header.count(",") else ","


def load_chembl_csv(
    path: str | os.PathLike,
    smiles_column: str = "canonical_smiles",
    value_column: str = "pchembl_value",
    id_column: str = "molecule_chembl_id",
) -> Dataset:
    """Read a comma- or tab-separated activity export.

    Rows with an empty SMILES or a non-numeric / out-of-range value, and
    SMILES that fail to parse or hold several components, are skipped with a
    per-reason count. Rows sharing a compound id are merged into one record
    carrying the median value; the first occurrence fixes the SMILES and order.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFound(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        header = fh.readline()
        fh.seek(0)
        reader = csv.DictReader(fh, delimiter=_sniff_delimiter(header))
        columns = reader.fieldnames or []
        for col in (smiles_column, value_column, id_column):
            if col not in columns:
                raise MissingColumn(f"{path}: missing column {col!r} (have {columns})")
        rows = list(reader)

    skipped = {r: 0 for r in SKIP_REASONS}
    groups: dict[str, tuple[str, list[float]]] = {}
    for row in rows:
        smiles = (row.get(smiles_column) or "").strip()
        raw_value = (row.get(value_column) or "").strip()
        try:
            value = float(raw_value)
        except ValueError:
            value = math.nan
        if not smiles or not math.isfinite(value):
            skipped["missing_value"] += 1
            continue
        if not PCHEMBL_RANGE[0] <= value <= PCHEMBL_RANGE[1]:
            skipped["out_of_range"] += 1
            continue
        try:
            parse_smiles(smiles)
        except MultiComponentUnsupported:
            skipped["multi_component"] += 1
            continue
        except SmilesError:
            skipped["parse_error"] += 1
            continue
        cid = (row.get(id_column) or "").strip() or smiles
        if cid in groups:
            groups[cid][1].append(value)
        else:
            groups[cid] = (smiles, [value])

    if not groups:
        raise NoValidRows(f"{path}: no usable rows (skipped {skipped})")
    records = [ActivityRecord(s, float(np.median(v)), cid) for cid, (s, v) in groups.items()]
    kept_rows = sum(len(v) for _, v in groups.values())
    return Dataset(records, str(path), skipped, len(rows), kept_rows - len(records))


def atomic_write(path: str | os.PathLike, data: bytes | str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- trained pipeline -------------------------------------------------------------


@dataclass
class Pipeline:
    """SMILES → 812-d features → autoencoder code → probabilistic regressor."""

    featurizer: Featurizer
    autoencoder: AutoencoderModel
    model: ProbCGANRegressor
    config: RunConfig

    @classmethod
    def fit(cls, smiles: Sequence[str], y: np.ndarray, config: RunConfig, seed: int) -> "Pipeline":
        feat = Featurizer.fit(smiles, config.skipgram(seed), config.fingerprint_config())
        raw = feat.transform(smiles)
        ae = train_autoencoder(raw, config.autoencoder(raw.shape[1]), seed)
        model = ProbCGANRegressor(config.gan(seed)).fit(ae.encode(raw), np.asarray(y, dtype=np.float64))
        return cls(feat, ae, model, config)

    def latent(self, smiles: Sequence[str]) -> np.ndarray:
        return self.autoencoder.encode(self.featurizer.transform(smiles))

    def predict_distribution(self, smiles: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        return self.model.predict_distribution(self.latent(smiles))


# -- bundle container ---------------------------------------------------------------

BUNDLE_MAGIC = b"PQSR"
BUNDLE_VERSION = 1
_HEAD = struct.Struct("<4sHI")  # magic, version, section count
_ENTRY = struct.Struct("<QQI")  # offset, length, crc32


def pack_sections(sections: dict[str, bytes], version: int = BUNDLE_VERSION) -> bytes:
    """Header, then per section (u16 name length, name, u64 offset, u64 length, u32 crc32), then payloads."""
    table = b""
    names = list(sections)
    table_size = sum(2 + len(n.encode()) + _ENTRY.size for n in names)
    offset = _HEAD.size + table_size
    for name in names:
        blob = sections[name]
        raw_name = name.encode()
        table += struct.pack("<H", len(raw_name)) + raw_name
        table += _ENTRY.pack(offset, len(blob), zlib.crc32(blob))
        offset += len(blob)
    return _HEAD.pack(BUNDLE_MAGIC, version, len(names)) + table + b"".join(sections.values())


def unpack_sections(data: bytes) -> dict[str, bytes]:
    if len(data) < _HEAD.size:
        raise CorruptFile("file too short for a bundle header")
    magic, version, count = _HEAD.unpack_from(data, 0)
    if magic != BUNDLE_MAGIC:
        raise CorruptFile("not a model bundle (bad magic)")
    if version != BUNDLE_VERSION:
        raise VersionMismatch(f"bundle format v{version}, this reader handles v{BUNDLE_VERSION}")
    pos = _HEAD.size
    out: dict[str, bytes] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, pos)
            name = data[pos + 2 : pos + 2 + name_len].decode()
            pos += 2 + name_len
            offset, length, crc = _ENTRY.unpack_from(data, pos)
            pos += _ENTRY.size
            blob = data[offset : offset + length]
            if len(blob) != length:
                raise CorruptFile(f"section {name!r} is truncated")
            if zlib.crc32(blob) != crc:
                raise CorruptFile(f"section {name!r} fails its checksum")
            out[name] = blob
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptFile(f"damaged section table: {exc}") from None
    return out


def _standardizer_bytes(s: Standardizer) -> bytes:
    return struct.pack("<I", len(s.mean)) + s.mean.astype("<f8").tobytes() + s.std.astype("<f8").tobytes()


def _standardizer_from(data: bytes) -> Standardizer:
    (n,) = struct.unpack_from("<I", data, 0)
    arr = np.frombuffer(data, dtype="<f8", offset=4).astype(np.float64)
    if len(arr) != 2 * n:
        raise CorruptFile("standardizer section has the wrong size")
    return Standardizer(arr[:n].copy(), arr[n:].copy())


def save_model_bundle(path: str | os.PathLike, pipeline: Pipeline) -> None:
    fp = pipeline.featurizer.fp_config
    sections = {
        "config": pipeline.config.to_text().encode(),
        "fingerprint": json.dumps({"length": fp.length, "radius": fp.radius}).encode(),
        "embedding": pipeline.featurizer.embedding.to_bytes(),
        "standardizer": _standardizer_bytes(pipeline.featurizer.scaler),
        "autoencoder": pipeline.autoencoder.to_bytes(),
        "model": pipeline.model.to_bytes(),
    }
    atomic_write(path, pack_sections(sections))


def load_model_bundle(path: str | os.PathLike) -> Pipeline:
    path = Path(path)
    if not path.is_file():
        raise FileNotFound(f"no such bundle: {path}")
    sec = unpack_sections(path.read_bytes())
    missing = {"config", "fingerprint", "embedding", "standardizer", "autoencoder", "model"} - set(sec)
    if missing:
        raise CorruptFile(f"bundle lacks sections {sorted(missing)}")
    from .featurize import FingerprintConfig

    fp = json.loads(sec["fingerprint"])
    featurizer = Featurizer(
        EmbeddingMatrix.from_bytes(sec["embedding"]),
        _standardizer_from(sec["standardizer"]),
        FingerprintConfig(fp["length"], fp["radius"]),
    )
    return Pipeline(
        featurizer,
        AutoencoderModel.from_bytes(sec["autoencoder"]),
        ProbCGANRegressor.from_bytes(sec["model"]),
        RunConfig.from_text(sec["config"].decode()),
    )
