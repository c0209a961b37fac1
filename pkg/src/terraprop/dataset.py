"""Path-loss dataset generation and the on-disk "TPL1" container.

File layout (little endian):

    magic   4 bytes  b"TPL1"
    version u32
    metalen u32
    meta    JSON (utf-8): radio config, generator kind/params, n_records,
            base_seed, free-form "extra" statistics
    records n_records fixed-stride entries:
            n_points float32 heights, n_points float32 path loss dB,
            u64 record seed, u8 solver tag

Records are seeded independently (base_seed + index), so any record can be
regenerated in isolation, files are byte-reproducible, and generation can
fan out across processes.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Iterator, List, Optional, Tuple

import numpy as np

from .emcore import RadioConfig
from .mom import SolverConfig, solve_profile
from .terrain import TerrainProfile, gen_fractal, gen_gaussian

logger = logging.getLogger(__name__)

MAGIC = b"TPL1"
VERSION = 1

TAG_CODES = {"faffa": 0, "exact": 1, "measured": 2, "none": 3, "surrogate": 4,
             "baseline": 5}
CODE_TAGS = {v: k for k, v in TAG_CODES.items()}


class DatasetFormatError(RuntimeError):
    """Raised on malformed dataset files, with the failing byte offset."""


@dataclass(frozen=True)
class PathLossRecord:
    profile: TerrainProfile
    path_loss_db: np.ndarray
    solver_tag: str

    def __post_init__(self):
        pl = np.asarray(self.path_loss_db, dtype=np.float32)
        object.__setattr__(self, "path_loss_db", pl)
        if pl.size != self.profile.n_points:
            raise ValueError("path loss vector length must match the profile")
        if self.solver_tag not in TAG_CODES:
            raise ValueError(f"unknown solver_tag {self.solver_tag!r}")


@dataclass(frozen=True)
class DatasetHeader:
    radio: RadioConfig
    generator: dict
    n_records: int
    base_seed: int
    version: int = VERSION
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_records < 0:
            raise ValueError("n_records must be non-negative")


def _record_stride(n_points: int) -> int:
    return 8 * n_points + 9


def encode_record(record: PathLossRecord) -> bytes:
    heights = np.asarray(record.profile.heights_m, dtype="<f4").tobytes()
    losses = np.asarray(record.path_loss_db, dtype="<f4").tobytes()
    tail = struct.pack("<QB", record.profile.seed, TAG_CODES[record.solver_tag])
    return heights + losses + tail


def decode_record(buf: bytes, n_points: int, spacing_m: float,
                  generator_tag: str) -> PathLossRecord:
    heights = np.frombuffer(buf, dtype="<f4", count=n_points).astype(np.float64)
    losses = np.frombuffer(buf, dtype="<f4", count=n_points, offset=4 * n_points)
    seed, tag_code = struct.unpack_from("<QB", buf, 8 * n_points)
    if tag_code not in CODE_TAGS:
        raise DatasetFormatError(f"unknown solver tag code {tag_code}")
    profile = TerrainProfile(heights, spacing_m, int(seed), generator_tag)
    return PathLossRecord(profile, losses, CODE_TAGS[tag_code])


def _header_bytes(header: DatasetHeader) -> bytes:
    meta = {
        "radio": asdict(header.radio),
        "generator": header.generator,
        "n_records": header.n_records,
        "base_seed": header.base_seed,
        "extra": header.extra,
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<II", header.version, len(blob)) + blob


def write_records(path, header: DatasetHeader,
                  records: Iterable[PathLossRecord]) -> DatasetHeader:
    """Write a complete dataset atomically (temp file + rename)."""
    records = list(records)
    header = DatasetHeader(radio=header.radio, generator=header.generator,
                           n_records=len(records), base_seed=header.base_seed,
                           version=header.version, extra=header.extra)
    tmp = f"{path}.tmp-{os.getpid()}"
    try:
        with open(tmp, "wb") as f:
            f.write(_header_bytes(header))
            for rec in records:
                f.write(encode_record(rec))
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return header


def read_header(path) -> Tuple[DatasetHeader, int]:
    """Parse the header; returns (header, payload byte offset)."""
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) < 12:
            raise DatasetFormatError(f"truncated header at byte {len(head)}")
        if head[:4] != MAGIC:
            raise DatasetFormatError(f"bad magic {head[:4]!r} at byte 0")
        version, metalen = struct.unpack("<II", head[4:])
        if version != VERSION:
            raise DatasetFormatError(f"unsupported version {version} at byte 4")
        blob = f.read(metalen)
        if len(blob) < metalen:
            raise DatasetFormatError(f"truncated metadata at byte {12 + len(blob)}")
    try:
        meta = json.loads(blob.decode("utf-8"))
        radio = RadioConfig(**meta["radio"])
        header = DatasetHeader(radio=radio, generator=meta["generator"],
                               n_records=int(meta["n_records"]),
                               base_seed=int(meta["base_seed"]),
                               version=version, extra=meta.get("extra", {}))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"invalid metadata blob at byte 12: {exc}") from exc
    return header, 12 + metalen


def _profile_tag(header: DatasetHeader) -> str:
    kind = header.generator.get("kind", "external")
    return kind if kind in ("gaussian", "fractal") else "external"


def read_records(path, indices: Optional[Iterable[int]] = None
                 ) -> Iterator[PathLossRecord]:
    """Stream records from a dataset file, optionally only chosen indices
    (record stride is fixed, so selection seeks directly)."""
    header, offset = read_header(path)
    n_points = header.radio.n_points
    stride = _record_stride(n_points)
    tag = _profile_tag(header)
    with open(path, "rb") as f:
        if indices is None:
            f.seek(offset)
            for i in range(header.n_records):
                buf = f.read(stride)
                if len(buf) < stride:
                    raise DatasetFormatError(
                        f"truncated record {i} at byte {offset + i * stride + len(buf)}")
                yield decode_record(buf, n_points, header.radio.rx_spacing_m, tag)
        else:
            for i in indices:
                if not 0 <= i < header.n_records:
                    raise IndexError(f"record index {i} out of range")
                f.seek(offset + i * stride)
                buf = f.read(stride)
                if len(buf) < stride:
                    raise DatasetFormatError(
                        f"truncated record {i} at byte {offset + i * stride + len(buf)}")
                yield decode_record(buf, n_points, header.radio.rx_spacing_m, tag)


def read_dataset(path) -> Tuple[DatasetHeader, List[PathLossRecord]]:
    header, _ = read_header(path)
    return header, list(read_records(path))


def make_profile(kind: str, params, n: int, spacing_m: float,
                 seed: int) -> TerrainProfile:
    if kind == "gaussian":
        return gen_gaussian(params, n, spacing_m, seed)
    if kind == "fractal":
        return gen_fractal(params, n, spacing_m, seed)
    raise ValueError(f"unknown generator kind {kind!r}")


def generate_record(kind: str, params, cfg: SolverConfig,
                    seed: int) -> PathLossRecord:
    """Generate and solve one record; fully determined by its seed."""
    profile = make_profile(kind, params, cfg.radio.n_points,
                           cfg.radio.rx_spacing_m, seed)
    solved = solve_profile(profile, cfg)
    return PathLossRecord(profile, solved.values_db.astype(np.float32), cfg.method)


def _gen_worker(args):
    kind, params, cfg, seed = args
    try:
        return seed, generate_record(kind, params, cfg, seed), None
    except Exception as exc:  # noqa: BLE001 - failure is reported, record skipped
        return seed, None, f"{type(exc).__name__}: {exc}"


def generate_dataset(n: int, kind: str, params, cfg: SolverConfig,
                     base_seed: int, out_path, jobs: int = 1,
                     progress=None) -> DatasetHeader:
    """Generate n solved records (seeds base_seed..base_seed+n-1) and write
    them to `out_path`.  Failed solves are logged and skipped; the header
    count reflects what was written.  Corpus mean/std of the path-loss
    values are recorded in the header for downstream calibration."""
    if n < 1:
        raise ValueError("n must be at least 1")
    tasks = [(kind, params, cfg, base_seed + i) for i in range(n)]
    records: List[PathLossRecord] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = pool.map(_gen_worker, tasks, chunksize=max(1, n // (8 * jobs)))
            records = _collect(results, progress)
    else:
        records = _collect(map(_gen_worker, tasks), progress)

    values = np.concatenate([r.path_loss_db for r in records]).astype(np.float64)
    finite = values[np.isfinite(values)]
    extra = {
        "mean_path_loss_db": float(np.mean(finite)),
        "std_path_loss_db": float(np.std(finite)),
    }
    header = DatasetHeader(radio=cfg.radio,
                           generator={"kind": kind, "params": asdict(params)},
                           n_records=len(records), base_seed=base_seed,
                           extra=extra)
    return write_records(out_path, header, records)


def _collect(results, progress) -> List[PathLossRecord]:
    records = []
    for count, (seed, rec, err) in enumerate(results, start=1):
        if rec is None:
            logger.warning("solver failed for seed %d, record skipped: %s", seed, err)
        else:
            records.append(rec)
        if progress is not None:
            progress(count)
    return records


def write_profiles(profiles: Iterable[TerrainProfile], radio: RadioConfig,
                   generator: dict, base_seed: int, out_path) -> DatasetHeader:
    """Write profiles without solutions (solver tag "none", zero loss)."""
    records = [PathLossRecord(p, np.zeros(p.n_points, np.float32), "none")
               for p in profiles]
    header = DatasetHeader(radio=radio, generator=generator,
                           n_records=len(records), base_seed=base_seed)
    return write_records(out_path, header, records)


def split(n_records: int, n_train: int, n_val: int,
          seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Disjoint random train/validation index sets, deterministic in seed."""
    if n_train < 0 or n_val < 0:
        raise ValueError("split sizes must be non-negative")
    if n_train + n_val > n_records:
        raise ValueError(f"cannot split {n_records} records into "
                         f"{n_train} train + {n_val} val")
    perm = np.random.default_rng(seed).permutation(n_records)
    train = np.sort(perm[:n_train])
    val = np.sort(perm[n_train:n_train + n_val])
    return train, val


def _load_columns(path) -> np.ndarray:
    try:
        data = np.loadtxt(path, comments="#")
    except ValueError:
        data = np.loadtxt(path, comments="#", delimiter=",")
    data = np.atleast_2d(data)
    if data.ndim != 2 or data.shape[1] != 2:
        raise DatasetFormatError(f"{path}: expected two columns (range, value)")
    return data


def ingest_measured(terrain_path, path_gain_path) -> PathLossRecord:
    """Build a record from two text sidecar files (columns: range m, value);
    one file holds terrain heights, the other measured path gain in dB.
    Ranges must agree between the files and be uniformly spaced."""
    terr = _load_columns(terrain_path)
    gain = _load_columns(path_gain_path)
    if terr.shape[0] != gain.shape[0]:
        raise DatasetFormatError("terrain and path-gain files differ in length")
    if not np.allclose(terr[:, 0], gain[:, 0], rtol=0, atol=1e-6):
        raise DatasetFormatError("terrain and path-gain ranges do not match")
    steps = np.diff(terr[:, 0])
    if steps.size == 0 or not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-9):
        raise DatasetFormatError("ranges must be uniformly spaced")
    profile = TerrainProfile(terr[:, 1], float(steps[0]), 0, "external")
    return PathLossRecord(profile, gain[:, 1].astype(np.float32), "measured")
