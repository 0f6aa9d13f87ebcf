"""On-disk demonstration datasets.

A dataset directory holds 64x64 binary PPM frames plus `manifest.jsonl`: a
header line `{version: "CPDS1", pixel_scale: "unit", worlds: {...}}` followed
by one JSON record per sample. Pixel values are on the unit [0,1] scale; the
Gaussian augmentation's variance of 0.01 is interpreted on that scale.

Mirroring is deliberately absent from the augmentation registry: flipping a
frame labeled Move Right produces a scene that demands Move Left, so
horizontal flips would poison the labels.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .commands import COMMAND_LABELS, NUM_COMMANDS, FlightCommand
from .errors import DomainError, FormatError, StateError
from .rng import make_rng
from .world import NUM_THEMES

MANIFEST_NAME = "manifest.jsonl"
MANIFEST_VERSION = "CPDS1"


# ---------------------------------------------------------------------------
# PPM frames
# ---------------------------------------------------------------------------

def frame_to_ppm_bytes(frame: np.ndarray) -> bytes:
    """Encode a (3,H,W) float [0,1] frame as binary PPM (P6, 8-bit)."""
    if frame.ndim != 3 or frame.shape[0] != 3:
        raise DomainError(f"expected (3,H,W) frame, got {frame.shape}")
    _, h, w = frame.shape
    pixels = np.clip(np.rint(frame * 255.0), 0, 255).astype(np.uint8)
    return f"P6\n{w} {h}\n255\n".encode() + pixels.transpose(1, 2, 0).tobytes()


def ppm_bytes_to_frame(data: bytes) -> np.ndarray:
    """Decode binary PPM back to a (3,H,W) float32 frame in [0,1]."""
    if not data.startswith(b"P6"):
        raise FormatError("not a binary PPM (P6) image")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":  # comment line
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError:
        raise FormatError("malformed PPM header") from None
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval}")
    raw = data[pos : pos + w * h * 3]
    if len(raw) != w * h * 3:
        raise FormatError("truncated PPM pixel data")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return (arr.astype(np.float32) / 255.0).transpose(2, 0, 1)


def write_ppm(path, frame: np.ndarray) -> None:
    Path(path).write_bytes(frame_to_ppm_bytes(frame))


def read_ppm(path) -> np.ndarray:
    return ppm_bytes_to_frame(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

@dataclass(slots=True)
class Sample:
    id: str
    file: str
    label: FlightCommand
    source: str                 # expert | human | augmented
    world_id: str
    step_index: int
    parent_id: Optional[str] = None

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "file": self.file,
            "label": self.label.label,
            "source": self.source,
            "world_id": self.world_id,
            "step_index": self.step_index,
            "parent_id": self.parent_id,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Sample":
        return cls(
            id=rec["id"],
            file=rec["file"],
            label=FlightCommand.from_label(rec["label"]),
            source=rec["source"],
            world_id=rec["world_id"],
            step_index=int(rec["step_index"]),
            parent_id=rec.get("parent_id"),
        )


@dataclass
class DatasetManifest:
    version: str = MANIFEST_VERSION
    pixel_scale: str = "unit"
    worlds: dict = field(default_factory=dict)  # world_id -> {theme, layout, seed}
    samples: list[Sample] = field(default_factory=list)

    def header(self) -> dict:
        return {
            "version": self.version,
            "pixel_scale": self.pixel_scale,
            "worlds": self.worlds,
        }

    @property
    def class_count_list(self) -> list[int]:
        counts = [0] * NUM_COMMANDS
        for s in self.samples:
            counts[s.label] += 1
        return counts


def _canonical_line(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode() + b"\n"


def save_manifest(manifest: DatasetManifest, directory) -> None:
    path = Path(directory) / MANIFEST_NAME
    with open(path, "wb") as f:
        f.write(_canonical_line(manifest.header()))
        for s in manifest.samples:
            f.write(_canonical_line(s.to_record()))


def load_manifest(directory) -> DatasetManifest:
    path = Path(directory) / MANIFEST_NAME
    lines = path.read_bytes().splitlines()
    if not lines:
        raise FormatError("empty manifest")
    header = json.loads(lines[0])
    if header.get("version") != MANIFEST_VERSION:
        raise FormatError(f"unsupported manifest version {header.get('version')!r}")
    manifest = DatasetManifest(
        version=header["version"],
        pixel_scale=header.get("pixel_scale", "unit"),
        worlds=header.get("worlds", {}),
    )
    for line in lines[1:]:
        if line.strip():
            manifest.samples.append(Sample.from_record(json.loads(line)))
    return manifest


def _append_sample(directory: Path, manifest_path: Path, sample: Sample,
                   frame: Optional[np.ndarray]) -> None:
    """Write the image first, then the manifest line as one atomic append.

    A crash between the two leaves an orphan image but never a torn or
    dangling manifest record.
    """
    if frame is not None:
        write_ppm(directory / sample.file, frame)
    with open(manifest_path, "ab") as f:
        f.write(_canonical_line(sample.to_record()))
        f.flush()


# ---------------------------------------------------------------------------
# recording
# ---------------------------------------------------------------------------

def record(
    out_dir,
    rollouts: Sequence[tuple],
    source: str = "expert",
) -> DatasetManifest:
    """Record rollouts into ``out_dir``.

    ``rollouts`` is a sequence of (world_id, world_meta, trajectory) where
    world_meta is {"theme": int, "layout": str, "seed": int} and trajectory is
    the (frame, command, pose) list produced by the expert or a teleop
    session. Appends to an existing dataset directory if one is present.
    """
    if not rollouts:
        raise DomainError("no trajectories to record")
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    manifest_path = directory / MANIFEST_NAME

    if manifest_path.exists():
        manifest = load_manifest(directory)
    else:
        manifest = DatasetManifest()
        manifest_path.write_bytes(_canonical_line(manifest.header()))

    for world_id, meta, trajectory in rollouts:
        manifest.worlds[world_id] = dict(meta)
        base_step = sum(1 for s in manifest.samples if s.world_id == world_id)
        for i, (frame, command, _pose) in enumerate(trajectory):
            idx = base_step + i
            sample = Sample(
                id=f"{world_id}_{idx:04d}_clean",
                file=f"{world_id}_{idx:04d}_clean.ppm",
                label=command,
                source=source,
                world_id=world_id,
                step_index=idx,
            )
            _append_sample(directory, manifest_path, sample, frame)
            manifest.samples.append(sample)

    save_manifest(manifest, directory)  # rewrite header with updated worlds
    return manifest


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

def _gaussian_noise(frame: np.ndarray, rng: np.random.Generator,
                    mean: float, variance: float) -> np.ndarray:
    noisy = frame + rng.normal(mean, math.sqrt(variance), size=frame.shape)
    return np.clip(noisy, 0.0, 1.0).astype(np.float32)


# The only registered augmentation. Tests assert no mirror/flip ever appears.
AUGMENTATIONS = {"gaussian_noise": _gaussian_noise}


def augment_gaussian(data_dir, mean: float = 0.0, variance: float = 0.01,
                     seed: int = 0) -> DatasetManifest:
    """Add one Gaussian-noise copy of every clean sample; doubles the dataset."""
    directory = Path(data_dir)
    manifest = load_manifest(directory)
    if any(s.source == "augmented" for s in manifest.samples):
        raise StateError("dataset is already augmented; refusing to double again")
    manifest_path = directory / MANIFEST_NAME
    clean = list(manifest.samples)
    for i, parent in enumerate(clean):
        rng = make_rng([seed, i])
        frame = read_ppm(directory / parent.file)
        noisy = AUGMENTATIONS["gaussian_noise"](frame, rng, mean, variance)
        sample = Sample(
            id=f"{parent.world_id}_{parent.step_index:04d}_noisy",
            file=f"{parent.world_id}_{parent.step_index:04d}_noisy.ppm",
            label=parent.label,
            source="augmented",
            world_id=parent.world_id,
            step_index=parent.step_index,
            parent_id=parent.id,
        )
        _append_sample(directory, manifest_path, sample, noisy)
        manifest.samples.append(sample)
    return manifest


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

@dataclass
class CountTable:
    """Per-command, per-theme sample counts in the style of a survey table."""

    counts: np.ndarray  # (NUM_COMMANDS, NUM_THEMES) int64
    display_names: tuple = (
        "Move Forward", "Move Right", "Move Left", "Spin Right", "Spin Left", "Stop",
    )

    def total(self, command: FlightCommand) -> int:
        return int(self.counts[command].sum())

    @property
    def grand_total(self) -> int:
        return int(self.counts.sum())

    def format(self) -> str:
        header = ["Flight Command"] + [f"Loc {i + 1}" for i in range(NUM_THEMES)] + ["Sum"]
        rows = [header]
        for cmd in FlightCommand:
            rows.append(
                [self.display_names[cmd]]
                + [str(int(v)) for v in self.counts[cmd]]
                + [str(self.total(cmd))]
            )
        widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
        return "\n".join(
            "  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows
        )


def class_counts(manifest: DatasetManifest) -> CountTable:
    counts = np.zeros((NUM_COMMANDS, NUM_THEMES), dtype=np.int64)
    for s in manifest.samples:
        meta = manifest.worlds.get(s.world_id)
        theme = int(meta["theme"]) if meta else 0
        counts[s.label, theme] += 1
    return CountTable(counts)


# ---------------------------------------------------------------------------
# splits and batches
# ---------------------------------------------------------------------------

def split_world_ids(manifest: DatasetManifest, holdout_every: int = 10) -> tuple[list, list]:
    """Deterministic train/holdout partition by world, never by frame."""
    ids = sorted(manifest.worlds) or sorted({s.world_id for s in manifest.samples})
    holdout = ids[::holdout_every]
    train = [i for i in ids if i not in set(holdout)]
    return train, holdout


def split_samples(manifest: DatasetManifest, split: str) -> list[Sample]:
    train, holdout = split_world_ids(manifest)
    wanted = set(train if split == "train" else holdout)
    if split not in ("train", "holdout"):
        raise DomainError(f"split must be 'train' or 'holdout', got {split!r}")
    return [s for s in manifest.samples if s.world_id in wanted]


def load_split_arrays(manifest: DatasetManifest, directory, split: str):
    """Preload a split as (images (N,3,H,W) float32, labels (N,) int64)."""
    samples = split_samples(manifest, split)
    if not samples:
        raise DomainError(f"split {split!r} is empty")
    images = np.stack([read_ppm(Path(directory) / s.file) for s in samples])
    labels = np.array([int(s.label) for s in samples], dtype=np.int64)
    return images, labels


def batches(
    manifest: DatasetManifest,
    directory,
    batch_size: int,
    seed: int,
    split: str = "train",
    preloaded=None,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """One seeded-shuffle epoch of (images, labels) batches; final batch short.

    ``preloaded`` may carry the (images, labels) arrays from
    load_split_arrays to avoid re-reading files every epoch.
    """
    if batch_size < 1:
        raise DomainError("batch_size must be >= 1")
    if preloaded is None:
        preloaded = load_split_arrays(manifest, directory, split)
    images, labels = preloaded
    n = images.shape[0]
    order = make_rng(seed).permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        yield images[idx], labels[idx]
