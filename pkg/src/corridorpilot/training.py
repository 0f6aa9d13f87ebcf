"""Fine-tuning loop with per-layer learning rates and binary checkpoints.

Training is plain SGD with momentum. The effective rate for a layer is
base_lr * lr_mult * decay(iteration), with a step decay of x0.5 at 1/3 and
2/3 of the run. Layers with lr_mult 0 stay bitwise frozen. Checkpoints use
the CPNV1 binary format: magic, length-prefixed architecture JSON, raw
float32 parameters in layer order, trailing CRC32.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import dataset as ds
from . import tensor as T
from .commands import NUM_COMMANDS, FlightCommand
from .errors import DomainError, FormatError, NumericError
from .network import Network, layer_from_spec

CHECKPOINT_MAGIC = b"CPNV1\x00"


@dataclass
class TrainConfig:
    base_lr: float = 0.005
    momentum: float = 0.9
    batch_size: int = 32
    iterations: int = 3000
    head_lr_mult: float = 10.0
    seed: int = 0
    decay_factor: float = 0.5      # applied at 1/3 and 2/3 of the run
    divergence_loss: float = 1e3
    checkpoint_dir: Optional[Path] = None

    def __post_init__(self):
        if self.base_lr <= 0 or self.batch_size < 1 or self.iterations < 0:
            raise DomainError("base_lr, batch_size, iterations must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise DomainError("momentum must be in [0, 1)")

    def lr_at(self, iteration: int) -> float:
        third = max(1, self.iterations // 3)
        decays = min(2, iteration // third) if self.iterations else 0
        return self.base_lr * (self.decay_factor ** decays)


@dataclass
class TrainReport:
    loss_curve: list = field(default_factory=list)
    holdout_accuracy: float = 0.0
    per_class_accuracy: list = field(default_factory=list)
    confusion: np.ndarray = field(default_factory=lambda: np.zeros((NUM_COMMANDS, NUM_COMMANDS), dtype=np.int64))
    iterations: int = 0


class TrainingDiverged(NumericError):
    def __init__(self, message: str, report: TrainReport):
        super().__init__(message)
        self.report = report


def finetune(
    network: Network,
    manifest: ds.DatasetManifest,
    data_dir,
    config: TrainConfig = TrainConfig(),
) -> tuple[Network, TrainReport]:
    """Train a copy of ``network`` on the manifest's train split."""
    net = network.copy()
    report = TrainReport()
    if config.iterations == 0:
        if _has_split(manifest, "holdout"):
            _fill_eval(report, net, manifest, data_dir, "holdout")
        return net, report

    train_data = ds.load_split_arrays(manifest, data_dir, "train")
    params = net.params()
    lr_mults = net.param_lr_mults()
    velocities = [np.zeros_like(p.data) for p in params]

    it = 0
    epoch = 0
    boundaries = {max(1, config.iterations // 3), max(1, 2 * config.iterations // 3)}
    while it < config.iterations:
        for images, labels in ds.batches(
            manifest, data_dir, config.batch_size,
            seed=config.seed + epoch, preloaded=train_data,
        ):
            logits, caches = net.forward(images)
            loss, dlogits = T.softmax_cross_entropy(logits, labels)
            report.loss_curve.append(loss)
            if not np.isfinite(loss) or loss > config.divergence_loss:
                raise TrainingDiverged(
                    f"loss {loss} at iteration {it}; aborting", report
                )
            net.backward(dlogits, caches)
            T.sgd_step(params, velocities, config.lr_at(it), config.momentum, lr_mults)
            it += 1
            if config.checkpoint_dir is not None and it in boundaries:
                save_checkpoint(net, Path(config.checkpoint_dir) / f"ckpt_{it:06d}.cpnv")
            if it >= config.iterations:
                break
        epoch += 1
    report.iterations = it

    if config.checkpoint_dir is not None:
        save_checkpoint(net, Path(config.checkpoint_dir) / "model.cpnv")
    if _has_split(manifest, "holdout"):
        _fill_eval(report, net, manifest, data_dir, "holdout")
    return net, report


def _has_split(manifest: ds.DatasetManifest, split: str) -> bool:
    try:
        return bool(ds.split_samples(manifest, split))
    except DomainError:
        return False


def _fill_eval(report, net, manifest, data_dir, split):
    acc, per_class, confusion = evaluate(net, manifest, data_dir, split)
    report.holdout_accuracy = acc
    report.per_class_accuracy = per_class
    report.confusion = confusion


def evaluate(
    network: Network,
    manifest: ds.DatasetManifest,
    data_dir,
    split: str = "holdout",
    preloaded=None,
) -> tuple[float, list, np.ndarray]:
    """Argmax accuracy plus a 6x6 confusion matrix over one split."""
    if preloaded is None:
        preloaded = ds.load_split_arrays(manifest, data_dir, split)
    images, labels = preloaded
    confusion = np.zeros((NUM_COMMANDS, NUM_COMMANDS), dtype=np.int64)
    for start in range(0, images.shape[0], 64):
        chunk = images[start : start + 64]
        logits, _ = network.forward(chunk)
        preds = logits.argmax(axis=1)
        for t, p in zip(labels[start : start + 64], preds):
            confusion[t, p] += 1
    total = confusion.sum()
    accuracy = float(confusion.trace() / total) if total else 0.0
    per_class = []
    for k in range(NUM_COMMANDS):
        row = confusion[k].sum()
        per_class.append(float(confusion[k, k] / row) if row else float("nan"))
    return accuracy, per_class, confusion


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def checkpoint_bytes(network: Network) -> bytes:
    spec = {
        "input_shape": list(network.input_shape),
        "class_names": [c.label if isinstance(c, FlightCommand) else int(c)
                        for c in network.class_names],
        "layers": network.layer_specs(),
    }
    spec_blob = json.dumps(spec, sort_keys=True, separators=(",", ":")).encode()
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<I", len(spec_blob))
    out += spec_blob
    for p in network.params():
        out += np.ascontiguousarray(p.data, dtype="<f4").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


def save_checkpoint(network: Network, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(network))


def network_from_checkpoint_bytes(blob: bytes) -> Network:
    if len(blob) < len(CHECKPOINT_MAGIC) + 8:
        raise FormatError("checkpoint truncated")
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic")
    (crc,) = struct.unpack("<I", blob[-4:])
    if crc != (zlib.crc32(blob[:-4]) & 0xFFFFFFFF):
        raise FormatError("checkpoint CRC mismatch")
    pos = len(CHECKPOINT_MAGIC)
    (spec_len,) = struct.unpack("<I", blob[pos : pos + 4])
    pos += 4
    spec_blob = blob[pos : pos + spec_len]
    if len(spec_blob) != spec_len:
        raise FormatError("checkpoint spec truncated")
    pos += spec_len
    try:
        spec = json.loads(spec_blob)
    except json.JSONDecodeError as e:
        raise FormatError(f"bad architecture spec: {e}") from None

    layers = [layer_from_spec(ls) for ls in spec["layers"]]
    names = spec["class_names"]
    if names == [c.label for c in FlightCommand]:
        class_names = tuple(FlightCommand)
    else:
        class_names = tuple(names)
    net = Network(layers, tuple(spec["input_shape"]), class_names)
    for p in net.params():
        nbytes = p.data.size * 4
        chunk = blob[pos : pos + nbytes]
        if len(chunk) != nbytes:
            raise FormatError("checkpoint parameters truncated")
        p.data = np.frombuffer(chunk, dtype="<f4").reshape(p.data.shape).copy()
        pos += nbytes
    if pos != len(blob) - 4:
        raise FormatError("checkpoint has trailing bytes")
    return net


def load_checkpoint(path) -> Network:
    return network_from_checkpoint_bytes(Path(path).read_bytes())
