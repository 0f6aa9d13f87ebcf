"""Gradient-based model visualizations.

Two procedures: class model visualization (regularized gradient ascent on the
input image against a pre-softmax class score, with L2 decay every step and a
Gaussian blur every few steps) and image-specific saliency maps (channel-max
absolute input gradient of the class score). Both read the network without
ever touching its parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from . import dataset as ds
from .commands import NUM_COMMANDS, FlightCommand
from .errors import DomainError, NumericError
from .network import Network
from .rng import make_rng


@dataclass
class VizConfig:
    steps: int = 200
    step_size: float = 1.0      # applied to the L2-normalized gradient
    l2_decay: float = 0.01
    blur_every: int = 4
    blur_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.blur_every < 1:
            raise DomainError("blur_every must be >= 1")
        if not 0.0 <= self.l2_decay < 1.0:
            raise DomainError("l2_decay must be in [0, 1)")


def class_score_gradient(network, image: np.ndarray, class_id: int):
    """Pre-softmax score of one class and its gradient w.r.t. the image.

    Parameter gradients are not computed, so concurrent calls on a shared
    network are safe.
    """
    logits, caches = network.forward(image)
    dlogits = np.zeros_like(logits)
    dlogits[class_id] = 1.0
    dimage = network.backward(dlogits, caches, want_param_grads=False)
    return float(logits[class_id]), dimage


def class_model_visualization(
    network: Network,
    class_id: int,
    config: VizConfig = VizConfig(),
) -> tuple[np.ndarray, list[float]]:
    """Synthesize the input that maximizes one class score.

    Returns the final image and the per-step score trace (evaluated before
    each update, plus the final score).
    """
    if not 0 <= class_id < NUM_COMMANDS:
        raise DomainError(f"class_id must be in 0..{NUM_COMMANDS - 1}")
    rng = make_rng(config.seed)
    shape = network.input_shape
    image = rng.uniform(0.4, 0.6, size=shape).astype(np.float32)
    trace: list[float] = []
    for it in range(config.steps):
        score, grad = class_score_gradient(network, image, class_id)
        if not np.isfinite(score):
            raise NumericError(f"class score diverged at step {it}; trace={trace[-5:]}")
        trace.append(score)
        norm = float(np.sqrt((grad.astype(np.float64) ** 2).sum()))
        image = image + config.step_size * grad / (norm + 1e-8)
        image = image * (1.0 - config.l2_decay)
        if (it + 1) % config.blur_every == 0:
            image = np.stack(
                [ndimage.gaussian_filter(image[c], config.blur_sigma) for c in range(shape[0])]
            )
        image = np.clip(image, 0.0, 1.0).astype(np.float32)
    score, _ = class_score_gradient(network, image, class_id)
    trace.append(score)
    return image, trace


def saliency_map(network: Network, image: np.ndarray, class_id: int) -> np.ndarray:
    """Channel-max absolute class-score gradient, normalized to [0,1].

    Shape (1, H, W), non-negative; an all-zero gradient stays all zero.
    """
    if not 0 <= class_id < NUM_COMMANDS:
        raise DomainError(f"class_id must be in 0..{NUM_COMMANDS - 1}")
    _, grad = class_score_gradient(network, image, class_id)
    sal = np.abs(grad).max(axis=0, keepdims=True)
    peak = float(sal.max())
    if peak > 0:
        sal = sal / peak
    return sal.astype(np.float32)


def top_scoring_images(
    network: Network,
    manifest: ds.DatasetManifest,
    data_dir,
    class_id: int,
    k: int = 50,
) -> list[tuple[str, float]]:
    """Sample ids ranked by pre-softmax class score, descending, ties by id."""
    if not manifest.samples:
        raise DomainError("manifest is empty")
    scored = []
    for s in manifest.samples:
        image = ds.read_ppm(Path(data_dir) / s.file)
        logits, _ = network.forward(image)
        scored.append((s.id, float(logits[class_id])))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:k]


def heat_colormap(values: np.ndarray) -> np.ndarray:
    """Map [0,1] scalars to a black-red-yellow-white heat ramp, (3,H,W)."""
    v = np.clip(values, 0.0, 1.0)
    r = np.clip(3.0 * v, 0.0, 1.0)
    g = np.clip(3.0 * v - 1.0, 0.0, 1.0)
    b = np.clip(3.0 * v - 2.0, 0.0, 1.0)
    return np.concatenate([r, g, b], axis=0).astype(np.float32)


def saliency_overlay(frame: np.ndarray, sal: np.ndarray) -> np.ndarray:
    """Fixed 50/50 blend of the frame with the heat-mapped saliency."""
    return (0.5 * frame + 0.5 * heat_colormap(sal)).astype(np.float32)


def emit_report(
    class_images: dict,
    saliency_overlays: dict,
    out_dir,
) -> list[str]:
    """Write one PPM per class model and per saliency overlay plus index.txt.

    ``class_images`` maps FlightCommand (or label) -> (3,H,W) image;
    ``saliency_overlays`` maps an id string -> overlay image. Returns the
    file names written, in index order. Deterministic bytes given inputs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for key in class_images:
        label = key.label if isinstance(key, FlightCommand) else str(key)
        name = f"classviz_{label}.ppm"
        ds.write_ppm(out / name, class_images[key])
        written.append(name)
    for key in saliency_overlays:
        name = f"saliency_{key}.ppm"
        ds.write_ppm(out / name, saliency_overlays[key])
        written.append(name)
    (out / "index.txt").write_text("".join(f"{n}\n" for n in written))
    return written


def occlusion_score_shift(
    network: Network,
    image: np.ndarray,
    class_id: int,
    mask: np.ndarray,
) -> float:
    """|score(image) - score(image with masked pixels zeroed)|."""
    base, _ = class_score_gradient(network, image, class_id)
    occluded = image.copy()
    occluded[:, mask] = 0.0
    after, _ = class_score_gradient(network, occluded, class_id)
    return abs(base - after)
