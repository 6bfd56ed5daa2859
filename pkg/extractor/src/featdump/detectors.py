"""Two-stage detector adapters and the deterministic stub detector.

An adapter turns one image into per-proposal predictions plus the
MLP-head activation captured at a named hook point. The stub detector is
a real (if tiny) two-stage pipeline: a convolutional backbone over the
image, a fixed proposal grid, per-proposal RoI pooling, then an
fc -> relu -> fc -> relu head feeding a classifier. Its weights come from
a seeded generator, so identical configs produce identical dumps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
import torch
from torch import nn

HOOK_POINTS = ("FC1Relu", "FC2Relu")


class MissingHookError(ValueError):
    """The requested layer selector is not a hook point of the model."""


@dataclass(frozen=True)
class Proposal:
    """One region proposal scored by the head."""

    box: np.ndarray  # (4,) x1, y1, x2, y2 in pixels
    class_key: str
    score: float
    activation: np.ndarray  # (head_width,) float32 at the selected layer


class DetectorAdapter(Protocol):
    """What the extraction loop needs from a detector."""

    def hook_points(self) -> tuple[str, ...]: ...

    def detect(self, image: np.ndarray, layer: str) -> list[Proposal]: ...


class StubTwoStageDetector(nn.Module):
    """Deterministic grid-proposal detector with an inspectable MLP head.

    Proposals are the cells of a ``grid x grid`` partition of the image
    plus the full frame. Each proposal's backbone crop is average-pooled
    to 2x2, flattened, and pushed through fc1 -> ReLU -> fc2 -> ReLU and
    a classifier with one background logit; the predicted class is the
    best non-background softmax entry. The two ReLU modules are the
    ``FC1Relu``/``FC2Relu`` hook points.
    """

    def __init__(
        self,
        head_width: int = 8,
        channels: int = 4,
        class_names: tuple[str, ...] = ("car", "pedestrian", "cyclist"),
        grid: int = 2,
        seed: int = 0,
    ):
        super().__init__()
        if head_width < 1 or channels < 1 or grid < 1 or not class_names:
            raise ValueError("head_width, channels, grid and class_names required")
        self.head_width = head_width
        self.class_names = tuple(class_names)
        self.grid = grid
        self.backbone = nn.Conv2d(3, channels, kernel_size=3, stride=2, padding=1)
        self.fc1 = nn.Linear(channels * 4, head_width)
        self.fc1_relu = nn.ReLU()
        self.fc2 = nn.Linear(head_width, head_width)
        self.fc2_relu = nn.ReLU()
        self.classifier = nn.Linear(head_width, len(self.class_names) + 1)
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for param in self.parameters():
                param.copy_(torch.empty_like(param).uniform_(-0.6, 0.6, generator=gen))
        self.eval()

    def hook_points(self) -> tuple[str, ...]:
        return HOOK_POINTS

    def _hook_module(self, layer: str) -> nn.Module:
        table = {"FC1Relu": self.fc1_relu, "FC2Relu": self.fc2_relu}
        try:
            return table[layer]
        except KeyError:
            raise MissingHookError(
                f"no hook point {layer!r}; available: {', '.join(HOOK_POINTS)}"
            ) from None

    def propose(self, height: int, width: int) -> np.ndarray:
        """Fixed proposal boxes: grid cells plus the full frame."""
        boxes = []
        ys = np.linspace(0, height, self.grid + 1)
        xs = np.linspace(0, width, self.grid + 1)
        for r in range(self.grid):
            for c in range(self.grid):
                boxes.append((xs[c], ys[r], xs[c + 1], ys[r + 1]))
        boxes.append((0.0, 0.0, float(width), float(height)))
        return np.array(boxes, dtype=np.float64)

    def _image_tensor(self, image: np.ndarray) -> torch.Tensor:
        arr = np.asarray(image)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"image must be HxWx3, got shape {arr.shape}")
        if arr.dtype == np.uint8:
            arr = arr.astype(np.float32) / 255.0
        return torch.from_numpy(np.ascontiguousarray(arr.astype(np.float32)))

    def head(self, pooled: torch.Tensor) -> torch.Tensor:
        """Classifier logits for a pooled RoI (exposed for test harnesses)."""
        x = self.fc1_relu(self.fc1(pooled))
        x = self.fc2_relu(self.fc2(x))
        return self.classifier(x)

    def roi_pool(self, feature_map: torch.Tensor, box, height, width) -> torch.Tensor:
        """Average-pool the feature-map crop under ``box`` to 2x2, flatten."""
        _, fh, fw = feature_map.shape
        x1, y1, x2, y2 = box
        c1 = int(np.floor(x1 / width * fw))
        c2 = max(c1 + 1, int(np.ceil(x2 / width * fw)))
        r1 = int(np.floor(y1 / height * fh))
        r2 = max(r1 + 1, int(np.ceil(y2 / height * fh)))
        crop = feature_map[:, r1 : min(r2, fh), c1 : min(c2, fw)]
        pooled = torch.nn.functional.adaptive_avg_pool2d(crop, (2, 2))
        return pooled.reshape(-1)

    @torch.no_grad()
    def detect(self, image: np.ndarray, layer: str) -> list[Proposal]:
        hook_module = self._hook_module(layer)
        tensor = self._image_tensor(image)
        height, width = tensor.shape[0], tensor.shape[1]
        feature_map = self.backbone(tensor.permute(2, 0, 1).unsqueeze(0))[0]
        captured: list[torch.Tensor] = []
        handle = hook_module.register_forward_hook(
            lambda module, inputs, output: captured.append(output.detach().clone())
        )
        proposals = []
        try:
            for box in self.propose(height, width):
                pooled = self.roi_pool(feature_map, box, height, width)
                logits = self.head(pooled)
                probs = torch.softmax(logits, dim=0)
                best = int(torch.argmax(probs[:-1]))  # last logit is background
                proposals.append(
                    Proposal(
                        box=box,
                        class_key=self.class_names[best],
                        score=float(probs[best]),
                        activation=captured[-1].numpy().astype(np.float32),
                    )
                )
        finally:
            handle.remove()
        return proposals


def load_detector(model_spec: str, weights: str | None = None) -> StubTwoStageDetector:
    """Instantiate a detector from its spec string.

    ``stub`` or ``stub:<head_width>[:<seed>]`` builds the deterministic
    stub; a ``--weights`` state-dict path, when given, overrides its
    seeded parameters. Real detectors plug in by implementing
    ``DetectorAdapter`` (hook_points + detect) and registering a spec
    prefix here.
    """
    parts = model_spec.split(":")
    if parts[0] != "stub":
        raise ValueError(
            f"unknown model spec {model_spec!r}; supported: "
            "stub[:head_width[:seed]]"
        )
    head_width = int(parts[1]) if len(parts) > 1 and parts[1] else 8
    seed = int(parts[2]) if len(parts) > 2 else 0
    model = StubTwoStageDetector(head_width=head_width, seed=seed)
    if weights:
        state = torch.load(weights, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
        model.eval()
    return model
