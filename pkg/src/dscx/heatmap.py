"""Class-weighted heat maps from detected bounding boxes.

Every box becomes a smooth bump: pixel columns of the box are mapped linearly
onto [-pi/2, pi/2] and so are its rows; with class weight ``n`` the
horizontal and vertical intensities are ``exp(sqrt(n) * cos(angle))`` and the
pixel value is their L2 combination. Bumps from different boxes add.

Coordinates are image pixels with the origin at the top-left, x to the right
and y downward. ``(x_lb, y_lb)`` is the top-left corner of a box and
``(x_rt, y_rt)`` the bottom-right; both corners are inclusive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

import numpy as np

DEFAULT_WIDTH = 256
DEFAULT_HEIGHT = 144


class ObjectClass(str, Enum):
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"
    VEHICLE = "vehicle"
    TRAFFIC_SIGN = "traffic_sign"
    TRAFFIC_LIGHT = "traffic_light"
    OTHER = "other"


_WEIGHTS = {
    ObjectClass.PEDESTRIAN: 4,
    ObjectClass.CYCLIST: 4,
    ObjectClass.VEHICLE: 2,
    ObjectClass.TRAFFIC_SIGN: 2,
    ObjectClass.TRAFFIC_LIGHT: 2,
    ObjectClass.OTHER: 1,
}


def class_weight(cls: ObjectClass | str) -> int:
    """Heat weight factor: 4 for people, 2 for vehicles/signs/lights, else 1."""
    return _WEIGHTS[ObjectClass(cls)]


class DetectionParseError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Detection:
    x_lb: float
    y_lb: float
    x_rt: float
    y_rt: float
    cls: ObjectClass = field(default=ObjectClass.OTHER)

    def __post_init__(self):
        object.__setattr__(self, "cls", ObjectClass(self.cls))
        if not (self.x_lb <= self.x_rt and self.y_lb <= self.y_rt):
            raise ValueError(f"box corners out of order: {self}")

    @property
    def weight(self) -> int:
        return class_weight(self.cls)

    def scaled(self, sx: float, sy: float) -> Detection:
        return Detection(self.x_lb * sx, self.y_lb * sy, self.x_rt * sx, self.y_rt * sy, self.cls)

    def to_json(self) -> dict:
        return {"x_lb": self.x_lb, "y_lb": self.y_lb, "x_rt": self.x_rt, "y_rt": self.y_rt, "class": self.cls.value}

    @classmethod
    def from_json(cls, obj: dict) -> Detection:
        try:
            return cls(
                float(obj["x_lb"]), float(obj["y_lb"]), float(obj["x_rt"]), float(obj["y_rt"]), ObjectClass(obj["class"])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DetectionParseError(f"bad box {obj!r}: {exc}") from exc


@dataclass(frozen=True)
class HeatMap:
    """Intensity grid stored row-major as ``values[row, column]`` (height x width)."""

    values: np.ndarray
    total_intensity: float

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def _pixel_span(lo: float, hi: float, limit: int) -> tuple[int, int] | None:
    start = max(math.ceil(lo), 0)
    stop = min(math.floor(hi), limit - 1)
    return (start, stop) if start <= stop else None


def axis_angles(n_pixels: int) -> np.ndarray:
    """Map pixel offsets 0..n-1 linearly onto [-pi/2, pi/2].

    A one-pixel axis has no extent to interpolate over and sits at angle 0.
    """
    if n_pixels == 1:
        return np.zeros(1)
    a0, a1 = -math.pi / 2, math.pi / 2
    offsets = np.arange(n_pixels, dtype=float)
    return offsets * (a1 - a0) / (n_pixels - 1) + a0


def box_field(det: Detection, width: int, height: int, weight: int | None = None):
    """Intensity patch of one box after clamping to the image.

    Returns ``(rows, cols, patch)`` where ``rows``/``cols`` are slices into the
    image, or ``None`` when the box lies entirely outside it.
    """
    xs = _pixel_span(det.x_lb, det.x_rt, width)
    ys = _pixel_span(det.y_lb, det.y_rt, height)
    if xs is None or ys is None:
        return None
    root_n = math.sqrt(det.weight if weight is None else weight)
    z_h = np.exp(root_n * np.cos(axis_angles(xs[1] - xs[0] + 1)))
    z_v = np.exp(root_n * np.cos(axis_angles(ys[1] - ys[0] + 1)))
    patch = np.sqrt(z_v[:, None] ** 2 + z_h[None, :] ** 2)
    return slice(ys[0], ys[1] + 1), slice(xs[0], xs[1] + 1), patch


def render_heatmap(dets: Iterable[Detection], width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT) -> HeatMap:
    """Superpose the fields of all boxes; ``total_intensity`` sums every box's patch.

    Boxes are accumulated in sorted order so the result is bit-identical for
    any ordering of ``dets``.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"heat map extents must be positive, got {width}x{height}")
    grid = np.zeros((height, width))
    total = 0.0
    for det in sorted(dets):
        placed = box_field(det, width, height)
        if placed is None:
            continue
        rows, cols, patch = placed
        grid[rows, cols] += patch
        total += float(patch.sum())
    return HeatMap(grid, total)


# -- file formats -------------------------------------------------------------------


def parse_keyframes(lines: Iterable[str]) -> list[tuple[int, list[Detection]]]:
    """Parse detection JSON-lines: one ``{"frame": int, "boxes": [...]}`` per line.

    Blank lines are skipped; the result is sorted by frame number.
    """
    frames = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            frame = int(obj["frame"])
            boxes = [Detection.from_json(b) for b in obj["boxes"]]
        except DetectionParseError as exc:
            raise DetectionParseError(f"line {lineno}: {exc}") from exc
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DetectionParseError(f"line {lineno}: {exc}") from exc
        frames.append((frame, boxes))
    frames.sort(key=lambda fb: fb[0])
    return frames


def read_keyframes(path) -> list[tuple[int, list[Detection]]]:
    with open(path, encoding="utf-8") as fh:
        return parse_keyframes(fh)


def format_keyframes(frames: Iterable[tuple[int, list[Detection]]]) -> str:
    return "".join(
        json.dumps({"frame": int(f), "boxes": [d.to_json() for d in boxes]}, separators=(",", ":")) + "\n"
        for f, boxes in frames
    )


def pgm_bytes(hm: HeatMap) -> bytes:
    """Binary 16-bit PGM (P5, big-endian samples), scaled so the maximum is 65535."""
    peak = float(hm.values.max()) if hm.values.size else 0.0
    if peak > 0:
        scaled = np.rint(hm.values / peak * 65535.0)
    else:
        scaled = np.zeros_like(hm.values)
    header = f"P5\n{hm.width} {hm.height}\n65535\n".encode("ascii")
    return header + scaled.astype(">u2").tobytes()


def write_pgm(path, hm: HeatMap) -> None:
    Path(path).write_bytes(pgm_bytes(hm))


def read_pgm(path) -> np.ndarray:
    """Read back a 16-bit P5 file written by :func:`write_pgm` as a uint16 array."""
    blob = Path(path).read_bytes()
    magic, dims, maxval, rest = blob.split(b"\n", 3)
    if magic != b"P5" or maxval != b"65535":
        raise ValueError("not a 16-bit P5 PGM")
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(rest, dtype=">u2", count=w * h).reshape(h, w).astype(np.uint16)
