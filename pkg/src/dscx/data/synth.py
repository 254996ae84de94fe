"""Synthetic driving-scene samples with a planted, re-scorable complexity label.

Each sample is built around its label ``L``. Three components are planted
near ``L``:

* ``vru``: mean pedestrian/cyclist boxes per keyframe,
* ``area``: mean summed box area per keyframe as a fraction of the frame, / 0.04,
* ``motion``: mean std of longitudinal and lateral acceleration (m/s^2), / 0.5.

The label is round(mean of the components) clipped to 0..4, and every
generated sample is re-scored from its written files before it is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from dscx.data.keyframes import NUM_KEYFRAMES, select_keyframes
from dscx.data.manifest import DatasetManifest, ManifestEntry, format_manifest
from dscx.data.splits import published_counts
from dscx.dynamics import WINDOW_LENGTH, DynamicsWindow, format_dynamics_csv, parse_dynamics_csv
from dscx.heatmap import Detection, ObjectClass, format_keyframes, parse_keyframes
from dscx.sample import Sample

AREA_UNIT = 0.04
MOTION_UNIT = 0.5
VRU = (ObjectClass.PEDESTRIAN, ObjectClass.CYCLIST)
ASPECT = {ObjectClass.PEDESTRIAN: 2.5, ObjectClass.CYCLIST: 1.8, ObjectClass.VEHICLE: 0.7}
CSV_RATE_HZ = 50.0
CSV_ROWS = 200
SOURCE_FRAMES = 120


@dataclass(frozen=True)
class SynthConfig:
    counts: tuple[int, ...] = tuple(published_counts(1000))
    seed: int = 0
    frame: tuple[int, int] = (1280, 720)
    jitter: float = 0.3  # max distance of each planted component from the label
    video_segments: int = 10

    def __post_init__(self):
        if len(self.counts) != 5 or any(c < 0 for c in self.counts) or sum(self.counts) <= 0:
            raise ValueError(f"need five non-negative class counts with a positive total, got {self.counts}")
        if not 0 <= self.jitter < 0.5:
            raise ValueError("jitter must lie in [0, 0.5)")

    @classmethod
    def from_total(cls, total: int, **kwargs) -> SynthConfig:
        return cls(counts=tuple(published_counts(total)), **kwargs)


@dataclass(frozen=True)
class Score:
    vru: float
    area: float
    motion: float

    @property
    def value(self) -> float:
        return (self.vru + self.area + self.motion) / 3

    @property
    def label(self) -> int:
        return int(min(4, max(0, math.floor(self.value + 0.5))))


def score_sample(keyframes: Sequence[Sequence[Detection]], window: DynamicsWindow, frame=(1280, 720)) -> Score:
    """Recompute the planted components from a sample's detections and dynamics."""
    frame_area = frame[0] * frame[1]
    vru = np.mean([sum(d.cls in VRU for d in dets) for dets in keyframes])
    area = np.mean([sum((d.x_rt - d.x_lb) * (d.y_rt - d.y_lb) for d in dets) / frame_area for dets in keyframes])
    motion = (np.std(window.a_x) + np.std(window.a_y)) / 2
    return Score(float(vru), float(area / AREA_UNIT), float(motion / MOTION_UNIT))


# -- generation -------------------------------------------------------------------------


def _target(rng, label: int, jitter: float) -> float:
    lo = 0.0 if label == 0 else -jitter
    hi = 0.0 if label == 4 else jitter
    return label + rng.uniform(lo, hi)


def _vru_counts(rng, label: int, target: float) -> np.ndarray:
    counts = np.full(NUM_KEYFRAMES, label)
    shift = int(round((target - label) * NUM_KEYFRAMES))
    frames = rng.permutation(NUM_KEYFRAMES)[: abs(shift)]
    counts[frames] += int(np.sign(shift))
    return np.maximum(counts, 0)


def _box(rng, cls: ObjectClass, area: float, frame) -> Detection:
    fw, fh = frame
    aspect = ASPECT[cls]
    w = math.sqrt(area / aspect)
    h = min(aspect * w, 0.95 * fh)
    w = min(area / h, 0.95 * fw)
    x = rng.uniform(0, fw - 1 - w)
    y = rng.uniform(0, fh - 1 - h)
    return Detection(round(x, 2), round(y, 2), round(x + w, 2), round(y + h, 2), cls)


def _frames(rng, label: int, cfg: SynthConfig) -> list[list[Detection]]:
    frame_area = cfg.frame[0] * cfg.frame[1]
    vru = _vru_counts(rng, label, _target(rng, label, cfg.jitter))
    area = _target(rng, label, cfg.jitter) * AREA_UNIT
    keyframes = []
    if label == 0:
        # at most one (non-VRU) box per frame, sized so the area component stays near 0
        for _ in range(NUM_KEYFRAMES):
            dets = [_box(rng, ObjectClass.VEHICLE, area * frame_area, cfg.frame)] if area > 0 and rng.random() < 0.7 else []
            keyframes.append(dets)
        return keyframes
    for f in range(NUM_KEYFRAMES):
        classes = [VRU[int(rng.integers(2))] for _ in range(vru[f])]
        classes += [ObjectClass.VEHICLE] * int(rng.integers(1, 3))
        shares = rng.uniform(0.5, 1.5, size=len(classes))
        shares /= shares.sum()
        budget = area * frame_area * rng.uniform(0.9, 1.1)
        keyframes.append([_box(rng, c, s * budget, cfg.frame) for c, s in zip(classes, shares)])
    return keyframes


def _smooth_signal(rng, t: np.ndarray, std: float) -> np.ndarray:
    freqs = rng.uniform(0.2, 1.5, size=3)
    phases = rng.uniform(0, 2 * np.pi, size=3)
    amps = rng.uniform(0.5, 1.0, size=3)
    sig = sum(a * np.sin(2 * np.pi * f * t + p) for a, f, p in zip(amps, freqs, phases))
    sig = sig - sig.mean()
    return sig * (std / sig.std()) if sig.std() > 0 else sig


def _dynamics_csv(rng, label: int, moving: bool, cfg: SynthConfig) -> str:
    t = np.arange(CSV_ROWS) / CSV_RATE_HZ
    if not moving:
        zeros = np.zeros(CSV_ROWS)
        return format_dynamics_csv(t, zeros, zeros, zeros, zeros)
    std = _target(rng, label, cfg.jitter) * MOTION_UNIT
    ax = _smooth_signal(rng, t, std)
    ay = _smooth_signal(rng, t, std)
    v0 = rng.uniform(6.0, 15.0)
    speed = np.maximum(v0 + np.cumsum(ax) / CSV_RATE_HZ, 0.5)
    yaw = ay / np.maximum(speed, 1.0)
    return format_dynamics_csv(t, ax, ay, yaw, speed)


def _detections_jsonl(keyframes) -> str:
    frame_ids = select_keyframes(SOURCE_FRAMES)
    return format_keyframes(zip(frame_ids, keyframes))


def generate_sample(label: int, rng: np.random.Generator, cfg: SynthConfig, max_tries: int = 50):
    """Return ``(detections_jsonl, dynamics_csv, moving)`` whose re-scored label is ``label``."""
    for _ in range(max_tries):
        moving = bool(label > 0 or rng.random() < 0.5)
        det_text = _detections_jsonl(_frames(rng, label, cfg))
        dyn_text = _dynamics_csv(rng, label, moving, cfg)
        keyframes = [boxes for _, boxes in parse_keyframes(det_text.splitlines())]
        window = parse_dynamics_csv(dyn_text.splitlines())
        if score_sample(keyframes, window, cfg.frame).label == label:
            return det_text, dyn_text, moving
    raise RuntimeError(f"could not plant label {label} in {max_tries} tries")


def synth_dataset(cfg: SynthConfig, out_dir) -> DatasetManifest:
    """Write detections JSONL, dynamics CSV and ``manifest.csv`` under ``out_dir``.

    Output bytes depend only on ``cfg``.
    """
    out = Path(out_dir)
    (out / "detections").mkdir(parents=True, exist_ok=True)
    (out / "dynamics").mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence(cfg.seed)
    order_seed, *sample_seeds = root.spawn(1 + sum(cfg.counts))
    labels = np.repeat(np.arange(5), cfg.counts)
    labels = np.random.default_rng(order_seed).permutation(labels)
    entries = []
    for i, (label, seed) in enumerate(zip(labels, sample_seeds)):
        rng = np.random.default_rng(seed)
        det_text, dyn_text, moving = generate_sample(int(label), rng, cfg)
        sid = f"s{i:05d}"
        det_rel = f"detections/{sid}.jsonl"
        dyn_rel = f"dynamics/{sid}.csv"
        (out / det_rel).write_text(det_text, encoding="utf-8")
        (out / dyn_rel).write_text(dyn_text, encoding="utf-8")
        video = f"v{i // cfg.video_segments:04d}"
        entries.append(ManifestEntry(sid, det_rel, dyn_rel, int(label), moving, video, i % cfg.video_segments))
    manifest = DatasetManifest(entries, out)
    (out / "manifest.csv").write_text(format_manifest(manifest), encoding="utf-8")
    return manifest


def rescore(sample: Sample, frame=(1280, 720)) -> Score:
    return score_sample(sample.keyframes, sample.dynamics, frame)
