"""Vehicle-dynamics windows and their feature extractor.

A window holds four equally long channels in a fixed order: longitudinal
acceleration, speed, lateral acceleration and yaw rate. The extractor runs
three stride-2 1-D convolutions (denoising and downsampling 120 -> 15 samples)
and feeds the 15 resulting 64-wide tokens to an attention encoder.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from dscx.attention import EncoderConfig, EncoderStack, encode_sequence
from dscx.errors import LengthMismatch, ShapeMismatch
from dscx.nn import functional as F
from dscx.nn.layers import Conv1d, Module
from dscx.nn.tensor import Tensor

CHANNELS = ("a_x", "v", "a_y", "yaw_rate")
CSV_HEADER = ("t", "ax", "ay", "yaw_rate", "speed")
SAMPLE_RATE_HZ = 30.0
WINDOW_SECONDS = 4.0
WINDOW_LENGTH = 120


@dataclass(frozen=True)
class DynamicsWindow:
    a_x: np.ndarray
    v: np.ndarray
    a_y: np.ndarray
    yaw_rate: np.ndarray

    def __post_init__(self):
        lengths = {len(np.asarray(getattr(self, c))) for c in CHANNELS}
        if len(lengths) != 1:
            raise LengthMismatch(f"dynamics channels differ in length: {sorted(lengths)}")
        for c in CHANNELS:
            object.__setattr__(self, c, np.asarray(getattr(self, c), dtype=float))

    @property
    def length(self) -> int:
        return len(self.a_x)

    def as_array(self) -> np.ndarray:
        """Stack to shape (4, length) in channel order a_x, v, a_y, yaw_rate."""
        return np.stack([getattr(self, c) for c in CHANNELS])

    @classmethod
    def from_array(cls, arr: np.ndarray) -> DynamicsWindow:
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != 4:
            raise ShapeMismatch(f"expected a (4, L) array, got {arr.shape}")
        return cls(*arr)


@dataclass(frozen=True)
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, windows) -> ChannelStats:
        """Per-channel mean and population standard deviation over all windows."""
        data = np.concatenate([w.as_array() for w in windows], axis=1)
        return cls(data.mean(axis=1), data.std(axis=1))

    @classmethod
    def identity(cls) -> ChannelStats:
        return cls(np.zeros(4), np.ones(4))


def normalize_window(raw: DynamicsWindow, stats: ChannelStats) -> DynamicsWindow:
    """Standardise each channel; channels with std below 1e-8 become zeros."""
    arr = raw.as_array()
    mean = np.asarray(stats.mean, dtype=float)[:, None]
    std = np.asarray(stats.std, dtype=float)[:, None]
    flat = std < 1e-8
    out = np.where(flat, 0.0, (arr - mean) / np.where(flat, 1.0, std))
    return DynamicsWindow.from_array(out)


# -- CSV ingestion --------------------------------------------------------------------


def resample_rows(t, columns: dict[str, np.ndarray], length=WINDOW_LENGTH, rate=SAMPLE_RATE_HZ) -> DynamicsWindow:
    """Linearly interpolate irregular samples onto ``length`` points at ``rate`` Hz.

    Rows with any NaN are dropped first. Outside the recorded span the edge
    value is held.
    """
    t = np.asarray(t, dtype=float)
    cols = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
    keep = np.isfinite(t)
    for v in cols.values():
        keep &= np.isfinite(v)
    if keep.sum() < 2:
        raise ValueError("need at least two finite dynamics rows")
    t = t[keep]
    order = np.argsort(t, kind="stable")
    t = t[order]
    grid = np.arange(length) / rate
    resampled = {k: np.interp(grid, t, v[keep][order]) for k, v in cols.items()}
    return DynamicsWindow(resampled["ax"], resampled["speed"], resampled["ay"], resampled["yaw_rate"])


def parse_dynamics_csv(lines, length=WINDOW_LENGTH, rate=SAMPLE_RATE_HZ) -> DynamicsWindow:
    reader = csv.reader(lines)
    try:
        header = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise ValueError("dynamics CSV is empty") from None
    if set(header) != set(CSV_HEADER) or len(header) != len(CSV_HEADER):
        raise ValueError(f"dynamics CSV header must be {','.join(CSV_HEADER)}, got {','.join(header)}")
    rows = [[float(x) if x.strip() else float("nan") for x in row] for row in reader if row]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    cols = {name: data[:, i] for i, name in enumerate(header)}
    t = cols.pop("t")
    return resample_rows(t, cols, length, rate)


def read_dynamics_csv(path, length=WINDOW_LENGTH, rate=SAMPLE_RATE_HZ) -> DynamicsWindow:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_dynamics_csv(fh, length, rate)


def format_dynamics_csv(t, ax, ay, yaw_rate, speed) -> str:
    lines = [",".join(CSV_HEADER)]
    for row in zip(t, ax, ay, yaw_rate, speed):
        lines.append(",".join(f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"


# -- extractor ------------------------------------------------------------------------


@dataclass(frozen=True)
class DynamicsConfig:
    length: int = WINDOW_LENGTH
    channels: tuple[int, ...] = (16, 32, 64)
    kernels: tuple[int, ...] = (7, 5, 3)
    strides: tuple[int, ...] = (2, 2, 2)

    @property
    def tokens(self) -> int:
        n = self.length
        for k, s in zip(self.kernels, self.strides):
            n = F.conv_output_extent(n, k, s, (k - 1) // 2)
        return n

    def encoder_config(self, **encoder) -> EncoderConfig:
        return EncoderConfig(tokens=self.tokens, d_model=self.channels[-1], **encoder)


class DynamicsExtractor(Module):
    """``encoder`` holds EncoderConfig overrides (d_k, d_ff, depth, d_out, ...)."""

    def __init__(self, config: DynamicsConfig, rng, **encoder):
        if not (len(config.channels) == len(config.kernels) == len(config.strides)):
            raise ValueError("channels, kernels and strides must have equal length")
        self.config = config
        widths = (len(CHANNELS),) + tuple(config.channels)
        self.convs = [
            Conv1d(a, b, k, rng, stride=s) for a, b, k, s in zip(widths[:-1], widths[1:], config.kernels, config.strides)
        ]
        self.encoder = EncoderStack(config.encoder_config(**encoder), rng)

    def conv_features(self, x) -> Tensor:
        """(..., 4, L) window -> (..., tokens, d_model) conv features."""
        h = x if isinstance(x, Tensor) else Tensor(x)
        if h.shape[-2:] != (len(CHANNELS), self.config.length):
            raise ShapeMismatch(f"dynamics input must be (4, {self.config.length}), got {h.shape}")
        for conv in self.convs:
            h = F.relu(conv(h))
        axes = tuple(range(h.ndim - 2)) + (h.ndim - 1, h.ndim - 2)
        return F.transpose(h, axes)

    def forward(self, x) -> Tensor:
        return encode_sequence(self.conv_features(x), self.encoder)


def extract_dynamics(window: DynamicsWindow, extractor: DynamicsExtractor) -> Tensor:
    """[1 x 200] feature of one (already normalised) window."""
    return extractor(window.as_array())
