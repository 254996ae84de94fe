"""End-to-end complexity classifier and its training loop.

Camera path: 12 keyframe heat maps -> spatial extractor -> 12 flattened
tokens -> attention encoder -> [1 x 200]. Dynamics path: standardised window
-> 1-D convs -> attention encoder -> [1 x 200]. The two features are
concatenated to [1 x 400] and classified by a 400 -> 64 -> 5 MLP.
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from dscx.attention import EncoderConfig, EncoderStack, encode_sequence
from dscx.dynamics import ChannelStats, DynamicsConfig, DynamicsExtractor
from dscx.errors import EmptyDataset, InvalidConfig, MissingKeyframe, NonFiniteLoss, ShapeMismatch
from dscx.heatmap import render_heatmap
from dscx.nn import checkpoint
from dscx.nn import functional as F
from dscx.nn.layers import MLP, Buffer, Module
from dscx.nn.optim import Adam, clip_grad_norm
from dscx.nn.tensor import Tensor, no_grad
from dscx.sample import KEYFRAMES, NUM_CLASSES, Sample
from dscx.spatial import SpatialConfig, SpatialExtractor

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

# Pixel space of the detection files (BDD frames are 1280x720).
SOURCE_FRAME = (1280, 720)


@dataclass(frozen=True)
class ModelConfig:
    spatial: SpatialConfig = SpatialConfig()
    dynamics: DynamicsConfig = DynamicsConfig()
    d_k: int = 64
    d_ff: int = 128
    depth: int = 6
    d_out: int = 200
    scale_divisor: float = 8.0
    use_softmax: bool = True
    head_hidden: int = 64
    source_frame: tuple[int, int] = SOURCE_FRAME

    def encoder_kwargs(self) -> dict:
        return dict(
            d_k=self.d_k,
            d_ff=self.d_ff,
            depth=self.depth,
            d_out=self.d_out,
            scale_divisor=self.scale_divisor,
            use_softmax=self.use_softmax,
        )

    @classmethod
    def miniature(cls, **overrides) -> ModelConfig:
        """Same topology at toy extents (16x9 maps, length-16 windows) for gradient checks."""
        base = cls(
            spatial=SpatialConfig(width=16, height=9, stem_channels=(2, 3, 4), branch_channels=2),
            dynamics=DynamicsConfig(length=16, channels=(3, 4, 5)),
            d_k=4,
            d_ff=5,
            depth=2,
            d_out=6,
            head_hidden=4,
        )
        return replace(base, **overrides)


@dataclass(frozen=True)
class ComplexityPrediction:
    probabilities: np.ndarray
    predicted_class: int


class ComplexityModel(Module):
    def __init__(self, config: ModelConfig = ModelConfig(), rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.config = config
        self.spatial = SpatialExtractor(config.spatial, rng)
        camera = EncoderConfig(tokens=KEYFRAMES, d_model=config.spatial.feature_size, **config.encoder_kwargs())
        self.camera = EncoderStack(camera, rng)
        self.dynamics = DynamicsExtractor(config.dynamics, rng, **config.encoder_kwargs())
        self.head = MLP([2 * config.d_out, config.head_hidden, NUM_CLASSES], rng)
        self.dynamics_mean = Buffer(np.zeros(4))
        self.dynamics_std = Buffer(np.ones(4))
        self.assign_names()

    # -- inputs ----------------------------------------------------------------

    def set_dynamics_stats(self, stats: ChannelStats) -> None:
        self.dynamics_mean.data = np.asarray(stats.mean, dtype=float).copy()
        self.dynamics_std.data = np.asarray(stats.std, dtype=float).copy()

    @property
    def dynamics_stats(self) -> ChannelStats:
        return ChannelStats(self.dynamics_mean.data, self.dynamics_std.data)

    def render(self, sample: Sample) -> np.ndarray:
        """(12, H, W) heat maps for a sample, boxes rescaled from the source frame."""
        if len(sample.keyframes) != KEYFRAMES:
            raise MissingKeyframe(f"sample {sample.sample_id!r} has {len(sample.keyframes)} keyframes, need {KEYFRAMES}")
        sc = self.config.spatial
        sx = sc.width / self.config.source_frame[0]
        sy = sc.height / self.config.source_frame[1]
        return np.stack([render_heatmap([d.scaled(sx, sy) for d in dets], sc.width, sc.height).values for dets in sample.keyframes])

    def inputs(self, samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
        heat = np.stack([self.render(s) for s in samples])
        dyn = np.stack([s.dynamics.as_array() for s in samples])
        if dyn.shape[-1] != self.config.dynamics.length:
            raise ShapeMismatch(f"dynamics windows have length {dyn.shape[-1]}, model expects {self.config.dynamics.length}")
        return heat, dyn

    # -- forward pieces ----------------------------------------------------------

    def camera_feature(self, heat) -> Tensor:
        """(N, 12, H, W) heat maps -> (N, 1, d_out)."""
        n = heat.shape[0]
        sc = self.config.spatial
        maps = np.asarray(heat, dtype=float).reshape(n * KEYFRAMES, 1, sc.height, sc.width)
        grids = self.spatial(maps)
        tokens = F.reshape(grids, (n, KEYFRAMES, sc.feature_size))
        return encode_sequence(tokens, self.camera)

    def dynamics_feature(self, dyn) -> Tensor:
        """(N, 4, L) raw dynamics -> (N, 1, d_out); standardised with the stored stats."""
        mean = self.dynamics_mean.data[:, None]
        std = self.dynamics_std.data[:, None]
        flat = std < 1e-8
        x = np.where(flat, 0.0, (np.asarray(dyn, dtype=float) - mean) / np.where(flat, 1.0, std))
        return self.dynamics(x)

    def fused(self, heat, dyn) -> Tensor:
        return F.concat([self.camera_feature(heat), self.dynamics_feature(dyn)], axis=-1)

    def logits(self, heat, dyn) -> Tensor:
        z = self.head(self.fused(heat, dyn))
        return F.reshape(z, (z.shape[0], NUM_CLASSES))


def _prediction(logits: np.ndarray) -> ComplexityPrediction:
    probs = F.softmax(Tensor(logits)).data
    return ComplexityPrediction(probs, int(np.argmax(probs)))


def forward(sample: Sample, model: ComplexityModel) -> ComplexityPrediction:
    with no_grad():
        heat, dyn = model.inputs([sample])
        return _prediction(model.logits(heat, dyn).data[0])


def predict_batch(samples: Sequence[Sample], model: ComplexityModel):
    """Per-sample :func:`forward`, in order.

    Returns ``(predictions, errors)``: ``predictions[i]`` is None where sample
    ``i`` failed and ``errors`` maps that index to the exception.
    """
    predictions: list[ComplexityPrediction | None] = []
    errors: dict[int, Exception] = {}
    for i, s in enumerate(samples):
        try:
            predictions.append(forward(s, model))
        except (ValueError, KeyError) as exc:
            predictions.append(None)
            errors[i] = exc
    return predictions, errors


# -- training ---------------------------------------------------------------------


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 30
    lr: float = 1e-3
    batch_size: int = 8
    class_weights: bool = False
    # Global gradient-norm ceiling per step (None or 0: no clipping).
    clip_norm: float | None = 1.0
    heatmap_resolution: tuple[int, int] = (256, 144)
    # Stop once validation accuracy reaches this value (None: run all epochs).
    target_accuracy: float | None = None
    model: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr < 0:
            raise InvalidConfig(f"invalid training config: {self}")
        self.heatmap_resolution = tuple(int(v) for v in self.heatmap_resolution)

    def model_config(self) -> ModelConfig:
        """Default architecture at the configured resolution, with ``model`` overrides."""
        overrides = dict(self.model)
        if overrides.pop("miniature", False):
            base = ModelConfig.miniature()
        else:
            base = ModelConfig()
        spatial = dict(overrides.pop("spatial", {}))
        dynamics = dict(overrides.pop("dynamics", {}))
        w, h = self.heatmap_resolution
        spatial_cfg = replace(base.spatial, width=w, height=h, **_tuples(spatial))
        dynamics_cfg = replace(base.dynamics, **_tuples(dynamics))
        if "source_frame" in overrides:
            overrides["source_frame"] = tuple(overrides["source_frame"])
        try:
            return replace(base, spatial=spatial_cfg, dynamics=dynamics_cfg, **overrides)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def load_train_config(path) -> TrainConfig:
    """Read a TOML key/value training config. Unknown keys are rejected."""
    try:
        raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(raw) - known
    if unknown:
        raise InvalidConfig(f"{path}: unknown keys {sorted(unknown)}")
    try:
        return TrainConfig(**raw)
    except TypeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_acc: float


@dataclass
class TrainResult:
    model: ComplexityModel
    history: list[EpochRecord]
    best_epoch: int
    best_val_acc: float
    steps: int


def inverse_frequency_weights(labels: Sequence[int]) -> np.ndarray:
    counts = np.bincount(np.asarray(labels, dtype=int), minlength=NUM_CLASSES).astype(float)
    present = counts > 0
    weights = np.ones(NUM_CLASSES)
    weights[present] = counts.sum() / (present.sum() * counts[present])
    return weights


def accuracy(samples: Sequence[Sample], model: ComplexityModel) -> float:
    if not samples:
        return float("nan")
    preds, _ = predict_batch(samples, model)
    hits = sum(1 for s, p in zip(samples, preds) if p is not None and p.predicted_class == s.label)
    return hits / len(samples)


def build_model(config: TrainConfig) -> ComplexityModel:
    init_seed, _ = np.random.SeedSequence(config.seed).spawn(2)
    return ComplexityModel(config.model_config(), np.random.default_rng(init_seed))


def train(
    train_set: Sequence[Sample],
    val_set: Sequence[Sample],
    config: TrainConfig,
    checkpoint_path=None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Minimise cross-entropy with Adam; keep the best-validation weights.

    The returned model holds the best weights. When ``checkpoint_path`` is
    given it is rewritten each time validation accuracy improves, so on
    :class:`NonFiniteLoss` it still holds the last good model.
    """
    train_set = [s for s in train_set]
    if not train_set:
        raise EmptyDataset("training split is empty")
    if any(s.label is None for s in train_set):
        raise EmptyDataset("training samples must be labelled")
    _, shuffle_seed = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seed)

    model = build_model(config)
    model.set_dynamics_stats(ChannelStats.fit([s.dynamics for s in train_set]))
    params = model.parameters()
    opt = Adam(params, lr=config.lr)
    labels = np.array([s.label for s in train_set])
    weights = inverse_frequency_weights(labels) if config.class_weights else None
    eval_set = list(val_set) if val_set else train_set

    history: list[EpochRecord] = []
    best_acc, best_epoch, best_state = -math.inf, 0, checkpoint.dumps(model.named_state())
    steps = 0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_set))
        total, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            batch = [train_set[i] for i in idx]
            heat, dyn = model.inputs(batch)
            model.zero_grad()
            loss = F.cross_entropy(model.logits(heat, dyn), labels[idx], weights)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NonFiniteLoss(f"loss became {value} at epoch {epoch}, step {steps + 1}", epoch, steps + 1)
            loss.backward()
            if config.clip_norm:
                clip_grad_norm(params, config.clip_norm)
            opt.step()
            steps += 1
            total += value * len(idx)
            seen += len(idx)
        record = EpochRecord(epoch, total / seen, accuracy(eval_set, model))
        history.append(record)
        log.info("epoch %d loss %.5f val_acc %.4f", record.epoch, record.train_loss, record.val_acc)
        if on_epoch is not None:
            on_epoch(record)
        if record.val_acc > best_acc:
            best_acc, best_epoch = record.val_acc, epoch
            best_state = checkpoint.dumps(model.named_state())
            if checkpoint_path is not None:
                Path(checkpoint_path).write_bytes(best_state)
        if config.target_accuracy is not None and record.val_acc >= config.target_accuracy:
            break
    checkpoint.load_into(model, best_state)
    if checkpoint_path is not None and config.epochs == 0:
        Path(checkpoint_path).write_bytes(best_state)
    return TrainResult(model, history, best_epoch, best_acc if history else float("nan"), steps)


def format_history(history: Sequence[EpochRecord]) -> str:
    lines = ["epoch,train_loss,val_acc"]
    lines += [f"{r.epoch},{r.train_loss!r},{r.val_acc!r}" for r in history]
    return "\n".join(lines) + "\n"


def config_summary(config: ModelConfig) -> dict:
    return asdict(config)
