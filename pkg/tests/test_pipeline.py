from dataclasses import replace

import numpy as np
import pytest

from dscx.dynamics import DynamicsWindow
from dscx.errors import CheckpointMismatch, EmptyDataset, InvalidConfig, InvalidLabel, MissingKeyframe, NonFiniteLoss
from dscx.heatmap import Detection
from dscx.nn import checkpoint
from dscx.nn import functional as F
from dscx.nn.gradcheck import check_gradients
from dscx.nn.tensor import Tensor, no_grad
from dscx.pipeline import (
    ComplexityModel,
    ModelConfig,
    TrainConfig,
    build_model,
    format_history,
    forward,
    inverse_frequency_weights,
    load_train_config,
    predict_batch,
    train,
)
from dscx.sample import Sample
from helpers import jitter

MINI_MODEL = {"miniature": True, "dynamics": {"length": 16}}


def make_sample(seed=0, label=None, length=16, frames=12, boxes=2):
    r = np.random.default_rng(seed)
    keyframes = []
    for _ in range(frames):
        dets = []
        for _ in range(boxes):
            x, y = r.uniform(0, 1000), r.uniform(0, 500)
            cls = ["pedestrian", "vehicle", "traffic_light"][int(r.integers(3))]
            dets.append(Detection(x, y, x + r.uniform(20, 250), y + r.uniform(20, 200), cls))
        keyframes.append(dets)
    return Sample(keyframes, DynamicsWindow.from_array(r.normal(size=(4, length))), label, True, f"s{seed}")


def mini_train_config(**kw):
    base = dict(seed=0, epochs=2, lr=1e-2, batch_size=4, heatmap_resolution=(16, 9), model=MINI_MODEL)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def mini_model():
    return build_model(mini_train_config())


def test_sample_rejects_bad_label():
    with pytest.raises(InvalidLabel):
        make_sample(label=5)
    with pytest.raises(InvalidLabel):
        make_sample(label=1.5)


def test_full_size_shape_contract():
    model = ComplexityModel(ModelConfig(), np.random.default_rng(0))
    s = make_sample(length=120)
    heat, dyn = model.inputs([s])
    assert heat.shape == (1, 12, 144, 256)
    with no_grad():
        assert model.spatial(heat[0, :1]).shape == (1, 32, 18)
        assert model.camera_feature(heat).shape == (1, 1, 200)
        assert model.dynamics_feature(dyn).shape == (1, 1, 200)
        assert model.fused(heat, dyn).shape == (1, 1, 400)
    p = forward(s, model)
    assert p.probabilities.shape == (5,)
    assert abs(p.probabilities.sum() - 1) <= 1e-9


def test_missing_keyframe(mini_model):
    with pytest.raises(MissingKeyframe):
        forward(make_sample(frames=11), mini_model)


def test_identical_samples_identical_predictions(mini_model):
    a, b = forward(make_sample(3), mini_model), forward(make_sample(3), mini_model)
    assert np.array_equal(a.probabilities, b.probabilities)


def test_predict_batch_matches_forward_and_collects_errors(mini_model):
    samples = [make_sample(1), make_sample(2, frames=5), make_sample(3)]
    preds, errors = predict_batch(samples, mini_model)
    assert preds[1] is None and isinstance(errors[1], MissingKeyframe)
    for s, p in zip(samples[::2], preds[::2]):
        assert np.array_equal(p.probabilities, forward(s, mini_model).probabilities)
    assert predict_batch([], mini_model) == ([], {})


def test_argmax_tie_lowest_index():
    from dscx.pipeline import _prediction

    assert _prediction(np.array([0.0, 2.0, 2.0, -1.0, 2.0])).predicted_class == 1


def test_argmax_invariant_to_logit_scaling():
    from dscx.pipeline import _prediction

    z = np.random.default_rng(0).normal(size=5)
    assert _prediction(z).predicted_class == _prediction(7.5 * z).predicted_class


def test_empty_detections_are_valid(mini_model):
    s = make_sample(boxes=0)
    assert abs(forward(s, mini_model).probabilities.sum() - 1) <= 1e-9


def test_gradcheck_miniature_end_to_end():
    model = jitter(ComplexityModel(ModelConfig.miniature(), np.random.default_rng(4)), seed=5)
    samples = [make_sample(7, label=1), make_sample(8, label=3)]
    heat, dyn = model.inputs(samples)
    labels = np.array([1, 3])
    result = check_gradients(lambda: F.cross_entropy(model.logits(heat, dyn), labels), model.parameters(), h=1e-5)
    assert result.passed(1e-4), result


def test_every_parameter_receives_gradient():
    model = jitter(ComplexityModel(ModelConfig.miniature(), np.random.default_rng(6)), seed=7)
    samples = [make_sample(s, label=s % 5) for s in range(4)]
    heat, dyn = model.inputs(samples)
    model.zero_grad()
    F.cross_entropy(model.logits(heat, dyn), np.array([s.label for s in samples])).backward()
    dead = [n for n, p in model.named_parameters() if not np.any(p.grad)]
    assert dead == []


def test_train_lr_zero_leaves_parameters():
    data = [make_sample(s, label=s % 3) for s in range(6)]
    cfg = mini_train_config(lr=0.0, epochs=2)
    before = checkpoint.dumps(build_model(cfg).named_parameters())
    result = train(data, data[:2], cfg)
    assert checkpoint.dumps(result.model.named_parameters()) == before
    assert len(result.history) == 2


def test_single_sample_memorisation():
    s = make_sample(9, label=2)
    result = train([s], [s], mini_train_config(epochs=500, batch_size=1, lr=1e-2))
    assert result.steps <= 500
    assert result.history[-1].train_loss < 1e-2


def test_seeded_training_repeatable(tmp_path):
    data = [make_sample(s, label=s % 5) for s in range(10)]
    runs = []
    for name in ("a", "b"):
        path = tmp_path / f"{name}.ckpt"
        result = train(data[:8], data[8:], mini_train_config(epochs=3), path)
        runs.append((format_history(result.history), path.read_bytes()))
    assert runs[0] == runs[1]


def test_best_checkpoint_loads_back(tmp_path):
    data = [make_sample(s, label=s % 5) for s in range(10)]
    path = tmp_path / "m.ckpt"
    cfg = mini_train_config(epochs=3)
    result = train(data[:8], data[8:], cfg, path)
    fresh = build_model(cfg)
    checkpoint.load_into(fresh, path.read_bytes())
    np.testing.assert_array_equal(fresh.dynamics_mean.data, result.model.dynamics_mean.data)
    np.testing.assert_array_equal(forward(data[9], fresh).probabilities, forward(data[9], result.model).probabilities)
    other = build_model(mini_train_config(model={**MINI_MODEL, "head_hidden": 3}))
    with pytest.raises(CheckpointMismatch):
        checkpoint.load_into(other, path.read_bytes())


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_keeps_last_good_checkpoint(tmp_path):
    data = [make_sample(s, label=s % 5) for s in range(8)]
    path = tmp_path / "m.ckpt"
    path.write_bytes(b"previous")
    with pytest.raises(NonFiniteLoss) as info:
        train(data, data, mini_train_config(lr=float("inf"), epochs=5, batch_size=4), path)
    assert (info.value.epoch, info.value.step) == (1, 2)
    assert path.read_bytes() == b"previous"


def test_empty_training_set():
    with pytest.raises(EmptyDataset):
        train([], [], mini_train_config())


def test_class_weights():
    w = inverse_frequency_weights([0, 0, 0, 1])
    assert w[0] == pytest.approx(4 / 6) and w[1] == pytest.approx(2.0) and w[2] == 1.0


def test_toml_config(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(
        'seed = 3\nepochs = 4\nlr = 0.002\nbatch_size = 2\nclass_weights = true\nheatmap_resolution = [16, 9]\n'
        "[model]\nminiature = true\ndepth = 1\n"
    )
    cfg = load_train_config(path)
    assert (cfg.seed, cfg.epochs, cfg.lr, cfg.batch_size, cfg.class_weights) == (3, 4, 0.002, 2, True)
    mc = cfg.model_config()
    assert (mc.spatial.width, mc.spatial.height, mc.depth) == (16, 9, 1)
    path.write_text("epochs = 4\nlearning_rate = 1\n")
    with pytest.raises(InvalidConfig):
        load_train_config(path)
    path.write_text("epochs = [\n")
    with pytest.raises(InvalidConfig):
        load_train_config(path)
    with pytest.raises(InvalidConfig):
        replace(cfg, model={"nonsense": 1}).model_config()
