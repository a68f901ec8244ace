import numpy as np
import pytest

from classifier.inference import FeatureMap, patch_at, sliding_window_classify
from classifier.pixel_cnn import BACKGROUND_CLASS, PORE_CLASS, build, forward, parse_arch
from classifier.segments import extract_training_segments, to_arrays
from classifier.training import TrainConfig, load_cnn, save_cnn, train_sgd
from errors import ConfigError, DegenerateDataError, SamplingError, ShapeError


def _disk_image(size=48, radius=6):
    """Bright disk on a darker background, with its mask."""
    yy, xx = np.mgrid[0:size, 0:size]
    mask = (np.hypot(xx - size / 2, yy - size / 2) <= radius).astype(np.uint8)
    values = np.where(mask == 1, 0.8, 0.4)
    return values, mask


def test_parse_arch():
    assert parse_arch("20-8-8") == (20, 8, 8)
    with pytest.raises(ConfigError):
        parse_arch("20x8")


def test_feature_shapes_for_default_arch():
    model = build(20, 8, 8)
    assert model.feature_shapes() == [(20, 20, 8), (10, 10, 8), (10, 10, 8), (5, 5, 8), 200]
    assert model.arch == "20-8-8"
    assert model.parameter_count == (8 * 25 + 8) + (8 * 8 * 25 + 8) + (200 * 2 + 2)


def test_build_validates_arch():
    with pytest.raises(ShapeError):
        build(18, 8, 8)
    with pytest.raises(ConfigError):
        build(20, 0, 8)


def test_forward_returns_probability_pair():
    model = build(8, 2, 2, seed=3)
    p = forward(model, np.random.default_rng(0).uniform(0, 1, (8, 8)))
    assert p.shape == (2,)
    assert p.sum() == pytest.approx(1.0)


def test_identity_kernels_give_hand_computed_logits():
    model = build(4, 1, 1)
    conv1, conv2, dense = model.network.layers[0], model.network.layers[3], model.network.layers[-1]
    for conv in (conv1, conv2):
        conv.params["W"][...] = 0.0
        conv.params["W"][0, 0, 2, 2] = 1.0
    dense.params["W"][...] = [[1.0, -2.0]]
    dense.params["b"][...] = [0.5, 0.25]
    patch = np.arange(16, dtype=float).reshape(4, 4) / 16.0
    # both pools keep the largest pixel, 15/16
    assert model.logits(patch)[0].tolist() == [1.4375, -1.625]


def test_common_logit_shift_leaves_probabilities():
    model = build(8, 2, 2, seed=3)
    patches = np.random.default_rng(4).uniform(0, 1, (5, 8, 8))
    before = model.predict_proba(patches)
    model.network.layers[-1].params["b"] += 7.5
    assert np.allclose(model.predict_proba(patches), before, rtol=0.0, atol=1e-12)


def test_wrong_patch_size_is_shape_error():
    with pytest.raises(ShapeError):
        build(8, 2, 2).predict_proba(np.zeros((4, 9, 9)))


def test_same_seed_same_weights():
    a, b = build(8, 2, 2, seed=5), build(8, 2, 2, seed=5)
    for (_, pa), (_, pb) in zip(a.network.named_params(), b.network.named_params()):
        assert np.array_equal(pa, pb)


# ── segments ──

def test_segment_mix_and_labels():
    values, mask = _disk_image()
    segments = extract_training_segments(values, mask, count=20, mix=(0.3, 0.7), seed=1, segment_size=8)
    x, y = to_arrays(segments)
    assert x.shape == (20, 8, 8)
    assert (y == PORE_CLASS).sum() == 6
    assert all(s.label == PORE_CLASS for s in segments[:6])
    for s in segments:
        assert mask[s.y, s.x] == (1 if s.label == PORE_CLASS else 0)


def test_segment_window_matches_classifier_window():
    values, mask = _disk_image()
    seg = extract_training_segments(values, mask, count=4, mix=(0.5, 0.5), seed=2, segment_size=8)[0]
    assert np.array_equal(seg.patch, patch_at(values, seg.x, seg.y, 8))


def test_segments_are_seeded():
    values, mask = _disk_image()
    a = extract_training_segments(values, mask, count=10, seed=4, segment_size=8)
    b = extract_training_segments(values, mask, count=10, seed=4, segment_size=8)
    assert [(s.x, s.y) for s in a] == [(s.x, s.y) for s in b]


def test_too_few_pore_pixels():
    values, mask = _disk_image(radius=1)
    with pytest.raises(SamplingError) as exc:
        extract_training_segments(values, mask, count=200, mix=(0.5, 0.5), segment_size=8)
    assert "pore" in exc.value.available


def test_mask_shape_mismatch():
    values, mask = _disk_image()
    with pytest.raises(ShapeError):
        extract_training_segments(values, mask[:-1], count=4, segment_size=8)


# ── training ──

def test_training_separates_bright_and_dark_patches():
    values, mask = _disk_image()
    segments = extract_training_segments(values, mask, count=60, mix=(0.5, 0.5), seed=0, segment_size=8)
    model = build(8, 2, 2, seed=0)
    _, history = train_sgd(model, segments, TrainConfig(epochs=30, learning_rate=0.05, batch_size=8, momentum=0.9))
    assert history.final_loss < history.losses[0]
    assert history.final_accuracy >= 0.8
    assert model.metadata["train_segments"] == 60


def test_training_needs_both_classes():
    values, mask = _disk_image()
    segments = extract_training_segments(values, mask, count=6, mix=(0.0, 1.0), segment_size=8)
    with pytest.raises(DegenerateDataError):
        train_sgd(build(8, 2, 2), segments, TrainConfig(epochs=1))


def test_train_config_mix_must_sum_to_one():
    with pytest.raises(ValueError):
        TrainConfig(mix=(0.5, 0.6))


def test_cnn_file_round_trip(tmp_path):
    model = build(8, 2, 2, seed=7)
    model.metadata["final_loss"] = 0.25
    path = save_cnn(tmp_path / "model.rsmd", model, provenance={"seed": 7})
    back = load_cnn(path)
    assert back.arch == "8-2-2"
    assert back.metadata["final_loss"] == 0.25
    patches = np.random.default_rng(1).uniform(0, 1, (3, 8, 8))
    assert np.allclose(back.predict_proba(patches), model.predict_proba(patches), atol=1e-5)


# ── inference ──

def test_sliding_window_covers_every_pixel():
    values, _ = _disk_image(size=20)
    fmap = sliding_window_classify(build(8, 2, 2, seed=1), values)
    assert fmap.scores.shape == (20, 20)
    assert np.all((fmap.scores >= 0) & (fmap.scores <= 1))


def test_sliding_window_score_equals_patch_forward():
    values = np.random.default_rng(5).uniform(0, 1, (64, 64))
    model = build(8, 2, 2, seed=1)
    fmap = sliding_window_classify(model, values)
    rng = np.random.default_rng(11)
    for x, y in rng.integers(4, 60, size=(100, 2)):
        assert fmap.scores[y, x] == forward(model, patch_at(values, x, y, 8))[PORE_CLASS]
    for x, y in [(0, 0), (63, 0), (7, 63)]:
        assert fmap.scores[y, x] == forward(model, patch_at(values, x, y, 8))[PORE_CLASS]


def test_threaded_classification_is_identical():
    values, _ = _disk_image(size=100)
    model = build(8, 2, 2, seed=1)
    a = sliding_window_classify(model, values, threads=1)
    b = sliding_window_classify(model, values, threads=4)
    assert np.array_equal(a.scores, b.scores)


def test_image_smaller_than_segment():
    with pytest.raises(ShapeError):
        sliding_window_classify(build(8, 2, 2), np.zeros((6, 20)))


def test_feature_map_classes_break_ties_to_background():
    fmap = FeatureMap(scores=np.array([[0.5, 0.51, 0.2]]))
    assert fmap.classes.tolist() == [[BACKGROUND_CLASS, PORE_CLASS, BACKGROUND_CLASS]]
