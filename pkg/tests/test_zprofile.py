import numpy as np
import pytest

from errors import ConfigError, DegenerateDataError, ShapeError
from recon.volume import Volume
from scene.generator import generate_fml_stack, generate_pore_plate, glare_layers
from xray.image_io import read_raw
from zprofile.anomaly import (anomaly_map, anomaly_score, calibrate_threshold, detection_auc, grid_truth,
                              write_anomaly_map)
from zprofile.autoencoder import (AETrainConfig, build_conv_ae, build_lstm_ae, create_autoencoder, load_ae,
                                  save_ae, train_ae)
from zprofile.damage import DamageRegion, layer_density, stretch_knots, synth_damaged_volume
from zprofile.profiles import extract_zprofiles
from zprofile.zcnn import DAMAGED, ZCnnTrainConfig, build_zcnn, classify_profile, load_zcnn, save_zcnn, train_zcnn

GLARE = generate_fml_stack(glare_layers())
REGION = DamageRegion(x0=16, y0=16, x1=32, y1=32)


# ── profiles ──

def test_profiles_average_window_squares():
    values = np.arange(2 * 4 * 4, dtype=float).reshape(2, 4, 4)
    grid = extract_zprofiles(Volume(values=values, voxel=1.0), window=2)
    assert grid.shape == (2, 2)
    assert grid.length == 2
    assert grid.values[0, 1, 0] == pytest.approx(values[0, 0:2, 2:4].mean())
    assert grid.profile(1, 0).y == 2


def test_profile_stride_and_limits():
    vol = Volume(values=np.zeros((3, 8, 8)), voxel=1.0)
    assert extract_zprofiles(vol, window=4, stride=2).shape == (3, 3)
    with pytest.raises(ShapeError):
        extract_zprofiles(vol, window=9)
    with pytest.raises(ShapeError):
        extract_zprofiles(vol, window=2, stride=0)


def test_profiles_are_linear_in_the_volume():
    rng = np.random.default_rng(6)
    v1, v2 = (rng.integers(0, 100, (5, 8, 8)).astype(float) for _ in range(2))
    combined = extract_zprofiles(Volume(values=2.0 * v1 - 3.0 * v2, voxel=1.0), window=4)
    p1 = extract_zprofiles(Volume(values=v1, voxel=1.0), window=4)
    p2 = extract_zprofiles(Volume(values=v2, voxel=1.0), window=4)
    assert np.array_equal(combined.values, 2.0 * p1.values - 3.0 * p2.values)


# ── damage synthesis ──

def test_stretch_keeps_total_thickness():
    src, dst = stretch_knots(3.0, 1.2)
    assert dst[-1] == 3.0
    assert dst[2] - dst[1] == pytest.approx(1.2 * (src[2] - src[1]))
    with pytest.raises(ConfigError):
        stretch_knots(3.0, 4.0)


def test_layer_density_follows_stack():
    assert layer_density(GLARE, np.array([0.1, 0.5, 1.7]))[:2].tolist() == [0.08, 0.035]


def test_unstretched_volume_is_uniform_across_xy():
    vol, truth = synth_damaged_volume(GLARE, REGION, stretch=1.0, noise=0.0)
    assert vol.values.shape == (64, 48, 48)
    assert np.array_equal(vol.values[:, 0, 0], vol.values[:, 20, 20])
    assert truth.sum() == REGION.area


def test_stretch_changes_only_the_region():
    vol, _ = synth_damaged_volume(GLARE, REGION, stretch=1.2, noise=0.0)
    inside, outside = vol.values[:, 20, 20], vol.values[:, 5, 5]
    assert not np.allclose(inside, outside)
    assert np.array_equal(vol.values[:, 5, 5], vol.values[:, 40, 40])


def test_damage_needs_layers_and_fitting_region():
    plate = generate_pore_plate(plate_size=(20.0, 20.0, 4.0), count=1, seed=0)
    with pytest.raises(ConfigError):
        synth_damaged_volume(plate, REGION)
    with pytest.raises(ShapeError):
        synth_damaged_volume(GLARE, DamageRegion(x0=40, y0=0, x1=60, y1=10))
    with pytest.raises(ValueError):
        DamageRegion(x0=5, y0=5, x1=5, y1=9)


# ── autoencoders ──

def test_autoencoder_shapes():
    conv = build_conv_ae(30, channels=2)
    assert conv.padded_length == 32
    assert conv.reconstruct(np.zeros((3, 30))).shape == (3, 30)
    lstm = build_lstm_ae(7, hidden=3)
    assert lstm.reconstruct(np.zeros((2, 7))).shape == (2, 7)
    with pytest.raises(ShapeError):
        conv.score(np.zeros((2, 29)))


def test_unknown_autoencoder_kind():
    with pytest.raises(ValueError, match="lstm"):
        create_autoencoder("transformer", length=8)


def _trained_conv_ae():
    baseline, _ = synth_damaged_volume(GLARE, REGION, stretch=1.0, seed=1)
    grid = extract_zprofiles(baseline)
    model, history = train_ae(build_conv_ae(grid.length, seed=0), grid.flat(), AETrainConfig(seed=0))
    return model, history, grid


def test_training_lowers_reconstruction_error():
    model, history, grid = _trained_conv_ae()
    assert model.trained
    assert history.final_loss < history.losses[0]
    assert model.metadata["train_profiles"] == grid.flat().shape[0]


def test_stretched_region_scores_higher():
    model, _, grid = _trained_conv_ae()
    tau = calibrate_threshold(model, grid.flat(), percentile=99.0)
    damaged, truth = synth_damaged_volume(GLARE, REGION, stretch=1.2, seed=2)
    amap = anomaly_map(model, damaged, tau=tau)
    labels = grid_truth(truth, amap.window, amap.stride)
    assert amap.scores.shape == labels.shape == (12, 12)
    assert detection_auc(amap.scores, labels) >= 0.9
    assert amap.flags[labels].mean() > amap.flags[~labels].mean()


def test_anomaly_score_of_one_profile():
    model = build_conv_ae(8, channels=2)
    assert anomaly_score(model, np.zeros(8)) >= 0.0
    with pytest.raises(ShapeError):
        anomaly_score(model, np.zeros((2, 8)))


def test_auc_needs_both_classes():
    with pytest.raises(DegenerateDataError):
        detection_auc(np.arange(4.0), np.zeros(4, dtype=bool))
    assert detection_auc(np.array([0.1, 0.2, 0.8, 0.9]), np.array([0, 0, 1, 1])) == 1.0


def test_grid_truth_uses_half_coverage():
    truth = np.zeros((4, 4), dtype=bool)
    truth[0:2, 0:1] = True
    truth[2:4, 2:4] = True
    assert grid_truth(truth, window=2).tolist() == [[True, False], [False, True]]


def test_ae_file_round_trip(tmp_path):
    model = build_lstm_ae(6, hidden=3, seed=2)
    model.mean, model.std, model.trained = 0.05, 0.01, True
    back = load_ae(save_ae(tmp_path / "ae.rsmd", model))
    assert (back.kind, back.length, back.mean, back.std, back.trained) == ("lstm", 6, 0.05, 0.01, True)
    profiles = np.random.default_rng(0).normal(0.05, 0.01, (3, 6))
    assert np.allclose(back.score(profiles), model.score(profiles), rtol=1e-4)


def test_anomaly_map_files(tmp_path):
    model = build_conv_ae(4, channels=2)
    amap = anomaly_map(model, Volume(values=np.ones((4, 8, 8)), voxel=1.0), window=4, tau=0.1)
    raw, _ = write_anomaly_map(tmp_path / "anomaly.raw", amap)
    values, meta = read_raw(raw)
    assert values.shape == (2, 2) and meta["tau"] == 0.1
    assert (tmp_path / "anomaly.png").exists()


# ── z-profile CNN ──

def _labelled_profiles():
    damaged, truth = synth_damaged_volume(GLARE, DamageRegion(x0=0, y0=0, x1=48, y1=24), stretch=1.3, seed=3)
    grid = extract_zprofiles(damaged, window=4)
    labels = grid_truth(truth, 4).ravel().astype(int)
    return grid.flat(), labels


def test_zcnn_learns_damage():
    profiles, labels = _labelled_profiles()
    model = build_zcnn(profiles.shape[1], 4, 4, seed=0)
    model, history = train_zcnn(model, profiles, labels,
                                ZCnnTrainConfig(epochs=30, learning_rate=0.05, momentum=0.9, holdout=0.25))
    assert history.final_accuracy >= 0.9
    assert model.metadata["held_out_count"] == round(0.25 * labels.size)
    p = classify_profile(model, profiles[int(np.argmax(labels))])
    assert p.shape == (2,) and p[DAMAGED] > 0.5


def test_zcnn_needs_both_classes():
    with pytest.raises(DegenerateDataError):
        train_zcnn(build_zcnn(8, 2, 2), np.zeros((4, 8)), np.zeros(4))


def test_zcnn_holdout_must_leave_training_profiles():
    with pytest.raises(DegenerateDataError, match="no training"):
        train_zcnn(build_zcnn(8, 2, 2), np.zeros((2, 8)), np.array([0, 1]), ZCnnTrainConfig(holdout=0.9))


def test_zcnn_holdout_must_leave_both_classes():
    labels = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 1])
    profiles = np.random.default_rng(0).normal(size=(10, 8))
    with pytest.raises(DegenerateDataError, match="single class"):
        train_zcnn(build_zcnn(8, 2, 2), profiles, labels, ZCnnTrainConfig(holdout=0.9, seed=4))


def test_zcnn_file_round_trip(tmp_path):
    model = build_zcnn(10, 2, 3, seed=1)
    model.mean, model.std = 0.1, 0.02
    back = load_zcnn(save_zcnn(tmp_path / "z.rsmd", model))
    assert (back.length, back.filter_a, back.filter_b) == (10, 2, 3)
    x = np.random.default_rng(0).normal(0.1, 0.02, (2, 10))
    assert np.allclose(back.predict_proba(x), model.predict_proba(x), atol=1e-5)
