import numpy as np
import pytest

from errors import InsufficientCoverageError, ShapeError
from evaluation.benchmark import disk_sinogram
from recon.fbp import ReconGrid, angular_span, fbp_slice, reconstruct_volume
from recon.filters import FilterSpec, filter_response, padded_length, ramp_filter
from recon.sinogram import Sinogram, to_sinogram
from recon.volume import Volume, export_slice_png, read_volume, slice_of, write_volume
from scene.specimen import PoreSpec, SpecimenSpec, material_preset, specimen_meshes
from xray.geometry import AcquisitionConfig, ProjectionGeometry
from xray.image_io import ProjectionImage, read_png16
from xray.projector import simulate_rotation_series


def _disk_slice(n_angles=180, width=128, radius=30.0, mu=0.05, spec=FilterSpec()):
    angles = np.arange(n_angles) * 180.0 / n_angles
    sino = disk_sinogram(n_angles, width, 1.0, radius, mu)
    return fbp_slice(sino, angles, ReconGrid(nx=width, nz=width, voxel=1.0), 1.0, spec)


def _inner_mean(image, radius, fraction=0.8):
    c = (image.shape[0] - 1) / 2.0
    zz, xx = np.mgrid[0:image.shape[0], 0:image.shape[1]]
    return image[np.hypot(xx - c, zz - c) <= fraction * radius].mean()


def test_padded_length_is_power_of_two():
    assert padded_length(100) == 256
    assert padded_length(128) == 256


def test_ramp_response_starts_at_zero_dc():
    response = filter_response(256, FilterSpec())
    assert abs(response[0]) < 2e-3
    assert response[128] == pytest.approx(0.5, rel=1e-2)


def test_cutoff_zeroes_high_frequencies():
    response = filter_response(256, FilterSpec(cutoff=0.5))
    assert np.all(response[100:156] == 0.0)


def test_hann_window_is_below_plain_ramp():
    plain = filter_response(256, FilterSpec())
    hann = filter_response(256, FilterSpec(kind="ramp_hann"))
    assert np.all(hann <= plain + 1e-15)


def test_ramp_filter_keeps_shape():
    out = ramp_filter(np.ones((3, 50)), FilterSpec())
    assert out.shape == (3, 50)


def test_uniform_disk_reconstructs_to_mu():
    image = _disk_slice()
    assert _inner_mean(image, 30.0) == pytest.approx(0.05, rel=0.05)


def test_outside_disk_is_near_zero():
    image = _disk_slice()
    assert abs(image[2, 2]) < 0.005


def test_hann_reconstruction_is_close_too():
    image = _disk_slice(spec=FilterSpec(kind="ramp_hann"))
    assert _inner_mean(image, 30.0) == pytest.approx(0.05, rel=0.05)


def test_fbp_is_linear():
    angles = np.arange(180) * 1.0
    grid = ReconGrid(nx=64, nz=64, voxel=1.0)
    p1 = disk_sinogram(180, 64, 1.0, 12.0, 0.05)
    p2 = np.random.default_rng(2).normal(0.0, 0.01, (180, 64))
    combined = fbp_slice(2.5 * p1 - 0.7 * p2, angles, grid, 1.0)
    separate = 2.5 * fbp_slice(p1, angles, grid, 1.0) - 0.7 * fbp_slice(p2, angles, grid, 1.0)
    assert np.allclose(combined, separate, rtol=0.0, atol=1e-6)


def test_doubling_mu_doubles_the_estimate():
    ratio = _inner_mean(_disk_slice(mu=0.10), 30.0) / _inner_mean(_disk_slice(mu=0.05), 30.0)
    assert ratio == pytest.approx(2.0, rel=0.01)


def _offset_disk_sinogram(angles_deg, width, center, radius, mu):
    s = np.arange(width) - (width - 1) / 2.0
    t = np.deg2rad(np.asarray(angles_deg))[:, None]
    s0 = center[0] * np.cos(t) + center[1] * np.sin(t)
    return 2.0 * mu * np.sqrt(np.clip(radius ** 2 - (s - s0) ** 2, 0.0, None))


def test_turning_the_phantom_turns_the_reconstruction():
    angles = np.arange(180) * 1.0
    grid = ReconGrid(nx=64, nz=64, voxel=1.0)
    first = fbp_slice(_offset_disk_sinogram(angles, 64, (10.0, 4.0), 8.0, 0.05), angles, grid, 1.0)
    # the same disk a quarter turn on: (x, z) → (−z, x)
    turned = fbp_slice(_offset_disk_sinogram(angles, 64, (-4.0, 10.0), 8.0, 0.05), angles, grid, 1.0)
    c = 31
    assert first[c + 4, c + 10] == pytest.approx(0.05, rel=0.1)
    assert np.max(np.abs(turned - first[::-1, :].T)) <= 0.02 * 0.05


def test_angular_span_includes_one_step():
    assert angular_span(np.arange(4) * 45.0) == 180.0
    assert angular_span(np.array([10.0])) == 0.0


def test_short_scan_is_rejected():
    angles = np.arange(10) * 10.0
    with pytest.raises(InsufficientCoverageError):
        fbp_slice(np.zeros((10, 16)), angles, ReconGrid(nx=16, nz=16, voxel=1.0), 1.0)


def test_angle_count_mismatch_is_shape_error():
    with pytest.raises(ShapeError):
        fbp_slice(np.zeros((5, 16)), np.arange(4) * 45.0, ReconGrid(nx=16, nz=16, voxel=1.0), 1.0)


def _series(n=8, shape=(4, 6), pitch=0.2):
    geometry = {"sod": 100.0, "sdd": 200.0}
    return [ProjectionImage(np.full(shape, 0.5), pitch=pitch,
                            metadata={"geometry": {**geometry, "angle_deg": 180.0 * k / n}, "spec_id": "s"})
            for k in reversed(range(n))]


def test_sinogram_sorts_by_angle_and_scales_to_axis():
    sino = to_sinogram(_series())
    assert np.all(np.diff(sino.angles_deg) > 0)
    assert sino.values.shape == (4, 8, 6)
    assert sino.spacing == pytest.approx(0.1)
    assert np.allclose(sino.values, np.log(2.0))


def test_sinogram_clamps_zero_intensity():
    series = _series()
    series[0].values[0, 0] = 0.0
    sino = to_sinogram(series, epsilon=1e-6)
    assert sino.values.max() == pytest.approx(-np.log(1e-6))


def test_mismatched_images_rejected():
    series = _series()
    series[1] = ProjectionImage(np.ones((3, 3)), pitch=0.2, metadata=series[1].metadata)
    with pytest.raises(ShapeError):
        to_sinogram(series)
    with pytest.raises(ShapeError):
        to_sinogram([])



def test_full_turn_sinogram_mirrors_after_half_turn():
    pore = PoreSpec(center=(1.5, 0.0, 0.3), base_radius=0.5)
    spec = SpecimenSpec(kind="pore_plate", plate_size=(6.0, 6.0, 2.0), defects=[pore],
                        host_material=material_preset("aluminum"))
    geometry = ProjectionGeometry(width=33, height=5, pitch=0.62, beam="parallel")
    acq = AcquisitionConfig(count=8, range_deg=360.0, geometry=geometry)
    sino = to_sinogram(simulate_rotation_series(specimen_meshes(spec), acq)).values
    half = sino.shape[1] // 2
    tolerance = 0.02 * sino.max()
    assert np.abs(sino[:, 0] - sino[:, 0, ::-1]).max() > tolerance
    assert np.allclose(sino[:, half:, ::-1], sino[:, :half], rtol=0.0, atol=tolerance)

def test_volume_axes_and_row_subset():
    sino = Sinogram(angles_deg=np.arange(90) * 2.0, values=np.zeros((5, 90, 16)), spacing=0.5)
    vol = reconstruct_volume(sino, rows=[1, 3])
    assert vol.values.shape == (16, 2, 16)
    assert vol.metadata["rows"] == [1, 3]
    with pytest.raises(ShapeError):
        reconstruct_volume(sino, rows=[7])


def test_threaded_reconstruction_matches_serial():
    n = 90
    sino_rows = np.stack([disk_sinogram(n, 32, 1.0, 8.0 + r, 0.05) for r in range(4)])
    sino = Sinogram(angles_deg=np.arange(n) * 2.0, values=sino_rows, spacing=1.0)
    a = reconstruct_volume(sino, threads=1)
    b = reconstruct_volume(sino, threads=3)
    assert np.array_equal(a.values, b.values)


def test_volume_file_round_trip(tmp_path):
    vol = Volume(values=np.random.default_rng(0).normal(size=(3, 4, 5)), voxel=0.25, metadata={"n_angles": 9})
    write_volume(tmp_path / "v.raw", vol)
    back = read_volume(tmp_path / "v.raw")
    assert back.values.shape == (3, 4, 5) and back.voxel == 0.25
    assert back.metadata["n_angles"] == 9
    assert np.allclose(back.values, vol.values, atol=1e-6)


def test_slice_png_has_window_sidecar(tmp_path):
    vol = Volume(values=np.arange(24, dtype=float).reshape(2, 3, 4), voxel=1.0)
    path = export_slice_png(tmp_path / "s.png", vol, axis="y", index=1)
    counts = read_png16(path)
    assert counts.shape == (2, 4)
    assert counts.min() == 0 and counts.max() == 65535
    with pytest.raises(ShapeError):
        slice_of(vol, "z", 5)


def test_volume_needs_three_dimensions():
    with pytest.raises(ShapeError):
        Volume(values=np.zeros((3, 3)), voxel=1.0)
