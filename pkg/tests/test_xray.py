import numpy as np
import pytest
from pydantic import ValidationError

from errors import ConfigError
from scene.generator import generate_pore_plate
from scene import csg
from scene.decompose import decompose
from scene.mesh import Material, box_mesh, mesh_volume, sphere_mesh
from scene.specimen import PoreSpec, SpecimenSpec, material_preset, specimen_meshes
from xray.detector import NoiseModel, QuantizationSpec, add_noise, apply_focal_blur, dequantize, quantize
from xray.geometry import AcquisitionConfig, ProjectionGeometry, quasi_parallel_geometry
from xray.image_io import (ProjectionImage, read_image_raw, read_pgm, read_png16, write_image_raw, write_pgm,
                           write_png16)
from xray.presets import get_preset, list_presets
from xray.projector import simulate_projection, simulate_rotation_series, simulate_specimen
from xray.raytrace import path_lengths, ray_path_lengths

ALU = material_preset("aluminum")
SMALL = ProjectionGeometry(width=8, height=8, pitch=0.3, beam="parallel")


def _plate(size=(10.0, 10.0, 4.0), pores=()):
    return SpecimenSpec(kind="pore_plate", plate_size=size, defects=list(pores), host_material=ALU)


# ── geometry ──

def test_magnification_and_iso_pitch():
    g = ProjectionGeometry(sod=500.0, sdd=1000.0, pitch=0.3)
    assert g.magnification == 2.0
    assert g.iso_pitch == pytest.approx(0.15)


def test_source_must_be_before_detector():
    with pytest.raises(ValidationError):
        ProjectionGeometry(sod=1000.0, sdd=500.0)


def test_origin_projects_to_detector_center():
    g = ProjectionGeometry(width=65, height=33)
    col, row = g.project([[0.0, 0.0, 0.0]])[0]
    assert (col, row) == (32.0, 16.0)


def test_cone_rays_pass_through_pixel_centers():
    g = ProjectionGeometry(width=4, height=4, pitch=1.0)
    origins, directions = g.rays(np.array([0]), np.array([3]))
    t = g.sdd / directions[0, 2]
    hit = origins[0] + t * directions[0]
    assert np.allclose(hit, [1.5, -1.5, g.sdd - g.sod])


def test_acquisition_angles_evenly_spaced():
    acq = AcquisitionConfig(count=4, range_deg=180.0)
    assert acq.angles() == [0.0, 45.0, 90.0, 135.0]


def test_quasi_parallel_keeps_iso_pitch():
    g = quasi_parallel_geometry(64, 8, iso_pitch=0.2)
    assert g.iso_pitch == pytest.approx(0.2)


# ── ray tracing ──

def test_axis_ray_through_unit_box():
    lengths = ray_path_lengths([0.0, 0.0, -5.0], [0.0, 0.0, 1.0], [box_mesh((1, 1, 1))])
    assert lengths[0] == pytest.approx(1.0, abs=1e-12)


def test_ray_along_shared_diagonal_counts_once():
    # (0.5, 0.5) lies on the diagonal shared by both triangles of each z face
    lengths = ray_path_lengths([0.5, 0.5, -5.0], [0.0, 0.0, 1.0], [box_mesh((1, 1, 1), centered=False)])
    assert lengths[0] == pytest.approx(1.0, abs=1e-12)


def test_missing_ray_has_zero_length():
    lengths = ray_path_lengths([5.0, 5.0, -5.0], [0.0, 0.0, 1.0], [box_mesh((1, 1, 1))])
    assert lengths[0] == 0.0


def test_zero_direction_rejected():
    with pytest.raises(ConfigError):
        ray_path_lengths([0, 0, 0], [0, 0, 0], [box_mesh((1, 1, 1))])


@pytest.mark.parametrize("segments,tolerance", [(20, 0.02), (80, 0.005)])
def test_sphere_chord_converges(segments, tolerance):
    mesh = sphere_mesh(1.0, segments)
    offset = 0.3
    length = path_lengths(np.array([[offset, 0.0, -5.0]]), np.array([[0.0, 0.0, 1.0]]), mesh)[0]
    assert abs(length / (2.0 * np.sqrt(1.0 - offset ** 2)) - 1.0) < tolerance


def _integrated_volume(mesh, cells=80):
    """Midpoint-rule integral of the z path length over the mesh footprint."""
    (x0, y0, z0), (x1, y1, _) = mesh.bounds
    hx, hy = (x1 - x0) / cells, (y1 - y0) / cells
    xx, yy = np.meshgrid(x0 + (np.arange(cells) + 0.5) * hx, y0 + (np.arange(cells) + 0.5) * hy)
    origins = np.stack([xx.ravel(), yy.ravel(), np.full(xx.size, z0 - 1.0)], axis=1)
    directions = np.tile([0.0, 0.0, 1.0], (xx.size, 1))
    return path_lengths(origins, directions, mesh).sum() * hx * hy


def test_material_volume_matches_ray_integrated_thickness():
    spec = generate_pore_plate(plate_size=(12.0, 12.0, 4.0), count=4, seed=4)
    (host, _), *pores = specimen_meshes(spec)
    for mesh, _ in pores:
        assert _integrated_volume(mesh) == pytest.approx(mesh_volume(mesh), rel=0.01)
    material = mesh_volume(host) - sum(mesh_volume(m) for m, _ in pores)
    thickness = _integrated_volume(host, cells=10) - sum(_integrated_volume(m) for m, _ in pores)
    assert thickness == pytest.approx(material, rel=0.01)


# ── projection ──

def test_plate_follows_beer_lambert():
    img = simulate_specimen(_plate(), SMALL)
    assert np.allclose(img.values, np.exp(-ALU.mu * 4.0), rtol=1e-12)
    assert img.metadata["geometry"]["beam"] == "parallel"


def test_pore_raises_transmission():
    pore = PoreSpec(center=(0.0, 0.0, 0.0), base_radius=0.5)
    img = simulate_specimen(_plate(pores=[pore]), SMALL)
    background = np.exp(-ALU.mu * 4.0)
    assert img.values[3:5, 3:5].min() > background
    assert img.values[3, 3] == pytest.approx(np.exp(-ALU.mu * (4.0 - 1.0)), rel=0.01)
    assert img.values[0, 0] == pytest.approx(background, rel=1e-12)


def test_nested_block_matches_closed_form():
    host, filler = Material(name="host", mu=0.05), Material(name="filler", mu=0.01)
    tree = csg.difference(csg.cube((10.0, 10.0, 4.0)), csg.translate((0.1, 0.2, 0.0), csg.cube((1.0, 1.0, 1.0))))
    g = ProjectionGeometry(width=9, height=9, pitch=0.3, beam="parallel")
    img = simulate_projection(decompose(tree, host, filler), g)
    assert img.values[4, 4] == pytest.approx(np.exp(-(0.05 * 3.0 + 0.01 * 1.0)), rel=1e-9)
    assert img.values[0, 0] == pytest.approx(np.exp(-0.2), rel=1e-9)


def test_effective_bodies_sum_to_piecewise_integral():
    host, filler = Material(name="host", mu=0.05), Material(name="filler", mu=0.02)
    tree = csg.difference(csg.cube((10.0, 10.0, 4.0)), csg.translate((0.4, -0.3, 0.2), csg.sphere(1.2)))
    parts = decompose(tree, host, filler)
    g = ProjectionGeometry(width=24, height=24, pitch=0.3, beam="parallel")
    img = simulate_projection(parts, g)
    rows, cols = np.meshgrid(np.arange(24), np.arange(24), indexing="ij")
    origins, directions = g.rays(rows, cols)
    l_host = path_lengths(origins, directions, parts[0][0]).reshape(rows.shape)
    l_body = path_lengths(origins, directions, parts[1][0]).reshape(rows.shape)
    assert l_body.max() > 2.0
    direct = host.mu * (l_host - l_body) + filler.mu * l_body
    assert np.allclose(-np.log(img.values), direct, rtol=0.0, atol=1e-9)


def test_turntable_rotation_changes_path():
    img = simulate_specimen(_plate(size=(10.0, 10.0, 4.0)), SMALL.with_angle(90.0))
    # the 10 mm x extent now lies along the beam
    assert img.values[4, 4] == pytest.approx(np.exp(-ALU.mu * 10.0), rel=1e-9)


def test_threads_give_bit_identical_images():
    spec = generate_pore_plate(plate_size=(12.0, 12.0, 4.0), count=6, seed=4)
    meshes = specimen_meshes(spec)
    g = ProjectionGeometry(width=48, height=48, pitch=0.5)
    serial = simulate_projection(meshes, g, threads=1)
    threaded = simulate_projection(meshes, g, threads=3)
    assert np.array_equal(serial.values, threaded.values)


def test_rotation_series_is_in_angle_order():
    acq = AcquisitionConfig(count=3, range_deg=180.0, geometry=SMALL)
    images = simulate_rotation_series(specimen_meshes(_plate()), acq)
    assert [img.angle_deg for img in images] == [0.0, 60.0, 120.0]


def test_focal_blur_spreads_an_edge():
    values = np.zeros((16, 16))
    values[:, 8:] = 1.0
    img = apply_focal_blur(ProjectionImage(values, pitch=0.1), focal_spot_mm=0.4, magnification=2.0)
    assert 0.0 < img.values[0, 7] < 1.0
    assert img.metadata["focal_blur_sigma_px"] == pytest.approx(0.4 / 0.1 / 2.355)


# ── detector ──

def test_zero_noise_is_identity():
    img = ProjectionImage(np.full((4, 4), 0.5), pitch=1.0)
    out = add_noise(img, NoiseModel(sigma_rel=0.0))
    assert np.array_equal(out.values, img.values)


def test_noise_is_seeded_and_stream_separated():
    img = ProjectionImage(np.full((32, 32), 0.5), pitch=1.0)
    model = NoiseModel(sigma_rel=0.1, seed=11)
    a = add_noise(img, model, stream=0)
    b = add_noise(img, model, stream=0)
    c = add_noise(img, model, stream=1)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_relative_noise_scales_with_intensity():
    img = ProjectionImage(np.full((1000, 1000), 0.8), pitch=1.0)
    out = add_noise(img, NoiseModel(sigma_rel=0.1, seed=3))
    assert np.std(out.values / 0.8 - 1.0) == pytest.approx(0.1, rel=0.03)
    assert np.mean(out.values) == pytest.approx(0.8, rel=1e-3)
    assert out.values.min() >= 0.0


def test_quantize_rounds_half_up():
    img = ProjectionImage(np.array([[0.0, 0.5, 1.0, 1.5]]), pitch=1.0)
    assert quantize(img, QuantizationSpec(bits=16)).tolist() == [[0, 32768, 65535, 65535]]
    assert quantize(img, QuantizationSpec(bits=12)).tolist() == [[0, 2048, 4095, 4095]]


def test_dequantize_error_within_half_step():
    values = np.random.default_rng(0).uniform(0, 1, (8, 8))
    counts = quantize(ProjectionImage(values, pitch=1.0), QuantizationSpec(bits=12))
    back = dequantize(counts, 12)
    assert np.max(np.abs(back.values - values)) <= 0.5 / 4095 + 1e-12


# ── files ──

def test_raw_image_round_trip(tmp_path):
    img = ProjectionImage(np.linspace(0, 1, 12).reshape(3, 4), pitch=0.2, metadata={"spec_id": "abc"})
    write_image_raw(tmp_path / "p.raw", img)
    back = read_image_raw(tmp_path / "p.raw")
    assert np.allclose(back.values, img.values, atol=1e-7)
    assert back.pitch == 0.2 and back.metadata["spec_id"] == "abc"


def test_png16_and_pgm_keep_counts(tmp_path):
    counts = np.array([[0, 1, 65535], [32768, 4095, 12]], dtype=np.uint16)
    assert np.array_equal(read_png16(write_png16(tmp_path / "a.png", counts)), counts)
    assert np.array_equal(read_pgm(write_pgm(tmp_path / "a.pgm", counts)), counts)


# ── presets ──

def test_presets_build_magnification_two_geometry():
    assert set(list_presets()) == {"highq", "midq", "lowq"}
    g = get_preset("midq").geometry()
    assert g.magnification == 2.0 and g.sod == 450.0


def test_unknown_preset_lists_available():
    with pytest.raises(ValueError, match="highq"):
        get_preset("ultra")
