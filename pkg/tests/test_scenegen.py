import numpy as np
import pytest
from scipy import ndimage

from app.imaging.image import Image
from app.imaging.io import read_pfm, read_png
from app.imaging.metrics import psnr
from app.models.data_models import PlaneSpec, SceneSpec, load_manifest
from app.radiance.camera import CameraModel
from app.scenegen import GeneratorOptions, emit_dataset
from app.scenegen.dataset import camera_arc, split_views
from app.scenegen.degrade import ColorCurve, simulate_main, simulate_ultra
from app.scenegen.scene import build_scene, render_aif, render_layers, texture_color, texture_patch
from app.utils.error_handler import DatasetError, ParameterError


def _plane(disparity, center=(0.0, 0.0), half=None, texture="noise"):
    return PlaneSpec(
        disparity=disparity,
        center=list(center),
        half_extent=None if half is None else list(half),
        texture=texture,
        texture_seed=11,
        base_color=[0.9, 0.8, 0.7],
        cell_size=0.05 / disparity,
    )


def _axis_camera(width=32, height=32):
    return CameraModel.from_fov(width, height, 50.0, near=0.5, far=20.0)


def _region_psnr(a, b, mask):
    mse = max(float(np.mean((a.data[mask] - b.data[mask]) ** 2)), 1e-10)
    return 10.0 * np.log10(1.0 / mse)


# --------------------------
# SCENE LAYOUT
# --------------------------

def test_same_seed_same_scene():
    assert build_scene(5) == build_scene(5)
    assert build_scene(5) != build_scene(6)


@pytest.mark.parametrize("seed", range(10))
def test_scene_layout(seed):
    spec = build_scene(seed)
    assert 2 <= len(spec.planes) <= 5
    disparities = [p.disparity for p in spec.planes]
    assert all(b < a for a, b in zip(disparities, disparities[1:]))
    assert spec.background.is_background


def test_scene_arguments_are_checked():
    with pytest.raises(ParameterError):
        build_scene(1, n_planes=6)
    with pytest.raises(ParameterError):
        build_scene(1, focus_disparity=1.5)
    assert build_scene(1, focus_disparity=0.85).foreground.disparity == 0.85


def test_textures_have_gradient_energy():
    for seed in range(4):
        for plane in build_scene(seed).planes:
            gray = texture_patch(plane).gray()
            gy, gx = np.gradient(gray)
            assert np.mean(np.hypot(gx, gy)) > 0.02, (seed, plane.texture)


# --------------------------
# ANALYTIC RENDER
# --------------------------

def test_background_only_view_has_constant_disparity():
    spec = SceneSpec(seed=0, planes=[_plane(0.8, center=(50.0, 50.0), half=(0.1, 0.1)), _plane(0.25)])
    _, disparity = render_aif(spec, _axis_camera())
    np.testing.assert_allclose(disparity, 0.25, atol=1e-12)


def test_front_plane_occludes_background():
    spec = SceneSpec(seed=0, planes=[_plane(0.8, half=(0.2, 0.2)), _plane(0.25)])
    out = render_layers(spec, _axis_camera())
    assert out.layers[16, 16] == 0
    assert out.disparity[16, 16] == pytest.approx(0.8, abs=1e-12)
    assert out.layers[0, 0] == 1
    assert out.disparity[0, 0] == pytest.approx(0.25, abs=1e-12)


def test_render_matches_per_pixel_intersection(tiny_scene):
    cam = _axis_camera()
    out = render_layers(tiny_scene, cam)
    for v in range(cam.height):
        for u in range(cam.width):
            d = np.array([(u + 0.5 - cam.cx) / cam.fx, (v + 0.5 - cam.cy) / cam.fy, 1.0])
            d /= np.linalg.norm(d)
            best_t, best_index, best_hit = np.inf, -1, None
            for index, plane in enumerate(tiny_scene.planes):
                t = plane.depth / d[2]
                hit = t * d
                if not plane.is_background:
                    if abs(hit[0] - plane.center[0]) > plane.half_extent[0]:
                        continue
                    if abs(hit[1] - plane.center[1]) > plane.half_extent[1]:
                        continue
                if t < best_t:
                    best_t, best_index, best_hit = t, index, hit
            plane = tiny_scene.planes[best_index]
            assert out.layers[v, u] == best_index
            assert out.disparity[v, u] == pytest.approx(plane.disparity, abs=1e-12)
            color = texture_color(
                plane, np.array([best_hit[0] - plane.center[0]]), np.array([best_hit[1] - plane.center[1]])
            )[0]
            np.testing.assert_allclose(out.image.data[v, u], color, atol=1e-12)


# --------------------------
# CAMERA DEGRADATIONS
# --------------------------

def test_main_without_aperture_is_aif(tiny_scene):
    aif, disparity = render_aif(tiny_scene, _axis_camera())
    main = simulate_main(aif, disparity, 0.0, 0.5)
    np.testing.assert_array_equal(main.data, aif.data)


def test_main_focus_keeps_focused_plane_sharp(tiny_scene):
    cam = _axis_camera(64, 48)
    out = render_layers(tiny_scene, cam)
    main = simulate_main(out.image, out.disparity, 4.0, tiny_scene.foreground.disparity)
    again = simulate_main(out.image, out.disparity, 4.0, tiny_scene.foreground.disparity)
    np.testing.assert_array_equal(main.data, again.data)

    front = ndimage.binary_erosion(out.layers == 0, iterations=5)
    back = ndimage.binary_erosion(out.layers == 1, iterations=5)
    assert front.any() and back.any()
    assert _region_psnr(main, out.image, front) >= _region_psnr(main, out.image, back) + 10.0


def test_ultra_with_identity_curve_is_aif(tiny_scene):
    aif, _ = render_aif(tiny_scene, _axis_camera())
    ultra = simulate_ultra(aif, ColorCurve.identity(), blur_radius=0.0)
    np.testing.assert_array_equal(ultra.data, aif.data)
    with pytest.raises(ParameterError):
        simulate_ultra(aif, ColorCurve.identity(), blur_radius=-1.0)


def test_color_curves(rng):
    img = Image(rng.uniform(0.05, 1.0, size=(16, 16, 3)))
    darker = ColorCurve.power([1.1, 1.0, 1.0]).apply(img)
    assert darker.data[..., 0].mean() < img.data[..., 0].mean()
    np.testing.assert_array_equal(darker.data[..., 1:], img.data[..., 1:])

    curve = ColorCurve.random(rng)
    ends = curve.apply(Image(np.array([[[0.0] * 3, [1.0] * 3]])))
    np.testing.assert_allclose(ends.data[0, 0], 0.0, atol=1e-12)
    np.testing.assert_allclose(ends.data[0, 1], 1.0, atol=1e-12)
    assert ColorCurve.from_record(curve.to_record()) == curve

    with pytest.raises(ParameterError):
        ColorCurve.cubic([(1.0, -3.0, 0.0)] * 3)
    with pytest.raises(ParameterError):
        ColorCurve.power([1.0, 0.0, 1.0])


# --------------------------
# DATASET EMISSION
# --------------------------

def test_split_views():
    train, test = split_views(24)
    assert len(train) == 21 and test == [0, 8, 16]
    assert split_views(8) == (list(range(1, 8)), [0])


def test_camera_arc_pairs(tiny_scene):
    pairs = camera_arc(tiny_scene, 5, 48, 36)
    assert len(pairs) == 5
    for main, ultra in pairs:
        assert ultra.fx == pytest.approx(main.fx / 1.35)
        np.testing.assert_array_equal(ultra.rotation, main.rotation)
        assert np.linalg.norm(ultra.translation - main.translation) > 0


def test_manifest_of_tiny_dataset(tiny_dataset):
    out, manifest = tiny_dataset
    assert len(manifest.views) == 8
    assert (len(manifest.train), len(manifest.test)) == (7, 1)
    assert load_manifest(out) == manifest
    view = manifest.view(3)
    assert read_png(out / view.files["main"]).shape == (36, 48, 3)
    assert read_pfm(out / view.files["disparity"]).shape == (36, 48)
    assert manifest.truth.D_f == manifest.scene.foreground.disparity
    with pytest.raises(DatasetError):
        manifest.view(99)


@pytest.mark.slow
def test_fused_ground_truth_is_close_to_aif(tmp_path):
    manifest = emit_dataset(build_scene(0), tmp_path, 0, GeneratorOptions(views=8))
    assert (manifest.width, manifest.height) == (96, 72)
    scores = [
        psnr(read_png(tmp_path / v.files["gt"]), read_png(tmp_path / v.files["gt_aif"])) for v in manifest.views
    ]
    assert min(scores) >= 35.0


def test_fused_ground_truth_beats_main_capture(tiny_dataset):
    out, manifest = tiny_dataset
    fused, single = [], []
    for view in manifest.views:
        aif = read_png(out / view.files["gt_aif"])
        fused.append(psnr(read_png(out / view.files["gt"]), aif))
        single.append(psnr(read_png(out / view.files["main"]), aif))
    assert np.mean(fused) > np.mean(single)


def test_regeneration_is_bit_identical(tiny_dataset, tiny_scene, tiny_options, tmp_path):
    out, manifest = tiny_dataset
    again = emit_dataset(tiny_scene, tmp_path, 7, tiny_options)
    assert again == manifest
    for view in manifest.views:
        for rel in view.files.values():
            assert (out / rel).read_bytes() == (tmp_path / rel).read_bytes(), rel
    assert (out / "manifest.json").read_bytes() == (tmp_path / "manifest.json").read_bytes()


def test_missing_view_files_are_reported(tiny_dataset, tmp_path):
    out, _ = tiny_dataset
    (tmp_path / "manifest.json").write_bytes((out / "manifest.json").read_bytes())
    with pytest.raises(DatasetError, match="missing files"):
        load_manifest(tmp_path)
