import numpy as np
import pytest
from PIL import Image as PILImage
from scipy import ndimage

from app.imaging.focus import focus_decision, focus_measure, guided_filter, multifocus_fuse, remove_small_regions
from app.imaging.histogram import LEVELS, HistogramCdf, histogram_match, level_mapping, quantize
from app.imaging.image import Image, to_display, to_linear
from app.imaging.io import read_pfm, read_png, write_pfm, write_png
from app.imaging.metrics import SSIM_C1, psnr, ssim
from app.bokeh.scatter import scatter_render
from app.utils.error_handler import FormatError, ParameterError, ShapeError


def _const(value, h=16, w=16):
    return Image(np.full((h, w, 3), value))


# --------------------------
# IMAGE & GAMMA
# --------------------------

def test_image_validation():
    with pytest.raises(ParameterError):
        Image(np.full((4, 4, 3), 1.5))
    with pytest.raises(ShapeError):
        Image(np.zeros((4, 4, 2)))
    with pytest.raises(ShapeError):
        Image(np.zeros((0, 4, 3)))


def test_gamma_values():
    img = Image(np.array([[[0.5, 1.0, 0.0]]]))
    lin = to_linear(img, 2.0)
    assert lin.encoding == "linear"
    np.testing.assert_allclose(lin.data[0, 0], [0.25, 1.0, 0.0])


def test_gamma_round_trip(rng):
    img = Image(rng.uniform(size=(10, 100, 1)))
    back = to_display(to_linear(img, 2.0), 2.0)
    assert back.encoding == "display"
    assert np.max(np.abs(back.data - img.data)) < 1e-12


def test_gamma_rejects_nonpositive():
    with pytest.raises(ParameterError):
        to_linear(_const(0.5), 0.0)
    with pytest.raises(ParameterError):
        to_display(_const(0.5), 2.0)  # display image handed to the inverse


# --------------------------
# METRICS
# --------------------------

def test_psnr_closed_forms():
    assert psnr(_const(0.3), _const(0.3)) == 99.0
    assert psnr(_const(0.0), _const(0.1)) == pytest.approx(20.0, abs=1e-9)
    assert psnr(_const(0.0), _const(1.0)) == pytest.approx(0.0, abs=1e-12)


def test_psnr_symmetric_and_checks_shape(rng):
    a, b = Image(rng.uniform(size=(8, 8, 3))), Image(rng.uniform(size=(8, 8, 3)))
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(ShapeError):
        psnr(a, _const(0.1, 8, 9))


def test_ssim_identity_and_inversion(rng):
    x = Image(rng.uniform(size=(24, 24, 3)))
    assert ssim(x, x) == 1.0
    assert ssim(x, Image(1.0 - x.data)) < 1.0


def test_ssim_constant_images_luminance_term():
    c1, c2 = 0.2, 0.7
    expected = (2 * c1 * c2 + SSIM_C1) / (c1 ** 2 + c2 ** 2 + SSIM_C1)
    assert ssim(_const(c1), _const(c2)) == pytest.approx(expected, abs=1e-9)


def test_ssim_symmetric(rng):
    a, b = Image(rng.uniform(size=(20, 20, 3))), Image(rng.uniform(size=(20, 20, 3)))
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-12


def test_ssim_rejects_small_images():
    with pytest.raises(ShapeError):
        ssim(_const(0.1, 10, 10), _const(0.2, 10, 10))


# --------------------------
# HISTOGRAM MATCHING
# --------------------------

def test_cdf_is_monotone_and_ends_at_one(rng):
    cdf = HistogramCdf.from_image(Image(rng.uniform(size=(16, 16, 3))))
    assert np.all(np.diff(cdf.cdf, axis=1) >= 0)
    np.testing.assert_array_equal(cdf.cdf[:, -1], 1.0)


def test_match_to_itself_is_identity_on_present_levels(rng):
    img = Image(rng.uniform(size=(32, 32, 3)))
    out = histogram_match(img, img)
    np.testing.assert_array_equal(quantize(out.data), quantize(img.data))


def test_constant_source_maps_to_reference_median(rng):
    ref = Image(rng.uniform(size=(32, 32, 3)))
    out = histogram_match(_const(0.3, 8, 8), ref)
    ref_cdf = HistogramCdf.from_image(ref)
    for c in range(3):
        median = int(np.searchsorted(ref_cdf.cdf[c], 0.5 - 1e-12, side="left"))
        np.testing.assert_array_equal(quantize(out.data[..., c]), median)


def test_uniform_source_onto_half_range():
    src = Image(np.repeat((np.arange(256) / 255.0).reshape(16, 16, 1), 3, axis=2))
    ref = Image(np.repeat((np.arange(128) / 255.0).reshape(16, 8, 1), 3, axis=2))
    mapping = level_mapping(HistogramCdf.from_image(src), HistogramCdf.from_image(ref))
    expected = np.arange(LEVELS) // 2
    assert np.max(np.abs(mapping - expected[None, :])) <= 1


def _first_level_reaching(cdf, target):
    return int(np.argmax(cdf >= target - 1e-12))


def test_level_mapping_uses_source_cdf_midpoint(rng):
    src_cdf = HistogramCdf.from_image(Image(rng.uniform(size=(32, 32, 3))))
    ref_cdf = HistogramCdf.from_image(Image(rng.beta(2.0, 5.0, size=(32, 32, 3))))
    mapping = level_mapping(src_cdf, ref_cdf)
    upper_rule_differs = 0
    for c in range(3):
        for i in range(LEVELS):
            midpoint = src_cdf.cdf[c, i] - 0.5 * src_cdf.hist[c, i]
            assert mapping[c, i] == _first_level_reaching(ref_cdf.cdf[c], midpoint)
            upper_rule_differs += mapping[c, i] != _first_level_reaching(ref_cdf.cdf[c], src_cdf.cdf[c, i])
    assert upper_rule_differs > 0


def test_upper_cdf_rule_would_send_constant_source_to_reference_maximum(rng):
    ref = Image(rng.uniform(size=(32, 32, 3)))
    src_cdf, ref_cdf = HistogramCdf.from_image(_const(0.3, 8, 8)), HistogramCdf.from_image(ref)
    level = int(quantize(np.array(0.3)))
    for c in range(3):
        upper = _first_level_reaching(ref_cdf.cdf[c], src_cdf.cdf[c, level])
        assert upper == int(np.flatnonzero(ref_cdf.hist[c])[-1])
        assert level_mapping(src_cdf, ref_cdf)[c, level] < upper


def test_matched_cdf_is_close_to_reference(rng):
    src = Image(rng.uniform(size=(128, 128, 3)))
    ref = Image(rng.beta(2.0, 5.0, size=(96, 96, 3)))
    out = histogram_match(src, ref)
    distance = HistogramCdf.from_image(out).kolmogorov_distance(HistogramCdf.from_image(ref))
    assert np.all(distance < 2.0 / 256)

    again = histogram_match(out, ref)
    redo = HistogramCdf.from_image(again).kolmogorov_distance(HistogramCdf.from_image(out))
    assert np.all(redo < 2.0 / 256)


def test_histogram_match_needs_color():
    gray = Image(np.full((4, 4, 1), 0.5))
    with pytest.raises(ParameterError):
        histogram_match(gray, _const(0.5, 4, 4))


# --------------------------
# FOCUS & FUSION
# --------------------------

def test_focus_measure_constant_is_zero():
    assert np.all(focus_measure(_const(0.4, 20, 20)) == 0.0)


def test_focus_measure_peaks_on_step_edge():
    data = np.zeros((32, 32, 3))
    data[:, 16:] = 1.0
    focus = focus_measure(Image(data))
    assert focus[:, 15:17].max() == pytest.approx(focus.max())
    assert focus[:, :5].max() < 1e-12


def test_focus_measure_of_single_pixel_is_local():
    data = np.zeros((33, 33, 3))
    data[16, 16] = 1.0
    focus = focus_measure(Image(data))
    assert focus[16, 16] > 0
    outside = focus.copy()
    outside[16 - 5:16 + 6, 16 - 5:16 + 6] = 0.0
    assert np.all(outside < 1e-12)


def test_fuse_equal_inputs_returns_input(rng):
    img = Image(rng.uniform(size=(20, 20, 3)))
    mask, fused = multifocus_fuse(img, img)
    np.testing.assert_array_equal(fused.data, img.data)
    assert mask.min() >= 0.0 and mask.max() <= 1.0


def test_fuse_prefers_sharp_input(rng):
    sharp = Image(rng.uniform(size=(32, 32, 3)))
    blurred = scatter_render(sharp, np.full((32, 32), 3.0))
    mask, fused = multifocus_fuse(sharp, blurred)
    inner = (slice(4, -4), slice(4, -4))
    assert mask[inner].mean() > 0.95
    lo, hi = np.minimum(sharp.data, blurred.data), np.maximum(sharp.data, blurred.data)
    assert np.all(fused.data >= lo - 1e-12) and np.all(fused.data <= hi + 1e-12)


def test_fuse_shape_mismatch():
    with pytest.raises(ShapeError):
        multifocus_fuse(_const(0.1, 8, 8), _const(0.1, 8, 9))


def test_guided_filter_keeps_constant_source(rng):
    guide = rng.uniform(size=(24, 24))
    out = guided_filter(np.full((24, 24), 0.7), guide)
    np.testing.assert_allclose(out, 0.7, atol=1e-9)


def test_guided_filter_keeps_step_aligned_with_guide():
    guide = np.zeros((24, 24))
    guide[:, 12:] = 1.0
    out = guided_filter(guide.copy(), guide)
    assert np.all(out[:, :11] < 0.01) and np.all(out[:, 13:] > 0.99)


def test_remove_small_regions_flips_islands_only():
    decision = np.zeros((40, 40), dtype=bool)
    decision[:, 20:] = True
    decision[5:8, 5:8] = True
    decision[30:32, 30:32] = False
    cleaned = remove_small_regions(decision, 16)
    assert not cleaned[5:8, 5:8].any()
    assert cleaned[30:32, 30:32].all()
    assert cleaned[:, 20:].all() and not cleaned[:, :20].any()


def test_remove_small_regions_never_flips_everything():
    decision = np.ones((6, 6), dtype=bool)
    np.testing.assert_array_equal(remove_small_regions(decision, 100), decision)


def test_occlusion_edge_does_not_claim_background(rng):
    texture = 0.5 + 0.1 * ndimage.gaussian_filter(rng.normal(size=(32, 32)), 1.0)
    step = np.zeros((32, 32))
    step[:, 16:] = 1.0
    soft = ndimage.uniform_filter1d(step, 7, axis=1, mode="nearest")
    near_focus = step + (1.0 - step) * ndimage.gaussian_filter(texture, 3.0)
    far_focus = soft + (1.0 - soft) * texture
    fg = Image(np.repeat(near_focus[..., None], 3, axis=2))
    bg = Image(np.repeat(far_focus[..., None], 3, axis=2))
    decision = focus_decision(fg, bg)
    assert not decision[:, 4:15].any()


# --------------------------
# FILE FORMATS
# --------------------------

def test_png_round_trip(tmp_path, rng):
    levels = rng.integers(0, 256, size=(6, 7, 3))
    img = Image(levels / 255.0)
    path = write_png(tmp_path / "a.png", img)
    np.testing.assert_array_equal(np.round(read_png(path).data * 255), levels)


def test_png_rejects_16_bit(tmp_path):
    path = tmp_path / "deep.png"
    PILImage.fromarray(np.full((4, 4), 40000, dtype=np.uint16)).save(path)
    with pytest.raises(FormatError):
        read_png(path)


def test_png_rejects_garbage(tmp_path):
    path = tmp_path / "broken.png"
    path.write_bytes(b"\x89PNG not really")
    with pytest.raises(FormatError):
        read_png(path)


def test_pfm_layout_and_round_trip(tmp_path, rng):
    data = rng.normal(size=(5, 4)).astype(np.float32).astype(np.float64)
    path = write_pfm(tmp_path / "d.pfm", data)
    raw = path.read_bytes()
    assert raw.startswith(b"Pf\n4 5\n-1.0\n")
    # bottom-up: the first stored scanline is the last image row
    first = np.frombuffer(raw[len(b"Pf\n4 5\n-1.0\n"):][:16], dtype="<f4")
    np.testing.assert_array_equal(first, data[-1].astype(np.float32))
    np.testing.assert_array_equal(read_pfm(path), data)

    color = rng.normal(size=(3, 2, 3)).astype(np.float32).astype(np.float64)
    np.testing.assert_array_equal(read_pfm(write_pfm(tmp_path / "c.pfm", color)), color)


def test_pfm_rejects_truncated(tmp_path):
    path = write_pfm(tmp_path / "t.pfm", np.zeros((3, 3)))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(FormatError):
        read_pfm(path)
