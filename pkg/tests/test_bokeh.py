import math

import numpy as np
import pytest

from app.bokeh.defocus import (
    DefocusParams,
    coc_radius,
    defocus_map,
    inverse_softplus,
    normalize_map,
    scatter_weight,
    smooth_heaviside,
)
from app.bokeh.scatter import scatter_render, scatter_render_reference
from app.diffcore.gradcheck import finite_diff_grad, relative_error
from app.diffcore.tensor import Tensor, backward
from app.imaging.image import Image
from app.utils.error_handler import NumericError, ParameterError, ShapeError


# --------------------------
# DEFOCUS MODEL
# --------------------------

def test_params_round_trip_initial_values():
    params = DefocusParams.create()
    assert params.A == pytest.approx(5.0, abs=1e-12)
    assert params.D_f == 0.5
    assert DefocusParams.create(A=0.0).A == 0.0
    with pytest.raises(ParameterError):
        inverse_softplus(-1.0)
    with pytest.raises(NumericError):
        DefocusParams.create(D_f=float("nan"))


def test_coc_radius_values():
    params = DefocusParams.create(A=5.0, D_f=0.5)
    assert np.all(coc_radius(params, np.full((3, 3), 0.5)).data == 0.0)
    assert coc_radius(params, np.array([[0.7]])).data[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_coc_radius_focal_gradient(rng):
    params = DefocusParams.create(A=3.0, D_f=0.4)
    disparity = rng.uniform(0, 1, size=(4, 4))
    disparity[np.abs(disparity - 0.4) < 1e-3] = 0.9

    params.store.zero_grad()
    backward(coc_radius(params, disparity).sum())
    analytic = params.store.gradients()[DefocusParams.DF_BLOCK]
    expected = 3.0 * np.sign(0.4 - disparity).sum()
    assert analytic[0] == pytest.approx(expected, rel=1e-9)

    numeric = finite_diff_grad(lambda s: coc_radius(params, disparity).sum().data, params.store)
    assert relative_error(analytic, numeric[DefocusParams.DF_BLOCK]) < 1e-6


def test_defocus_map_values():
    params = DefocusParams.create(A=5.0, D_f=0.5)
    np.testing.assert_allclose(defocus_map(params, np.array([0.1, 0.5, 0.9])).data, [2.0, 0.0, 2.0], atol=1e-12)
    zero = DefocusParams.create(A=0.0, D_f=0.5)
    assert np.all(defocus_map(zero, np.array([0.0, 0.3, 1.0])).data == 0.0)
    d = np.linspace(0, 1, 7)
    np.testing.assert_array_equal(defocus_map(params, d).data, coc_radius(params, d).data)


def test_smooth_heaviside_values():
    assert smooth_heaviside(0.0) == 0.5
    assert smooth_heaviside(10.0) == pytest.approx(1.0, abs=1e-9)
    assert smooth_heaviside(0.25) == pytest.approx(0.5 + 0.5 * math.tanh(1.0))
    assert smooth_heaviside(0.25) == pytest.approx(0.880797, abs=1e-6)
    x = np.linspace(-2, 2, 50)
    assert np.all(np.diff(smooth_heaviside(x)) > 0)


def test_scatter_weight_values():
    assert scatter_weight(2.0, 0.0) == pytest.approx((0.5 + 0.5 * math.tanh(8.0)) / 4.0, abs=1e-12)
    assert scatter_weight(1.0, 20.0) < 1e-12
    d = np.linspace(0, 6, 40)
    assert np.all(np.diff(scatter_weight(2.5, d)) <= 0)
    # the r_min guard keeps the self weight finite at r = 0
    assert scatter_weight(0.0, 0.0) == pytest.approx(0.5 / 0.25)
    with pytest.raises(ParameterError):
        scatter_weight(-1.0, 0.0)


def test_normalize_map_values():
    m = np.array([0.0, 0.25, 1.0])
    np.testing.assert_array_equal(normalize_map(m), m)
    assert np.all(normalize_map(np.full(5, 3.3)) == 0.0)
    np.testing.assert_array_equal(normalize_map(np.array([2.0, 0.0, 2.0])), [1.0, 0.0, 1.0])


# --------------------------
# SCATTER RENDERING
# --------------------------

def test_zero_radius_is_identity(rng):
    img = Image(rng.uniform(size=(12, 12, 3)))
    out = scatter_render(img, np.zeros((12, 12)))
    assert np.max(np.abs(out.data - img.data)) < 1e-6


def test_constant_image_is_preserved(rng):
    img = Image(np.full((16, 16, 3), 0.37))
    out = scatter_render(img, rng.uniform(0, 3, size=(16, 16)))
    assert np.max(np.abs(out.data - 0.37)) < 1e-6


def test_single_white_pixel_spreads_symmetrically():
    data = np.zeros((15, 15, 3))
    data[7, 7] = 1.0
    radius = np.full((15, 15), 3.0)
    out = scatter_render(Image(data), radius).data[..., 0]
    assert out[7, 9] > 0 and out[7, 8] > 0
    assert out[7, 9] == pytest.approx(out[9, 7], abs=1e-12)
    assert out[7, 8] == pytest.approx(out[7, 6], abs=1e-12)
    np.testing.assert_allclose(out, scatter_render_reference(data, radius)[..., 0], atol=1e-10)


@pytest.mark.parametrize("seed", range(25))
def test_fast_path_matches_reference(seed):
    rng = np.random.default_rng(seed)
    img = rng.uniform(size=(32, 32, 3))
    radius = rng.uniform(0.0, 2.5, size=(32, 32))
    fast = scatter_render(Image(img), radius).data
    slow = scatter_render_reference(img, radius)
    assert np.max(np.abs(fast - slow)) < 1e-10


def test_scatter_never_exceeds_input_max(rng):
    img = Image(rng.uniform(0.1, 0.8, size=(16, 16, 3)))
    out = scatter_render(img, rng.uniform(0, 3, size=(16, 16)))
    assert out.data.max() ** 2 <= img.data.max() ** 2 + 1e-9


def test_scatter_checks_inputs(rng):
    img = Image(rng.uniform(size=(8, 8, 3)))
    with pytest.raises(ShapeError):
        scatter_render(img, np.zeros((8, 7)))
    with pytest.raises(ParameterError):
        scatter_render(img, -np.ones((8, 8)))
    with pytest.raises(ParameterError):
        scatter_render(img, np.zeros((8, 8)), gamma=0.0)


@pytest.mark.parametrize("seed", range(3))
def test_render_gradient_wrt_defocus_params(seed):
    rng = np.random.default_rng(seed)
    sharp = Image(rng.uniform(size=(16, 16, 3)))
    disparity = rng.uniform(0.0, 1.0, size=(16, 16))
    params = DefocusParams.create(A=3.0, D_f=0.45)
    disparity[np.abs(disparity - 0.45) < 1e-3] = 0.9
    weights = rng.uniform(size=(16, 16, 3))

    def loss_of(store):
        out = scatter_render(sharp, coc_radius(params, disparity))
        return (out * weights).sum()

    params.store.zero_grad()
    out = loss_of(params.store)
    assert isinstance(out, Tensor)
    backward(out)
    analytic = params.store.gradients()
    numeric = finite_diff_grad(lambda s: loss_of(s).data, params.store, eps=1e-6)
    for name, grad in numeric.items():
        assert relative_error(analytic[name], grad) < 1e-3, name
