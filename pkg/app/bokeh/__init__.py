"""Differentiable thin-lens bokeh: CoC radius, scatter kernel and renderer."""

from app.bokeh.defocus import (
    A_INIT,
    BETA,
    DF_INIT,
    DefocusParams,
    coc_radius,
    defocus_map,
    normalize_map,
    scatter_weight,
    smooth_heaviside,
)
from app.bokeh.scatter import R_MIN, scatter_render, scatter_render_reference

__all__ = [
    "A_INIT", "BETA", "DF_INIT", "DefocusParams", "R_MIN",
    "coc_radius", "defocus_map", "normalize_map", "scatter_render", "scatter_render_reference",
    "scatter_weight", "smooth_heaviside",
]
