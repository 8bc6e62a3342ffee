"""Rays, positional encoding, radiance fields and volume rendering."""

from app.radiance.camera import CameraModel, Rays, generate_rays, look_at, pixel_grid
from app.radiance.encoding import encoded_dim, positional_encode
from app.radiance.field import FieldConfig, FieldOutput, RadianceField, blend_query, field_query
from app.radiance.render import (
    ColorRender,
    RaySampleBatch,
    compositing_weights,
    recon_loss,
    render_disparity,
    sample_deltas,
    sample_field,
    sample_points,
    volume_render_color,
)
from app.radiance.sampling import stratified_sample

__all__ = [
    "CameraModel", "ColorRender", "FieldConfig", "FieldOutput", "RadianceField", "RaySampleBatch", "Rays",
    "blend_query", "compositing_weights", "encoded_dim", "field_query", "generate_rays", "look_at",
    "pixel_grid", "positional_encode", "recon_loss", "render_disparity", "sample_deltas", "sample_field",
    "sample_points", "stratified_sample", "volume_render_color",
]
