"""Neural radiance field: encoding, MLP, volume rendering, sampling and cameras."""

from .encoding import EncodingConfig, positional_encode
from .mlp import (
    FieldConfig,
    RadianceFieldParams,
    field_backward,
    field_forward,
    load_checkpoint,
    save_checkpoint,
)
from .rays import Camera, Ray, camera_rays, generate_ray, look_at
from .render import (
    hierarchical_sample,
    merge_samples,
    stratified_samples,
    volume_render,
    volume_render_backward,
)

__all__ = [
    "EncodingConfig", "positional_encode", "FieldConfig", "RadianceFieldParams",
    "field_forward", "field_backward", "save_checkpoint", "load_checkpoint",
    "Camera", "Ray", "camera_rays", "generate_ray", "look_at",
    "hierarchical_sample", "merge_samples", "stratified_samples",
    "volume_render", "volume_render_backward",
]
