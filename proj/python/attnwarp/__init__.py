"""Depth-guided attention warping."""

from ._attnwarp import (
    Error,
    WarpField,
    alpha_at,
    blend_masked,
    compute_warp_field,
    decode_tensor,
    encode_tensor,
    filter_splats,
    read_bundle,
    read_tensor,
    render_depth,
    warp_bundle,
    warp_feature_map,
    write_bundle,
    write_tensor,
)

__all__ = [
    "Error",
    "WarpField",
    "alpha_at",
    "blend_masked",
    "compute_warp_field",
    "decode_tensor",
    "encode_tensor",
    "filter_splats",
    "read_bundle",
    "read_tensor",
    "render_depth",
    "warp_bundle",
    "warp_feature_map",
    "write_bundle",
    "write_tensor",
]
