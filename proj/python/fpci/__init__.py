"""Point cloud frame interpolation: numpy bindings over the C++ core."""

try:
    from ._fpci import (  # installed package layout
        Engine,
        chamfer,
        coordinate_map,
        emd,
        emd_exact,
        fps,
        generate_sequence,
        knn,
        self_check,
        warp,
    )
except ImportError:  # build-tree layout: _fpci sits next to the package
    from _fpci import (
        Engine,
        chamfer,
        coordinate_map,
        emd,
        emd_exact,
        fps,
        generate_sequence,
        knn,
        self_check,
        warp,
    )

import json as _json

__version__ = "0.1.0"

__all__ = [
    "Engine",
    "chamfer",
    "coordinate_map",
    "emd",
    "emd_exact",
    "fps",
    "generate_sequence",
    "knn",
    "self_check",
    "warp",
    "make_engine",
]


def make_engine(config=None, seed=0):
    """Engine from a config dict (or JSON string); keys mirror the CLI schema."""
    if config is None:
        config = {}
    if not isinstance(config, str):
        config = _json.dumps(config)
    return Engine(config, seed)
