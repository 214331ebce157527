"""Graphics-based 3D skin segmentation and surface comparison toolkit.

The pipeline turns a scalar volume into a triangle mesh of the outermost
tissue boundary: per-slice seeded background flood fill labels each pixel
as background, boundary, or interior; Marching Cubes then extracts the
surface of the non-background region.  Companion modules compare meshes
via directed Hausdorff distances and generate analytic phantoms for
validation.
"""

from .errors import (
    ConfigError,
    DegenerateVolumeError,
    EmptyMeshError,
    MeshFormatError,
    NoBackgroundSeedError,
    SkinSegError,
    VolumeFormatError,
)
from .estimators import SkinSegmenter, SurfaceExtractor
from .metrics import (
    DistanceReport,
    directed_hausdorff,
    export_per_vertex_scalars,
    symmetric_hausdorff,
)
from .phantom import PhantomSpec, generate as generate_phantom
from .preprocess import gradient_magnitude, normalize_intensities, pad_volume, subsample
from .segmentation import (
    BACKGROUND,
    BOUNDARY,
    INTERIOR,
    IsovalueReport,
    LabelGrid,
    SegmentationConfig,
    load_label_grid,
    save_label_grid,
    segment_volume,
)
from .surface import (
    TriangleMesh,
    crop_mesh,
    export_mesh,
    extract_surface,
    import_mesh,
    is_watertight,
)
from .volume_io import Volume, VoxelCoord, load_volume, save_volume, slice_at

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND",
    "BOUNDARY",
    "ConfigError",
    "DegenerateVolumeError",
    "DistanceReport",
    "EmptyMeshError",
    "INTERIOR",
    "IsovalueReport",
    "LabelGrid",
    "MeshFormatError",
    "NoBackgroundSeedError",
    "PhantomSpec",
    "SegmentationConfig",
    "SkinSegError",
    "SkinSegmenter",
    "SurfaceExtractor",
    "TriangleMesh",
    "Volume",
    "VolumeFormatError",
    "VoxelCoord",
    "crop_mesh",
    "directed_hausdorff",
    "export_mesh",
    "export_per_vertex_scalars",
    "extract_surface",
    "generate_phantom",
    "gradient_magnitude",
    "import_mesh",
    "is_watertight",
    "load_label_grid",
    "load_volume",
    "normalize_intensities",
    "pad_volume",
    "save_label_grid",
    "save_volume",
    "segment_volume",
    "slice_at",
    "subsample",
    "symmetric_hausdorff",
    "__version__",
]
