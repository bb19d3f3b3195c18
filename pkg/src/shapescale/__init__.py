"""Level-set geometry engine: multiscale shape decomposition and
reconstruction, volume-preserving threshold dynamics, and tubular surface
inpainting on voxel grids."""

__version__ = "0.1.0"

from .evolution import (
    EvolutionSchedule,
    ShapeCollapseError,
    ThresholdState,
    VelocityKind,
    VelocityModel,
    diffuse_step,
    evolve,
    find_volume_threshold,
    step_combined,
    step_constant_normal,
    step_constant_mbo,
    step_mcm,
    step_vpmcm,
)
from .grid import (
    DegenerateGradientError,
    ScalarGrid,
    SurfaceMissingError,
    SurfaceSample,
    average_mean_curvature,
    interpolate,
    interpolate_many,
    mean_curvature,
    normal_at,
    project_to_zero,
    sample_surface,
)
from .gridio import load_grid, load_record, save_grid, save_record
from .inpaint import (
    InpaintReport,
    InpaintingProblem,
    RegionMask,
    inpaint,
    inpainted_fraction,
    region_from_seeds,
)
from .meshio import export_mesh
from .metrics import (
    area,
    connected_components,
    detail_histogram,
    hausdorff,
    isoperimetric_ratio,
    volume,
)
from .multiscale import (
    DisplacementSet,
    MultiscaleRecord,
    extend_displacements,
    imst_reconstruct,
    imst_step,
    imst_viscous,
    mst_decompose,
)
from .phantoms import VesselSpec, make_primitive, make_vessel
from .redistance import SignField, fast_sweep_redistance, redistance_field

__all__ = [name for name in dir() if not name.startswith("_")]
