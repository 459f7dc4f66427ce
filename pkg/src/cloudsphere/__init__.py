"""Point clouds as a sphere template plus coarse-to-fine offset fields."""

from .correspond import RegionMask, blend_offsets, co_edit, color_code, correspondence
from .errors import (
    CloudSphereError,
    DegenerateInputError,
    EmptyInputError,
    FormatError,
    InvalidArgumentError,
    OptimizationFailure,
    UnsupportedSizeError,
)
from .fitter import (
    CloudSphereRep,
    FitConfig,
    LossWeights,
    build_reg_graph,
    fit,
    grad_total_loss,
    loss_cd_stage,
    loss_reg_stage,
    reconstruct,
    total_loss,
)
from .geometry import (
    AbstractionPyramid,
    SphereTemplate,
    Transform,
    build_pyramid,
    farthest_point_sampling,
    gaussian_splatter,
    generate_sphere_template,
    normalize_cloud,
    voxelize_solid,
)
from .metrics import MetricsReport, chamfer, emd, evaluate, iou_solid, shift, spread
from .plyio import read_cloud, write_cloud
from .repfile import load_rep, save_rep

__version__ = "0.1.0"
