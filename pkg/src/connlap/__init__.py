"""Graph connection Laplacians, vector diffusion maps and their convergence
experiments on analytic manifold models."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import (
    ConnlapError,
    EigenSolverError,
    NumericalError,
    ValidationError,
)
from .experiments import (
    ExperimentConfig,
    bandwidth_schedule,
    heat_power_experiment,
    orientability_test,
    pointwise_error,
    spectral_error,
)
from .graph import AffinityGraph, BlockOperator, assemble_operator, attach_connection, build_affinity
from .kernels import KernelSpec, estimate_density, kernel_eval, kernel_moment, normalized_kernel
from .manifolds import (
    PointCloud,
    analytic_field,
    analytic_frame,
    analytic_transport,
    get_model,
    make_rng,
    reference_spectrum,
    sample,
)
from .spectral import cluster_eigenvalues, eigendecompose, rescale_eigenvalues, vdm_embed, vdd
from .tangent import (
    estimate_dimension,
    invariant_distance,
    local_pca,
    local_pca_frames,
    procrustes_align,
    z2_connection,
)
