"""Lr-optimal quantization of probability distributions on normed spaces.

The working pieces: normed spaces with a.e. Gateaux-differentiable norms
(`spaces`), seeded distributions with declared support oracles
(`distributions`), the distortion function with its Monte-Carlo gradient
(`distortion`), quantizer constructors (`optimize`), and an executable
verification harness for stationarity and local-minimum structure (`verify`).
"""

from .distortion import (
    AdmissibilityEstimate,
    DistortionEstimate,
    GradientValue,
    Quantizer,
    VoronoiAssignment,
    admissibility,
    distortion,
    distortion_exact_1d,
    distortion_gradient,
    project,
    voronoi_assign,
)
from .distributions import (
    BrownianKL,
    Distribution,
    Empirical,
    GaussianIso,
    UniformDisk,
    UniformInterval,
    brownian_kl_factory,
    distribution_from_json,
)
from .optimize import (
    OptimizerConfig,
    OptimizeTrace,
    best_trace,
    cellwise_update,
    gradient_descent,
    lloyd,
    multistart,
    random_init,
    split_init,
    stochastic_gradient,
)
from .spaces import Euclidean, L1Grid, LpGrid, LpSequence, NormedSpace, space_from_json
from .verify import (
    CounterexampleReport,
    ProbeVerdict,
    StationarityReport,
    counterexample_suite,
    gradient_fd_check,
    local_min_probe,
    local_min_structure_check,
    stationarity_check,
    strict_min_support_check,
)

__version__ = "0.1.0"
