"""Localized minimax state estimation for advection-diffusion on decomposed domains."""
from .config import RunConfig, load_config, save_config
from .decomposition import BoundaryExchange, SubdomainTopology, extract_boundary, interface_error, partition
from .errors import (ConfigError, NonConvergenceWarning, NumericalError, StaleBoundaryError,
                     StepSizeError)
from .fem import (BoundaryClassification, FemSystem, assemble_mass, assemble_source, assemble_system,
                  assemble_stiffness, classify_boundary)
from .filter import (FilterState, ObservationFrame, UncertaintySpec, filter_step,
                     make_pseudo_observations, pointwise_bound, reinitialize, riccati_step)
from .flow import FlowField, flow_at
from .mesh import Mesh, build_mesh
from .metrics import estimation_error, spatial_error, spatial_norm, stitch
from .orchestrator import (RunResult, bench_scaling, probe_bound_trace, run, run_forward,
                           run_global, run_localized)
from .scenarios import GaussianTruthParams, experiment_config, gaussian_truth, synth_observations

__version__ = "0.1.0"
