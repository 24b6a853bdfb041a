"""hapslam: hybrid active/passive radio-sensing SLAM.

A mobile agent sounds nearby walls with beamformed echoes (active sensing),
turns the echo ranges into Gaussian beliefs over virtual reference points,
and uses those to initialize anchor positions for a particle
belief-propagation SLAM that refines the map from multipath TOA measurements
(passive sensing).
"""

from .active import (
    GaussianVrp,
    NoEchoPeakError,
    Rsp,
    SignalConfig,
    distance_crlb,
    estimate_distance,
    exact_fisher_info,
    fuse_vrp_solutions,
    rcs_of_incidence,
    reflection_gain,
    simulate_echo,
    snr,
    taylor_vrp_pair,
)
from .beliefs import AgentBelief, AgentState, FeatureBelief
from .config import ConfigError, RunConfig, load_config
from .engine import (
    AssociationMarginals,
    SlamParams,
    SlamState,
    estimate,
    loopy_data_association,
    predict_agent,
    predict_features,
    step,
    toa_likelihood,
)
from .geometry import (
    DegenerateGeometryError,
    SurfaceFrame,
    pa_from_vrp_va,
    rsp_position,
    surface_normal,
    va_from_pa,
    vrp_from_pa_va,
    vrp_from_two_rsps,
)
from .harness import run_experiment, run_single
from .metrics import mae, ospa
from .painit import fuse_pa_candidates, initialize_pa, pa_candidates, va_candidates
from .refine import refine, similarity
from .scenario import (
    MeasurementFrame,
    NoiseModel,
    Scenario,
    Wall,
    generate_active_scan,
    generate_measurements,
    generate_trajectory,
    ground_truth_features,
    visible_single_bounce,
)

__version__ = "0.1.0"
