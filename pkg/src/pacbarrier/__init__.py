"""Neural barrier certificates learned from sampled trajectories, with
compression-set risk bounds that cover unseen continuous-time trajectories."""

from .certificate import NeuralCertificate, linear_certificate
from .dynamics import (
    BoxRegion,
    RegionSpec,
    SampleBatch,
    SystemModel,
    four_dim_benchmark,
    generate_samples,
    get_system,
    integrate,
    integrate_batch,
    jet_engine,
    sample_initial_states,
    uniform_sample_times,
)
from .loss import GridSets, make_grids, state_loss, total_loss, traj_loss
from .pac import PacBound, assemble_guarantee, epsilon
from .synthesis import SynthesisConfig, SynthesisResult, algorithm1, algorithm2, replay_compression
from .validation import ValidationReport, check_proposition1, monte_carlo_validate

__version__ = "0.1.0"
