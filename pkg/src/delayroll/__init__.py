"""Time-delayed dynamic mode decomposition and a single-layer transformer
for autoregressive forecasting of dynamical systems."""

from ._version import __version__
from .data import (
    BurstDataset,
    HypercubeScaler,
    Normalizer,
    Trajectory,
    denormalize,
    denormalize_trajectory,
    fit_normalizer,
    normalize,
    normalize_trajectory,
    read_trajectory_csv,
    sample_bursts,
    subsample,
    write_trajectory_csv,
)
from .exceptions import DivergenceError, NumericalError, ParseError
from .generators import (
    POD,
    LorenzConfig,
    PODBasis,
    ReactionDiffusionConfig,
    compute_pod,
    gen_lorenz,
    gen_sinusoid,
    project_component,
    solve_reaction_diffusion,
)
from .metrics import MetricsReport, evaluate, lobe_switches, peak_stats, rmse
from .tddmd import TDDMD, TDDMDModel, fit_tddmd, load_tddmd, rollout_tddmd, save_tddmd
from .tdtf import (
    TDTF,
    TDTFConfig,
    TDTFParams,
    TrainConfig,
    forward,
    init_params,
    load_tdtf,
    rollout_tdtf,
    save_tdtf,
    train,
)

__all__ = [
    "__version__",
    "BurstDataset",
    "HypercubeScaler",
    "Normalizer",
    "Trajectory",
    "denormalize",
    "denormalize_trajectory",
    "fit_normalizer",
    "normalize",
    "normalize_trajectory",
    "read_trajectory_csv",
    "sample_bursts",
    "subsample",
    "write_trajectory_csv",
    "DivergenceError",
    "NumericalError",
    "ParseError",
    "POD",
    "LorenzConfig",
    "PODBasis",
    "ReactionDiffusionConfig",
    "compute_pod",
    "gen_lorenz",
    "gen_sinusoid",
    "project_component",
    "solve_reaction_diffusion",
    "MetricsReport",
    "evaluate",
    "lobe_switches",
    "peak_stats",
    "rmse",
    "TDDMD",
    "TDDMDModel",
    "fit_tddmd",
    "load_tddmd",
    "rollout_tddmd",
    "save_tddmd",
    "TDTF",
    "TDTFConfig",
    "TDTFParams",
    "TrainConfig",
    "forward",
    "init_params",
    "load_tdtf",
    "rollout_tdtf",
    "save_tdtf",
    "train",
]
