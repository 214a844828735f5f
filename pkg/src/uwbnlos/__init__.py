"""NLOS-aware UWB localization: simulation, LOS classification and weighted multilateration."""

from .evaluation import cdf, compare_report, improvement, position_errors, summarize
from .features import (FeatureVector, RangingSample, compute_rssd, compute_window_std,
                       correlation_report, extract_features, spearman)
from .geometry import (Anchor, Environment, NoiseModel, Point2, Pose, Segment2, generate_trajectory,
                       is_los, segments_intersect, simulate_campaign, synthesize_measurement)
from .nn import (MlpModel, TrainConfig, ablate_inputs, evaluate, forward, init_model, load_model,
                 save_model, train)
from .wls import (PositionEstimate, SolverConfig, WlsProblem, grid_search_oracle, objective,
                  residuals_and_jacobian, solve, solve_trajectory, weights_from_probabilities)

__version__ = "0.1.0"
