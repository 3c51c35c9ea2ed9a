"""blockwalk: lattice random walks whose moving coordinate block is keyed by
the visit count of the current site, with exact small-horizon oracles,
Monte Carlo estimators, and a reproducible experiment CLI."""

__version__ = "0.1.0"

from .errors import (BlockwalkError, ConfigurationError, CoordinateOverflowError,
                     InvariantError, ResourceLimitError, UnsupportedError)
from .lattice import Environment, Partition, Site, StepLaw
from .walk import (RunSummary, WalkState, WalkView, component_for_visit,
                   new_walk)
from .strategies import (AlwaysCoordinate, RoundRobin, Strategy,
                         UniformCoordinate, builtin_strategies, strategy_by_name)
from .enumeration import (ExactDistribution, exact_distribution,
                          exact_hit_window, exact_reconstruction_distribution,
                          exact_return_window)
from .estimators import (DecompositionTestResult, Estimate, RangeStats,
                         ReturnsSummary, ReturnWindowEstimate, ScalingFit,
                         ShapeRatioResult, StrategyScore,
                         counts_from_positions, decomposition_consistency_test,
                         estimate_range_stats, estimate_return_window,
                         estimate_returns_to_origin, estimate_shape_ratio,
                         evaluate_strategy, fit_scaling, mc_final_positions,
                         rank_strategies, wilson_interval)
from .srw import (HittingEstimate, LocalTimeProfile, MeanSummary,
                  SrwWindowEstimate, estimate_hitting_before_annulus,
                  estimate_max_local_time, estimate_return_window_srw,
                  estimate_returns_srw, estimate_tau_annulus, max_local_time,
                  range_size_srw, run_srw2d, sup_norm, tau_annulus)
from .streams import Stream, derive_key

__all__ = [name for name in dir() if not name.startswith("_")]
