"""Regret, extinction, stability and time-average analysis of simulated runs."""
from .averaging import AveragingError, GrowthFit, TimeAverage, score_difference_growth, time_average
from .checks import CHECKS, CheckError, Verdict, get_check
from .extinction import (ExtinctionError, HittingTimes, estimate_hitting_time, exceedance_bound,
                         extinction_envelope, hitting_time_bound, initial_offset, noise_pair_scale)
from .regret import (LinearBoundWarning, RegretError, RegretSeries, cumulative_regret, regret_bound,
                     regret_bound_components, regret_from_integrals)
from .stability import (StabilityError, StabilityResult, neighbourhood_margin, stability_experiment,
                        stability_threshold)
from .stats import EnsembleSummary, loglog_slope, wilson_halfwidth, wilson_interval
