"""Score-based stochastic learning dynamics and comparison systems."""
from .ensemble import (EnsembleResult, EnvelopeWatch, FirstPassage, Monitor, ScoreGapMax,
                       Snapshot, Trajectory, simulate_ensemble, simulate_path)
from .noise import NoiseError, NoiseModel, psd_factor, sample_noise_increment
from .rng import INITIAL, NOISE, PAYOFF_STREAM, run_generator
from .schedules import LearningSchedule, ScheduleError
from .streams import (ConstantStream, FunctionStream, PayoffStream, SquareWaveStream, StreamError,
                      stream_from_dict)
from .system import (DriftTerms, DynamicsError, LearningSystem, asrd_drift, best_response,
                     drift_terms, step_asrd, step_brd, step_srl, step_unilateral)
