"""Ensemble statistics of integrable twist maps.

Monte Carlo engines for deterministic and angle-perturbed iteration,
a Fourier-mode spectral oracle for the same expectations, and the
estimators that compare the two.
"""

from .config import ExperimentConfig, load_config, load_preset, preset_names
from .dynamics import (AR1Noise, BrownianNoise, CustomProcess,
                       IIDIncrementNoise, NoNoise, ResonantCounterexample,
                       characteristic_sequence, iid_normal, iid_uniform,
                       resonant_counterexample, sample_noise_path)
from .engine import (CLTAccumulation, SnapshotResult, clt_accumulate,
                     ensemble_snapshots, replica_matrix)
from .errors import (DegeneratePointError, DomainError, NumericalGateError,
                     TwistensError, UnsupportedError, UsageError)
from .oracle import (SpectralTable, build_spectral_table, cesaro_average,
                     cesaro_ladder, cesaro_series, limit_value, mean_series,
                     oracle_avg_lag_covariance, oracle_covariance,
                     oracle_mean_brownian, oracle_mean_deterministic,
                     oracle_mean_general)
from .phase import (ActionAngleState, FrequencyModel, NonresonanceReport,
                    Observable, action_angle_to_canonical, action_cosine,
                    canonical_to_action_angle, check_nonresonance,
                    complex_position, rotation_angle, wrap_angle)
from .sampling import (CustomDensity, GaussianPhaseSpace, SeedPlan,
                       UniformBandCosine, density_mass, density_value,
                       rho_fourier_coeff, sample_initial)
from .stats import (CLTReport, CovarianceReport, DecayFit, KSReport,
                    LindebergReport, clt_report, estimate_lag_covariances,
                    fit_decay, ks_normality_test, lindeberg_diagnostic,
                    lindeberg_sums, mean_z_scores, rolling_max_envelope)

__version__ = "0.1.0"
