"""scorespde: score-error SPDE dynamics and quadratic-variation evaluation
of diffusion samplers on analytically tractable targets."""

from .errors import ConfigError, NumericalAbort
from .metrics import frechet_gaussian, sinkhorn_divergence, sinkhorn_w2, spearman
from .qwiener import SpectralNoiseSpec, sample_increment
from .ratio import RatioConfig, RatioModel, estimate_ratio, train_ratio
from .sampler import SampleBatch, ancestral_step, forward_perturb, sample_generated
from .schedule import (NoiseSchedule, forward_index, linear_beta_schedule,
                       reverse_coeffs, reverse_index, transition_coeffs)
from .scoremodel import (CorruptionSpec, ScoreModel, corrupt, exact_score,
                         load_score_checkpoint, save_score_checkpoint,
                         train_mlp_score)
from .siem import (LorentzParams, SiemReport, default_windows, evaluate_siem,
                   lorentz_grad_identity, lorentz_phi, phi_concentration_cv,
                   siem_score, smooth_bias, xi_dsm, xi_marginal)
from .spde import (EnergyTrace, Grid, GridDensity, dissipation, fpe_step,
                   gradlog_drift, kl_energy, mixture_density,
                   relative_flow_drift, run_energy_experiment, spde_step)
from .target import (GaussianMixture, conditional_score, diffuse,
                     diffused_marginal, log_density, single_gaussian, true_score)

__version__ = "0.1.0"
