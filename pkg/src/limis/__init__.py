"""Langevin incremental mixture importance sampling and its baselines."""

from .gaussflow import FlowConfig, GaussianMoments, flow_to_t1, pess, select_step_size
from .mixture import ImportanceMixture, StudentTComponent, WeightedSampleSet
from .samplers import (SamplerConfig, SamplerRunResult, make_rng, run_limis, run_mala, run_nimis,
                       run_plain_is)
from .targets import (GaussianTarget, LogisticPosteriorTarget, MixtureTarget,
                      WarpedGaussianComponent, warped_mixture_target)

__version__ = "0.1.0"
