"""Text prior enhancement: noise schedule, MLP denoiser, samplers and objective."""

from pean.tpem.denoiser import DenoiserBlock, DenoiserMLP, denoise, timestep_embedding
from pean.tpem.loss import denoiser_training_terms, diffusion_loss, diffusion_terms
from pean.tpem.sampling import ddim_sample, ddpm_sample, regress, sample_prior
from pean.tpem.schedule import NoiseSchedule, make_schedule, q_sample, q_sample_batch

__all__ = [
    "DenoiserBlock",
    "DenoiserMLP",
    "NoiseSchedule",
    "ddim_sample",
    "ddpm_sample",
    "denoise",
    "denoiser_training_terms",
    "diffusion_loss",
    "diffusion_terms",
    "make_schedule",
    "q_sample",
    "q_sample_batch",
    "regress",
    "sample_prior",
    "timestep_embedding",
]
