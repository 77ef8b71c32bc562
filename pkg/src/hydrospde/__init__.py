"""Pseudo-spectral solver and diagnostics for the stochastic hydrostatic Euler / Navier-Stokes system on T^2."""
from .dynamics import ConfigError, SimConfig, StabilityError, simulate, simulate_ensemble
from .fields import VelocityState, in_H, project_to_H, vertical_velocity
from .norms import RayleighError, dskappa_norm, ds_norm, hs_norm, rayleigh_monitor, weighted_hs_norm
from .spectral import SpectralField, forward_transform, inverse_transform
from .stochastic import NoiseModel, default_noise_model

__version__ = "0.1.0"
