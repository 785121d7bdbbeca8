"""Maximum-likelihood WPD convolutional beamforming with WPE, MPDR and metrics."""
from .errors import ConvBFError, DegenerateSteering, InvalidInput, NumericalFailure
from .kernels import BACKEND
from .stft import MultichannelSpectrogram, StftConfig, analyze, synthesize
from .steering import NoiseMask, estimate_steering, noise_mask_from_margins
from .wpd import (EnhancementResult, SteeringMode, WpdConfig, enhance, run,
                  run_cascade_wpe_mpdr, run_mpdr, run_wpe, solve_weights)

__version__ = "0.1.0"
