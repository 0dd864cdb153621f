"""Radiance fields supervised by spike-camera streams.

Subpackages and modules:

``stream``    bit-packed spike streams and the .spk / .spm formats
``sim``       integrate-and-fire camera simulator and two-scene calibration
``recon``     TFI / TFP intensity reconstruction
``snn``       differentiable integrate-and-fire layer used by the loss
``field``     positional encoding, MLP, volume rendering, rays
``trainer``   optimisation, rendering and evaluation
``scenegen``  analytic scenes and on-disk datasets
``metrics``   PSNR / SSIM
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .metrics import psnr, ssim
from .recon import long_term_rate, tfi, tfp
from .sim import (
    CalibrationRecord,
    NonuniformityMap,
    ResetMode,
    SpikeCameraModel,
    calibrate,
    calibrate_dark_current,
    calibrate_nonuniformity,
    firing_rate_expectation,
    preset_model,
    simulate_stream,
)
from .snn import IFLayerConfig, count_gradient, if_backward, if_forward, spike_render_loss
from .stream import SpikeStream, read_spk, read_spm, slice_window, spike_count, write_spk, write_spm
