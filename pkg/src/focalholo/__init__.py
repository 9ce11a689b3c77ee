"""Focal-surface holographic light transport.

Band-limited angular spectrum propagation, spatially adaptive convolution,
a learned focal-surface transport model, phase-only hologram optimization
and the dataset pipeline that feeds the model.
"""
from .loss import masked_l2_loss
from .metrics import psnr, ssim
from .optics import (ComplexField, OpticalConfig, PassCounter, PropagationKernel,
                     build_asm_kernel, intensity, phase_to_field, propagate,
                     reconstruct_volume)
from .sac import compose_sa_kernel, sac_backward, sac_forward, si_conv, sv_conv

__all__ = [
    "ComplexField", "OpticalConfig", "PassCounter", "PropagationKernel",
    "build_asm_kernel", "compose_sa_kernel", "intensity", "masked_l2_loss",
    "phase_to_field", "propagate", "psnr", "reconstruct_volume", "sac_backward",
    "sac_forward", "si_conv", "ssim", "sv_conv",
]

__version__ = "0.1.0"
