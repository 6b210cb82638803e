"""Frequency-domain purification of unlabeled image data against backdoor triggers."""

__version__ = "0.1.0"

from .bounds import (
    RepetTriggerParams,
    SingleTriggerParams,
    lattice_count,
    p_defense,
    p_repet_lower,
    p_single_lower,
)
from .metrics import FidelityReport, batch_fidelity, psnr, ssim
from .purify import (
    Cutout,
    PurifyConfig,
    SmoothingFilter,
    Strategy,
    UPure,
    purify_dataset,
    purify_image,
)
from .rdp import GaussianSource, RdpPoint, rd_shannon, rdp_gaussian
from .spectral import dct2, idct2, zigzag
from .trigger import PatchTrigger, PoisonConfig, RepetitiveTrigger, poison_dataset

__all__ = [
    "Cutout",
    "FidelityReport",
    "GaussianSource",
    "PatchTrigger",
    "PoisonConfig",
    "PurifyConfig",
    "RdpPoint",
    "RepetTriggerParams",
    "RepetitiveTrigger",
    "SingleTriggerParams",
    "SmoothingFilter",
    "Strategy",
    "UPure",
    "batch_fidelity",
    "dct2",
    "idct2",
    "lattice_count",
    "p_defense",
    "p_repet_lower",
    "p_single_lower",
    "poison_dataset",
    "psnr",
    "purify_dataset",
    "purify_image",
    "rd_shannon",
    "rdp_gaussian",
    "ssim",
    "zigzag",
]
