"""Degradation modeling with Fourier priors and rectified flow.

Thin convenience layer over the compiled ``_degflow`` module: numpy images
in/out (float32 HWC in [0,1]), plus the training and synthesis entry points.
"""

from _degflow import (  # noqa: F401
    ConfigError,
    DataError,
    DivergenceError,
    FgdmModel,
    RfdmModel,
    __version__,
    amp_phase,
    center_crop,
    degradation_convergence_study,
    dtlr,
    euler_integrate,
    fft2,
    fgdm_train,
    generate_corpus,
    ifft2,
    load_image,
    make_flow_sample,
    psnr,
    randn,
    random_patch,
    resize,
    rfdm_train,
    rng_sequence,
    save_image,
    ssim,
    swap_amplitude,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DivergenceError",
    "FgdmModel",
    "RfdmModel",
    "__version__",
    "amp_phase",
    "center_crop",
    "degradation_convergence_study",
    "dtlr",
    "euler_integrate",
    "fft2",
    "fgdm_train",
    "generate_corpus",
    "ifft2",
    "load_image",
    "make_flow_sample",
    "psnr",
    "randn",
    "random_patch",
    "resize",
    "rfdm_train",
    "rng_sequence",
    "save_image",
    "ssim",
    "swap_amplitude",
]
