"""Partitioned-latent information bottleneck with an adversarial
Gaussian-correlation MI regulariser.

The heavy lifting lives in the compiled extension; this package re-exports
its surface.
"""

from ._core import (  # noqa: F401
    DivergenceError,
    Model,
    NotPositiveDefiniteError,
    __version__,
    cholesky,
    default_config,
    digamma,
    fit,
    gaussian_corr_mi,
    gaussian_mi_closed_form,
    gen_spiral,
    ksg_mi,
    load_csv,
    sample_correlation,
    save_csv,
)

__all__ = [
    "DivergenceError",
    "Model",
    "NotPositiveDefiniteError",
    "__version__",
    "cholesky",
    "default_config",
    "digamma",
    "fit",
    "gaussian_corr_mi",
    "gaussian_mi_closed_form",
    "gen_spiral",
    "ksg_mi",
    "load_csv",
    "sample_correlation",
    "save_csv",
]
