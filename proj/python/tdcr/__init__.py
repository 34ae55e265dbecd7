"""TDCR beta-spectrum simulation and multi-task network bindings."""

from ._core import (
    ConfigError,
    Dataset,
    DetectorConfig,
    EvalReport,
    Model,
    ModelConfig,
    Nuclide,
    NumericalDivergence,
    Sample,
    TrainConfig,
    beta_spectrum,
    carbon14,
    coincidence_spectra,
    double_coincidence_pmf,
    double_coincidence_total,
    fermi_function,
    generate_dataset,
    r_squared,
    ssim,
    train,
    triple_coincidence_pmf,
    triple_coincidence_total,
    tritium,
)

__all__ = [name for name in dir() if not name.startswith("_")]
