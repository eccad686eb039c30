"""Joint specification tests for quantile autoregressions with latent factors."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AlignmentError,
    LoadError,
    NumericError,
    ParameterError,
    QarSpecError,
    SingularDesignError,
    VarianceError,
)
from .panel import Panel, FactorModel, extract_factors, load_panel, select_num_factors  # noqa: F401
from .qar import RegressionFrame, QuantileFitPath, build_frame, fit_path, fit_quantile  # noqa: F401
from .spectest import WeightConfig, TestSurface, empirical_process, cvm_functional, ks_functional  # noqa: F401
from .bootstrap import BootstrapConfig, BootstrapResult, run_test  # noqa: F401
from .skewt import SkewTParams, QuantileTargets, fit_skewt, skewt_pdf, skewt_quantile  # noqa: F401
