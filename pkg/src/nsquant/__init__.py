"""Local linear quantile curves of locally stationary series, with SCB and ISDT tests."""
from nsquant.curves import EvalGrid, QuantileCurve, SeriesSample, fit_curve, jackknife_curve
from nsquant.kernels import EPANECHNIKOV, Kernel, constants, epanechnikov, second_order_kernel

__version__ = "0.1.0"

__all__ = [
    "EPANECHNIKOV", "EvalGrid", "Kernel", "QuantileCurve", "SeriesSample", "constants",
    "epanechnikov", "fit_curve", "jackknife_curve", "second_order_kernel", "__version__",
]
