"""Balanced Hermitian products and Berezin-Toeplitz spectra on model Fano manifolds."""

__version__ = "0.1.0"

from .dynamics import (
    BasisState,
    IterationReport,
    donaldson_step,
    dmu_form,
    energy,
    gradient_flow,
    iterate,
    linearized_map,
    moment_map,
    psi,
    rate_estimate,
)
from .errors import BalancedMetricsError, InvalidInputError, NumericalError
from .geometry import (
    EvalTable,
    PolarizedModel,
    Quadrature,
    VolumeMap,
    build_model,
    eval_frame,
    liouville_density,
    make_quadrature,
    round_density,
    round_product,
    volume_density,
)
from .linalg import HermProduct, distance, geodesic, normalize_det
from .quantization import (
    ChannelOperator,
    berezin_symbol,
    channel,
    channel_spectrum,
    coherent_projector,
    kernel,
    rawnsley,
    toeplitz,
)

__all__ = [
    "BasisState", "IterationReport", "donaldson_step", "dmu_form", "energy", "gradient_flow",
    "iterate", "linearized_map", "moment_map", "psi", "rate_estimate",
    "BalancedMetricsError", "InvalidInputError", "NumericalError",
    "EvalTable", "PolarizedModel", "Quadrature", "VolumeMap", "build_model", "eval_frame",
    "liouville_density", "make_quadrature", "round_density", "round_product", "volume_density",
    "HermProduct", "distance", "geodesic", "normalize_det",
    "ChannelOperator", "berezin_symbol", "channel", "channel_spectrum", "coherent_projector",
    "kernel", "rawnsley", "toeplitz",
]
