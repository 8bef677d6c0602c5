"""Quadratic and radial shallow networks, radial wavelet frames and Gauss-Newton inversion."""

__version__ = "0.1.0"

from .activation import (ActivationProfile, DerivativeUnavailable, decay_constant,
                         eval_activation, gaussian_tail, heaviside, sigmoid, tabulated,
                         verify_decay)
from .approximation import (FrameExpansion, WaveletAtom, analyze_greedy, coefficient_l1,
                            greedy_n_term, l2_error, synthesize, to_rqnn)
from .fields import Grid, SampledField
from .inverse import LinearOperator, assemble_jacobian, forward_map, gauss_newton, pinv_step
from .networks import (ALNN, CUNN, DNN4, GQNN, MCNN, RQNN, SBQNN, eval_network, grad_dnn_w11,
                       grad_rqnn)
from .phantom import EllipseSpec, build_shepp_logan_gqnn, compare_fields, rasterize
from .wavelets import RadialKernelSystem, eval_psi, eval_S, lemma_constants

__all__ = [
    "ActivationProfile", "DerivativeUnavailable", "decay_constant", "eval_activation",
    "gaussian_tail", "heaviside", "sigmoid", "tabulated", "verify_decay",
    "FrameExpansion", "WaveletAtom", "analyze_greedy", "coefficient_l1", "greedy_n_term",
    "l2_error", "synthesize", "to_rqnn", "Grid", "SampledField", "LinearOperator",
    "assemble_jacobian", "forward_map", "gauss_newton", "pinv_step", "ALNN", "CUNN", "DNN4",
    "GQNN", "MCNN", "RQNN", "SBQNN", "eval_network", "grad_dnn_w11", "grad_rqnn",
    "EllipseSpec", "build_shepp_logan_gqnn", "compare_fields", "rasterize",
    "RadialKernelSystem", "eval_psi", "eval_S", "lemma_constants",
]
