"""Deep belief networks as constructive density approximators.

Modules: ``densities`` (parental and target densities), ``metrics``
(quadrature distances and KL), ``smoothing`` (convolution and scale
selection), ``mixture`` (finite mixtures and their rates), ``rbm``
(exact binary RBMs and synthesis), ``dbn`` (assembly and the end-to-end
pipelines) and ``harness`` (CLI and experiments).
"""
from .densities import (ParentalDensity, ShiftedScaled, TargetDensity, counterexample_constant,
                        counterexample_constant_exact, counterexample_target, from_parent,
                        gaussian_mixture_target, gaussian_target, piecewise_constant_target,
                        truncated_exponential_target, uniform_target, upsilon, upsilon_printed)
from .errors import (ConfigError, ConvergenceError, DbnApproxError, DegenerateModelError, DimensionError,
                     DomainError, PreconditionError, ResourceError, SchemaError, UnsupportedError)
from .kernels import BACKEND
from .metrics import (DistanceReport, QuadratureSpec, integral, kl_divergence, kl_l2_bound_check, lq_distance,
                      lq_distance_mc, lq_norm, spec_for, sup_distance)
from .smoothing import SmoothedDensity, convolve, select_sigma, smoothing_error
from .mixture import MixtureModel, RateFit, fit_rate, greedy_refine, maurey_sample
from .rbm import (BinaryRBM, DiscreteDistribution, energy, partition_and_marginals, sample_hidden_pair,
                  synthesize)
from .dbn import (ApproximationCertificate, DeepBeliefNetwork, approximate_kl, approximate_lq, approximate_sup,
                  assemble, eval_visible, sample_visible)

__all__ = [
    "ParentalDensity",
    "ShiftedScaled",
    "TargetDensity",
    "counterexample_constant",
    "counterexample_constant_exact",
    "counterexample_target",
    "from_parent",
    "gaussian_mixture_target",
    "gaussian_target",
    "piecewise_constant_target",
    "truncated_exponential_target",
    "uniform_target",
    "upsilon",
    "upsilon_printed",
    "ConfigError",
    "ConvergenceError",
    "DbnApproxError",
    "DegenerateModelError",
    "DimensionError",
    "DomainError",
    "PreconditionError",
    "ResourceError",
    "SchemaError",
    "UnsupportedError",
    "BACKEND",
    "DistanceReport",
    "QuadratureSpec",
    "integral",
    "kl_divergence",
    "kl_l2_bound_check",
    "lq_distance",
    "lq_distance_mc",
    "lq_norm",
    "spec_for",
    "sup_distance",
    "SmoothedDensity",
    "convolve",
    "select_sigma",
    "smoothing_error",
    "MixtureModel",
    "RateFit",
    "fit_rate",
    "greedy_refine",
    "maurey_sample",
    "BinaryRBM",
    "DiscreteDistribution",
    "energy",
    "partition_and_marginals",
    "sample_hidden_pair",
    "synthesize",
    "ApproximationCertificate",
    "DeepBeliefNetwork",
    "approximate_kl",
    "approximate_lq",
    "approximate_sup",
    "assemble",
    "eval_visible",
    "sample_visible",
]

__version__ = "0.1.0"
