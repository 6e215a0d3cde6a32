from .bivariate import bvn_cdf, bvn_upper, rectangle_prob
from .gaussian import (
    SIGMA_MIN,
    RateReport,
    discretized_entropy_bits,
    element_bits,
    expected_token_bits,
    latent_bin_pmf,
    latent_rate_bits,
    log_bin_mass,
    total_code_rate,
)
from .joint import (
    RHO_MAX,
    JointHyperModel,
    JointHyperParams,
    independent_bin_pmf,
    joint_hyper_bin_pmf,
    joint_hyper_bits,
    joint_hyper_entropy_bits,
    joint_hyper_pdf,
    marginal_bin_pmf,
    mmse_peer_estimate,
    quantized_hyper_bits,
)


def peer_rate_estimate(z_peer_star, peer_hyper_synthesis, latent_hw):
    """Expected per-token bits of the peer latent given an estimate of its hyperprior.

    ``peer_hyper_synthesis`` maps (z, latent_hw) to (mu, sigma); the result is
    only used as encoder-side context.
    """
    mu, sigma = peer_hyper_synthesis(z_peer_star, latent_hw)
    return expected_token_bits(mu, sigma)


__all__ = [
    "SIGMA_MIN", "RHO_MAX", "RateReport", "JointHyperModel", "JointHyperParams",
    "bvn_cdf", "bvn_upper", "rectangle_prob", "discretized_entropy_bits", "element_bits",
    "expected_token_bits", "latent_bin_pmf", "latent_rate_bits", "log_bin_mass",
    "total_code_rate", "independent_bin_pmf", "joint_hyper_bin_pmf", "joint_hyper_bits",
    "joint_hyper_entropy_bits", "joint_hyper_pdf", "marginal_bin_pmf", "mmse_peer_estimate",
    "quantized_hyper_bits", "peer_rate_estimate",
]
