"""Pairwise Gaussian-mixture density for the two users' hyperpriors.

Each element pair (z1^j, z2^j) is modelled by a K-component bivariate GMM.
The learnable module keeps one mixture per hyperprior channel and broadcasts
it over spatial positions; the functional API accepts any parameter tensors
that broadcast against the hyperprior values.
"""

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn
from torch.special import ndtr

from .._rounding import round_half_away
from ..exceptions import ParameterError
from .bivariate import rectangle_prob
from .gaussian import LN2

RHO_MAX = 0.999
SCALE_MIN = 1e-6
# numerical guard only: keeps log finite when a mass underflows
_TINY = {torch.float64: 1e-300, torch.float32: 1e-38}


@dataclass(frozen=True)
class JointHyperParams:
    """GMM parameters with trailing mixture axis.

    weights: (..., K); means: (..., K, 2); scales: (..., K, 2) standard
    deviations; rho: (..., K) correlations.
    """

    weights: torch.Tensor
    means: torch.Tensor
    scales: torch.Tensor
    rho: torch.Tensor

    def __post_init__(self):
        w = self.weights
        tol = 1e-9 if w.dtype == torch.float64 else 1e-5
        if torch.any(w < 0) or torch.any((w.sum(-1) - 1).abs() > tol):
            raise ParameterError("mixture weights must lie on the simplex")
        if torch.any(self.scales <= 0):
            raise ParameterError("component scales must be positive")
        if torch.any(self.rho.abs() > RHO_MAX + 1e-12):
            raise ParameterError(f"|rho| must not exceed {RHO_MAX}")

    @classmethod
    def from_covariances(cls, weights, means, covariances):
        """Build from full 2x2 covariances; validated through a Cholesky factorization."""
        weights, means, cov = (torch.as_tensor(x, dtype=torch.float64) if not torch.is_tensor(x) else x
                               for x in (weights, means, covariances))
        if not torch.allclose(cov, cov.transpose(-1, -2)):
            raise ParameterError("covariances must be symmetric")
        chol, info = torch.linalg.cholesky_ex(cov)
        if torch.any(info != 0):
            raise ParameterError("covariances must be positive definite")
        s1 = chol[..., 0, 0]
        s2 = torch.sqrt(chol[..., 1, 0] ** 2 + chol[..., 1, 1] ** 2)
        rho = torch.clamp(chol[..., 1, 0] / s2, -RHO_MAX, RHO_MAX)
        return cls(weights, means, torch.stack([s1, s2], -1), rho)

    @classmethod
    def standard(cls, rho=0.0, K=1, dtype=torch.float64):
        """K identical zero-mean unit-variance components with correlation ``rho``."""
        rho = max(-RHO_MAX, min(RHO_MAX, float(rho)))
        return cls(torch.full((K,), 1.0 / K, dtype=dtype), torch.zeros(K, 2, dtype=dtype),
                   torch.ones(K, 2, dtype=dtype), torch.full((K,), rho, dtype=dtype))

    @property
    def K(self):
        return self.weights.shape[-1]

    def covariances(self):
        s1, s2 = self.scales[..., 0], self.scales[..., 1]
        c = self.rho * s1 * s2
        return torch.stack([torch.stack([s1 * s1, c], -1), torch.stack([c, s2 * s2], -1)], -2)

    def swap(self):
        """Same model with the two users' roles exchanged."""
        return JointHyperParams(self.weights, self.means.flip(-1), self.scales.flip(-1), self.rho)


def _components(z1, z2, params):
    z1 = torch.as_tensor(z1, dtype=params.means.dtype)
    z2 = torch.as_tensor(z2, dtype=params.means.dtype)
    return z1[..., None], z2[..., None]


def joint_hyper_pdf(z1, z2, params):
    """Mixture density p(z1, z2)."""
    x1, x2 = _components(z1, z2, params)
    m1, m2 = params.means[..., 0], params.means[..., 1]
    s1, s2 = params.scales[..., 0], params.scales[..., 1]
    r = params.rho
    u1, u2 = (x1 - m1) / s1, (x2 - m2) / s2
    one_m = 1.0 - r * r
    q = (u1 * u1 - 2 * r * u1 * u2 + u2 * u2) / one_m
    dens = torch.exp(-0.5 * q) / (2 * math.pi * s1 * s2 * torch.sqrt(one_m))
    return (params.weights * dens).sum(-1)


def joint_hyper_bin_pmf(t1, t2, params):
    """Mass of the unit square centred on (t1, t2).

    For integer centres this is the PMF of the quantized pair; for real
    centres it is the density convolved with a bivariate uniform.
    """
    x1, x2 = _components(t1, t2, params)
    m1, m2 = params.means[..., 0], params.means[..., 1]
    s1, s2 = params.scales[..., 0], params.scales[..., 1]
    a1, b1 = (x1 - 0.5 - m1) / s1, (x1 + 0.5 - m1) / s1
    a2, b2 = (x2 - 0.5 - m2) / s2, (x2 + 0.5 - m2) / s2
    p = rectangle_prob(a1, b1, a2, b2, params.rho)
    return (params.weights * torch.clamp(p, min=0.0)).sum(-1)


def marginal_bin_pmf(t, params, user=1):
    """Mass of [t - 1/2, t + 1/2] under one user's marginal mixture."""
    i = user - 1
    x = torch.as_tensor(t, dtype=params.means.dtype)[..., None]
    m, s = params.means[..., i], params.scales[..., i]
    v = (x - m)
    # reflect to the lower tail for precision
    v = torch.where(v > 0, -v, v)
    p = ndtr((v + 0.5) / s) - ndtr((v - 0.5) / s)
    return (params.weights * p).sum(-1)


def independent_bin_pmf(t1, t2, params):
    """Product of the two marginal masses; the independence-constrained ablation."""
    return marginal_bin_pmf(t1, params, 1) * marginal_bin_pmf(t2, params, 2)


def _log2_guarded(p):
    return -torch.log(torch.clamp(p, min=_TINY.get(p.dtype, 1e-38))) / LN2


def joint_hyper_bits(z1, z2, params, *, independent=False):
    """Elementwise -log2 of the (joint or independent) square mass."""
    p = independent_bin_pmf(z1, z2, params) if independent else joint_hyper_bin_pmf(z1, z2, params)
    return _log2_guarded(p)


def joint_hyper_entropy_bits(z1_hat, z2_hat, params, *, independent=False):
    """Sample code length -sum_j log2 P(z1_hat^j, z2_hat^j)."""
    return joint_hyper_bits(z1_hat, z2_hat, params, independent=independent).sum()


def mmse_peer_estimate(z_own, params, *, own_user=1):
    """E[z_peer | z_own] under the mixture, elementwise.

    Each component contributes its Gaussian conditional mean, weighted by its
    posterior responsibility for the observed value.
    """
    if own_user == 2:
        params = params.swap()
    x = torch.as_tensor(z_own, dtype=params.means.dtype)[..., None]
    m1, m2 = params.means[..., 0], params.means[..., 1]
    s1, s2 = params.scales[..., 0], params.scales[..., 1]
    cond = m2 + params.rho * (s2 / s1) * (x - m1)
    logw = torch.log(torch.clamp(params.weights, min=1e-300)) - 0.5 * ((x - m1) / s1) ** 2 - torch.log(s1)
    resp = torch.softmax(logw, dim=-1)
    return (resp * cond).sum(-1)


class JointHyperModel(nn.Module):
    """Learnable per-channel bivariate GMM over (z1, z2).

    Covariances are parameterized by a lower Cholesky factor with softplus
    diagonal; the implied correlation is clamped to |rho| <= 0.999. With
    ``independent=True`` the off-diagonal factor is frozen at zero and rates
    are computed as products of marginals.
    """

    def __init__(self, channels, K=1, independent=False, init_scale=2.0):
        super().__init__()
        self.channels = channels
        self.K = K
        self.independent = independent
        self.logits = nn.Parameter(torch.zeros(channels, K))
        spread = torch.linspace(-1.0, 1.0, K) if K > 1 else torch.zeros(1)
        self.means = nn.Parameter(spread[None, :, None].repeat(channels, 1, 2).clone())
        raw = math.log(math.expm1(init_scale))
        self.diag_raw = nn.Parameter(torch.full((channels, K, 2), raw))
        self.offdiag = nn.Parameter(torch.zeros(channels, K), requires_grad=not independent)

    def params(self, ndim=4):
        """Parameters broadcastable against hyperprior tensors of shape (N, C, h, w)."""
        l11 = F.softplus(self.diag_raw[..., 0]) + SCALE_MIN
        l22 = F.softplus(self.diag_raw[..., 1]) + SCALE_MIN
        l21 = torch.zeros_like(self.offdiag) if self.independent else self.offdiag
        s2 = torch.sqrt(l21 * l21 + l22 * l22)
        rho = torch.clamp(l21 / s2, -RHO_MAX, RHO_MAX)
        shape = (1, self.channels) + (1,) * (ndim - 2)
        weights = torch.softmax(self.logits, -1)
        return JointHyperParams(
            weights.reshape(*shape, self.K),
            self.means.reshape(*shape, self.K, 2),
            torch.stack([l11, s2], -1).reshape(*shape, self.K, 2),
            rho.reshape(*shape, self.K),
        )

    def bits(self, z1, z2):
        """Elementwise bits for a pair of (relaxed or quantized) hyperpriors."""
        return joint_hyper_bits(z1, z2, self.params(z1.ndim), independent=self.independent)

    def forward(self, z1, z2):
        return self.bits(z1, z2).sum()

    def peer_estimate(self, z_own, own_user=1):
        return mmse_peer_estimate(z_own, self.params(z_own.ndim), own_user=own_user)

    def marginal_pmf(self, t, user):
        return marginal_bin_pmf(t, self.params(t.ndim), user)


def quantized_hyper_bits(model, z1, z2):
    """Inference-time joint entropy bits at the rounded hyperpriors."""
    return model(round_half_away(z1), round_half_away(z2))
