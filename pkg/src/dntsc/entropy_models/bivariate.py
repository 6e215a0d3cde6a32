"""Differentiable bivariate normal CDF (Drezner & Wesolowsky / Genz BVND).

All functions broadcast over their tensor arguments and keep the autograd
graph, so rectangle probabilities can sit inside a training loss.
"""

import math

import torch
from torch.special import ndtr

_GL_W = (
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
    0.1527533871307259,
)
_GL_X = (
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
    0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
    0.07652652113349733,
)
_TWO_PI = 2.0 * math.pi
# above this |rho| the asin substitution loses accuracy; switch to the
# Drezner-Wesolowsky expansion around rho = +-1
_HIGH_CORR = 0.925


def _nodes(ref):
    w = torch.tensor(_GL_W, dtype=ref.dtype, device=ref.device)
    x = torch.tensor(_GL_X, dtype=ref.dtype, device=ref.device)
    return torch.cat([w, w]), torch.cat([1.0 - x, 1.0 + x])


def bvn_upper(h, k, rho):
    """P(X > h, Y > k) for a standard bivariate normal with correlation ``rho``.

    ``rho`` must satisfy |rho| < 1. Absolute accuracy is about 1e-15 in float64.
    """
    h, k, rho = torch.broadcast_tensors(*_as_tensors(h, k, rho))
    w, x = _nodes(h)
    hk = h * k
    low = rho.abs() < _HIGH_CORR

    # moderate correlation: integrate over asin(rho)
    r_a = torch.where(low, rho, torch.zeros_like(rho))
    asr = 0.5 * torch.asin(r_a)
    hs = 0.5 * (h * h + k * k)
    sn = torch.sin(asr[..., None] * x)
    integrand = torch.exp((sn * hk[..., None] - hs[..., None]) / (1.0 - sn * sn))
    bvn_low = (integrand * w).sum(-1) * asr / _TWO_PI + ndtr(-h) * ndtr(-k)

    # high correlation
    r_b = torch.where(low, torch.full_like(rho, 0.95), rho)
    neg = r_b < 0
    kb = torch.where(neg, -k, k)
    hkb = torch.where(neg, -hk, hk)
    ass = 1.0 - r_b * r_b
    a = torch.sqrt(ass)
    bs = (h - kb) ** 2
    c = (4.0 - hkb) / 8.0
    d = (12.0 - hkb) / 80.0
    asr_b = -0.5 * (bs / ass + hkb)
    t1 = a * torch.exp(torch.clamp(asr_b, min=-100.0)) * (
        1.0 - c * (bs - ass) * (1.0 - d * bs) / 3.0 + c * d * ass * ass
    )
    bvn = torch.where(asr_b > -100.0, t1, torch.zeros_like(t1))
    pos_bs = bs > 0
    b = torch.sqrt(torch.where(pos_bs, bs, torch.ones_like(bs)))
    b = torch.where(pos_bs, b, torch.zeros_like(b))
    sp = math.sqrt(_TWO_PI) * ndtr(-b / a)
    t2 = torch.exp(-0.5 * torch.clamp(hkb, min=-100.0)) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
    bvn = bvn - torch.where(hkb > -100.0, t2, torch.zeros_like(t2))
    half_a = 0.5 * a
    xs = (half_a[..., None] * x) ** 2
    asr_x = -0.5 * (bs[..., None] / xs + hkb[..., None])
    keep = asr_x > -100.0
    spx = 1.0 + c[..., None] * xs * (1.0 + 5.0 * d[..., None] * xs)
    rs = torch.sqrt(1.0 - xs)
    ep = torch.exp(-0.5 * hkb[..., None] * xs / (1.0 + rs) ** 2) / rs
    terms = torch.exp(torch.clamp(asr_x, min=-100.0)) * (spx - ep)
    terms = torch.where(keep, terms, torch.zeros_like(terms))
    bvn = (half_a * (terms * w).sum(-1) - bvn) / _TWO_PI
    pos_branch = bvn + ndtr(-torch.maximum(h, kb))
    lower = torch.where(h < 0, ndtr(kb) - ndtr(h), ndtr(-h) - ndtr(-kb))
    neg_branch = torch.where(h >= kb, -bvn, lower - bvn)
    bvn_high = torch.where(r_b > 0, pos_branch, neg_branch)

    return torch.where(low, bvn_low, bvn_high)


def bvn_cdf(a, b, rho):
    """P(X < a, Y < b) for a standard bivariate normal with correlation ``rho``."""
    a, b, rho = _as_tensors(a, b, rho)
    return bvn_upper(-a, -b, rho)


def rectangle_prob(a1, b1, a2, b2, rho):
    """P(a1 < X < b1, a2 < Y < b2) for standardized bounds.

    The rectangle is first reflected into the lower-left quadrant so that the
    four CDF terms are small and the inclusion-exclusion sum loses less
    precision when the rectangle sits in a tail.
    """
    a1, b1, a2, b2, rho = torch.broadcast_tensors(*_as_tensors(a1, b1, a2, b2, rho))
    flip1 = (a1 + b1) > 0
    flip2 = (a2 + b2) > 0
    a1, b1 = torch.where(flip1, -b1, a1), torch.where(flip1, -a1, b1)
    a2, b2 = torch.where(flip2, -b2, a2), torch.where(flip2, -a2, b2)
    rho = torch.where(flip1 ^ flip2, -rho, rho)
    p = bvn_cdf(b1, b2, rho) - bvn_cdf(a1, b2, rho) - bvn_cdf(b1, a2, rho) + bvn_cdf(a1, a2, rho)
    return p


def _as_tensors(*xs):
    ref = next((x for x in xs if torch.is_tensor(x)), None)
    dtype = ref.dtype if ref is not None and ref.is_floating_point() else torch.float64
    device = ref.device if ref is not None else None
    return [torch.as_tensor(x, dtype=dtype, device=device) for x in xs]
