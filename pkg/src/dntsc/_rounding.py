import torch


def round_half_away(x):
    """Nearest integer with ties away from zero (torch.round rounds half to even)."""
    return torch.sign(x) * torch.floor(torch.abs(x) + 0.5)
