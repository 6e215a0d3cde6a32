"""Quantized 16-bit frequency tables for the range coder.

A table covers integer offsets ``centre + d`` for |d| <= radius (radius at
most 64) plus one escape symbol for everything further out. Every codable
symbol receives at least one count, i.e. the PMF floor is 2**-16.
"""

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from ..exceptions import DecodeError
from .range_coder import TOTAL

MAX_RADIUS = 64
WIDTH = 2 * MAX_RADIUS + 1
ESCAPE = WIDTH
TAIL_SIGMAS = 8.0
P_MIN = 1.0 / TOTAL


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _offsets():
    return np.arange(-MAX_RADIUS, MAX_RADIUS + 1, dtype=np.float64)


@dataclass
class FrequencyTables:
    """One table per coding context.

    centres: (n,) int64; radius: (n,) int64; freq: (n, WIDTH + 1) int64 with
    zeros outside the radius and the escape count in the last column.
    """

    centres: np.ndarray
    radius: np.ndarray
    freq: np.ndarray

    def __len__(self):
        return len(self.centres)

    @property
    def cumulative(self):
        cum = np.zeros((len(self), WIDTH + 2), dtype=np.int64)
        np.cumsum(self.freq, axis=1, out=cum[:, 1:])
        return cum

    @classmethod
    def from_probs(cls, centres, radius, probs):
        """Quantize probabilities over the offset grid (n, WIDTH) to counts summing to 2**16."""
        n = len(centres)
        d = np.abs(_offsets())[None, :]
        valid = d <= radius[:, None]
        p = np.where(valid, probs, 0.0)
        esc = np.clip(1.0 - p.sum(1), 0.0, None)
        full = np.concatenate([p, esc[:, None]], axis=1)
        full /= full.sum(1, keepdims=True)
        mask = np.concatenate([valid, np.ones((n, 1), bool)], axis=1)
        n_sym = mask.sum(1)
        budget = (TOTAL - n_sym)[:, None]
        freq = np.where(mask, 1 + np.floor(full * budget).astype(np.int64), 0)
        short = TOTAL - freq.sum(1)
        top = np.argmax(np.where(mask, full, -1.0), axis=1)
        freq[np.arange(n), top] += short
        return cls(centres.astype(np.int64), radius.astype(np.int64), freq)

    def tobytes(self):
        """Export: per context centre (i32), radius (u8) and the codable counts (u16).

        A count of 2**16 cannot occur because every table holds at least the
        escape symbol and one offset.
        """
        out = bytearray(struct.pack("<I", len(self)))
        for c, r, f in zip(self.centres, self.radius, self.freq):
            out += struct.pack("<iB", int(c), int(r))
            lo, hi = MAX_RADIUS - r, MAX_RADIUS + r + 1
            counts = np.concatenate([f[lo:hi], f[ESCAPE:]]).astype("<u2")
            out += counts.tobytes()
        return bytes(out)

    @classmethod
    def frombytes(cls, data, offset=0):
        """Inverse of :meth:`tobytes`; returns (tables, bytes_read)."""
        try:
            (n,) = struct.unpack_from("<I", data, offset)
            pos = offset + 4
            centres = np.zeros(n, np.int64)
            radius = np.zeros(n, np.int64)
            freq = np.zeros((n, WIDTH + 1), np.int64)
            for i in range(n):
                c, r = struct.unpack_from("<iB", data, pos)
                pos += 5
                if r > MAX_RADIUS:
                    raise DecodeError("table radius out of range")
                counts = np.frombuffer(data, dtype="<u2", count=2 * r + 2, offset=pos)
                pos += 2 * (2 * r + 2)
                centres[i], radius[i] = c, r
                freq[i, MAX_RADIUS - r:MAX_RADIUS + r + 1] = counts[:-1]
                freq[i, ESCAPE] = counts[-1]
        except (struct.error, ValueError) as exc:
            raise DecodeError(f"truncated frequency tables: {exc}") from exc
        if n and np.any(freq.sum(1) != TOTAL):
            raise DecodeError("frequency table does not sum to 2**16")
        return cls(centres, radius, freq), pos - offset


def _gaussian_bin_probs(values, mu, sigma):
    v = np.abs(values - mu)
    return ndtr((0.5 - v) / sigma) - ndtr((-0.5 - v) / sigma)


def _radius(spread):
    r = np.ceil(spread) + 1
    return np.clip(r, 1, MAX_RADIUS).astype(np.int64)


def gaussian_tables(mu, sigma):
    """Tables for elements modelled as N(mu, sigma) quantized to integers."""
    mu = np.asarray(mu, np.float64).reshape(-1)
    sigma = np.asarray(sigma, np.float64).reshape(-1)
    centres = _round_half_away(mu)
    radius = _radius(TAIL_SIGMAS * sigma)
    values = centres[:, None] + _offsets()[None, :]
    probs = _gaussian_bin_probs(values, mu[:, None], sigma[:, None])
    return FrequencyTables.from_probs(centres, radius, probs)


def mixture_tables(weights, means, scales):
    """Tables for univariate Gaussian mixtures, one per row (rows x K inputs)."""
    weights = np.asarray(weights, np.float64)
    means = np.asarray(means, np.float64)
    scales = np.asarray(scales, np.float64)
    centres = _round_half_away((weights * means).sum(1))
    spread = TAIL_SIGMAS * scales.max(1) + np.abs(means - centres[:, None]).max(1)
    radius = _radius(spread)
    values = centres[:, None] + _offsets()[None, :]
    probs = np.zeros_like(values)
    for k in range(weights.shape[1]):
        probs += weights[:, k:k + 1] * _gaussian_bin_probs(values, means[:, k:k + 1], scales[:, k:k + 1])
    return FrequencyTables.from_probs(centres, radius, probs)
