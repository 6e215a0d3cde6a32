"""Entropy coding of quantized latents and hyperpriors."""

import struct
from bisect import bisect_right

import numpy as np

from ..exceptions import DecodeError, ShapeError
from .range_coder import RangeDecoder, RangeEncoder
from .tables import ESCAPE, MAX_RADIUS, FrequencyTables, gaussian_tables, mixture_tables

_CHUNK = 8192
_MAG_BITS = 6


def _encode_escape(enc, d, radius):
    enc.encode_bit(1 if d < 0 else 0)
    m = abs(d) - radius - 1
    n = (m + 1).bit_length() - 1
    enc.encode_uint(n, _MAG_BITS)
    enc.encode_uint((m + 1) - (1 << n), n)


def _decode_escape(dec, radius):
    neg = dec.decode_bit()
    n = dec.decode_uint(_MAG_BITS)
    m = (1 << n) + dec.decode_uint(n) - 1
    d = m + radius + 1
    return -d if neg else d


def _encode_symbols(enc, symbols, tables, index=None):
    cum_rows = tables.cumulative.tolist()
    centres = tables.centres.tolist()
    radius = tables.radius.tolist()
    ctx = range(len(symbols)) if index is None else index
    for s, j in zip(symbols, ctx):
        d = s - centres[j]
        r = radius[j]
        col = d + MAX_RADIUS if -r <= d <= r else ESCAPE
        row = cum_rows[j]
        enc.encode(row[col], row[col + 1] - row[col])
        if col == ESCAPE:
            _encode_escape(enc, d, r)


def _decode_symbols(dec, n, tables, index=None):
    cum_rows = tables.cumulative.tolist()
    centres = tables.centres.tolist()
    radius = tables.radius.tolist()
    out = []
    ctx = range(n) if index is None else index
    for _, j in zip(range(n), ctx):
        row = cum_rows[j]
        v = dec.target()
        col = bisect_right(row, v) - 1
        start, stop = row[col], row[col + 1]
        if stop == start:
            raise DecodeError("decoded a zero-frequency symbol")
        dec.consume(start, stop - start)
        if col == ESCAPE:
            out.append(centres[j] + _decode_escape(dec, radius[j]))
        else:
            out.append(centres[j] + col - MAX_RADIUS)
    return out


def _open(data, expected):
    if len(data) < 4:
        raise DecodeError("segment shorter than its header")
    (count,) = struct.unpack_from("<I", data)
    if count != expected:
        raise DecodeError(f"segment declares {count} symbols, model expects {expected}")
    return count


def encode_latent(y_bar, mu, sigma):
    """Code integers ``y_bar`` under per-element N(mu, sigma); returns bytes.

    Layout: u32 symbol count followed by the range-coder payload.
    """
    y = np.asarray(y_bar).reshape(-1).astype(np.int64)
    mu = np.asarray(mu, np.float64).reshape(-1)
    sigma = np.asarray(sigma, np.float64).reshape(-1)
    if not (len(y) == len(mu) == len(sigma)):
        raise ShapeError("y_bar, mu and sigma must have the same number of elements")
    header = struct.pack("<I", len(y))
    if len(y) == 0:
        return header
    enc = RangeEncoder()
    for s in range(0, len(y), _CHUNK):
        tables = gaussian_tables(mu[s:s + _CHUNK], sigma[s:s + _CHUNK])
        _encode_symbols(enc, y[s:s + _CHUNK].tolist(), tables)
    return header + enc.finish()


def decode_latent(data, mu, sigma):
    """Inverse of :func:`encode_latent`; returns an int64 array shaped like ``mu``."""
    shape = np.shape(mu)
    mu = np.asarray(mu, np.float64).reshape(-1)
    sigma = np.asarray(sigma, np.float64).reshape(-1)
    n = _open(data, len(mu))
    if n == 0:
        if len(data) != 4:
            raise DecodeError("trailing bytes after an empty segment")
        return np.zeros(shape, np.int64)
    dec = RangeDecoder(memoryview(data)[4:])
    out = []
    for s in range(0, n, _CHUNK):
        tables = gaussian_tables(mu[s:s + _CHUNK], sigma[s:s + _CHUNK])
        out.extend(_decode_symbols(dec, min(_CHUNK, n - s), tables))
    if dec.bytes_consumed != len(data) - 4:
        raise DecodeError("segment length does not match the coded payload")
    return np.asarray(out, np.int64).reshape(shape)


def hyper_tables(weights, means, scales):
    """Per-channel marginal tables from mixture parameters of shape (C, K)."""
    return mixture_tables(weights, means, scales)


def encode_hyper(z_bar, tables, *, embed_tables=False):
    """Code a quantized hyperprior of shape (C, h, w) with per-channel tables.

    With ``embed_tables`` the serialized tables are written ahead of the
    payload, so :func:`decode_hyper` needs no model.
    """
    z = np.asarray(z_bar).astype(np.int64)
    if z.ndim != 3 or z.shape[0] != len(tables):
        raise ShapeError(f"hyperprior shape {z.shape} does not match {len(tables)} channel tables")
    c, h, w = z.shape
    head = struct.pack("<BHHH", 1 if embed_tables else 0, c, h, w)
    if embed_tables:
        head += tables.tobytes()
    if z.size == 0:
        return head
    enc = RangeEncoder()
    index = np.repeat(np.arange(c), h * w).tolist()
    _encode_symbols(enc, z.reshape(-1).tolist(), tables, index)
    return head + enc.finish()


def decode_hyper(data, tables=None):
    """Inverse of :func:`encode_hyper`; returns an int64 (C, h, w) array."""
    try:
        embedded, c, h, w = struct.unpack_from("<BHHH", data)
    except struct.error as exc:
        raise DecodeError("hyperprior segment shorter than its header") from exc
    pos = 7
    if embedded:
        tables, used = FrequencyTables.frombytes(data, pos)
        pos += used
    elif tables is None:
        raise DecodeError("hyperprior segment carries no tables and none were supplied")
    if len(tables) != c:
        raise DecodeError(f"segment declares {c} channels, tables cover {len(tables)}")
    n = c * h * w
    if n == 0:
        return np.zeros((c, h, w), np.int64)
    payload = memoryview(data)[pos:]
    dec = RangeDecoder(payload)
    index = np.repeat(np.arange(c), h * w).tolist()
    out = _decode_symbols(dec, n, tables, index)
    if dec.bytes_consumed != len(payload):
        raise DecodeError("segment length does not match the coded payload")
    return np.asarray(out, np.int64).reshape(c, h, w)
