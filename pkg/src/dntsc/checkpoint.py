"""Single-file parameter archive.

Layout::

    b"DNTX1\\n" | u32 header length | UTF-8 JSON header | raw tensor bytes

The JSON header holds ``config``, free-form ``meta`` and a ``tensors`` index
of (name, dtype, shape, offset, nbytes); tensor bytes are little-endian and
stored in index order. Output is byte-for-byte reproducible.
"""

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .exceptions import CheckpointError

MAGIC = b"DNTX1\n"
_DTYPES = {"float32": torch.float32, "float64": torch.float64, "int64": torch.int64,
           "int32": torch.int32, "bool": torch.bool}


def dumps(tensors, config, meta=None):
    index, blobs, offset = [], [], 0
    for name in tensors:
        t = tensors[name].detach().cpu().contiguous()
        dtype = str(t.dtype).replace("torch.", "")
        if dtype not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {dtype} for {name}")
        raw = t.numpy().astype(t.numpy().dtype.newbyteorder("<"), copy=False).tobytes()
        index.append({"name": name, "dtype": dtype, "shape": list(t.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"config": config, "meta": meta or {}, "tensors": index}, sort_keys=True).encode()
    return MAGIC + struct.pack("<I", len(header)) + header + b"".join(blobs)


def loads(data):
    """Return (tensors, config, meta)."""
    if not data.startswith(MAGIC):
        raise CheckpointError("not a DNTX1 checkpoint")
    try:
        (hlen,) = struct.unpack_from("<I", data, len(MAGIC))
        start = len(MAGIC) + 4
        header = json.loads(data[start:start + hlen].decode())
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    base = start + hlen
    tensors = {}
    for entry in header["tensors"]:
        lo = base + entry["offset"]
        raw = data[lo:lo + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise CheckpointError(f"truncated tensor {entry['name']}")
        np_dtype = np.dtype(entry["dtype"] if entry["dtype"] != "bool" else "?").newbyteorder("<")
        arr = np.frombuffer(raw, dtype=np_dtype).reshape(entry["shape"]).astype(np_dtype.newbyteorder("="))
        tensors[entry["name"]] = torch.from_numpy(arr.copy())
    return tensors, header["config"], header["meta"]


def save(path, tensors, config, meta=None):
    Path(path).write_bytes(dumps(tensors, config, meta))


def load(path):
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return loads(path.read_bytes())
