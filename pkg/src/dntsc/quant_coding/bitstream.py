"""Container for one user's D-NTSC bitstream.

Layout (little-endian)::

    magic "DNTC" | version u8 | user u8 | H u16 | W u16
    latent h,w,C u16 x3 | hyper h,w,C u16 x3
    z_len u32 | y_len u32 | crc32(z||y) u32
    z segment | y segment
"""

import struct
import zlib
from dataclasses import dataclass

from ..exceptions import DecodeError

MAGIC = b"DNTC"
VERSION = 1
_HEADER = struct.Struct("<4sBBHHHHHHHHIII")


@dataclass(frozen=True)
class Bitstream:
    user: int
    image_hw: tuple
    latent_shape: tuple  # (h, w, C)
    hyper_shape: tuple  # (h, w, C)
    z_segment: bytes
    y_segment: bytes

    def tobytes(self):
        payload = self.z_segment + self.y_segment
        head = _HEADER.pack(
            MAGIC, VERSION, self.user, *self.image_hw, *self.latent_shape, *self.hyper_shape,
            len(self.z_segment), len(self.y_segment), zlib.crc32(payload),
        )
        return head + payload

    def __len__(self):
        return _HEADER.size + len(self.z_segment) + len(self.y_segment)

    @property
    def header_bytes(self):
        return _HEADER.size

    @classmethod
    def frombytes(cls, data):
        data = bytes(data)
        if len(data) < _HEADER.size:
            raise DecodeError("bitstream shorter than its header")
        (magic, version, user, H, W, h, w, c, hz, wz, cz, zl, yl, crc) = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise DecodeError(f"bad magic {magic!r}")
        if version != VERSION:
            raise DecodeError(f"unsupported bitstream version {version}")
        payload = data[_HEADER.size:]
        if len(payload) != zl + yl:
            raise DecodeError(f"declared segment lengths {zl}+{yl} do not match payload of {len(payload)} bytes")
        if zlib.crc32(payload) != crc:
            raise DecodeError("payload checksum mismatch")
        return cls(user, (H, W), (h, w, c), (hz, wz, cz), payload[:zl], payload[zl:])
