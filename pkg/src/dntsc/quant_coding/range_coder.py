"""32-bit range coder with carry propagation and 16-bit frequency totals.

The encoder follows the LZMA scheme: ``low`` may temporarily exceed 32 bits
and the carry is pushed into a cached byte plus a run of pending 0xFF bytes.
The leading byte of an LZMA stream is always zero and is not emitted.
"""

from ..exceptions import DecodeError

PRECISION = 16
TOTAL = 1 << PRECISION
_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()
        self._first = True
        self._finished = False

    def encode(self, start, size):
        """Narrow the interval to [start, start + size) out of TOTAL."""
        if size <= 0 or start < 0 or start + size > TOTAL:
            raise ValueError(f"invalid frequency interval [{start}, {start + size})")
        r = self.range >> PRECISION
        self.low += r * start
        self.range = r * size
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def encode_bit(self, bit):
        half = TOTAL >> 1
        self.encode(half if bit else 0, half)

    def encode_uint(self, value, nbits):
        for i in reversed(range(nbits)):
            self.encode_bit((value >> i) & 1)

    def _emit(self, byte):
        if self._first:
            self._first = False
            assert byte == 0
            return
        self._out.append(byte)

    def _shift_low(self):
        if self.low < 0xFF000000 or self.low > _MASK32:
            carry = self.low >> 32
            temp = self._cache
            while True:
                self._emit((temp + carry) & 0xFF)
                temp = 0xFF
                self._cache_size -= 1
                if self._cache_size == 0:
                    break
            self._cache = (self.low >> 24) & 0xFF
        self._cache_size += 1
        self.low = (self.low & 0x00FFFFFF) << 8

    def finish(self):
        if not self._finished:
            for _ in range(5):
                self._shift_low()
            self._finished = True
        return bytes(self._out)


class RangeDecoder:
    def __init__(self, data):
        self._data = data
        self._pos = 0
        self.range = _MASK32
        self.code = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()
        self._r = 0

    def _next_byte(self):
        if self._pos >= len(self._data):
            raise DecodeError("range decoder read past the end of the segment")
        b = self._data[self._pos]
        self._pos += 1
        return b

    def target(self):
        """Cumulative-frequency value of the next symbol."""
        self._r = self.range >> PRECISION
        v = self.code // self._r
        if v >= TOTAL:
            raise DecodeError("range decoder state violation")
        return v

    def consume(self, start, size):
        self.code -= self._r * start
        self.range = self._r * size
        while self.range < _TOP:
            self.range <<= 8
            self.code = ((self.code << 8) | self._next_byte()) & _MASK32

    def decode_bit(self):
        half = TOTAL >> 1
        bit = 1 if self.target() >= half else 0
        self.consume(half if bit else 0, half)
        return bit

    def decode_uint(self, nbits):
        v = 0
        for _ in range(nbits):
            v = (v << 1) | self.decode_bit()
        return v

    @property
    def bytes_consumed(self):
        return self._pos
