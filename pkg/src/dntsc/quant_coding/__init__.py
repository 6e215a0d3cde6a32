from .bitstream import MAGIC, Bitstream
from .codec import decode_hyper, decode_latent, encode_hyper, encode_latent, hyper_tables
from .quantize import quantize, relax, uniform_noise
from .range_coder import RangeDecoder, RangeEncoder
from .tables import P_MIN, FrequencyTables, gaussian_tables, mixture_tables

__all__ = [
    "MAGIC", "Bitstream", "decode_hyper", "decode_latent", "encode_hyper", "encode_latent",
    "hyper_tables", "quantize", "relax", "uniform_noise", "RangeDecoder", "RangeEncoder",
    "P_MIN", "FrequencyTables", "gaussian_tables", "mixture_tables",
]
