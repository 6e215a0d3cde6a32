from dataclasses import asdict, dataclass, field

from ..exceptions import ConfigurationError


@dataclass(frozen=True)
class TransformConfig:
    """Widths and depths of the analysis/synthesis/hyper transforms.

    ``patch_size`` times the three stage merges must downsample by 16, so the
    only legal patch size is 2.
    """

    channels_per_stage: tuple = (128, 160, 192, 256)
    blocks_per_stage: tuple = (2, 2, 6, 2)
    heads_per_stage: tuple = (4, 8, 8, 8)
    patch_size: int = 2
    window_size: int = 4
    shift_size: int = 2
    mlp_ratio: float = 4.0
    hyper_channels: int = 128
    loc_width: int = 32
    seed: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("channels_per_stage", "blocks_per_stage", "heads_per_stage"):
            v = tuple(int(x) for x in getattr(self, name))
            if len(v) != 4 or min(v) < 1:
                raise ConfigurationError(f"{name} needs four positive integers, got {v}")
            object.__setattr__(self, name, v)
        for c, heads in zip(self.channels_per_stage, self.heads_per_stage):
            if c % heads:
                raise ConfigurationError(f"stage width {c} is not divisible by {heads} heads")
        if self.patch_size * 8 != 16:
            raise ConfigurationError("patch_size x 8 (three merges) must equal the downsampling factor 16")
        if self.window_size < 1 or not 0 <= self.shift_size < max(self.window_size, 1) + 1:
            raise ConfigurationError("window_size must be >= 1 and shift_size in [0, window_size]")
        if not 1 <= self.hyper_channels < self.latent_channels:
            raise ConfigurationError("hyper_channels must be positive and smaller than C4")

    @property
    def latent_channels(self):
        return self.channels_per_stage[-1]

    def to_dict(self):
        d = asdict(self)
        d.pop("extra")
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

    @classmethod
    def full(cls, seed=0):
        return cls(seed=seed)

    @classmethod
    def micro(cls, seed=0):
        """Smallest useful configuration: 16x32 images give a 1x2x8 latent."""
        return cls((8, 8, 8, 8), (1, 1, 1, 1), (2, 2, 2, 2), hyper_channels=4, loc_width=8, seed=seed)

    @classmethod
    def desk(cls, seed=0):
        """Workstation-scale configuration used for the directional experiments."""
        return cls((16, 24, 32, 48), (1, 1, 1, 1), (2, 2, 4, 4), hyper_channels=24, loc_width=16, seed=seed)
