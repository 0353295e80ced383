from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

VARIANTS = ("pasta-i", "pasta-u")
SAMPLINGS = ("dwt", "pixel_unshuffle", "strided_conv")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``stl_per_stage`` and ``heads_per_stage`` list the wavelet stages from
    coarsest to finest, followed by the full-resolution stage; ``reduction``
    covers the wavelet stages only. Depths other than ``K = 3`` reuse the
    last wavelet-stage entry.
    """

    C: int = 16
    stl_per_stage: tuple = (6, 6, 6, 6)
    heads_per_stage: tuple = (4, 4, 4, 4)
    reduction: tuple = (4, 4, 4)
    mlp_ratio: float = 2.0
    window: int = 8
    K: int = 3
    variant: str = "pasta-i"
    tiny: bool = False
    sampling: str = "dwt"

    def __post_init__(self):
        for name in ("stl_per_stage", "heads_per_stage", "reduction"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.sampling not in SAMPLINGS:
            raise ValueError(f"sampling must be one of {SAMPLINGS}, got {self.sampling!r}")
        if len(self.stl_per_stage) != 4 or len(self.heads_per_stage) != 4:
            raise ValueError("stl_per_stage and heads_per_stage need 4 entries")
        if len(self.reduction) != 3:
            raise ValueError("reduction needs 3 entries")
        if self.C < 1 or self.K < 1 or self.window < 1 or self.mlp_ratio <= 0:
            raise ValueError("C, K, window and mlp_ratio must be positive")
        wide, narrow = self.subband_channels, self.feature_channels
        for h in self.heads_per_stage[:3]:
            if wide % h:
                raise ValueError(f"{wide} subband channels not divisible by {h} heads")
        if narrow % self.heads_per_stage[3]:
            raise ValueError(f"{narrow} feature channels not divisible by {self.heads_per_stage[3]} heads")
        for r in self.reduction:
            if wide % r:
                raise ValueError(f"{wide} subband channels not divisible by reduction {r}")

    @classmethod
    def preset(cls, variant: str = "pasta-i", tiny: bool = False, **overrides) -> "ModelConfig":
        """Default or tiny row of the published configuration table."""
        base = dict(variant=variant, tiny=tiny)
        if tiny:
            base.update(C=12, stl_per_stage=(2, 2, 2, 2), heads_per_stage=(3, 3, 3, 3))
        base.update(overrides)
        return cls(**base)

    @property
    def feature_channels(self) -> int:
        """Channels of F_t: three concatenated C-channel maps."""
        return 3 * self.C

    @property
    def subband_channels(self) -> int:
        """Channels a wavelet stage works on: four concatenated subbands."""
        return 12 * self.C

    @property
    def size_multiple(self) -> int:
        return 2 ** self.K * self.window

    def stage_index(self, j: int) -> int:
        return min(j, 2)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("stl_per_stage", "heads_per_stage", "reduction"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**values)

    def replace(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


MODEL_KEYS = tuple(f.name for f in fields(ModelConfig))

preset = ModelConfig.preset
