"""Architecture configuration and ablation variants."""
from __future__ import annotations

from dataclasses import dataclass, replace

VARIANTS = ("full", "no_gma", "no_denoiser", "unet_denoiser", "lstm_update", "warm_start")


@dataclass(frozen=True)
class NetConfig:
    """Channel counts are the full-size widths multiplied by ``width``."""

    width: float = 0.25
    radius: int = 4
    levels: int = 4
    denoiser: str = "resnet"          # resnet | unet | none
    denoiser_filters: int = 32
    update: str = "gru"               # gru | lstm
    use_gma: bool = True
    gn_eps: float = 1e-5

    def ch(self, n: int) -> int:
        return max(2, int(round(n * self.width)))

    @property
    def hidden_dim(self) -> int:
        return self.ch(128)

    @property
    def context_dim(self) -> int:
        return self.ch(128)

    @property
    def motion_dim(self) -> int:
        return self.ch(128)

    @property
    def corr_channels(self) -> int:
        return self.levels * (2 * self.radius + 1) ** 2


def variant_config(name: str, base: NetConfig | None = None) -> NetConfig:
    """Configuration for one ablation variant; ``warm_start`` also changes the inputs."""
    base = base or NetConfig()
    if name == "full":
        return base
    if name == "no_gma":
        return replace(base, use_gma=False)
    if name in ("no_denoiser", "warm_start"):
        return replace(base, denoiser="none")
    if name == "unet_denoiser":
        return replace(base, denoiser="unet")
    if name == "lstm_update":
        return replace(base, update="lstm")
    raise ValueError(f"unknown model variant {name!r}; expected one of {', '.join(VARIANTS)}")
