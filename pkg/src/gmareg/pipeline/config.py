"""Run configuration (plain ``key = value`` text) and the learning-rate schedule."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..losses import LossConfig
from ..regnet.config import VARIANTS, NetConfig, variant_config

WARMUP_FRACTION = 0.3
FLOOR_DIVISOR = 25.0


@dataclass(frozen=True)
class RunConfig:
    trajectory: str = "cartesian"      # cartesian | radial
    R: tuple = (1.0, 8.0)              # accelerations mixed into the training corpus
    N: int = 12
    delta: float = 0.5
    beta: float = 0.8
    gamma: float = 0.2
    lr_max: float = 5e-4
    weight_decay: float = 1e-4
    clip: float = 1.0
    batch: int = 8
    epochs: int = 20
    steps_per_epoch: int = 50
    T: int = 6
    image_size: int = 64
    crop: int = 0                      # centre crop before registration; 0 disables
    frames: int = 16
    kind: str = "cardiac"              # cardiac | respiratory
    n_scenes: int = 8
    seed: int = 0
    variant: str = "full"
    width: float = 0.25
    dtype: str = "float32"

    def __post_init__(self):
        if self.trajectory not in ("cartesian", "radial"):
            raise ValueError(f"trajectory must be cartesian or radial, got {self.trajectory!r}")
        if self.kind not in ("cardiac", "respiratory"):
            raise ValueError(f"kind must be cardiac or respiratory, got {self.kind!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if any(r < 1 for r in self.R):
            raise ValueError(f"accelerations must be >= 1, got {self.R}")
        for name in ("batch", "epochs", "steps_per_epoch", "N", "n_scenes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.image_size % 8 or (self.crop and self.crop % 8):
            raise ValueError("image_size and crop must be multiples of 8")
        if self.crop > self.image_size:
            raise ValueError(f"crop {self.crop} exceeds image size {self.image_size}")

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch

    def loss_config(self) -> LossConfig:
        return LossConfig(N=self.N, delta=self.delta, beta=self.beta, gamma=self.gamma)

    def net_config(self) -> NetConfig:
        return variant_config(self.variant, NetConfig(width=self.width))

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, tuple):
                v = ",".join(f"{x:g}" for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, default, text: str):
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0"):
                raise ValueError
            return low in ("true", "1")
        if isinstance(default, tuple):
            return tuple(float(x) for x in text.split(",") if x.strip())
        return type(default)(text)
    except ValueError:
        raise ValueError(f"config key {name!r}: cannot parse {text!r} as {type(default).__name__}") from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    base = base or RunConfig()
    defaults = {f.name: getattr(base, f.name) for f in fields(RunConfig)}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        updates[key] = _coerce(key, defaults[key], value)
    return replace(base, **updates)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file not found: {p}")
    return parse_config(p.read_text())


def one_cycle_lr(step: int, total_steps: int, lr_max: float = 5e-4) -> float:
    """Linear warm-up from lr_max/25 to lr_max over 30% of the steps, then
    linear anneal back to lr_max/25 at the final step."""
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1, got {total_steps}")
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    lo = lr_max / FLOOR_DIVISOR
    last = total_steps - 1
    peak = int(round(WARMUP_FRACTION * last))
    if step <= peak:
        return lo + (lr_max - lo) * (step / peak if peak else 1.0)
    return lr_max + (lo - lr_max) * (step - peak) / (last - peak)
