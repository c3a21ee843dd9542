"""Pipeline configuration and its flat ``key = value`` file format."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .dynamics import DynamicsConfig
from .reservoir import EsnParams

ABLATION_FLAGS = ("adaptive_lr", "symmetric_activation", "space_normalization",
                  "moving_average", "leaking")


@dataclass
class PipelineConfig:
    resize: int = 288
    grid: int = 48
    K: int = 3
    list_size: int = 9
    tau: int = 200_000
    n_min: int = 2
    n_max: int = 20
    linkage: str = "ward"
    mode: str = "standard"
    corruptions: tuple = ("gaussian_noise", "zoom_blur", "snow", "contrast")
    severities: tuple = (1, 3, 5)
    corruption_seed: int = 0
    tau_multiplier: int = 1
    jobs: int = 1
    overlays: bool = True
    esn: EsnParams = field(default_factory=EsnParams)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)

    def __post_init__(self):
        if self.resize % self.grid:
            raise ValueError(f"resize {self.resize} not divisible by grid {self.grid}")
        if self.list_size > self.grid * self.grid:
            raise ValueError("list_size exceeds the number of patches")
        if self.n_max > self.grid * self.grid:
            raise ValueError("n_max exceeds the number of patches")
        want = self.patch_size * 3
        if self.esn.input_dim != want:
            self.esn = dataclasses.replace(self.esn, input_dim=want)

    @property
    def patch_size(self) -> int:
        return self.resize // self.grid

    @property
    def n_patches(self) -> int:
        return self.grid * self.grid

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_ablation(self, disabled) -> "PipelineConfig":
        bad = set(disabled) - set(ABLATION_FLAGS)
        if bad:
            raise ValueError(f"unknown ablation flags {sorted(bad)}")
        dyn = dataclasses.replace(self.dynamics, **{f: False for f in disabled})
        return dataclasses.replace(self, dynamics=dyn)


def desk_profile(**overrides) -> PipelineConfig:
    """Reduced settings for CI-scale runs: 24x24 grid, 20k steps, 500-step window."""
    cfg = PipelineConfig(grid=24, tau=20_000,
                         dynamics=DynamicsConfig(movmean_window=500))
    return apply_overrides(cfg, overrides) if overrides else cfg


def _coerce(value: str):
    value = value.strip()
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        low = value.lower()
        if low in ("true", "false"):
            return low == "true"
        if low in ("none", "null"):
            return None
        return value


def apply_overrides(cfg: PipelineConfig, items: dict) -> PipelineConfig:
    """Apply dotted keys (``tau``, ``esn.seed``, ``dynamics.beta``...)."""
    top, esn, dyn = {}, {}, {}
    for key, value in items.items():
        if isinstance(value, str):
            value = _coerce(value)
        if key.startswith("esn."):
            esn[key[4:]] = value
        elif key.startswith("dynamics."):
            dyn[key[9:]] = value
        else:
            if isinstance(value, list):
                value = tuple(value)
            top[key] = value
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    for name, group, cls in (("", top, PipelineConfig), ("esn.", esn, EsnParams),
                             ("dynamics.", dyn, DynamicsConfig)):
        fields = {f.name for f in dataclasses.fields(cls)} if name else known
        bad = set(group) - fields
        if bad:
            raise KeyError(f"unknown config keys: {sorted(name + b for b in bad)}")
    new_esn = dataclasses.replace(cfg.esn, **esn)
    new_dyn = dataclasses.replace(cfg.dynamics, **dyn)
    return dataclasses.replace(cfg, esn=new_esn, dynamics=new_dyn, **top)


def parse_config_text(text: str) -> dict:
    items = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        items[key.strip()] = value.strip()
    return items


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    with open(path) as fh:
        items = parse_config_text(fh.read())
    return apply_overrides(base or PipelineConfig(), items)


def dump_config(cfg: PipelineConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if isinstance(value, dict):
            for sub, v in value.items():
                lines.append(f"{key}.{sub} = {json.dumps(v)}")
        else:
            lines.append(f"{key} = {json.dumps(value)}")
    return "\n".join(lines) + "\n"
