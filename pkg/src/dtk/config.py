"""Plain-text key/value run configuration with a strict schema.

Files hold one `key = value` per line; '#' starts a comment. Every key is
validated against the schema and unknown keys are rejected, so a manifest of
the resolved configuration is enough to reproduce a run bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .cifar import AugmentConfig
from .errors import ConfigError
from .train import TrainConfig
from .vgg import ArchConfig, BlockPlan


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got '{raw}'")


def _parse_dilations(raw: str) -> tuple[int, ...]:
    try:
        rates = tuple(int(p.strip()) for p in raw.split(",") if p.strip())
    except ValueError as err:
        raise ConfigError(f"bad dilation list '{raw}'") from err
    if not rates:
        raise ConfigError(f"bad dilation list '{raw}'")
    return rates


def _choice(*options):
    def parse(raw: str) -> str:
        if raw not in options:
            raise ConfigError(f"expected one of {options}, got '{raw}'")
        return raw

    return parse


# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    "family": (_choice("vgg16", "vgg19"), "vgg16"),
    "num_classes": (int, 10),
    "channel_div": (int, 1),
    "block1_frozen": (_parse_bool, False),
    "block2_frozen": (_parse_bool, False),
    "block3_frozen": (_parse_bool, False),
    "block4_frozen": (_parse_bool, False),
    "block5_frozen": (_parse_bool, False),
    "block1_dilation": (_parse_dilations, (1,)),
    "block2_dilation": (_parse_dilations, (1,)),
    "block3_dilation": (_parse_dilations, (1,)),
    "block4_dilation": (_parse_dilations, (1,)),
    "block5_dilation": (_parse_dilations, (1,)),
    "dataset": (_choice("cifar10", "cifar100"), "cifar10"),
    "data_dir": (str, ""),
    "out_dir": (str, "runs/out"),
    "weights": (str, ""),
    "epochs": (int, 250),
    "base_lr": (float, 1e-5),
    "plateau_patience": (int, 7),
    "plateau_factor": (float, 0.05**0.5),
    "beta1": (float, 0.9),
    "beta2": (float, 0.999),
    "eps": (float, 1e-8),
    "batch_size": (int, 64),
    "seed": (int, 0),
    "augment": (_parse_bool, True),
    "horizontal_flip": (_parse_bool, True),
    "vertical_flip": (_parse_bool, True),
    "rotation_range_deg": (float, 30.0),
    "shift_range_fraction": (float, 0.3),
    "zoom_range": (float, 0.3),
    "train_subset": (int, 0),  # 0 = use the whole split
    "val_subset": (int, 0),
}


@dataclass
class RunConfig:
    values: dict

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError as err:
            raise AttributeError(key) from err

    def arch(self) -> ArchConfig:
        blocks = tuple(
            BlockPlan(
                frozen=self.values[f"block{i}_frozen"],
                dilations=self.values[f"block{i}_dilation"],
            )
            for i in range(1, 6)
        )
        return ArchConfig(
            family=self.values["family"],
            blocks=blocks,
            num_classes=self.values["num_classes"],
            channel_div=self.values["channel_div"],
        )

    def train(self) -> TrainConfig:
        aug = None
        if self.values["augment"]:
            aug = AugmentConfig(
                horizontal_flip=self.values["horizontal_flip"],
                vertical_flip=self.values["vertical_flip"],
                rotation_range_deg=self.values["rotation_range_deg"],
                shift_range_fraction=self.values["shift_range_fraction"],
                zoom_range=self.values["zoom_range"],
                seed=self.values["seed"],
            )
        return TrainConfig(
            epochs=self.values["epochs"],
            base_lr=self.values["base_lr"],
            plateau_patience=self.values["plateau_patience"],
            plateau_factor=self.values["plateau_factor"],
            beta1=self.values["beta1"],
            beta2=self.values["beta2"],
            eps=self.values["eps"],
            batch_size=self.values["batch_size"],
            seed=self.values["seed"],
            augment=aug,
        )

    def manifest(self) -> str:
        lines = [f"{key} = {_render(self.values[key])}" for key in sorted(self.values)]
        return "\n".join(lines) + "\n"


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _apply(values: dict, key: str, raw: str, origin: str) -> None:
    if key not in SCHEMA:
        raise ConfigError(f"unknown configuration key '{key}' ({origin})")
    parser = SCHEMA[key][0]
    try:
        values[key] = parser(raw)
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(f"bad value for '{key}': '{raw}' ({origin})") from err


def parse_file(path: str | Path) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        raw[key.strip()] = value.strip()
    return raw


def load(config_path: str | Path | None, overrides: list[str] = ()) -> RunConfig:
    """Resolve defaults, then the file, then --set overrides, in that order."""
    values = {key: default for key, (_, default) in SCHEMA.items()}
    if config_path is not None:
        for key, raw in parse_file(config_path).items():
            _apply(values, key, raw, str(config_path))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' must look like key=value")
        key, raw = item.split("=", 1)
        _apply(values, key.strip(), raw.strip(), "--set")
    return RunConfig(values)
