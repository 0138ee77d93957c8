"""Plain-text key=value configuration with environment and flag overrides.

Files hold one ``key = value`` pair per line; ``#`` starts a comment.  Every
key has a declared type and default.  Precedence, lowest to highest: built-in
defaults, config file, ``DEEPMUSIC_<KEY>`` environment variables, command
line ``--set key=value`` overrides.
"""

from __future__ import annotations

import os

from .arraysim import ArrayConfig
from .bench import ExperimentConfig
from .datagen import DatasetConfig
from .errors import ConfigError
from .grids import AngularGrid
from .nn.train import TrainConfig

ENV_PREFIX = "DEEPMUSIC_"


def _parse_float_list(text: str):
    try:
        return tuple(float(part) for part in text.split(",") if part.strip() != "")
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


_PARSERS = {
    "int": int,
    "float": float,
    "float_list": _parse_float_list,
}

# key -> (type name, default, description)
KEY_SPECS = {
    "m": ("int", 16, "number of array elements"),
    "spacing": ("float", 0.5, "element spacing in wavelengths"),
    "theta_start": ("float", -60.0, "grid start angle, degrees"),
    "theta_final": ("float", 60.0, "grid final angle, degrees (exclusive)"),
    "n_grid": ("int", 4096, "number of grid points"),
    "q_regions": ("int", 8, "number of angular subregions"),
    "k": ("int", 2, "number of sources"),
    "t_train": ("int", 500, "snapshots per training record"),
    "t_eval": ("int", 100, "snapshots per evaluation trial"),
    "snr_train_db": ("float_list", (15.0, 20.0, 25.0, 30.0), "training SNR levels, dB"),
    "snr_eval_db": ("float_list", (0.0, 10.0, 20.0, 30.0), "evaluation SNR sweep, dB"),
    "rho_grid": ("float_list", (0.0, 0.2, 0.4, 0.6, 0.8, 1.0), "correlation sweep values"),
    "snr_corr_db": ("float", 20.0, "SNR used during the correlation sweep, dB"),
    "j_alpha": ("int", 100, "number of random DOA scenes"),
    "j_beta": ("int", 100, "noise realizations per scene and SNR"),
    "j_trials": ("int", 100, "Monte-Carlo trials per sweep point"),
    "num_filters": ("int", 256, "convolution filters per stage"),
    "fc_width": ("int", 1024, "hidden fully connected width"),
    "dropout_p": ("float", 0.5, "dropout probability"),
    "batch_size": ("int", 128, "training mini-batch size"),
    "learning_rate": ("float", 0.01, "initial learning rate"),
    "momentum": ("float", 0.9, "SGD momentum"),
    "lr_drop_factor": ("float", 0.5, "learning-rate decay factor"),
    "lr_drop_period": ("int", 10, "epochs between learning-rate drops"),
    "patience": ("int", 3, "early-stopping patience, epochs"),
    "max_epochs": ("int", 100, "epoch cap"),
    "train_fraction": ("float", 0.8, "train share of the corpus"),
    "seed": ("int", 1, "master seed"),
}


def default_config() -> dict:
    return {key: spec[1] for key, spec in KEY_SPECS.items()}


def _parse_value(key: str, text: str):
    if key not in KEY_SPECS:
        raise ConfigError(f"unknown configuration key {key!r}")
    kind = KEY_SPECS[key][0]
    try:
        return _PARSERS[kind](text.strip())
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"key {key!r} expects a {kind}, got {text.strip()!r}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = _parse_value(key.strip(), value)
    return values


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config_text(text, source=path)


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    values = {}
    for key in KEY_SPECS:
        name = ENV_PREFIX + key.upper()
        if name in environ:
            values[key] = _parse_value(key, environ[name])
    return values


def parse_overrides(pairs) -> dict:
    values = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, _, value = pair.partition("=")
        values[key.strip()] = _parse_value(key.strip(), value)
    return values


def resolve_config(path=None, overrides=(), environ=None) -> dict:
    values = default_config()
    if path is not None:
        values.update(load_config_file(path))
    values.update(env_overrides(environ))
    values.update(parse_overrides(overrides))
    return values


# ---------------------------------------------------------------------------
# builders for the typed configs

def array_config(values: dict) -> ArrayConfig:
    return ArrayConfig(values["m"], values["spacing"])


def grid_config(values: dict) -> AngularGrid:
    return AngularGrid(values["theta_start"], values["theta_final"], values["n_grid"])


def dataset_config(values: dict) -> DatasetConfig:
    return DatasetConfig(
        grid=grid_config(values),
        num_regions=values["q_regions"],
        num_sources=values["k"],
        num_snapshots=values["t_train"],
        snr_train_db=tuple(values["snr_train_db"]),
        num_doa_sets=values["j_alpha"],
        num_noise_draws=values["j_beta"],
        seed=values["seed"],
    )


def train_config(values: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=values["learning_rate"],
        momentum=values["momentum"],
        batch_size=values["batch_size"],
        lr_drop_factor=values["lr_drop_factor"],
        lr_drop_period_epochs=values["lr_drop_period"],
        early_stop_patience_epochs=values["patience"],
        max_epochs=values["max_epochs"],
        seed=values["seed"],
    )


def experiment_config(values: dict) -> ExperimentConfig:
    return ExperimentConfig(
        array=array_config(values),
        grid=grid_config(values),
        num_regions=values["q_regions"],
        num_sources=values["k"],
        num_snapshots=values["t_eval"],
        snr_eval_db=tuple(values["snr_eval_db"]),
        rho_grid=tuple(values["rho_grid"]),
        snr_corr_db=values["snr_corr_db"],
        num_trials=values["j_trials"],
        seed=values["seed"],
    )
