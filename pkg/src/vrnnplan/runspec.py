"""Experiment spec files: flat key = value text with section headers.

Parsed with configparser, so the on-disk format is the familiar INI
layout. Every key has a default; a spec file only states what it wants to
override. Unknown sections or keys are rejected to catch typos early.
"""

import configparser

from .dataset import TaskGeometry
from .errors import ConfigError
from .model import LayerConfig, ModelConfig

DEFAULTS = {
    "experiment": {
        "name": "experiment1",
        "seed": "11",
    },
    "data": {
        "seed": "7",
        "n_train": "60",
        "n_test": "20",
        "n_center": "10",
        "noise_scale": "0.005",
        "t": "30",
    },
    "model": {
        "d_sizes": "20,10",
        "z_sizes": "2,1",
        "taus": "4,8",
        "lr": "0.001",
        "epochs": "40000",
        "w_i": "0.1",
        "error_dropout_p": "0.1",
    },
    "meta_priors": {
        "weak": "0.00001,0.000005",
        "intermediate": "0.01,0.005",
        "strong": "0.2,0.1",
    },
    "baselines": {
        "epochs": "8000",
        "lr": "0.001",
        "blend": "0.9",
        "clip_norm": "50",
    },
    "plan": {
        "epochs": "500",
        "rate": "0.05",
        "n_candidates": "10",
        "repetitions": "10",
    },
    "lookahead": {
        "epochs": "30",
        "rate": "0.05",
        "si_epochs": "100",
        "n_sequences": "5",
    },
}


def _floats(text):
    return tuple(float(v) for v in text.split(","))


def _ints(text):
    return tuple(int(v) for v in text.split(","))


class RunSpec:
    """Typed view over a parsed spec file."""

    def __init__(self, values):
        self.values = values

    def __getitem__(self, pair):
        section, key = pair
        return self.values[section][key]

    @property
    def seed(self):
        return int(self[("experiment", "seed")])

    @property
    def meta_prior_names(self):
        return tuple(self.values["meta_priors"])

    def meta_prior(self, name):
        try:
            return _floats(self.values["meta_priors"][name])
        except KeyError:
            raise ConfigError(f"unknown meta-prior setting '{name}'") from None

    def model_config(self, meta_prior_name):
        """ModelConfig for one of the named meta-prior settings."""
        d_sizes = _ints(self[("model", "d_sizes")])
        z_sizes = _ints(self[("model", "z_sizes")])
        taus = _floats(self[("model", "taus")])
        ws = self.meta_prior(meta_prior_name)
        if not len(d_sizes) == len(z_sizes) == len(taus) == len(ws):
            raise ConfigError("layer lists (d_sizes, z_sizes, taus, meta-prior "
                              "weights) must have equal length")
        layers = tuple(LayerConfig(d, z, t, w)
                       for d, z, t, w in zip(d_sizes, z_sizes, taus, ws))
        return ModelConfig(
            layers=layers,
            output_dim=2,
            T=int(self[("data", "t")]),
            w_I=float(self[("model", "w_i")]),
            lr=float(self[("model", "lr")]),
            epochs=int(self[("model", "epochs")]),
            error_dropout_p=float(self[("model", "error_dropout_p")]),
            seed=self.seed,
        )

    def baseline_config(self):
        """ModelConfig shared by the FM and SI baselines (z sizes unused)."""
        d_sizes = _ints(self[("model", "d_sizes")])
        taus = _floats(self[("model", "taus")])
        layers = tuple(LayerConfig(d, 0, t, 0.0) for d, t in zip(d_sizes, taus))
        return ModelConfig(
            layers=layers,
            output_dim=2,
            T=int(self[("data", "t")]),
            w_I=float(self[("model", "w_i")]),
            lr=float(self[("baselines", "lr")]),
            epochs=int(self[("baselines", "epochs")]),
            seed=self.seed,
        )

    def geometry(self):
        return TaskGeometry()


def load_spec(path=None, overrides=None):
    """Parse a spec file on top of the defaults; path may be None."""
    values = {s: dict(kv) for s, kv in DEFAULTS.items()}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"spec file not found: {path}")
        for section in parser.sections():
            if section not in values:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, val in parser.items(section):
                if key not in values[section]:
                    raise ConfigError(f"{path}: unknown key '{key}' in "
                                      f"[{section}]")
                values[section][key] = val
    for (section, key), val in (overrides or {}).items():
        values[section][key] = str(val)
    return RunSpec(values)
