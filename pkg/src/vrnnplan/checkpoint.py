"""Model checkpoint container and its JSON file format.

A checkpoint is a single JSON document (format_version 1) with fields:

    format_version  int, currently 1
    kind            "PVRNN" | "FM" | "SI"
    seed            master seed the training run was started with
    config          ModelConfig fields; "layers" is a list of objects with
                    d_size, z_size, tau, w
    params          weight blocks by name, nested lists (row-major)
    adaptation      PVRNN: {"a_mu": [...], "a_sig": [...]} with one
                    (n_seq, T, z) array per layer; SI: same but (n_seq, d)
                    arrays; FM: null

Arrays round-trip exactly: floats are serialized with repr precision.
"""

import json
from dataclasses import dataclass

import numpy as np

from .baselines import FmParams, SiAdaptation, SiParams
from .errors import ConfigError
from .model import AdaptationVars, LayerConfig, ModelConfig, NetworkParams

FORMAT_VERSION = 1
KINDS = ("PVRNN", "FM", "SI")


@dataclass
class Checkpoint:
    kind: str
    config: ModelConfig
    params: object
    adaptation: object = None
    seed: int = 0


def _config_dict(config):
    return {
        "layers": [{"d_size": l.d_size, "z_size": l.z_size,
                    "tau": l.tau, "w": l.w} for l in config.layers],
        "output_dim": config.output_dim,
        "T": config.T,
        "w_I": config.w_I,
        "lr": config.lr,
        "epochs": config.epochs,
        "error_dropout_p": config.error_dropout_p,
        "seed": config.seed,
    }


def _config_from_dict(d):
    layers = tuple(LayerConfig(**l) for l in d["layers"])
    return ModelConfig(layers=layers, output_dim=d["output_dim"], T=d["T"],
                       w_I=d["w_I"], lr=d["lr"], epochs=d["epochs"],
                       error_dropout_p=d["error_dropout_p"], seed=d["seed"])


def save_checkpoint(path, ckpt):
    if ckpt.kind not in KINDS:
        raise ConfigError(f"unknown model kind '{ckpt.kind}'")
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": ckpt.kind,
        "seed": ckpt.seed,
        "config": _config_dict(ckpt.config),
        "params": {k: v.tolist() for k, v in ckpt.params.blocks.items()},
    }
    if ckpt.adaptation is None:
        doc["adaptation"] = None
    else:
        doc["adaptation"] = {
            "a_mu": [a.tolist() for a in ckpt.adaptation.a_mu],
            "a_sig": [a.tolist() for a in ckpt.adaptation.a_sig],
        }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"checkpoint not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed checkpoint {path}: {exc}") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version "
                          f"{doc.get('format_version')}")
    kind = doc["kind"]
    if kind not in KINDS:
        raise ConfigError(f"{path}: unknown model kind '{kind}'")
    config = _config_from_dict(doc["config"])
    blocks = {k: np.asarray(v, dtype=float) for k, v in doc["params"].items()}
    if kind == "PVRNN":
        params = NetworkParams(config, blocks)
    elif kind == "FM":
        params = FmParams(config, blocks)
    else:
        params = SiParams(config, blocks)
    adaptation = None
    if doc["adaptation"] is not None:
        a_mu = [np.asarray(a, dtype=float) for a in doc["adaptation"]["a_mu"]]
        a_sig = [np.asarray(a, dtype=float) for a in doc["adaptation"]["a_sig"]]
        adaptation = AdaptationVars(a_mu, a_sig) if kind == "PVRNN" \
            else SiAdaptation(a_mu, a_sig)
    return Checkpoint(kind=kind, config=config, params=params,
                      adaptation=adaptation, seed=doc["seed"])
