"""INI-style run configuration.

Four optional sections are recognised; every key is listed in ``KEYS`` with
its parser, default and help text (shown by ``mvladdm --help``).  Unknown
sections or keys are rejected.
"""
import configparser
import os

import numpy as np

from .errors import ConfigError
from .synth import GeneratorSpec, default_spec


def _ints(s):
    return tuple(int(t) for t in s.replace(",", " ").split())


def _floats(s):
    return tuple(float(t) for t in s.replace(",", " ").split())


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _matrix(s):
    rows = [r for r in s.split(";") if r.strip()]
    return [_floats(r) for r in rows]


def _pairs(s):
    out = []
    for tok in s.replace(",", " ").split():
        a, b = tok.split("-")
        out.append((int(a), int(b)))
    return tuple(out)


def _names(s):
    return tuple(t.strip() for t in s.split(",") if t.strip())


def _paths(s):
    return tuple(t.strip() for t in s.split(",") if t.strip())


# section -> key -> (parser, default, help)
KEYS = {
    "generator": {
        "n_views": (int, 2, "number of camera views"),
        "n_classes": (int, 4, "number of behaviour classes"),
        "frames": (int, 200, "frames per sequence"),
        "feature_dims": (_ints, (8, 8), "feature dimension per view"),
        "std": (float, 1.0, "isotropic emission std"),
        "separation": (float, 4.0, "class mean offset in stds"),
        "self_transition": (float, 0.9, "mean self-transition probability"),
        "imbalance": (_floats, (0.55, 0.25, 0.15, 0.05), "stationary class weights"),
        "visibility": (_matrix, "1 0; 0 1; 1 1; 1 1", "per-class rows of per-view 0/1 flags, ';'-separated"),
        "forbidden": (_pairs, "1-3", "label pairs that never follow each other, e.g. '1-3 0-2'"),
        "transition": (_matrix, None, "explicit row-stochastic matrix, ';'-separated rows"),
        "count": (int, 50, "number of sequences to generate"),
        "train_fraction": (float, 0.8, "share of sequences written to train.jsonl"),
        "seed": (int, 0, "generator seed (overridden by --seed)"),
    },
    "model": {
        "n_labels": (int, None, "label count (default: generator n_classes or max label + 1)"),
        "latent_dim": (int, 4, "latent dimension d"),
        "hidden_dim": (int, 16, "LSTM hidden size"),
        "mlp_dim": (int, 16, "inference/generative MLP hidden size"),
        "embed_dim": (int, 4, "label embedding size for attention"),
        "lambda_elbo": (float, 0.1, "ELBO weight"),
        "lr": (float, 0.01, "learning rate"),
        "epochs": (int, 40, "training epochs"),
        "batch_size": (int, 16, "subsequences per step"),
        "subseq_len": (int, 20, "training subsequence length"),
        "balanced": (_bool, True, "frequency-balanced subsequence sampling"),
        "optimizer": (str, "adam", "adam or sgd"),
        "seed": (int, 0, "model seed (overridden by --seed)"),
    },
    "data": {
        "train": (str, "train.jsonl", "training dataset (relative to --out)"),
        "test": (str, "test.jsonl", "evaluation dataset (relative to --out)"),
        "checkpoint": (str, "model.ckpt", "checkpoint path (relative to --out)"),
        "class_names": (_names, None, "comma-separated class names (default: 0..N-1)"),
    },
    "encode": {
        "volumes": (_paths, None, "per-view volume files (H W 1 T), comma-separated"),
        "flows": (_paths, None, "per-view flow files (H W 2 T), optional"),
        "maps": (_paths, None, "per-view descriptor map files (h w C T), optional, needs flows"),
        "labels": (str, None, "text file of whitespace-separated frame labels, optional"),
        "id": (str, "rec0000", "sequence id of the encoded recording"),
        "output": (str, "encoded.jsonl", "encoded dataset (relative to --out)"),
        "window_len": (int, 9, "sliding window length in frames"),
        "sigma": (float, 1.5, "LoG scale in pixels"),
        "omega": (float, 0.25, "Gabor frequency in cycles/frame"),
        "threshold": (float, 1e-3, "interest point response threshold"),
        "cuboid": (_ints, (2, 2, 2), "cuboid half sizes hx hy ht"),
        "pca_keep": (int, 8, "PCA components kept for cuboid descriptors"),
        "gmm_k": (int, 4, "Gaussians per feature type"),
        "gmm_iters": (int, 50, "EM iterations"),
        "step": (int, 5, "dense sampling step in pixels"),
        "eig_threshold": (float, 1e-3, "structure-tensor eigenvalue threshold"),
        "traj_len": (int, 15, "trajectory length L"),
        "map_scale": (float, 1.0, "scale from frame to map coordinates"),
        "seed": (int, 0, "encoding seed (overridden by --seed)"),
    },
}


def describe_keys():
    """Text block documenting every section and key."""
    lines = ["configuration keys (INI sections):"]
    for sec, keys in KEYS.items():
        lines.append(f"  [{sec}]")
        for k, (_, default, text) in keys.items():
            d = "" if default is None else f" (default {default if not isinstance(default, tuple) else ' '.join(map(str, default))})"
            lines.append(f"    {k}: {text}{d}")
    return "\n".join(lines)


class RunConfig:
    """Parsed configuration: ``values[section][key]`` plus which keys were set."""

    def __init__(self, values, given):
        self.values = values
        self.given = given

    def section(self, name):
        return self.values[name]

    def was_set(self, section, key):
        return key in self.given.get(section, set())


def _default(parser, default):
    if isinstance(default, str) and parser is not str:
        return parser(default)
    return default


def load_config(path=None, seed=None):
    """Parse ``path`` (or defaults only when ``None``); ``seed`` overrides every section seed."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except (configparser.Error, UnicodeDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for sec in cp.sections():
        if sec not in KEYS:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in KEYS[sec]:
                raise ConfigError(f"unknown key '{key}' in [{sec}]")
    values, given = {}, {}
    for sec, keys in KEYS.items():
        values[sec] = {}
        given[sec] = set()
        for key, (parser, default, _) in keys.items():
            if cp.has_option(sec, key):
                raw = cp.get(sec, key)
                try:
                    values[sec][key] = parser(raw)
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from None
                given[sec].add(key)
            else:
                values[sec][key] = _default(parser, default)
        if seed is not None and "seed" in keys:
            values[sec]["seed"] = int(seed)
    return RunConfig(values, given)


def generator_spec(rc):
    """GeneratorSpec from the [generator] section.

    Layout keys left at their defaults (visibility, imbalance, forbidden,
    feature dims) only apply to the default two-view, four-class layout;
    for other sizes the generic fallbacks are used.
    """
    g = rc.section("generator")
    base = default_spec(g["seed"])
    V, N = g["n_views"], g["n_classes"]
    same_layout = V == base.n_views and N == base.n_classes
    kw = dict(n_views=V, n_classes=N, frames=g["frames"], std=g["std"],
              separation=g["separation"], self_transition=g["self_transition"], seed=g["seed"])
    if rc.was_set("generator", "feature_dims") or V == base.n_views:
        kw["feature_dims"] = g["feature_dims"]
    else:
        kw["feature_dims"] = (max(N, 1),) * V
    for key in ("imbalance", "visibility", "forbidden"):
        if rc.was_set("generator", key) or same_layout:
            kw[key] = g[key]
    if g["transition"] is not None:
        kw["transition"] = np.array(g["transition"])
    if "visibility" in kw:
        kw["visibility"] = np.array(kw["visibility"], dtype=float) != 0
    if "imbalance" in kw:
        kw["imbalance"] = np.array(kw["imbalance"])
    try:
        return GeneratorSpec(**kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[generator]: {exc}") from None
