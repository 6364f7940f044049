"""Command-line entry point: ``mvladdm <synth|encode|train|eval>``.

Stdout carries only data (written paths, final accuracy); diagnostics and
errors go to stderr.  Exit codes: 2 configuration error, 3 malformed binary
input, 4 dataset/model dimension mismatch, 5 checkpoint/config mismatch,
1 any other failure.
"""
import argparse
import logging
import os
import sys

import numpy as np

from . import config as cfgmod
from . import decode, features, model, synth
from .data import check_consistent, load_dataset, save_dataset
from .errors import (CheckpointMismatch, ConfigError, DimMismatch, EmptyDataset,
                     InconsistentViews, LabelOutOfRange, MalformedBinary, MvladdmError,
                     ParseError, ScaleMismatch, TooManyViews, ViewLengthMismatch,
                     VolumeTooSmall)

log = logging.getLogger("mvladdm")

EXIT_CONFIG, EXIT_BINARY, EXIT_DIMS, EXIT_CHECKPOINT = 2, 3, 4, 5


class CliFailure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _out_path(args, name):
    return name if os.path.isabs(name) else os.path.join(args.out, name)


def _attention_mode(args):
    if args.shared_only:
        return "shared"
    if args.no_attention:
        return "uniform"
    return "full"


def _load(path, code):
    try:
        seqs = load_dataset(path)
        check_consistent(seqs)
        return seqs
    except FileNotFoundError:
        raise CliFailure(EXIT_CONFIG, f"dataset not found: {path}") from None
    except (ParseError, DimMismatch, EmptyDataset, InconsistentViews) as exc:
        raise CliFailure(code, f"{path}: {exc}") from None


def _emit(*items):
    for it in items:
        print(it)


def cmd_synth(args, rc):
    spec = cfgmod.generator_spec(rc)
    g = rc.section("generator")
    if g["count"] < 1 or not 0.0 <= g["train_fraction"] <= 1.0:
        raise ConfigError("count must be >= 1 and train_fraction in [0, 1]")
    seqs = synth.generate(spec, g["count"])
    train, test = synth.split_dataset(seqs, g["train_fraction"], spec.seed)
    d = rc.section("data")
    paths = _out_path(args, d["train"]), _out_path(args, d["test"])
    save_dataset(train, paths[0])
    save_dataset(test, paths[1])
    log.info("wrote %d train / %d test sequences", len(train), len(test))
    _emit(*paths)


def _load_labels(path, T):
    if path is None:
        return None
    try:
        with open(path, encoding="ascii") as fh:
            labels = np.array([int(t) for t in fh.read().split()], dtype=np.int64)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"labels file {path}: {exc}") from None
    if labels.size != T:
        raise CliFailure(EXIT_DIMS, f"{path}: {labels.size} labels for {T} frames")
    return labels


def cmd_encode(args, rc):
    e = rc.section("encode")
    if not e["volumes"]:
        raise ConfigError("[encode] volumes is required")
    for key in ("flows", "maps"):
        if e[key] is not None and len(e[key]) != len(e["volumes"]):
            raise ConfigError(f"[encode] {key} must list one file per view")
    if e["maps"] is not None and e["flows"] is None:
        raise ConfigError("[encode] maps need flows to define trajectories")
    settings = features.EncodeSettings(**{k: e[k] for k in features.EncodeSettings.__dataclass_fields__})
    try:
        vols = [features.read_volume(p) for p in e["volumes"]]
        flows = None if e["flows"] is None else [features.read_frames(p, 2) for p in e["flows"]]
        maps = None if e["maps"] is None else [features.read_frames(p) for p in e["maps"]]
        labels = _load_labels(e["labels"], vols[0].shape[2])
        seq = features.encode_recording(vols, settings, flows, maps, labels, e["id"])
    except (MalformedBinary, ScaleMismatch, VolumeTooSmall) as exc:
        raise CliFailure(EXIT_BINARY, str(exc)) from None
    except ViewLengthMismatch as exc:
        raise CliFailure(EXIT_DIMS, str(exc)) from None
    path = _out_path(args, e["output"])
    save_dataset([seq], path)
    _emit(path)


def _model_config(rc, train, args):
    m = dict(rc.section("model"))
    n_labels = m.pop("n_labels")
    if n_labels is None:
        seen = max(int(s.labels.max()) for s in train if s.length) + 1
        n_labels = max(seen, rc.section("generator")["n_classes"]) if rc.given["generator"] else seen
    dims = train[0].feature_dims
    try:
        return model.ModelConfig(n_views=len(dims), feature_dims=dims, n_labels=n_labels,
                                 attention=_attention_mode(args),
                                 transitions=not args.no_transitions, **m)
    except TooManyViews as exc:
        raise CliFailure(EXIT_DIMS, str(exc)) from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[model]: {exc}") from None


def _decode_all(seqs, params, mode, use_transitions):
    trans = model.decode_transitions(params)
    if not use_transitions:
        trans = np.zeros_like(trans)
    out = []
    for s in seqs:
        u = model.predict_unaries(s, params, mode)
        out.append(decode.viterbi_decode(u, trans) if s.length else decode.Ethogram(np.zeros(0, np.int64), u))
    return out


def cmd_train(args, rc):
    d = rc.section("data")
    train = _load(_out_path(args, d["train"]), EXIT_DIMS)
    cfg = _model_config(rc, train, args)
    try:
        params, trace = model.train(
            train, cfg, log=lambda r: log.info("epoch %d loss %.6f", r.epoch, r.loss))
    except (DimMismatch, LabelOutOfRange) as exc:
        raise CliFailure(EXIT_DIMS, str(exc)) from None
    ckpt = _out_path(args, d["checkpoint"])
    trace_path = os.path.splitext(ckpt)[0] + "_trace.csv"
    model.save_checkpoint(params, ckpt)
    model.write_trace(trace, trace_path)
    etho = _decode_all(train, params, cfg.attention, cfg.transitions)
    truth = np.concatenate([s.labels for s in train])
    pred = np.concatenate([e.labels for e in etho])
    _, avg = decode.per_class_accuracy(truth, pred, cfg.n_labels)
    _emit(ckpt, trace_path, f"{avg:.6f}")


def cmd_eval(args, rc):
    d = rc.section("data")
    ckpt = _out_path(args, d["checkpoint"])
    try:
        params = model.load_checkpoint(ckpt)
    except FileNotFoundError:
        raise CliFailure(EXIT_CONFIG, f"checkpoint not found: {ckpt}") from None
    except CheckpointMismatch as exc:
        raise CliFailure(EXIT_CHECKPOINT, f"{ckpt}: {exc}") from None
    cfg = params.config
    test = _load(_out_path(args, d["test"]), EXIT_CHECKPOINT)
    if test[0].feature_dims != cfg.feature_dims:
        raise CliFailure(EXIT_CHECKPOINT, f"test view dims {test[0].feature_dims} do not match "
                                          f"checkpoint {cfg.feature_dims}")
    top = max(int(s.labels.max()) for s in test if s.length)
    if top >= cfg.n_labels:
        raise CliFailure(EXIT_CHECKPOINT, f"test label {top} outside the checkpoint's {cfg.n_labels} labels")
    names = d["class_names"] or tuple(str(n) for n in range(cfg.n_labels))
    if len(names) != cfg.n_labels:
        raise ConfigError(f"[data] class_names lists {len(names)} names for {cfg.n_labels} labels")
    mode = _attention_mode(args) if (args.shared_only or args.no_attention) else cfg.attention
    use_trans = cfg.transitions and not args.no_transitions
    etho = _decode_all(test, params, mode, use_trans)
    truth = np.concatenate([s.labels for s in test])
    pred = np.concatenate([e.labels for e in etho])
    scores = np.concatenate([e.scores for e in etho], axis=0)
    report = decode.metrics_report(truth, pred, scores, list(names))
    metrics_path = _out_path(args, "metrics.json")
    decode.write_metrics(report, metrics_path)
    edir = _out_path(args, "ethograms")
    os.makedirs(edir, exist_ok=True)
    written = [metrics_path]
    for s, e in zip(test, etho):
        sid = s.id or f"seq{len(written):04d}"
        written += decode.export_ethogram(e, os.path.join(edir, f"{sid}_pred"), cfg.n_labels)
        written += decode.export_ethogram(decode.Ethogram(s.labels), os.path.join(edir, f"{sid}_truth"),
                                          cfg.n_labels)
    _emit(*written, f"{report['average']:.6f}")


COMMANDS = {"synth": cmd_synth, "encode": cmd_encode, "train": cmd_train, "eval": cmd_eval}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="INI configuration file (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override every seed in the configuration")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--no-transitions", action="store_true", help="drop label transitions (B = 0)")
    common.add_argument("--no-attention", action="store_true", help="uniform weights over all latents")
    common.add_argument("--shared-only", action="store_true", help="use only the all-view posterior")
    common.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    p = argparse.ArgumentParser(
        prog="mvladdm", description="Multi-view latent-attention behaviour labelling.",
        epilog=cfgmod.describe_keys() + "\n\nexit codes: 2 config, 3 malformed binary, "
               "4 dimension mismatch, 5 checkpoint mismatch",
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, metavar="{synth,encode,train,eval}")
    helps = {"synth": "generate a synthetic train/test split",
             "encode": "turn raw volumes/flows/maps into window Fisher vectors",
             "train": "fit a model and write checkpoint + loss trace",
             "eval": "decode a test set; write metrics JSON and ethograms"}
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text,
                       epilog=cfgmod.describe_keys(), formatter_class=argparse.RawDescriptionHelpFormatter)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.shared_only and args.no_attention:
        print("mvladdm: --shared-only and --no-attention are exclusive", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(stream=sys.stderr, format="%(message)s",
                        level=logging.INFO if args.verbose else logging.WARNING)
    try:
        rc = cfgmod.load_config(args.config, args.seed)
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](args, rc)
    except CliFailure as exc:
        print(f"mvladdm {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"mvladdm {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MvladdmError, OSError) as exc:
        print(f"mvladdm {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
