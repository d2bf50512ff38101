"""``cmdetect`` command line: synth | train | eval | report.

Option precedence is built-in defaults, then ``--config FILE`` (JSON), then
flags given on the command line. The effective options are written to
``config.json`` in every output directory.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import data as D
from .aggregation import ALL_SCHEMES, Scheme
from .evaluation import EvaluationReport, check_compatible, render_report
from .network import (DimensionError, ModelParams, NumericalError, TrainConfig, load_params,
                      save_params, train, write_loss_trace)
from .pipeline import evaluate, vote_vector
from .seeding import rng_for
from .voting import VoteParams

log = logging.getLogger("cmdetect")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
CONFIG_NAME = "config.json"


class UsageError(Exception):
    pass


DEFAULTS: dict[str, dict[str, Any]] = {
    "synth": {
        "out": None, "seed": 0, "n": 100, "d": 8, "t_min": 20, "t_max": 60,
        "p_inc": 0.5, "noise": 0.05, "n_subjects": 5, "test_fraction": 0.2,
    },
    "train": {
        "data": None, "features": None, "annotations": None, "split": None,
        "subject": None, "out": None, "seed": 0, "epochs": 10, "lr": 1e-2,
        "lr_decay_epochs": [5], "lr_decay_factor": 0.1, "hidden": 128,
        "proj_dim": None, "clip_norm": 5.0,
    },
    "eval": {
        "data": None, "features": None, "annotations": None, "split": None,
        "subject": None, "checkpoint": None, "out": None, "action": "action",
        "schemes": [s.value for s in ALL_SCHEMES], "sigma": 30.0, "beta": 0.5,
        "alpha": 0.1, "vote_dump": [], "workers": 1,
    },
    "report": {"inputs": [], "format": "summary", "out": None},
}


@dataclass
class RunConfig:
    command: str
    options: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"command": self.command, **self.options}, indent=2, sort_keys=True) + "\n"

    def echo(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / CONFIG_NAME).write_text(self.to_json(), encoding="utf-8")

    def __getitem__(self, key: str) -> Any:
        return self.options[key]


def resolve_config(command: str, flags: dict[str, Any], config_path: str | None) -> RunConfig:
    options = dict(DEFAULTS[command])
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        loaded = json.loads(path.read_text(encoding="utf-8"))
        loaded.pop("command", None)
        unknown = set(loaded) - set(options)
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        options.update(loaded)
    options.update({k: v for k, v in flags.items() if v is not None and k in options})
    return RunConfig(command, options)


# ---------------------------------------------------------------------------
# helpers


def _csv_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _require(cfg: RunConfig, *keys: str) -> None:
    for k in keys:
        if cfg[k] in (None, [], ""):
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _load_data(cfg: RunConfig) -> tuple[list[D.FeatureSequence], list[D.CompletionAnnotation]]:
    root = Path(cfg["data"]) if cfg["data"] else None
    features = cfg["features"] or (root / "features" if root else None)
    annotations = cfg["annotations"] or (root / "annotations.jsonl" if root else None)
    if features is None or annotations is None:
        raise UsageError("give --data or both --features and --annotations")
    return D.load_dataset(features, annotations)


def _select(cfg: RunConfig, sequences, annotations, role: str):
    """Sequences and annotations on one side of the configured split."""
    split_spec = cfg["split"]
    if split_spec is None and cfg["data"]:
        split_spec = str(Path(cfg["data"]) / "split.jsonl")
    if split_spec is None:
        raise UsageError("--split is required")
    if split_spec == "leave-one-person-out":
        if cfg["subject"] is None:
            raise UsageError("--subject is required with leave-one-person-out")
        splits = D.make_split(sequences, "leave-one-person-out")
        chosen = [s for s in splits if s.subject == cfg["subject"]]
        if not chosen:
            raise D.DataError(None, f"no sequences for subject {cfg['subject']!r}")
        split = chosen[0]
    else:
        split = D.make_split(sequences, "fixed", D.read_split_file(split_spec))
    keep = set(split.train_ids if role == "train" else split.test_ids)
    pairs = [(s, a) for s, a in zip(sequences, annotations) if s.id in keep]
    if not pairs:
        raise D.DataError(None, f"split has no {role} sequences")
    return [p[0] for p in pairs], [p[1] for p in pairs]


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: RunConfig) -> None:
    _require(cfg, "out")
    if not 0.0 <= cfg["test_fraction"] <= 1.0:
        raise UsageError("--test-fraction must lie in [0, 1]")
    synth = D.SynthConfig(
        n_sequences=cfg["n"], d=cfg["d"], t_min=cfg["t_min"], t_max=cfg["t_max"],
        p_inc=cfg["p_inc"], noise=cfg["noise"], n_subjects=cfg["n_subjects"],
    )
    try:
        synth.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sequences, annotations = D.synthesize_dataset(synth, cfg["seed"])
    out = Path(cfg["out"])
    D.save_dataset(out, sequences, annotations)
    ids = [s.id for s in sequences]
    n_test = int(round(cfg["test_fraction"] * len(ids)))
    order = rng_for(cfg["seed"], "split").permutation(len(ids))
    test = {ids[k] for k in order[:n_test]}
    split = D.DatasetSplit(tuple(i for i in ids if i not in test), tuple(i for i in ids if i in test),
                           "fixed")
    D.write_split_file(out / "split.jsonl", split)
    cfg.echo(out)
    log.info("wrote %d sequences to %s", len(sequences), out)


def _train_config(cfg: RunConfig) -> TrainConfig:
    tc = TrainConfig(
        epochs=cfg["epochs"], lr=cfg["lr"], lr_decay_epochs=tuple(cfg["lr_decay_epochs"]),
        lr_decay_factor=cfg["lr_decay_factor"], hidden=cfg["hidden"],
        proj_dim=cfg["proj_dim"], clip_norm=cfg["clip_norm"], seed=cfg["seed"],
    )
    try:
        tc.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return tc


def cmd_train(cfg: RunConfig) -> None:
    _require(cfg, "out")
    tc = _train_config(cfg)
    sequences, annotations = _load_data(cfg)
    sequences, annotations = _select(cfg, sequences, annotations, "train")
    params = ModelParams.init(sequences[0].d, tc.hidden, tc.seed, tc.proj_dim)
    result = train(params, sequences, annotations, tc)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_params(out / "model.cmp", result.params)
    write_loss_trace(out / "loss.csv", result.epoch_losses)
    cfg.echo(out)


def cmd_eval(cfg: RunConfig) -> None:
    _require(cfg, "checkpoint", "out")
    vote_params = VoteParams(cfg["sigma"], cfg["beta"], cfg["alpha"])
    try:
        vote_params.validate()
        schemes = [Scheme.parse(s) for s in cfg["schemes"]]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ckpt = Path(cfg["checkpoint"])
    if not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    params = load_params(ckpt)
    sequences, annotations = _load_data(cfg)
    sequences, annotations = _select(cfg, sequences, annotations, "test")
    if sequences[0].d != params.d:
        raise DimensionError(f"checkpoint expects d={params.d}, data has d={sequences[0].d}")
    by_id = {s.id: s for s in sequences}
    for sid in cfg["vote_dump"]:
        if sid not in by_id:
            raise D.DataError(sid, "vote dump requested for a sequence not in the test set")
    report, preds = evaluate(params, sequences, annotations, schemes, vote_params,
                             action=cfg["action"], workers=cfg["workers"])

    out = Path(cfg["out"])
    (out / "curves").mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.jsonl", "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(json.dumps(p.to_dict()) + "\n")
    report.save(out / "report.json")
    (out / "report.txt").write_text(
        render_report(report, "summary") + "\n" + render_report(report, "accuracy")
        + "\n" + render_report(report, "rd"), encoding="utf-8")
    for s in report.schemes:
        (out / "curves" / f"{cfg['action']}_{s}.csv").write_text(
            render_report(report, "curve", scheme=s), encoding="utf-8")

    for sid in cfg["vote_dump"]:
        for s in schemes:
            if not s.is_voting:
                continue
            vec = vote_vector(params, by_id[sid], s, vote_params)
            lines = ["j,value"] + [f"{j},{v:.10g}" for j, v in enumerate(vec, 1)]
            (out / f"votes_{sid}_{s.value}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    cfg.echo(out)
    sys.stdout.write(render_report(report, "summary"))


def cmd_report(cfg: RunConfig) -> None:
    _require(cfg, "inputs")
    reports = []
    for p in cfg["inputs"]:
        path = Path(p)
        if path.is_dir():
            path = path / "report.json"
        if not path.is_file():
            raise FileNotFoundError(f"report not found: {path}")
        reports.append(EvaluationReport.load(path))
    check_compatible(reports)
    fmt = cfg["format"]
    if fmt not in ("summary", "accuracy", "rd", "all"):
        raise UsageError(f"unknown format {fmt!r}")
    if fmt == "all":
        text = "\n".join(render_report(reports, f) for f in ("summary", "accuracy", "rd"))
    else:
        text = render_report(reports, fmt)
    if cfg["out"]:
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text, encoding="utf-8")
        cfg.echo(out)
    sys.stdout.write(text)


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "report": cmd_report}


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="dataset directory (features/, annotations.jsonl, split.jsonl)")
    p.add_argument("--features", help="directory of <id>.cmv files")
    p.add_argument("--annotations", help="annotation .jsonl file")
    p.add_argument("--split", help="split .jsonl file, or 'leave-one-person-out'")
    p.add_argument("--subject", help="held-out subject for leave-one-person-out")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cmdetect", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    common.add_argument("--config", help="JSON file of options (flags override it)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset", parents=[common])
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--t-min", type=int)
    p.add_argument("--t-max", type=int)
    p.add_argument("--p-inc", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--n-subjects", type=int)
    p.add_argument("--test-fraction", type=float)

    p = sub.add_parser("train", help="train the recurrent voting node", parents=[common])
    _data_args(p)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-decay-epochs", type=lambda s: [int(x) for x in _csv_list(s)])
    p.add_argument("--lr-decay-factor", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--proj-dim", type=int)
    p.add_argument("--clip-norm", type=float)

    p = sub.add_parser("eval", help="predict completion moments and score them", parents=[common])
    _data_args(p)
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.add_argument("--action")
    p.add_argument("--schemes", type=_csv_list)
    p.add_argument("--sigma", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--vote-dump", type=_csv_list)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("report", help="merge per-action reports into one table", parents=[common])
    p.add_argument("inputs", nargs="*", default=None)
    p.add_argument("--format", choices=["summary", "accuracy", "rd", "all"])
    p.add_argument("--out")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    if args.command == "report" and not flags.get("inputs"):
        flags["inputs"] = None
    try:
        cfg = resolve_config(args.command, flags, args.config)
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"cmdetect {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"cmdetect {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (D.DataError, DimensionError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"cmdetect {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
