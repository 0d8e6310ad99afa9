"""Command-line entry point: ``motalign <command> [options]``.

Config files are flat ``key = value`` documents (``#`` starts a comment).
Recognised keys and their types::

    seed                 int     top-level seed for every random stream
    classes              list    comma-separated motion classes
    samples_per_class    int
    frames               int
    mirror_augment       bool
    train_ratio          float
    val_ratio            float
    test_ratio           float
    skeleton             str
    total_epochs         int
    freeze_epochs        int
    batch_size           int
    lr                   float
    beta1, beta2, eps    float
    weight_decay         float
    grad_clip            float
    lambda_distill       float
    positional_encoding  bool
    cross_limb           bool
    dense_w              bool
    naive_mode           bool
    dim, width, heads    int
    spatial_layers       int
    temporal_layers      int
    text_layers          int
    context_length       int
    runs                 int     evaluation repetitions
    split                str     train, val, test or heldout
    pool_size            int
    mm_captions          int
    distractors          str     class, caption or any

Exit codes: 0 success, 2 configuration error, 3 data or format error,
4 numerical failure.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, FormatError, MotalignError
from .evaluate import EvalConfig, evaluate, student_teacher_mse
from .synth import DatasetConfig, generate_dataset, read_dataset, select_split, split_counts, write_dataset
from .trainer import TrainConfig, from_checkpoint, init_state, to_checkpoint, train

LAMBDA_SWEEP = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
NAIVE_SWEEP = (2, 5, 7, 10)
AXES = ("lambda", "naive-unfreeze")
TABLE_COLUMNS = ("top1", "top2", "top3", "fid", "mm_dist", "diversity")

_EVAL_KEYS = {"runs": int, "split": str, "pool_size": int, "mm_captions": int, "distractors": str}


def _parse_bool(text):
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _key_types():
    types = {"seed": int, "classes": tuple}
    for cls in (DatasetConfig, TrainConfig):
        for f in fields(cls):
            if f.name in types:
                continue
            default = f.default
            types[f.name] = type(default) if not isinstance(default, tuple) else tuple
    types.update(_EVAL_KEYS)
    return types


KEY_TYPES = _key_types()


def _convert(key, raw):
    kind = KEY_TYPES[key]
    try:
        if kind is bool:
            return _parse_bool(raw)
        if kind is tuple:
            return tuple(x.strip() for x in raw.split(",") if x.strip())
        return kind(raw)
    except ValueError:
        raise ConfigError(f"config key {key!r} expects {kind.__name__}, got {raw!r}") from None


def parse_config(text, source="<config>"):
    """Parse a flat ``key = value`` document into a typed dict."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in KEY_TYPES:
            raise ConfigError(
                f"{source}:{lineno}: unknown config key {key!r}; accepted keys: {', '.join(sorted(KEY_TYPES))}"
            )
        out[key] = _convert(key, raw)
    return out


def load_config(path, seed=None):
    values = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                values = parse_config(fh.read(), path)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    if seed is not None:
        values["seed"] = seed
    return values


def _pick(cls, values):
    names = {f.name for f in fields(cls)}
    return cls(**{k: v for k, v in values.items() if k in names})


def dataset_config(values):
    return _pick(DatasetConfig, values)


def train_config(values):
    return _pick(TrainConfig, values)


def eval_config(values, runs=None):
    cfg = _pick(EvalConfig, values)
    if runs is not None:
        cfg.runs = runs
    return cfg


# ------------------------------------------------------------------ manifest


def git_blob_hash(data):
    """Hash of ``data`` as git would name it as a blob object."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def file_hash(path):
    with open(path, "rb") as fh:
        return git_blob_hash(fh.read())


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    artifacts: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def content_hash(self):
        """Combined hash over artifact hashes; independent of wall-clock time."""
        joined = "".join(f"{k}\0{v}\n" for k, v in sorted(self.artifacts.items()))
        return git_blob_hash(joined.encode("utf-8"))

    def add(self, path):
        self.artifacts[os.path.basename(path)] = file_hash(path)

    def write(self, path):
        doc = asdict(self)
        doc["content_hash"] = self.content_hash
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _jsonable(values):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in values.items()}


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def _load_pairs(path):
    if not path:
        raise ConfigError("--data is required")
    try:
        return read_dataset(path)[0]
    except OSError as e:
        raise FormatError(f"cannot read dataset {path}: {e.strerror}") from None


def _load_state(path):
    try:
        return from_checkpoint(load_checkpoint(path))
    except OSError as e:
        raise FormatError(f"cannot read checkpoint {path}: {e.strerror}") from None


# ------------------------------------------------------------------ commands


def cmd_gen_data(args):
    start = time.time()
    values = load_config(args.config, args.seed)
    cfg = dataset_config(values)
    pairs = generate_dataset(cfg)
    out = args.out or "dataset.jsonl"
    write_dataset(out, pairs, cfg.skeleton)
    manifest = RunManifest("gen-data", _jsonable(asdict(cfg)), cfg.seed)
    manifest.add(out)
    manifest.wall_clock = round(time.time() - start, 3)
    manifest.write(out + ".manifest.json")
    print(json.dumps(split_counts(pairs)))
    return 0


def cmd_train(args):
    start = time.time()
    pairs = _load_pairs(args.data)
    out = args.out or "model.ckpt"
    if args.resume:
        state = _load_state(args.resume)
        cfg = state.cfg
    else:
        cfg = train_config(load_config(args.config, args.seed)).validate()
        state = init_state(cfg, [p.text for p in pairs])
    with open(args.data, "rb") as fh:
        data_hash = git_blob_hash(fh.read())

    def on_epoch(entry):
        print(json.dumps(entry, sort_keys=True), flush=True)
        # checkpoint every epoch so an interrupted run can resume
        save_checkpoint(to_checkpoint(state, data_hash), out)

    train(cfg, pairs, state=state, until_epoch=args.until_epoch, on_epoch=on_epoch)
    save_checkpoint(to_checkpoint(state, data_hash), out)
    manifest = RunManifest("train", asdict(cfg), cfg.seed)
    manifest.add(out)
    manifest.wall_clock = round(time.time() - start, 3)
    manifest.write(out + ".manifest.json")
    return 0


def cmd_eval(args):
    state = _load_state(args.checkpoint)
    pairs = _load_pairs(args.data)
    values = load_config(args.config, args.seed)
    report = evaluate(state, pairs, eval_config(values, args.runs))
    _emit(report.to_dict(), args.out)
    return 0


def _sweep_cells(axis, values, base):
    if axis == "lambda":
        values = values or LAMBDA_SWEEP
        return [(v, {**base, "lambda_distill": float(v)}) for v in values]
    if axis == "naive-unfreeze":
        values = values or NAIVE_SWEEP
        total = base.get("total_epochs", TrainConfig.total_epochs)
        cells = []
        for k in values:
            k = int(k)
            if not 0 < k <= total:
                raise ConfigError(f"naive-unfreeze value {k} must lie in [1, total_epochs={total}]")
            cells.append((k, {**base, "naive_mode": True, "freeze_epochs": total - k}))
        return cells
    raise ConfigError(f"unknown sweep axis {axis!r}; accepted values: {', '.join(AXES)}")


def cmd_ablate(args):
    pairs = _load_pairs(args.data)
    base = load_config(args.config, args.seed)
    cells = _sweep_cells(args.axis, args.values, base)
    out_dir = args.out or "ablation"
    os.makedirs(out_dir, exist_ok=True)
    val_captions = [p.text for p in select_split(pairs, "val")]
    table = []
    for i, (setting, values) in enumerate(cells):
        state = train(train_config(values), pairs)
        save_checkpoint(to_checkpoint(state), os.path.join(out_dir, f"cell-{i}.ckpt"))
        report = evaluate(state, pairs, eval_config(values, args.runs))
        row = {"axis": args.axis, "setting": setting}
        row.update({k: report.mean(k) for k in TABLE_COLUMNS})
        row["multimodality"] = report.mean("multimodality")
        row["student_teacher_mse"] = student_teacher_mse(state, val_captions)
        table.append(row)
        print(json.dumps(row, sort_keys=True), file=sys.stderr, flush=True)
    _emit(table, os.path.join(out_dir, "table.json"))
    return 0


def cmd_inspect(args):
    ckpt = load_checkpoint(args.checkpoint)
    print(f"version {ckpt.version}  dtype {ckpt.dtype}  epoch {ckpt.epoch}")
    print(json.dumps(ckpt.config, indent=2, sort_keys=True))
    width = max((len(n) for n in ckpt.tensors), default=4)
    print(f"{'name':<{width}}  shape")
    for name, arr in ckpt.tensors.items():
        print(f"{name:<{width}}  {tuple(arr.shape)}")
    print(f"{len(ckpt.tensors)} tensors, {sum(a.size for a in ckpt.tensors.values())} values")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="top-level seed (overrides the config file)")
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--out", help="output path")
    common.add_argument("--runs", type=int, help="evaluation repetitions")

    parser = argparse.ArgumentParser(
        prog="motalign", description=__doc__.split("\n\n")[0],
        epilog="Config keys: " + ", ".join(sorted(KEY_TYPES)),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate the synthetic dataset")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train and write a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--until-epoch", type=int, help="stop after this epoch")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="run a one-axis sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--axis", required=True, help="lambda or naive-unfreeze")
    p.add_argument("--values", type=float, nargs="+", help="custom sweep values")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect", help="print tensor table and config of a checkpoint")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MotalignError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return FormatError.exit_code


if __name__ == "__main__":
    sys.exit(main())
