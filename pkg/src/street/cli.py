"""Command-line entry point: ``street <subcommand> [flags]``.

Exit codes: 0 on success, 1 on a usage error, 2 on a data error (missing or
malformed files, schema violations, records that do not fit the model).
Every run echoes its effective configuration to stderr so it can be replayed.
"""

from __future__ import annotations

import argparse
import ast
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .dataset import (SUBSETS, SignExample, corpus_stats, filter_encodable, format_stats, make_splits, read_records,
                      validate_example, write_records)
from .dataset.records import iter_record_file
from .metrics import score
from .model import (PRESETS, StreetConfig, build, checkpoint_meta, count_params, expected_counts, load_checkpoint,
                    predict_text, preset)
from .rng import derive_seed
from .textproc import Charset, fsns_charset, load_charset, mini_charset
from .trainer import evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

# reader weights and total as printed in the reference count table, which
# assumes deeper reader inputs than the described summarizer wiring provides
REFERENCE_READERS = "263168x2 + 394240"
REFERENCE_TOTAL = "2.2M"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _key_values(items: Sequence[str] | None, what: str) -> dict[str, str]:
    out = {}
    for item in items or ():
        key, eq, value = item.partition("=")
        if not eq or not key.strip():
            raise UsageError(f"{what}: expected KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _read_overlay(path: str) -> dict[str, str]:
    lines = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if line and not line.startswith("#"):
                lines.append(line)
    return _key_values(lines, path)


def _overlay_argv(sub: argparse.ArgumentParser, overlay: dict[str, str]) -> list[str]:
    """Turn config-file entries into flags placed before the command-line ones, so flags win."""
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    argv: list[str] = []
    for key, value in overlay.items():
        action = actions.get(key.replace("-", "_"))
        if action is None or action.dest in ("config", "help"):
            raise UsageError(f"config key {key!r} is not a flag of {sub.prog}")
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if value.lower() in ("1", "true", "yes", "on"):
                argv.append(flag)
        elif isinstance(action, argparse._AppendAction):
            argv += [x for v in value.split(",") if v for x in (flag, v)]
        else:
            argv += [flag, value]
    return argv


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="top-level seed; per-module seeds are derived from it")
    p.add_argument("--config", metavar="FILE", help="KEY=VALUE lines used as defaults; flags win")
    p.add_argument("--no-timestamps", action="store_true", help="omit wall-clock times from logs")
    return p


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), default="full")
    p.add_argument("--charset", metavar="FILE", help="charset file; defaults to the preset's built-in charset")


def build_parser() -> _Parser:
    common = _common()
    top = _Parser(prog="street", description="Street-name sign transcription toolkit.")
    top.add_argument("--version", action="version", version=f"street {__version__}")
    subs = top.add_subparsers(dest="command", metavar="SUBCOMMAND", required=True, parser_class=_Parser)

    p = subs.add_parser("gen", parents=[common], help="generate synthetic sign records")
    _model_flags(p)
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--style", action="append", metavar="KEY=VALUE", help="sign style field, repeatable")
    p.add_argument("--signs-per-street", type=float, default=3.0)

    p = subs.add_parser("split", parents=[common], help="geographic split with walls and truth dedup")
    _model_flags(p)
    p.add_argument("--in", dest="input", required=True, metavar="FILE")
    p.add_argument("--out-dir", required=True, metavar="DIR")
    p.add_argument("--wall-m", type=float, default=100.0)
    p.add_argument("--fractions", metavar="NAME=F,...", help="subset fractions, west to east")

    p = subs.add_parser("stats", parents=[common], help="per-subset word and OOV statistics")
    p.add_argument("dir", metavar="DIR", help="directory holding <subset>.fsnl files")
    p.add_argument("--frequent", type=int, metavar="N", help="also drop words seen more than N times in train")

    p = subs.add_parser("train", parents=[common], help="train a model with CTC and Adam")
    _model_flags(p)
    p.add_argument("--records", required=True, metavar="FILE")
    p.add_argument("--out-dir", required=True, metavar="DIR")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--eval-every", type=int, default=0)
    p.add_argument("--lr", type=float, default=2e-5)
    p.add_argument("--clip", type=float, help="clip gradients to this L2 norm")
    p.add_argument("--arch", action="append", metavar="KEY=VALUE", help="model config field override, repeatable")

    p = subs.add_parser("eval", parents=[common], help="score a model, or two parallel transcript files")
    p.add_argument("--checkpoint", metavar="FILE")
    p.add_argument("--records", metavar="FILE")
    p.add_argument("--dump", metavar="FILE", help="write truth<TAB>output lines here")
    p.add_argument("--truth", metavar="FILE", help="scorer mode: one truth string per line")
    p.add_argument("--output", metavar="FILE", help="scorer mode: one transcript per line, parallel to the truth")

    p = subs.add_parser("predict", parents=[common], help="transcribe records or one image")
    p.add_argument("--checkpoint", required=True, metavar="FILE")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--records", metavar="FILE")
    src.add_argument("--image", metavar="FILE", help="H x W x 3 uint8 array saved with numpy")
    p.add_argument("--index", type=int, help="only this record")

    p = subs.add_parser("params", parents=[common], help="per-layer parameter counts")
    p.add_argument("--preset", choices=sorted(PRESETS), default="full")
    p.add_argument("--wiring", choices=("prose", "table"), default="prose")

    p = subs.add_parser("inspect", parents=[common], help="human-readable dump of an FSNS-lite file")
    p.add_argument("file", metavar="FILE")
    p.add_argument("--limit", type=int, default=20)
    p.add_argument("--preset", choices=sorted(PRESETS), help="also validate records against this preset")
    p.add_argument("--charset", metavar="FILE")
    return top


def parse(argv: Sequence[str]) -> argparse.Namespace:
    top = build_parser()
    args = top.parse_args(argv)
    if args.config:
        overlay = _read_overlay(args.config)
        subs = next(a for a in top._actions if isinstance(a, argparse._SubParsersAction))
        sub = subs.choices[args.command]
        pos = list(argv).index(args.command)
        argv = list(argv[:pos + 1]) + _overlay_argv(sub, overlay) + list(argv[pos + 1:])
        args = top.parse_args(argv)
    return args


def _effective(args: argparse.Namespace) -> str:
    items = sorted((k, v) for k, v in vars(args).items() if k != "command")
    return f"# street {args.command} " + " ".join(f"{k}={v}" for k, v in items)


def _charset(args, name: str | None = None) -> Charset:
    if getattr(args, "charset", None):
        with open(args.charset, encoding="utf-8") as fh:
            return load_charset(fh)
    return mini_charset() if (name or args.preset) == "mini" else fsns_charset()


def _cmd_gen(args, out) -> int:
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    from .dataset.synth import SignStyle, synth_corpus

    cfg = preset(args.preset)
    style = SignStyle.from_mapping(_key_values(args.style, "--style"))
    cs = _charset(args)
    examples = synth_corpus(derive_seed(args.seed, "gen"), args.count, preset=args.preset, style=style, cs=cs,
                            tile=cfg.tile_size, views=cfg.views, signs_per_street=args.signs_per_street)
    n = write_records(args.out, examples)
    print(f"wrote {n} records to {args.out}", file=out)
    return EXIT_OK


def _parse_fractions(text: str | None) -> dict[str, float] | None:
    if not text:
        return None
    try:
        return {k: float(v) for k, v in _key_values(text.split(","), "--fractions").items()}
    except ValueError as exc:
        raise UsageError(f"--fractions: {exc}") from None


def _cmd_split(args, out) -> int:
    fractions = _parse_fractions(args.fractions)
    cs = _charset(args)
    examples, unencodable = filter_encodable(read_records(args.input), cs)
    split = make_splits(examples, fractions, wall_m=args.wall_m)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    print("subset\trecords\tdropped_duplicate", file=out)
    for name in split.names():
        write_records(out_dir / f"{name}.fsnl", split[name])
        print(f"{name}\t{len(split[name])}\t{split.dropped_duplicate[name]}", file=out)
    print(f"dropped_unencodable\t{unencodable}", file=out)
    print(f"dropped_wall\t{split.dropped_wall}", file=out)
    print(f"dropped_unassigned\t{split.dropped_unassigned}", file=out)
    return EXIT_OK


def _cmd_stats(args, out) -> int:
    root = Path(args.dir)
    subsets = {name: list(read_records(root / f"{name}.fsnl")) for name in SUBSETS if (root / f"{name}.fsnl").exists()}
    if "train" not in subsets:
        raise FileNotFoundError(f"{root / 'train.fsnl'} not found")
    out.write(format_stats(corpus_stats(subsets, frequent_threshold=args.frequent)))
    return EXIT_OK


def _arch_overrides(items) -> dict:
    kw = {}
    for key, value in _key_values(items, "--arch").items():
        if key not in StreetConfig.__dataclass_fields__ or key == "preset":
            raise UsageError(f"--arch: unknown model field {key!r}")
        if key == "wiring":
            kw[key] = value
            continue
        try:
            kw[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            raise UsageError(f"--arch: cannot parse {key}={value!r}") from None
        if isinstance(kw[key], list):
            kw[key] = tuple(tuple(v) if isinstance(v, list) else v for v in kw[key])
    return kw


def _cmd_train(args, out) -> int:
    cs = _charset(args)
    cfg = preset(args.preset, **_arch_overrides(args.arch))
    if cfg.classes != cs.size:
        print(f"# classes set to {cs.size} to match the charset", file=sys.stderr)
        cfg = preset(args.preset, **{**_arch_overrides(args.arch), "classes": cs.size})
    model = build(cfg, seed=derive_seed(args.seed, "init"))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "train.log", "w", encoding="utf-8") as log_fh:
        log = train(model, args.records, args.steps, batch_size=args.batch, eval_every=args.eval_every,
                    seed=derive_seed(args.seed, "train"), lr=args.lr, clip=args.clip, out_dir=out_dir, cs=cs,
                    timestamps=not args.no_timestamps, log_sink=log_fh, meta={"charset": cs.dumps()})
    losses = log.losses()
    last = f"{losses[-1]:.6f}" if losses else "n/a"
    print(f"steps\t{len(losses)}\nfinal_loss\t{last}\ncheckpoint\t{out_dir / 'final.fsnl'}", file=out)
    return EXIT_OK


def _model_and_charset(path: str):
    model = load_checkpoint(path)
    text = checkpoint_meta(path).get("charset")
    cs = load_charset(text) if text else _charset(argparse.Namespace(charset=None), model.config.preset)
    return model, cs


def _read_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\r\n") for line in fh]


def _cmd_eval(args, out) -> int:
    if args.output:
        # scorer mode: transcripts against a truth file or the truth text of a record file
        if args.checkpoint or bool(args.truth) == bool(args.records):
            raise UsageError("scorer mode takes --output with exactly one of --truth or --records")
        truth = _read_lines(args.truth) if args.truth else [ex.text for ex in read_records(args.records)]
        output = _read_lines(args.output)
        if len(truth) != len(output):
            raise ValueError(f"{len(truth)} truth strings but {len(output)} transcripts in {args.output}")
        out.write(score(list(zip(truth, output))).format())
        return EXIT_OK
    if args.truth or not (args.checkpoint and args.records):
        raise UsageError("eval needs --checkpoint and --records, or --output with --truth or --records")
    model, cs = _model_and_charset(args.checkpoint)
    if args.dump:
        with open(args.dump, "w", encoding="utf-8") as fh:
            report, _ = evaluate(model, args.records, cs, dump=fh)
    else:
        report, _ = evaluate(model, args.records, cs)
    out.write(report.format())
    return EXIT_OK


def _cmd_predict(args, out) -> int:
    model, cs = _model_and_charset(args.checkpoint)
    if args.image:
        pixels = np.load(args.image, allow_pickle=False)
        cfg = model.config
        if pixels.shape != (cfg.tile_size, cfg.tile_size * cfg.views, 3) or pixels.dtype != np.uint8:
            raise ValueError(f"{args.image}: expected a {cfg.tile_size}x{cfg.tile_size * cfg.views}x3 uint8 array, "
                             f"got {pixels.shape} {pixels.dtype}")
        print(predict_text(model, pixels, cs), file=out)
        return EXIT_OK
    for i, ex in enumerate(read_records(args.records)):
        if args.index is not None and i != args.index:
            continue
        problems = validate_example(ex, tile=model.config.tile_size, views=model.config.views)
        if problems:
            raise ValueError(f"record {i}: {problems[0]}")
        print(f"{i}\t{predict_text(model, ex.image(), cs)}", file=out)
    return EXIT_OK


def _cmd_params(args, out) -> int:
    cfg = preset(args.preset, wiring=args.wiring)
    counts = count_params(cfg)
    if counts != expected_counts(cfg):
        raise ValueError("allocated parameter shapes disagree with the closed-form counts")
    for layer, n in counts.items():
        print(f"{layer} {n}", file=out)
    if args.preset == "full":
        readers = [counts[f"BidiLSTM.{r}"] for r in ("top", "middle", "bottom")]
        if args.wiring == "prose":
            print(f"deviation: reference readers {REFERENCE_READERS} and total {REFERENCE_TOTAL} assume reader "
                  f"inputs of 128/256/128; the summarizer wiring feeds 64/128/64, giving "
                  f"{' / '.join(map(str, readers))} and total {counts['Total']} "
                  f"(--wiring table reproduces the reference figures)", file=out)
        else:
            print(f"note: table wiring reproduces reference readers {REFERENCE_READERS} and total "
                  f"{REFERENCE_TOTAL} ({counts['Total']})", file=out)
    return EXIT_OK


def _show(value) -> str:
    if isinstance(value, bytes):
        return f"<{len(value)} bytes>"
    if isinstance(value, list) and len(value) > 40:
        return f"{value[:40]}... ({len(value)} ids)"
    return repr(value)


def _cmd_inspect(args, out) -> int:
    cs = _charset(args) if args.preset else None
    cfg = preset(args.preset) if args.preset else None
    total = 0
    for i, rec in enumerate(iter_record_file(args.file)):
        total += 1
        if i >= args.limit:
            continue
        print(f"record {i}", file=out)
        for key in sorted(rec):
            print(f"  {key}: {_show(rec[key])}", file=out)
        if cfg is not None and "image/encoded" in rec:
            problems = validate_example(SignExample.from_fields(rec), cs, cfg.tile_size, cfg.views)
            for problem in problems:
                print(f"  problem: {problem}", file=out)
    print(f"{total} records", file=out)
    return EXIT_OK


COMMANDS = {
    "gen": _cmd_gen, "split": _cmd_split, "stats": _cmd_stats, "train": _cmd_train, "eval": _cmd_eval,
    "predict": _cmd_predict, "params": _cmd_params, "inspect": _cmd_inspect,
}


def run(argv: Sequence[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse(argv)
        print(_effective(args), file=err)
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=err)
        return EXIT_USAGE
    except (ValueError, OSError, StopIteration) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
