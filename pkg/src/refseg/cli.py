"""Command-line interface.

Subcommands: train, eval, ablate, dump-attn, gen-data. Flags mirror the
config fields; --config points at a flat "key = value" file and explicit
flags override it. Exit codes: 0 success, 2 config error, 3 numerical
abort.
"""

import argparse
import os
import sys

import numpy as np

from . import data as data_mod
from . import serial, train as train_mod
from .config import TrainConfig, load_config, parse_flat
from .decoder import binarize
from .errors import ConfigError, InputError, NumericsError
from .model import ReferringSegmenter
from .serial import (export_dataset, import_dataset, load_checkpoint,
                     summary_to_csv, trace_to_csv, word_attention_summary,
                     write_pbm, write_pgm)

_CONFIG_FLAGS = [
    ("--h", int, "h"), ("--w", int, "w"), ("--c", int, "c"),
    ("--c-text", int, "c_text"), ("--max-tokens", int, "max_tokens"),
    ("--vocab-size", int, "vocab_size"),
    ("--tau", float, "tau"), ("--ma-blocks", int, "ma_blocks"),
    ("--dec-blocks", int, "dec_blocks"), ("--heads", int, "heads"),
    ("--cba-depth", int, "cba_depth"),
    ("--gamma", float, "gamma"), ("--focal-weight", float, "focal_weight"),
    ("--dice-weight", float, "dice_weight"),
    ("--binarize-threshold", float, "binarize_threshold"),
    ("--lr", float, "lr"), ("--lr-decay", float, "lr_decay"),
    ("--epochs", int, "epochs"), ("--batch-size", int, "batch_size"),
    ("--seed", int, "seed"),
    ("--train-samples", int, "train_samples"),
    ("--eval-samples", int, "eval_samples"),
    ("--min-shapes", int, "min_shapes"), ("--max-shapes", int, "max_shapes"),
]


def _add_config_flags(p):
    p.add_argument("--config", help="flat key = value config file")
    for flag, typ, _ in _CONFIG_FLAGS:
        p.add_argument(flag, type=typ, default=None)
    p.add_argument("--no-attn-mask", action="store_true",
                   help="disable the relevance gate in cross-modal attention")
    p.add_argument("--toi-a", action="store_true",
                   help="enable the token-to-image decoder layer variant")
    p.add_argument("--no-fe", action="store_true",
                   help="bypass feature fusion (deep map straight to attention)")


def _config_from_args(args):
    overrides = {}
    for flag, _, name in _CONFIG_FLAGS:
        v = getattr(args, name)
        if v is not None:
            overrides[name] = v
    if args.no_attn_mask:
        overrides["attn_mask_enabled"] = False
    if args.toi_a:
        overrides["toi_a_enabled"] = True
    if args.no_fe:
        overrides["fe_enabled"] = False
    if args.config:
        return load_config(args.config, **overrides)
    return TrainConfig(**overrides)


def _meta_config(meta):
    text = "\n".join(f"{k[len('config.'):]} = {v}" for k, v in meta.items()
                     if k.startswith("config."))
    return TrainConfig(**parse_flat(text))


def _load_model(ckpt):
    meta = serial.read_meta(ckpt + ".meta")
    if not meta:
        raise ConfigError(f"missing sidecar {ckpt}.meta")
    cfg = _meta_config(meta)
    model = ReferringSegmenter(cfg)
    load_checkpoint(ckpt, model)
    return model, cfg, meta


def _dataset_for(cfg, args):
    if getattr(args, "data", None):
        samples, manifest = import_dataset(args.data)
        if int(manifest.get("image_size", 4 * cfg.h)) != 4 * cfg.h:
            raise ConfigError("dataset image size does not match model dims")
        if int(manifest.get("max_tokens", cfg.max_tokens)) != cfg.max_tokens:
            raise ConfigError("dataset token length does not match model dims")
        return samples
    _, eval_set = train_mod.build_datasets(cfg)
    return eval_set


def cmd_train(args):
    cfg = _config_from_args(args)
    log = None
    if not args.quiet:
        log = lambda row: print(
            f"step {row[0]:>6} epoch {row[1]:>4} lr {row[2]:.2e} "
            f"total {row[3]:.5f} focal {row[4]:.5f} dice {row[5]:.5f}")
    result = train_mod.train(cfg, out_dir=args.out, log_fn=log)
    rep = result.eval_rows[-1][2]
    print(rep.serialize(), end="")
    print(f"checkpoint: {result.checkpoint}")
    return 0


def cmd_eval(args):
    model, cfg, _ = _load_model(args.ckpt)
    samples = _dataset_for(cfg, args)
    report = train_mod.evaluate(model, samples)
    print(report.serialize(), end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "eval.csv"), "w", encoding="utf-8") as fh:
            fh.write(report.serialize())
        with open(os.path.join(args.out, "per_sample_iou.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write("sample,iou\n")
            for i, v in enumerate(report.per_sample):
                fh.write(f"{i},{v:.6f}\n")
        if args.export_masks:
            model.eval()
            for i, s in enumerate(samples):
                pred = model.forward(s)
                write_pgm(os.path.join(args.out, f"pred_{i:05d}.pgm"),
                          pred.probs.data)
                write_pbm(os.path.join(args.out, f"pred_{i:05d}.pbm"),
                          binarize(pred.probs.data, cfg.binarize_threshold))
    return 0


def cmd_ablate(args):
    cfg = _config_from_args(args)
    if args.variants == "tau-sweep":
        variants = train_mod.tau_sweep_variants()
    else:
        variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    rows = train_mod.ablate(cfg, variants, out_dir=args.out)
    print(train_mod.ablation_table(rows), end="")
    return 0


def cmd_dump_attn(args):
    model, cfg, _ = _load_model(args.ckpt)
    model.eval()
    if args.data:
        samples, _ = import_dataset(args.data)
    else:
        _, samples = train_mod.build_datasets(cfg)
    if not (0 <= args.sample_index < len(samples)):
        raise ConfigError(f"sample index {args.sample_index} out of range")
    sample = samples[args.sample_index]
    pred, traces = model.forward(sample, return_traces=True)
    os.makedirs(args.out, exist_ok=True)
    for b, trace in enumerate(traces):
        with open(os.path.join(args.out, f"attention_block{b}.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write(trace_to_csv(trace))
    mask = binarize(pred.probs.data, cfg.binarize_threshold)
    pixels = np.nonzero(mask[::4, ::4].reshape(-1))[0]  # feature-grid pixel set
    summary = word_attention_summary(traces[-1], pixels)
    with open(os.path.join(args.out, "word_attention.csv"), "w",
              encoding="utf-8") as fh:
        fh.write(summary_to_csv(summary, tokens=sample.tokens))
    write_pgm(os.path.join(args.out, "pred_probs.pgm"), pred.probs.data)
    write_pbm(os.path.join(args.out, "pred_mask.pbm"), mask)
    print(f"wrote {len(traces)} attention dumps to {args.out}")
    return 0


def cmd_gen_data(args):
    cfg = _config_from_args(args)
    n = args.n if args.n is not None else cfg.train_samples
    samples = data_mod.generate_dataset(
        cfg.seed, n, image_size=4 * cfg.h, max_tokens=cfg.max_tokens,
        min_shapes=cfg.min_shapes, max_shapes=cfg.max_shapes)
    export_dataset(args.out, samples, cfg.seed, export_pgm=args.export_pgm)
    print(f"wrote {n} samples to {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="refseg",
                                description="referring-expression segmentation "
                                            "on synthetic scenes")
    sub = p.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("train", help="train a model")
    _add_config_flags(pt)
    pt.add_argument("--out", required=True)
    pt.add_argument("--quiet", action="store_true")
    pt.set_defaults(fn=cmd_train)

    pe = sub.add_parser("eval", help="evaluate a checkpoint")
    pe.add_argument("--ckpt", required=True)
    pe.add_argument("--data", help="dataset directory (default: regenerate)")
    pe.add_argument("--out")
    pe.add_argument("--export-masks", action="store_true")
    pe.set_defaults(fn=cmd_eval)

    pa = sub.add_parser("ablate", help="run ablation variants")
    _add_config_flags(pa)
    pa.add_argument("--variants", required=True,
                    help="comma list (base,no-attn-mask,no-fe,toi-a,ma-blocks=N,"
                         "tau=X) or 'tau-sweep'")
    pa.add_argument("--out")
    pa.set_defaults(fn=cmd_ablate)

    pd = sub.add_parser("dump-attn", help="dump attention traces for one sample")
    pd.add_argument("--ckpt", required=True)
    pd.add_argument("--data")
    pd.add_argument("--sample-index", type=int, default=0)
    pd.add_argument("--out", required=True)
    pd.set_defaults(fn=cmd_dump_attn)

    pg = sub.add_parser("gen-data", help="generate and export a dataset")
    _add_config_flags(pg)
    pg.add_argument("--out", required=True)
    pg.add_argument("--n", type=int)
    pg.add_argument("--export-pgm", action="store_true")
    pg.set_defaults(fn=cmd_gen_data)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, InputError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except NumericsError as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
