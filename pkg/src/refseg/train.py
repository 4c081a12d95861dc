"""Optimization loop, evaluation, and the ablation harness.

Training runs batch-of-1 forwards and accumulates gradients over
`batch_size` samples per optimizer update ("step" = one update). The
learning rate drops by `lr_decay` at epoch milestones placed at fixed
fractions of the run. Encoders are frozen, so their outputs are
precomputed once per dataset. Everything is deterministic under a fixed
master seed in single-threaded mode: stub weights, datasets, trainable
init, and data order come from four independent child streams.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from . import serial
from . import tensor as T
from .config import TrainConfig
from .decoder import binarize
from .errors import ConfigError, NumericsError
from .losses import total_loss
from .metrics import PR_THRESHOLDS, EvalReport, build_report
from .model import ReferringSegmenter, seed_streams


class Adam:
    """Bias-corrected first/second moment update; frozen parameters excluded."""

    def __init__(self, named_params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.triples = [(name, p) for name, p in named_params if not p.frozen]
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = {name: (np.zeros_like(p.data), np.zeros_like(p.data), 0)
                      for name, p in self.triples}

    def parameter_names(self):
        return [name for name, _ in self.triples]

    def step(self):
        for name, p in self.triples:
            g = p.grad
            if g is None:
                continue  # no gradient reached this parameter: leave it alone
            if not np.all(np.isfinite(g)):
                raise NumericsError(f"non-finite gradient in parameter {name!r}")
            m, v, t = self.state[name]
            t += 1
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / (1.0 - self.beta1 ** t)
            vhat = v / (1.0 - self.beta2 ** t)
            p.tensor.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)
            self.state[name] = (m, v, t)


def lr_at_epoch(cfg, epoch):
    lr = cfg.lr
    for m in cfg.milestones():
        if epoch >= m:
            lr *= cfg.lr_decay
    return lr


def dataset_seeds(cfg):
    ss = seed_streams(cfg.seed)["dataset"].generate_state(2)
    return int(ss[0]), int(ss[1])


def build_datasets(cfg):
    train_seed, eval_seed = dataset_seeds(cfg)
    mk = lambda seed, n: data_mod.generate_dataset(
        seed, n, image_size=4 * cfg.h, max_tokens=cfg.max_tokens,
        min_shapes=cfg.min_shapes, max_shapes=cfg.max_shapes)
    return mk(train_seed, cfg.train_samples), mk(eval_seed, cfg.eval_samples)


@dataclass
class TrainResult:
    model: ReferringSegmenter
    loss_rows: list = field(default_factory=list)   # (step, epoch, lr, total, focal, dice)
    eval_rows: list = field(default_factory=list)   # (epoch, step, EvalReport)
    checkpoint: str = ""
    stopped_early: bool = False


def evaluate(model, dataset, threshold=None, bundles=None):
    """Decode + binarize each sample; aggregate IoU and Pr@X."""
    thr = model.cfg.binarize_threshold if threshold is None else threshold
    was_training = model.training
    model.eval()
    preds, gts = [], []
    if bundles is None:
        bundles = [model.encode(s) for s in dataset]
    for sample, bundle in zip(dataset, bundles):
        pred = model.forward_bundle(bundle)
        preds.append(binarize(pred.probs.data, thr))
        gts.append(sample.target_mask)
    if was_training:
        model.train()
    return build_report(preds, gts)


def constant_mask_baseline(dataset):
    """Predict-everything oracle: per-sample IoU is |gt| / total pixels."""
    preds = [np.ones_like(s.target_mask, dtype=bool) for s in dataset]
    return build_report(preds, [s.target_mask for s in dataset])


def train(cfg, train_set=None, eval_set=None, out_dir=None, eval_every=None,
          log_fn=None, stop_when=None, max_steps=None):
    """Returns a TrainResult; writes loss/metric CSVs and a checkpoint when
    out_dir is given. `stop_when(report)` may end the run at an eval point
    (e.g. once an accuracy bar is met); `max_steps` caps optimizer updates."""
    if train_set is None or eval_set is None:
        gen_train, gen_eval = build_datasets(cfg)
        train_set = gen_train if train_set is None else train_set
        eval_set = gen_eval if eval_set is None else eval_set
    if not train_set:
        raise ConfigError("training dataset is empty")

    model = ReferringSegmenter(cfg)
    model.train()
    optimizer = Adam(model.trainable_parameters(), cfg.lr)
    order_rng = np.random.default_rng(seed_streams(cfg.seed)["order"])
    train_bundles = [model.encode(s) for s in train_set]
    eval_bundles = [model.encode(s) for s in eval_set]
    if eval_every is None:
        eval_every = max(1, cfg.epochs // 8)

    result = TrainResult(model=model)
    ckpt_path = os.path.join(out_dir, "checkpoint.bin") if out_dir else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    def save(epoch, step):
        if not ckpt_path:
            return
        losses = [row[3] for row in result.loss_rows]
        serial.save_checkpoint(ckpt_path, model, meta={
            "epoch": epoch, "step": step, "loss_digest": serial.loss_digest(losses),
            **{f"config.{k}": v for k, v in
               (line.split(" = ") for line in cfg.to_flat().strip().splitlines())},
        })
        result.checkpoint = ckpt_path

    step = 0
    try:
        for epoch in range(cfg.epochs):
            lr = lr_at_epoch(cfg, epoch)
            optimizer.lr = lr
            order = order_rng.permutation(len(train_set))
            at = 0
            while at < len(order):
                group = order[at:at + cfg.batch_size]
                at += len(group)
                model.zero_grad()
                tot_v = foc_v = dic_v = 0.0
                for idx in group:
                    sample, bundle = train_set[idx], train_bundles[idx]
                    pred = model.forward_bundle(bundle)
                    loss, lf, ld = total_loss(
                        pred.probs, sample.target_mask.astype(np.float64),
                        focal_weight=cfg.focal_weight / len(group),
                        dice_weight=cfg.dice_weight / len(group),
                        gamma=cfg.gamma)
                    T.backward(loss)
                    tot_v += float(loss.data)
                    foc_v += float(lf.data) / len(group)
                    dic_v += float(ld.data) / len(group)
                optimizer.step()
                step += 1
                row = (step, epoch, lr, tot_v, foc_v, dic_v)
                result.loss_rows.append(row)
                if log_fn:
                    log_fn(row)
                if max_steps is not None and step >= max_steps:
                    raise _StopTraining
            if (epoch + 1) % eval_every == 0 or epoch == cfg.epochs - 1:
                report = evaluate(model, eval_set, bundles=eval_bundles)
                result.eval_rows.append((epoch, step, report))
                if stop_when is not None and stop_when(report):
                    result.stopped_early = True
                    raise _StopTraining
    except _StopTraining:
        pass
    except NumericsError:
        save(epoch, step)  # retain the last state for diagnosis
        _write_logs(out_dir, result)
        raise

    if not result.eval_rows or result.eval_rows[-1][1] != step:
        report = evaluate(model, eval_set, bundles=eval_bundles)
        result.eval_rows.append((min(epoch, cfg.epochs - 1), step, report))
    save(result.eval_rows[-1][0], step)
    _write_logs(out_dir, result)
    return result


class _StopTraining(Exception):
    pass


def _write_logs(out_dir, result):
    if not out_dir:
        return
    with open(os.path.join(out_dir, "loss_curve.csv"), "w", encoding="utf-8") as fh:
        fh.write("step,epoch,lr,total,focal,dice\n")
        for s, e, lr, tot, foc, dic in result.loss_rows:
            fh.write(f"{s},{e},{lr:.10g},{tot:.17g},{foc:.17g},{dic:.17g}\n")
    with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,step,overall_iou,mean_iou,"
                 + ",".join(f"pr@{x}" for x in PR_THRESHOLDS) + "\n")
        for e, s, rep in result.eval_rows:
            pr = ",".join(f"{rep.pr[x]:.4f}" for x in PR_THRESHOLDS)
            fh.write(f"{e},{s},{rep.iou:.6f},{rep.mean_iou:.6f},{pr}\n")


# ---------------------------------------------------------------------------
# ablation harness

def tau_sweep_variants():
    return [f"tau={v / 100:.2f}" for v in range(5, 51, 5)]


def variant_config(cfg, name):
    if name == "base":
        return cfg
    if name == "no-attn-mask":
        return cfg.with_overrides(attn_mask_enabled=False)
    if name == "no-fe":
        return cfg.with_overrides(fe_enabled=False)
    if name == "toi-a":
        return cfg.with_overrides(toi_a_enabled=True)
    if name.startswith("ma-blocks="):
        return cfg.with_overrides(ma_blocks=int(name.split("=", 1)[1]))
    if name.startswith("dec-blocks="):
        return cfg.with_overrides(dec_blocks=int(name.split("=", 1)[1]))
    if name.startswith("tau="):
        return cfg.with_overrides(tau=float(name.split("=", 1)[1]))
    raise ConfigError(f"unknown ablation variant {name!r}")


def ablate(cfg, variants, out_dir=None, log_fn=None):
    """Train each variant on the shared seed/dataset; rows mirror the
    Pr@50..Pr@90 + IoU table layout, base config first."""
    names = list(variants)
    if "base" not in names:
        names.insert(0, "base")
    else:
        names.insert(0, names.pop(names.index("base")))
    train_set, eval_set = build_datasets(cfg)
    rows = []
    for name in names:
        vcfg = variant_config(cfg, name)
        result = train(vcfg, train_set=train_set, eval_set=eval_set, log_fn=log_fn)
        rep = result.eval_rows[-1][2]
        rows.append({"variant": name, **{f"pr@{x}": rep.pr[x] for x in PR_THRESHOLDS},
                     "iou": rep.iou, "mean_iou": rep.mean_iou})
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "ablation.csv"), "w", encoding="utf-8") as fh:
            fh.write(ablation_table(rows))
    return rows


def ablation_table(rows):
    cols = ["variant"] + [f"pr@{x}" for x in PR_THRESHOLDS] + ["iou", "mean_iou"]
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(
            r["variant"] if c == "variant" else f"{r[c]:.4f}" for c in cols))
    return "\n".join(lines) + "\n"
