"""CTC training with Adam, evaluation, and the desk-scale overfit harness."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .ctc import InfeasibleLabel, ctc_loss_op, min_frames
from .dataset.sign import SignExample, read_records
from .metrics import Report, score
from .model import StreetModel, decode_logits, forward, image_tensor, save_checkpoint
from .rng import derive_seed
from .tensor import Tape, backward
from .textproc import Charset

log = logging.getLogger(__name__)


class TrainError(ValueError):
    pass


class EmptyEvalSet(TrainError):
    pass


@dataclass
class AdamState:
    lr: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> bool:
    """Bias-corrected Adam update, applied in place. Returns False (no update) on a non-finite gradient."""
    for name, g in grads.items():
        if name not in params or params[name].shape != g.shape:
            raise TrainError(f"gradient {name!r} does not match its parameter")
        if not np.all(np.isfinite(g)):
            log.warning("non-finite gradient in %s at step %d; update skipped", name, state.step + 1)
            return False
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        p = params[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return True


def clip_by_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values())))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


@dataclass
class TrainLog:
    seed: int
    entries: list[dict] = field(default_factory=list)
    timestamps: bool = True
    sink: TextIO | None = None

    def add(self, step: int, **values) -> None:
        entry = {"step": step, **values}
        if self.timestamps:
            entry["time"] = round(time.time(), 3)
        self.entries.append(entry)
        if self.sink is not None:
            self.sink.write(self.format_entry(entry) + "\n")
            self.sink.flush()

    @staticmethod
    def format_entry(entry: dict) -> str:
        parts = []
        for k, v in entry.items():
            parts.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
        return " ".join(parts)

    def losses(self) -> list[float]:
        return [e["loss"] for e in self.entries if "loss" in e]

    def dumps(self) -> str:
        return "".join(self.format_entry(e) + "\n" for e in self.entries)


def _load(records: str | os.PathLike | Iterable[SignExample]) -> list[SignExample]:
    if isinstance(records, (str, os.PathLike)):
        return list(read_records(records))
    return list(records)


def _check_example(model: StreetModel, ex: SignExample, index: int) -> None:
    cfg = model.config
    if ex.height != cfg.tile_size or ex.width != cfg.tile_size * cfg.views:
        raise TrainError(f"record {index}: image {ex.width}x{ex.height} does not fit the model config")
    bad = [k for k in ex.unpadded_class if not 0 <= k < cfg.classes - 1]
    if bad:
        raise TrainError(f"record {index}: class ids {bad} outside the model's {cfg.classes}-class charset")


def train(model: StreetModel, records, steps: int, batch_size: int = 1, eval_every: int = 0, seed: int = 0,
          lr: float = 2e-5, clip: float | None = None, out_dir: str | os.PathLike | None = None,
          cs: Charset | None = None, timestamps: bool = True, log_sink: TextIO | None = None,
          stop_at_zero_error: bool = False, meta: dict[str, str] | None = None) -> TrainLog:
    """Train ``model`` in place for ``steps`` updates of ``batch_size`` examples each.

    Examples are visited in a seeded per-epoch shuffle. With ``eval_every``
    the training set is re-scored and a checkpoint is written every that many
    steps (metrics need ``cs``). Examples whose label cannot fit in the
    model's frames are skipped and counted. ``meta`` is stored in every
    checkpoint.
    """
    examples = _load(records)
    if not examples and steps > 0:
        raise TrainError("no training records")
    for i, ex in enumerate(examples):
        _check_example(model, ex, i)
    frames = model.config.frames
    usable = [ex for ex in examples if min_frames(ex.unpadded_class) <= frames]
    skipped = len(examples) - len(usable)
    tlog = TrainLog(seed=seed, timestamps=timestamps, sink=log_sink)
    tlog.add(0, skipped_infeasible=skipped, examples=len(examples))
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if steps > 0 and not usable:
        raise TrainError("every record has a label too long for the model")

    params = {name: t.data for name, t in model.params.items()}
    state = AdamState(lr=lr)
    order: list[int] = []
    epoch = 0
    cursor = 0
    pixels_cache: dict[int, object] = {}
    for step in range(1, steps + 1):
        acc: dict[str, np.ndarray] = {}
        total = 0.0
        for k in range(batch_size):
            if cursor >= len(order):
                order = list(np.random.default_rng(derive_seed(seed, f"epoch:{epoch}")).permutation(len(usable)))
                epoch += 1
                cursor = 0
            idx = order[cursor]
            cursor += 1
            ex = usable[idx]
            img = pixels_cache.get(idx)
            if img is None:
                img = pixels_cache[idx] = image_tensor(ex.image(), model.dtype)
            with Tape() as tape:
                logits = forward(model, img, mode="train", seed=derive_seed(seed, f"dropout:{step}:{k}"))
                try:
                    loss = ctc_loss_op(logits, ex.unpadded_class)
                except InfeasibleLabel:
                    continue
            grads = backward(tape, loss, model.tensors())
            total += float(loss.data)
            for name, t in model.params.items():
                g = grads[t]
                if name in acc:
                    acc[name] += g
                else:
                    acc[name] = g.copy()
        if not acc:
            continue
        if batch_size > 1:
            for g in acc.values():
                g /= batch_size
        if clip is not None:
            clip_by_norm(acc, clip)
        adam_step(params, acc, state)
        entry = {"loss": total / batch_size}
        if eval_every and step % eval_every == 0:
            if cs is not None:
                report, _ = evaluate(model, usable, cs)
                entry.update(recall=report.word_recall, precision=report.word_precision,
                             seq_error=report.sequence_error)
            if out is not None:
                save_checkpoint(model, out / f"ckpt-{step:06d}.fsnl", meta)
        tlog.add(step, **entry)
        if stop_at_zero_error and entry.get("seq_error") == 0.0:
            break
    if out is not None:
        save_checkpoint(model, out / "final.fsnl", meta)
    return tlog


def transcribe(model: StreetModel, examples: Sequence[SignExample], cs: Charset) -> list[str]:
    return [decode_logits(forward(model, image_tensor(ex.image(), model.dtype), mode="eval").data, cs)
            for ex in examples]


def evaluate(model: StreetModel, records, cs: Charset, dump: TextIO | None = None) -> tuple[Report, list[str]]:
    """Score the model's transcripts of ``records``; optionally write ``truth<TAB>output`` lines to ``dump``."""
    examples = _load(records)
    if not examples:
        raise EmptyEvalSet("no records to evaluate")
    if cs.size != model.config.classes:
        raise TrainError(f"charset has {cs.size} classes, model expects {model.config.classes}")
    outputs = transcribe(model, examples, cs)
    pairs = [(ex.text, out) for ex, out in zip(examples, outputs)]
    if dump is not None:
        for t, o in pairs:
            dump.write(f"{t}\t{o}\n")
    return score(pairs), outputs
