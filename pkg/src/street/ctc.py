"""CTC loss, its brute-force oracle, and best-path decoding.

The null (blank) class is always the last class index.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor, _result


class CtcError(ValueError):
    pass


class InfeasibleLabel(CtcError):
    pass


class EmptyFrames(CtcError):
    pass


def min_frames(label: Sequence[int]) -> int:
    """Fewest frames that can emit ``label``: one per id plus a null between equal neighbours."""
    label = list(label)
    repeats = sum(1 for a, b in zip(label, label[1:]) if a == b)
    return len(label) + repeats


def _check(logits: np.ndarray, label: Sequence[int]) -> None:
    if logits.ndim != 2:
        raise CtcError(f"logits must be T x C, got shape {logits.shape}")
    t, c = logits.shape
    if t == 0:
        raise EmptyFrames("CTC needs at least one frame")
    null = c - 1
    for k in label:
        if not 0 <= k < null:
            raise CtcError(f"label id {k} outside [0, {null})")
    if min_frames(label) > t:
        raise InfeasibleLabel(f"label of length {len(label)} needs {min_frames(label)} frames, have {t}")


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def ctc_loss(logits, label: Sequence[int]) -> tuple[float, np.ndarray]:
    """Negative log-likelihood of ``label`` and its gradient w.r.t. the T×C logits.

    Forward and backward variables are kept in log space over the
    null-interleaved label of length 2L+1.
    """
    logits = np.asarray(logits.data if isinstance(logits, Tensor) else logits)
    label = [int(k) for k in label]
    _check(logits, label)
    work = logits.astype(np.float64)
    t_len, n_cls = work.shape
    null = n_cls - 1
    logp = log_softmax(work)

    ext = [null]
    for k in label:
        ext += [k, null]
    ext = np.array(ext)
    s_len = len(ext)
    # s may come from s-2 when ext[s] is a label different from ext[s-2]
    skip = np.zeros(s_len, dtype=bool)
    skip[2:] = (ext[2:] != null) & (ext[2:] != ext[:-2])

    neg = -np.inf
    alpha = np.full((t_len, s_len), neg)
    alpha[0, 0] = logp[0, null]
    if s_len > 1:
        alpha[0, 1] = logp[0, ext[1]]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + logp[t, ext]

    beta = np.full((t_len, s_len), neg)
    beta[-1, -1] = logp[-1, null]
    if s_len > 1:
        beta[-1, -2] = logp[-1, ext[-2]]
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc + logp[t, ext]

    tail = alpha[-1, -1] if s_len == 1 else np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    log_like = float(tail)
    if not np.isfinite(log_like):
        raise InfeasibleLabel("label has zero probability under these logits")

    # alpha*beta double counts the emission at t
    gamma = alpha + beta - logp[:, ext]
    occ = np.full((t_len, n_cls), neg)
    for s in range(s_len):
        occ[:, ext[s]] = np.logaddexp(occ[:, ext[s]], gamma[:, s])
    grad = np.exp(logp) - np.exp(occ - log_like)
    return -log_like, grad.astype(logits.dtype)


def ctc_loss_op(logits: Tensor, label: Sequence[int]) -> Tensor:
    """Tape-aware CTC: scalar loss tensor whose backward uses the exact gradient."""
    loss, grad = ctc_loss(logits.data, label)

    def bw(g):
        return (g * grad,)

    return _result(np.asarray(loss, dtype=logits.dtype).reshape(()), (logits,), bw, "ctc_loss")


def _collapse_table(t_len: int, n_cls: int):
    paths = np.indices((n_cls,) * t_len).reshape(t_len, -1).T
    null = n_cls - 1
    keep = paths != null
    keep[:, 1:] &= paths[:, 1:] != paths[:, :-1]
    return paths, keep


def ctc_brute_force(logits, label: Sequence[int]) -> float:
    """Loss by summing the probability of every frame sequence that collapses to ``label``.

    Exponential in T; meant as a test oracle for small problems.
    """
    logits = np.asarray(logits.data if isinstance(logits, Tensor) else logits, dtype=np.float64)
    label = [int(k) for k in label]
    _check(logits, label)
    t_len, n_cls = logits.shape
    paths, keep = _collapse_table(t_len, n_cls)
    n_keep = keep.sum(axis=1)
    match = n_keep == len(label)
    if label:
        cand = np.flatnonzero(match)
        # stable sort moves kept symbols to the front in their original order
        order = np.argsort(~keep[cand], axis=1, kind="stable")[:, :len(label)]
        emitted = np.take_along_axis(paths[cand], order, axis=1)
        ok = (emitted == np.array(label)).all(axis=1)
        match = np.zeros(len(paths), dtype=bool)
        match[cand[ok]] = True
    if not match.any():
        raise InfeasibleLabel("no frame sequence collapses to the label")
    logp = log_softmax(logits)
    path_logp = logp[np.arange(t_len), paths[match]].sum(axis=1)
    top = path_logp.max()
    return float(-(top + np.log(np.exp(path_logp - top).sum())))


def ctc_greedy_decode(logits) -> list[int]:
    """Best path: per-frame argmax, merge repeats, drop nulls."""
    logits = np.asarray(logits.data if isinstance(logits, Tensor) else logits)
    null = logits.shape[-1] - 1
    best = logits.argmax(axis=-1)
    out: list[int] = []
    prev = -1
    for k in best.tolist():
        if k != prev and k != null:
            out.append(k)
        prev = k
    return out
