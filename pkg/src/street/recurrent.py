"""LSTM cells and directional scans over NHWC feature maps.

A scan treats every row (axis ``"x"``) or column (axis ``"y"``) of the map as
an independent sequence. The whole scan is a single tape node whose backward
pass is hand-written backpropagation through time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, _result, _sigmoid, concat


@dataclass
class LstmParams:
    """Weights of one LSTM direction. Gate blocks are ordered input, forget, candidate, output."""

    wx: Tensor  # i x 4n
    wh: Tensor  # n x 4n
    b: Tensor  # 4n

    @property
    def n_in(self) -> int:
        return self.wx.shape[0]

    @property
    def n_out(self) -> int:
        return self.wh.shape[0]

    def tensors(self) -> list[Tensor]:
        return [self.wx, self.wh, self.b]

    def count(self) -> int:
        return sum(t.size for t in self.tensors())

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32, name: str = "") -> "LstmParams":
        """Glorot-uniform weights per gate block, zero biases except a forget-gate bias of 1."""
        lim_x = np.sqrt(6.0 / (n_in + n_out))
        lim_h = np.sqrt(6.0 / (2 * n_out))
        wx = rng.uniform(-lim_x, lim_x, (n_in, 4 * n_out)).astype(dtype)
        wh = rng.uniform(-lim_h, lim_h, (n_out, 4 * n_out)).astype(dtype)
        b = np.zeros(4 * n_out, dtype=dtype)
        b[n_out:2 * n_out] = 1.0
        return cls(
            Tensor(wx, True, f"{name}/wx", dtype=dtype),
            Tensor(wh, True, f"{name}/wh", dtype=dtype),
            Tensor(b, True, f"{name}/b", dtype=dtype),
        )


def lstm_param_count(n_in: int, n_out: int) -> int:
    return 4 * n_out * (n_in + n_out + 1)


@dataclass(frozen=True)
class ScanSpec:
    axis: str = "x"  # "x" or "y"
    reverse: bool = False
    summarize: bool = False

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise ValueError(f"scan axis must be 'x' or 'y', got {self.axis!r}")


def lstm_cell_step(x: np.ndarray, h: np.ndarray, c: np.ndarray, p: LstmParams) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM step on plain arrays (leading batch dimensions allowed)."""
    n = p.n_out
    if x.shape[-1] != p.n_in or h.shape[-1] != n or c.shape[-1] != n:
        raise ShapeError(f"lstm step: x{x.shape} h{h.shape} c{c.shape} vs params i={p.n_in} n={n}")
    z = x @ p.wx.data + h @ p.wh.data + p.b.data
    i = _sigmoid(z[..., :n])
    f = _sigmoid(z[..., n:2 * n])
    g = np.tanh(z[..., 2 * n:3 * n])
    o = _sigmoid(z[..., 3 * n:])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def _to_sequences(x: np.ndarray, axis: str) -> np.ndarray:
    b, h, w, d = x.shape
    if axis == "x":
        return x.reshape(b * h, w, d).transpose(1, 0, 2)
    return x.transpose(1, 0, 2, 3).reshape(h, b * w, d)


def _from_sequences(s: np.ndarray, axis: str, b: int, h: int, w: int) -> np.ndarray:
    t, _, d = s.shape
    if axis == "x":
        return s.transpose(1, 0, 2).reshape(b, h, t, d)
    return s.reshape(t, b, w, d).transpose(1, 0, 2, 3)


def scan(x: Tensor, spec: ScanSpec, p: LstmParams) -> Tensor:
    """Run an LSTM along ``spec.axis`` of a B×H×W×D tensor, starting from zero state.

    Outputs are placed at the position of the input step that produced them.
    With ``summarize`` only the last step in scan order is kept (extent 1).
    """
    if x.data.ndim != 4:
        raise ShapeError(f"scan expects a 4-D tensor, got {x.shape}")
    bsz, hgt, wid, dep = x.shape
    if dep != p.n_in:
        raise ShapeError(f"scan: input depth {dep} != LSTM input width {p.n_in}")
    n = p.n_out
    dtype = np.result_type(x.dtype, p.wx.dtype)
    seq = _to_sequences(x.data, spec.axis)
    if spec.reverse:
        seq = seq[::-1]
    steps, nseq, _ = seq.shape
    wx, wh, bias = p.wx.data, p.wh.data, p.b.data

    pre = seq @ wx + bias  # T x N x 4n
    gates = np.empty((steps, nseq, 4 * n), dtype=dtype)  # activated i, f, g, o
    cells = np.empty((steps, nseq, n), dtype=dtype)
    tanh_c = np.empty((steps, nseq, n), dtype=dtype)
    hs = np.empty((steps, nseq, n), dtype=dtype)
    h = np.zeros((nseq, n), dtype=dtype)
    c = np.zeros((nseq, n), dtype=dtype)
    for t in range(steps):
        z = pre[t] + h @ wh
        a = gates[t]
        a[:, :2 * n] = _sigmoid(z[:, :2 * n])
        a[:, 2 * n:3 * n] = np.tanh(z[:, 2 * n:3 * n])
        a[:, 3 * n:] = _sigmoid(z[:, 3 * n:])
        c = a[:, n:2 * n] * c + a[:, :n] * a[:, 2 * n:3 * n]
        cells[t] = c
        tanh_c[t] = np.tanh(c)
        h = a[:, 3 * n:] * tanh_c[t]
        hs[t] = h

    if spec.summarize:
        out_seq = hs[-1:]
    else:
        out_seq = hs[::-1] if spec.reverse else hs
    out_b, out_h, out_w = bsz, hgt, wid
    if spec.summarize:
        if spec.axis == "x":
            out_w = 1
        else:
            out_h = 1
    data = _from_sequences(out_seq, spec.axis, out_b, out_h, out_w)

    def bw(g):
        gs = _to_sequences(g, spec.axis)
        dh_seq = np.zeros((steps, nseq, n), dtype=dtype)
        if spec.summarize:
            dh_seq[-1] = gs[0]
        else:
            dh_seq[:] = gs[::-1] if spec.reverse else gs
        dpre = np.empty((steps, nseq, 4 * n), dtype=dtype)
        dh_next = np.zeros((nseq, n), dtype=dtype)
        dc_next = np.zeros((nseq, n), dtype=dtype)
        for t in range(steps - 1, -1, -1):
            a = gates[t]
            ig, fg, cg, og = a[:, :n], a[:, n:2 * n], a[:, 2 * n:3 * n], a[:, 3 * n:]
            dh = dh_seq[t] + dh_next
            tc = tanh_c[t]
            dc = dh * og * (1.0 - tc * tc) + dc_next
            c_prev = cells[t - 1] if t > 0 else 0.0
            dz = dpre[t]
            dz[:, :n] = dc * cg * ig * (1.0 - ig)
            dz[:, n:2 * n] = dc * c_prev * fg * (1.0 - fg)
            dz[:, 2 * n:3 * n] = dc * ig * (1.0 - cg * cg)
            dz[:, 3 * n:] = dh * tc * og * (1.0 - og)
            dc_next = dc * fg
            dh_next = dz @ wh.T
        flat_dz = dpre.reshape(-1, 4 * n)
        dwx = seq.reshape(-1, dep).T @ flat_dz
        if steps > 1:
            dwh = hs[:-1].reshape(-1, n).T @ dpre[1:].reshape(-1, 4 * n)
        else:
            dwh = np.zeros_like(wh)
        db = flat_dz.sum(axis=0)
        dseq = dpre @ wx.T
        if spec.reverse:
            dseq = dseq[::-1]
        dx = _from_sequences(dseq, spec.axis, bsz, hgt, wid)
        return dx, dwx, dwh, db

    return _result(data, (x, p.wx, p.wh, p.b), bw, "lstm_scan")


def bidi_scan(x: Tensor, p_fwd: LstmParams, p_bwd: LstmParams, axis: str = "x") -> Tensor:
    """Forward and reverse scans along ``axis``, depth-concatenated (forward half first)."""
    if p_fwd.n_out != p_bwd.n_out or p_fwd.n_in != p_bwd.n_in:
        raise ShapeError("bidi_scan: directions disagree on LSTM widths")
    fwd = scan(x, ScanSpec(axis, reverse=False), p_fwd)
    bwd = scan(x, ScanSpec(axis, reverse=True), p_bwd)
    return concat(-1, [fwd, bwd])
