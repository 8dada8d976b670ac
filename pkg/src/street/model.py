"""The STREET network: de-tiling, convolutions, line finding and reading,
position normalization, view combination and the final LSTM/softmax.

Layer names follow the rows of the architecture table so that
:func:`count_params` output can be diffed against it.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .ctc import ctc_greedy_decode
from .dataset.records import iter_record_file, write_record_file
from .recurrent import LstmParams, ScanSpec, bidi_scan, lstm_param_count, scan
from .tensor import (ReshapeSpec, ShapeError, Tensor, concat, conv2d, dense, dropout, generic_reshape, maxpool,
                     reshape, tanh)
from .textproc import Charset, MAX_LABEL_LEN, fold_spaces


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StreetConfig:
    preset: str = "full"
    tile_size: int = 150
    views: int = 4
    channels: int = 3
    kernel: int = 5
    conv_filters: tuple[int, int] = (16, 64)
    pools: tuple[tuple[int, int], tuple[int, int]] = ((2, 2), (3, 3))
    n_sum: int = 64
    n_bidi: int = 128
    posnorm: tuple[int, int] = (128, 128)
    n_final: int = 256
    classes: int = 134
    dropout: float = 0.5
    # "prose": outer readers see one 64-deep summary, the middle reader the 128-deep pair.
    # "table": fan-in implied by the table's reader weights (128 / 256 / 128).
    wiring: str = "prose"

    @property
    def post_conv(self) -> int:
        size = self.tile_size
        for ph, _ in self.pools:
            size = -(-size // ph)
        return size

    @property
    def post_conv_w(self) -> int:
        size = self.tile_size
        for _, pw in self.pools:
            size = -(-size // pw)
        return size

    @property
    def frames(self) -> int:
        return 3 * self.post_conv_w

    def reader_inputs(self) -> tuple[int, int, int]:
        if self.wiring == "prose":
            return self.n_sum, 2 * self.n_sum, self.n_sum
        return 2 * self.n_sum, 4 * self.n_sum, 2 * self.n_sum

    def validate(self) -> None:
        if self.wiring not in ("prose", "table"):
            raise ConfigError(f"unknown wiring {self.wiring!r}")
        if self.tile_size < 1 or self.views < 1 or self.classes < 2:
            raise ConfigError(f"invalid sizes in {self}")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        size = self.tile_size
        for ph, pw in self.pools:
            if ph > size or pw > size:
                raise ConfigError(f"pool {ph}x{pw} larger than feature map {size}")
            size = -(-size // ph)

    def to_strings(self) -> dict[str, str]:
        return {k: repr(v) if not isinstance(v, str) else v for k, v in asdict(self).items()}

    @classmethod
    def from_strings(cls, values: dict[str, str]) -> "StreetConfig":
        import ast

        kw = {}
        for f in fields(cls):
            if f.name in values:
                kw[f.name] = values[f.name] if f.type == "str" else ast.literal_eval(values[f.name])
        return cls(**kw)


PRESETS = {
    "full": StreetConfig(),
    "mini": StreetConfig(preset="mini", tile_size=36, views=2, conv_filters=(8, 16), n_sum=16, n_bidi=32,
                         posnorm=(32, 32), n_final=64, classes=16, dropout=0.0),
}


def preset(name: str, **overrides) -> StreetConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)


READERS = ("top", "middle", "bottom")
SUMMARIZERS = ("top_up", "middle_up", "middle_down", "bottom_down")


@dataclass
class StreetModel:
    config: StreetConfig
    params: dict[str, Tensor] = field(default_factory=dict)
    seed: int = 0

    def lstm(self, layer: str) -> LstmParams:
        return LstmParams(self.params[f"{layer}/wx"], self.params[f"{layer}/wh"], self.params[f"{layer}/b"])

    def tensors(self) -> list[Tensor]:
        return list(self.params.values())

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype


def layer_names(cfg: StreetConfig) -> list[str]:
    names = ["Conv0", "Conv1"]
    names += [f"V-SumLSTM.{s}" for s in SUMMARIZERS]
    names += [f"BidiLSTM.{r}" for r in READERS]
    names += ["LTRLSTM", "RTLLSTM", "LTRLSTM.final", "Softmax"]
    return names


def _layer_shapes(cfg: StreetConfig) -> dict[str, dict[str, tuple[int, ...]]]:
    """Parameter shapes per layer, in forward order."""
    k, c = cfg.kernel, cfg.channels
    f0, f1 = cfg.conv_filters

    def lstm(i, n):
        return {"wx": (i, 4 * n), "wh": (n, 4 * n), "b": (4 * n,)}

    shapes: dict[str, dict[str, tuple[int, ...]]] = {
        "Conv0": {"kernel": (k, k, c, f0), "bias": (f0,)},
        "Conv1": {"kernel": (k, k, f0, f1), "bias": (f1,)},
    }
    for s in SUMMARIZERS:
        shapes[f"V-SumLSTM.{s}"] = lstm(f1, cfg.n_sum)
    for r, i in zip(READERS, cfg.reader_inputs()):
        shapes[f"BidiLSTM.{r}"] = {f"{d}/{p}": s for d in ("fwd", "bwd") for p, s in lstm(i, cfg.n_bidi).items()}
    ltr, rtl = cfg.posnorm
    shapes["LTRLSTM"] = lstm(2 * cfg.n_bidi, ltr)
    shapes["RTLLSTM"] = lstm(ltr, rtl)
    shapes["LTRLSTM.final"] = lstm(cfg.views * rtl, cfg.n_final)
    shapes["Softmax"] = {"weight": (cfg.n_final, cfg.classes), "bias": (cfg.classes,)}
    return shapes


def build(config: StreetConfig, seed: int = 0, dtype=np.float32) -> StreetModel:
    """Allocate and initialize every parameter block deterministically from ``seed``."""
    config.validate()
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for layer, blocks in _layer_shapes(config).items():
        for pname, shape in blocks.items():
            key = f"{layer}/{pname}"
            if pname.endswith("b") and len(shape) == 1 and "LSTM" in layer:
                n = shape[0] // 4
                arr = np.zeros(shape)
                arr[n:2 * n] = 1.0
            elif len(shape) == 1:
                arr = np.zeros(shape)
            else:
                if len(shape) == 4:
                    fan_in, fan_out = shape[0] * shape[1] * shape[2], shape[0] * shape[1] * shape[3]
                elif "LSTM" in layer:
                    # each gate block is its own i x n (or n x n) matrix
                    fan_in, fan_out = shape[0], shape[1] // 4
                else:
                    fan_in, fan_out = shape
                lim = math.sqrt(6.0 / (fan_in + fan_out))
                arr = rng.uniform(-lim, lim, shape)
            params[key] = Tensor(arr.astype(dtype), requires_grad=True, name=key, dtype=dtype)
    return StreetModel(config, params, seed)


def count_params(model_or_config) -> dict[str, int]:
    cfg = model_or_config.config if isinstance(model_or_config, StreetModel) else model_or_config
    counts = {layer: sum(math.prod(s) for s in blocks.values()) for layer, blocks in _layer_shapes(cfg).items()}
    counts["Total"] = sum(counts.values())
    return counts


def expected_counts(cfg: StreetConfig) -> dict[str, int]:
    """Closed-form parameter counts, computed independently of the allocated shapes."""
    k, c = cfg.kernel, cfg.channels
    f0, f1 = cfg.conv_filters
    out = {"Conv0": k * k * c * f0 + f0, "Conv1": k * k * f0 * f1 + f1}
    for s in SUMMARIZERS:
        out[f"V-SumLSTM.{s}"] = lstm_param_count(f1, cfg.n_sum)
    for r, i in zip(READERS, cfg.reader_inputs()):
        out[f"BidiLSTM.{r}"] = 2 * lstm_param_count(i, cfg.n_bidi)
    out["LTRLSTM"] = lstm_param_count(2 * cfg.n_bidi, cfg.posnorm[0])
    out["RTLLSTM"] = lstm_param_count(cfg.posnorm[0], cfg.posnorm[1])
    out["LTRLSTM.final"] = lstm_param_count(cfg.views * cfg.posnorm[1], cfg.n_final)
    out["Softmax"] = cfg.n_final * cfg.classes + cfg.classes
    out["Total"] = sum(out.values())
    return out


def expected_shapes(cfg: StreetConfig) -> dict[str, tuple[int, ...]]:
    """Intermediate shapes the wiring must produce, keyed like the forward trace."""
    v, t = cfg.views, cfg.tile_size
    f0, f1 = cfg.conv_filters
    (p0h, p0w), (p1h, p1w) = cfg.pools
    h0, w0 = -(-t // p0h), -(-t // p0w)
    h1, w1 = -(-h0 // p1h), -(-w0 // p1w)
    r_in = cfg.reader_inputs()
    return {
        "Input": (1, t, v * t, cfg.channels),
        "Reshape0": (v, t, t, cfg.channels),
        "Conv0": (v, t, t, f0),
        "Maxpool0": (v, h0, w0, f0),
        "Conv1": (v, h0, w0, f1),
        "Maxpool1": (v, h1, w1, f1),
        **{f"V-SumLSTM.{s}": (v, 1, w1, cfg.n_sum) for s in SUMMARIZERS},
        **{f"Reader.{r}.input": (v, 1, w1, i) for r, i in zip(READERS, r_in)},
        **{f"BidiLSTM.{r}": (v, 1, w1, 2 * cfg.n_bidi) for r in READERS},
        "XConcat": (v, 1, 3 * w1, 2 * cfg.n_bidi),
        "LTRLSTM": (v, 1, 3 * w1, cfg.posnorm[0]),
        "RTLLSTM": (v, 1, 3 * w1, cfg.posnorm[1]),
        "Reshape1": (1, 1, 3 * w1, v * cfg.posnorm[1]),
        "LTRLSTM.final": (1, 1, 3 * w1, cfg.n_final),
        "Softmax": (1, 1, 3 * w1, cfg.classes),
    }


def image_tensor(pixels: np.ndarray, dtype=np.float32) -> Tensor:
    """H×W×3 uint8 raster -> 1×H×W×3 tensor scaled to [0, 1]."""
    arr = np.asarray(pixels)
    if arr.ndim == 3:
        arr = arr[None]
    return Tensor(arr.astype(dtype) / 255.0, dtype=dtype)


def forward(model: StreetModel, image: Tensor, mode: str = "eval", seed: int = 0,
            trace: dict | None = None) -> Tensor:
    """Logits of shape frames×classes. ``trace``, if given, collects every intermediate tensor."""
    cfg = model.config
    p = model.params
    want = (1, cfg.tile_size, cfg.views * cfg.tile_size, cfg.channels)
    if image.shape != want:
        raise ShapeError(f"image shape {image.shape} != {want}")
    trace = trace if trace is not None else {}

    def keep(name, t):
        trace[name] = t
        return t

    keep("Input", image)
    x = keep("Reshape0", generic_reshape(image, ReshapeSpec(axis=2, factors=(cfg.views, cfg.tile_size), dests=(0, 2))))
    x = keep("Conv0", tanh(conv2d(x, p["Conv0/kernel"], p["Conv0/bias"])))
    x = keep("Maxpool0", maxpool(x, cfg.pools[0]))
    x = keep("Conv1", tanh(conv2d(x, p["Conv1/kernel"], p["Conv1/bias"])))
    feats = keep("Maxpool1", maxpool(x, cfg.pools[1]))

    up = ScanSpec("y", reverse=True, summarize=True)
    down = ScanSpec("y", reverse=False, summarize=True)
    summ = {
        "top_up": scan(feats, up, model.lstm("V-SumLSTM.top_up")),
        "middle_up": scan(feats, up, model.lstm("V-SumLSTM.middle_up")),
        "middle_down": scan(feats, down, model.lstm("V-SumLSTM.middle_down")),
        "bottom_down": scan(feats, down, model.lstm("V-SumLSTM.bottom_down")),
    }
    for s, t in summ.items():
        keep(f"V-SumLSTM.{s}", t)
    if cfg.wiring == "prose":
        inputs = {
            "top": summ["top_up"],
            "middle": concat(-1, [summ["middle_up"], summ["middle_down"]]),
            "bottom": summ["bottom_down"],
        }
    else:
        inputs = {
            "top": concat(-1, [summ["top_up"], summ["middle_up"]]),
            "middle": concat(-1, [summ[s] for s in SUMMARIZERS]),
            "bottom": concat(-1, [summ["middle_down"], summ["bottom_down"]]),
        }
    lines = []
    for r in READERS:
        keep(f"Reader.{r}.input", inputs[r])
        fwd, bwd = model.lstm(f"BidiLSTM.{r}/fwd"), model.lstm(f"BidiLSTM.{r}/bwd")
        lines.append(keep(f"BidiLSTM.{r}", bidi_scan(inputs[r], fwd, bwd)))
    x = keep("XConcat", concat(2, lines))
    x = keep("LTRLSTM", scan(x, ScanSpec("x"), model.lstm("LTRLSTM")))
    x = keep("RTLLSTM", scan(x, ScanSpec("x", reverse=True), model.lstm("RTLLSTM")))
    x = keep("Reshape1", generic_reshape(x, ReshapeSpec(axis=0, factors=(cfg.views,), dests=(3,))))
    x = keep("Dropout", dropout(x, cfg.dropout, mode, seed))
    x = keep("LTRLSTM.final", scan(x, ScanSpec("x"), model.lstm("LTRLSTM.final")))
    x = keep("Softmax", dense(x, p["Softmax/weight"], p["Softmax/bias"]))
    return reshape(x, (cfg.frames, cfg.classes))


def check_shapes(trace: dict, cfg: StreetConfig) -> None:
    for name, shape in expected_shapes(cfg).items():
        if trace[name].shape != shape:
            raise ShapeError(f"{name}: got {trace[name].shape}, expected {shape}")


def predict_text(model: StreetModel, pixels: np.ndarray, cs: Charset) -> str:
    if cs.size != model.config.classes:
        raise ConfigError(f"charset has {cs.size} classes, model expects {model.config.classes}")
    logits = forward(model, image_tensor(pixels, model.dtype), mode="eval")
    return decode_logits(logits.data, cs)


def decode_logits(logits: np.ndarray, cs: Charset) -> str:
    return fold_spaces(cs.decode(ctc_greedy_decode(logits)))


def frame_sufficient(cfg: StreetConfig, max_label: int = MAX_LABEL_LEN) -> bool:
    return cfg.frames >= 2 * max_label + 1


# ---------------------------------------------------------------------------
# checkpoints: one FSNS-lite record for the config, one per parameter block

def save_checkpoint(model: StreetModel, path: str | os.PathLike, extra: dict[str, str] | None = None) -> None:
    head = {"kind": "config", "seed": [model.seed], **{f"config/{k}": v for k, v in model.config.to_strings().items()}}
    for k, v in (extra or {}).items():
        head[f"meta/{k}"] = v
    records = [head]
    for name, t in model.params.items():
        records.append({"kind": "param", name: t.data.astype("<f4").tobytes(), "shape": list(t.shape)})
    write_record_file(path, records)


def load_checkpoint(path: str | os.PathLike, dtype=np.float32) -> StreetModel:
    records = iter(iter_record_file(path))
    head = next(records, None)
    if head is None or head.get("kind") != "config":
        raise ConfigError(f"{path}: first record is not a config record")
    cfg = StreetConfig.from_strings({k[len("config/"):]: v for k, v in head.items() if k.startswith("config/")})
    model = build(cfg, seed=int(head["seed"][0]), dtype=dtype)
    seen = set()
    for rec in records:
        name = next(k for k in rec if k not in ("kind", "shape"))
        if name not in model.params:
            raise ConfigError(f"{path}: unexpected parameter block {name!r}")
        shape = tuple(rec["shape"])
        want = model.params[name].shape
        if shape != want:
            raise ConfigError(f"{path}: {name} has shape {shape}, expected {want}")
        arr = np.frombuffer(rec[name], dtype="<f4")
        if arr.size != math.prod(want):
            raise ConfigError(f"{path}: {name} holds {arr.size} values, expected {math.prod(want)}")
        model.params[name].data[...] = arr.reshape(want).astype(dtype)
        seen.add(name)
    missing = set(model.params) - seen
    if missing:
        raise ConfigError(f"{path}: missing parameter blocks {sorted(missing)[:3]}")
    return model


def checkpoint_meta(path: str | os.PathLike) -> dict[str, str]:
    """The ``meta/*`` strings saved alongside a checkpoint's config."""
    head = next(iter(iter_record_file(path)), None)
    if head is None or head.get("kind") != "config":
        raise ConfigError(f"{path}: first record is not a config record")
    return {k[len("meta/"):]: v for k, v in head.items() if k.startswith("meta/")}
