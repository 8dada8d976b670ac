"""Acceptance suite: one PASS/FAIL line per criterion on the terminal.

Run with ``pytest tests/test_acceptance.py`` (lines are printed even when
output capture is on) or ``python tests/test_acceptance.py``.
"""

import itertools
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from cases import NORMALIZER_CASES, STOP_WORDS_COVERED

from street.ctc import ctc_brute_force, ctc_loss, ctc_loss_op, min_frames
from street.dataset import (CorruptRecord, filter_encodable, geo_distance_m, iter_record_file, make_splits,
                            read_records, write_records)
from street.dataset.synth import SignStyle, synth_corpus
from street.metrics import sequence_error, word_precision, word_recall
from street.model import build, check_shapes, forward, image_tensor, preset
from street.recurrent import LstmParams, ScanSpec, bidi_scan, scan
from street.tensor import (ReshapeSpec, Tensor, add, concat, conv2d, dense, dropout, generic_reshape, gradcheck,
                           gradcheck_blocks, maxpool, mul, reshape, sigmoid, softmax_depth, sum_all, tanh)
from street.textproc import MAX_LABEL_LEN, encode_text, fsns_charset, mini_charset, title_case_fold
from street.trainer import evaluate, train

F64 = np.float64


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for a criterion, then fail the test if it did not pass."""

    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}", flush=True)
        assert ok, detail

    return emit


# 1 -------------------------------------------------------------------------

REFERENCE_ROWS = {
    "Conv0": 1216, "Conv1": 25664,
    "V-SumLSTM.top_up": 33024, "V-SumLSTM.middle_up": 33024,
    "V-SumLSTM.middle_down": 33024, "V-SumLSTM.bottom_down": 33024,
    "LTRLSTM": 197120, "RTLLSTM": 131584, "LTRLSTM.final": 787456, "Softmax": 34438,
    "BidiLSTM.top": 197632, "BidiLSTM.middle": 263168, "BidiLSTM.bottom": 197632, "Total": 1968006,
}


def test_criterion_1_parameter_counts(verdict):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "street.cli", "params", "--preset", "full"],
                          capture_output=True, text=True, check=False)
    elapsed = time.perf_counter() - start
    lines = proc.stdout.splitlines()
    counts = dict(line.split(" ", 1) for line in lines if not line.startswith(("deviation", "note")))
    wrong = {k: counts.get(k) for k, v in REFERENCE_ROWS.items() if counts.get(k) != str(v)}
    deviation = [line for line in lines if line.startswith("deviation:")]
    ok = (proc.returncode == 0 and not wrong and len(deviation) == 1
          and "263168x2 + 394240" in deviation[0] and "2.2M" in deviation[0] and elapsed < 1.0)
    verdict(1, ok, f"{len(REFERENCE_ROWS)} counts exact (mismatches {wrong}), deviation line "
                   f"{'present' if deviation else 'missing'}, {elapsed:.2f}s process time")


# 2 -------------------------------------------------------------------------

def test_criterion_2_ctc_oracle(verdict):
    rng = np.random.default_rng(20240611)
    start = time.perf_counter()
    worst, done = 0.0, 0
    while done < 500:
        t_len, n_cls = int(rng.integers(1, 9)), int(rng.integers(2, 6))
        label = [int(k) for k in rng.integers(0, n_cls - 1, int(rng.integers(0, 4)))]
        if min_frames(label) > t_len:
            continue
        z = rng.normal(scale=2.0, size=(t_len, n_cls))
        loss, _ = ctc_loss(z, label)
        ref = ctc_brute_force(z, label)
        worst = max(worst, abs(loss - ref) / abs(ref))
        done += 1
    elapsed = time.perf_counter() - start
    verdict(2, worst <= 1e-9 and elapsed < 30, f"500 instances, worst relative error {worst:.1e}, {elapsed:.1f}s")


# 3 -------------------------------------------------------------------------

def t64(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True, dtype=F64)


def lstm64(rng, n_in, n):
    return LstmParams(t64(rng, n_in, 4 * n), t64(rng, n, 4 * n), t64(rng, 4 * n))


def op_checks(rng):
    """(name, loss_fn, params) for every differentiable primitive, each under a random projection."""
    a, b = t64(rng, 3, 4), t64(rng, 3, 4)
    x4 = t64(rng, 2, 5, 4, 2)
    k, kb = t64(rng, 3, 3, 2, 3), t64(rng, 3)
    w, wb = t64(rng, 2, 5), t64(rng, 5)
    y4 = t64(rng, 1, 2, 6, 3)
    r = {shape: Tensor(rng.normal(size=shape), dtype=F64)
         for shape in [(3, 4), (6, 4), (2, 5, 4, 3), (2, 5, 4, 5), (2, 3, 2, 2), (3, 2, 2, 3)]}
    return [
        ("add", lambda: sum_all(mul(add(a, b), r[3, 4])), [a, b]),
        ("mul", lambda: sum_all(mul(a, b)), [a, b]),
        ("tanh", lambda: sum_all(mul(tanh(a), r[3, 4])), [a]),
        ("sigmoid", lambda: sum_all(mul(sigmoid(a), r[3, 4])), [a]),
        ("reshape", lambda: sum_all(mul(reshape(a, (6, 2)), reshape(r[3, 4], (6, 2)))), [a]),
        ("softmax_depth", lambda: sum_all(mul(softmax_depth(a), r[3, 4])), [a]),
        ("dense", lambda: sum_all(mul(dense(x4, w, wb), r[2, 5, 4, 5])), [x4, w, wb]),
        ("conv2d", lambda: sum_all(mul(conv2d(x4, k, kb), r[2, 5, 4, 3])), [x4, k, kb]),
        ("maxpool", lambda: sum_all(mul(maxpool(x4, (2, 3)), r[2, 3, 2, 2])), [x4]),
        ("generic_reshape",
         lambda: sum_all(mul(generic_reshape(y4, ReshapeSpec(2, (3, 2), (0, 2))), r[3, 2, 2, 3])), [y4]),
        ("concat", lambda: sum_all(mul(concat(0, [a, b]), r[6, 4])), [a, b]),
        ("dropout", lambda: sum_all(mul(dropout(a, 0.4, "train", seed=3), r[3, 4])), [a]),
    ]


def scan_checks(rng):
    x = t64(rng, 2, 3, 4, 2)
    out = []
    for axis, reverse, summarize in itertools.product("xy", (False, True), (False, True)):
        p = lstm64(rng, 2, 3)
        spec = ScanSpec(axis, reverse, summarize)
        shape = scan(x, spec, p).shape
        r = Tensor(rng.normal(size=shape), dtype=F64)
        out.append((f"scan {axis} reverse={reverse} summarize={summarize}",
                    lambda spec=spec, p=p, r=r: sum_all(mul(scan(x, spec, p), r)), [x, *p.tensors()]))
    pf, pb = lstm64(rng, 2, 3), lstm64(rng, 2, 3)
    r = Tensor(rng.normal(size=(2, 3, 4, 6)), dtype=F64)
    out.append(("bidi_scan", lambda: sum_all(mul(bidi_scan(x, pf, pb), r)), [x, *pf.tensors(), *pb.tensors()]))
    return out


def test_criterion_3_gradient_suite(verdict):
    rng = np.random.default_rng(3)
    start = time.perf_counter()
    errors = {}
    checks = op_checks(rng) + scan_checks(rng)
    logits = t64(rng, 6, 4)
    checks.append(("ctc_loss", lambda: ctc_loss_op(logits, [0, 2, 2]), [logits]))
    for name, fn, params in checks:
        errors[name] = gradcheck(fn, params)

    model = build(preset("mini", dropout=0.25), seed=1, dtype=F64)
    ex = next(iter(synth_corpus(5, 1, preset="mini", cs=mini_charset(), tile=36, views=2)))
    image = image_tensor(ex.image(), dtype=F64)
    label = list(ex.unpadded_class)

    def street_loss():
        return ctc_loss_op(forward(model, image, mode="train", seed=4), label)

    # sampled coordinates one by one, then each parameter block as a whole
    errors["street mini graph"] = gradcheck(street_loss, model.tensors(), samples=6, rng=np.random.default_rng(0))
    errors["street mini graph blocks"] = gradcheck_blocks(street_loss, model.tensors(), samples=6,
                                                          rng=np.random.default_rng(0))
    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    ok = all(e < 1e-4 for e in errors.values()) and elapsed < 300
    verdict(3, ok, f"{len(errors)} checks, worst {worst!r} at {errors[worst]:.1e} "
                   f"(mini graph {errors['street mini graph']:.1e} per coordinate, "
                   f"{errors['street mini graph blocks']:.1e} per block), {elapsed:.0f}s")


# 4 -------------------------------------------------------------------------

OVERFIT_CORPUS_SEED = 7
OVERFIT_MODEL_SEED = 0
OVERFIT_TRAIN_SEED = 1
OVERFIT_CLIP = 10.0


@pytest.mark.slow
def test_criterion_4_mini_overfit(verdict):
    cs = mini_charset()
    corpus = list(synth_corpus(OVERFIT_CORPUS_SEED, 32, preset="mini", style=SignStyle(distractor_prob=0.0),
                               cs=cs, tile=36, views=2))
    model = build(preset("mini"), seed=OVERFIT_MODEL_SEED)
    assert model.config.tile_size == 36 and model.config.views == 2 and model.config.classes == 16
    start = time.perf_counter()
    log = train(model, corpus, 5000, batch_size=1, lr=1e-3, clip=OVERFIT_CLIP, eval_every=250, cs=cs,
                seed=OVERFIT_TRAIN_SEED, timestamps=False, stop_at_zero_error=True)
    elapsed = time.perf_counter() - start
    report, _ = evaluate(model, corpus, cs)
    steps = len(log.losses())
    ok = (report.sequence_error == 0.0 and report.word_recall == 1.0 and report.word_precision == 1.0
          and steps <= 5000 and elapsed <= 600)
    verdict(4, ok, f"{steps} steps, sequence error {report.sequence_error}, recall {report.word_recall}, "
                   f"precision {report.word_precision}, {elapsed:.0f}s")


# 5 -------------------------------------------------------------------------

def test_criterion_5_metric_goldens(verdict):
    results = {
        "recall 3/4": word_recall([("Rue de la Gare", "Rue de Gare")]) == 3 / 4,
        "precision 1.0": word_precision([("Rue de la Gare", "Rue de Gare")]) == 1.0,
        "sequence error 1/3": sequence_error([("A", "A"), ("A", "B"), ("C", "C")]) == 1 / 3,
        "space folding": sequence_error([("A B", "A  B")]) == 0.0,
    }
    failed = [k for k, v in results.items() if not v]
    verdict(5, not failed, f"{len(results) - len(failed)}/{len(results)} goldens exact" +
            (f", failed {failed}" if failed else ""))


# 6 -------------------------------------------------------------------------

def test_criterion_6_normalizer(verdict):
    failed = [(raw, want, title_case_fold(raw)) for raw, want in NORMALIZER_CASES if title_case_fold(raw) != want]
    not_idempotent = [want for _, want in NORMALIZER_CASES if title_case_fold(want) != want]
    ok = len(NORMALIZER_CASES) == 25 and not failed and not not_idempotent and STOP_WORDS_COVERED
    verdict(6, ok, f"{len(NORMALIZER_CASES) - len(failed)}/{len(NORMALIZER_CASES)} cases exact, "
                   f"{len(not_idempotent)} not idempotent")


# 7 -------------------------------------------------------------------------

def test_criterion_7_pipeline(verdict, tmp_path):
    cs = fsns_charset()
    corpus = list(synth_corpus(77, 1000, style=SignStyle(noise_std=0.0, blur_max=0.0), cs=cs, tile=12, views=1))
    kept, _ = filter_encodable(corpus, cs)
    split = make_splits(kept)
    names = split.names()
    disjoint = all(not {e.text for e in split[a]} & {e.text for e in split[b]}
                   for a, b in itertools.combinations(names, 2))
    gap = min((geo_distance_m(x.lat, x.lon, y.lat, y.lon)
               for a, b in itertools.combinations(names, 2) for x in split[a] for y in split[b]), default=math.inf)
    survivors = [e for n in names for e in split[n]]
    encodable = all(len(encode_text(cs, e.text).unpadded) <= MAX_LABEL_LEN for e in survivors)

    path, again = tmp_path / "a.fsnl", tmp_path / "b.fsnl"
    write_records(path, corpus)
    write_records(again, read_records(path))
    round_trip = path.read_bytes() == again.read_bytes()

    data = bytearray(path.read_bytes())
    data[len(data) // 2] ^= 0x01
    path.write_bytes(bytes(data))
    try:
        for _ in iter_record_file(path):
            pass
        crc_fired = False
    except CorruptRecord:
        crc_fired = True

    ok = disjoint and gap >= 100.0 and encodable and round_trip and crc_fired and len(corpus) == 1000
    verdict(7, ok, f"{len(survivors)} of 1000 survive in {len(names)} subsets, disjoint={disjoint}, "
                   f"min cross-subset gap {gap:.0f} m, encodable={encodable}, byte-identical={round_trip}, "
                   f"crc detected={crc_fired}")


# 8 -------------------------------------------------------------------------

def test_criterion_8_full_shapes(verdict):
    cfg = preset("full")
    model = build(cfg, seed=0)
    trace = {}
    forward(model, Tensor(np.zeros((1, 150, 600, 3), dtype=np.float32)), trace=trace)
    check_shapes(trace, cfg)
    want = {"Reshape0": (4, 150, 150, 3), "Conv0": (4, 150, 150, 16), "Maxpool0": (4, 75, 75, 16),
            "Conv1": (4, 75, 75, 64), "Maxpool1": (4, 25, 25, 64), "XConcat": (4, 1, 75, 256),
            "Reshape1": (1, 1, 75, 512), "Softmax": (1, 1, 75, 134)}
    wrong = {k: trace[k].shape for k, v in want.items() if trace[k].shape != v}
    ok = not wrong and cfg.frames == 75 == 2 * MAX_LABEL_LEN + 1
    verdict(8, ok, f"{len(want)} audited shapes{' match' if not wrong else f' wrong {wrong}'}, "
                   f"frames {cfg.frames} = 2*{MAX_LABEL_LEN}+1")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
