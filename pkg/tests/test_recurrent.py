import itertools

import numpy as np
import pytest

from street.recurrent import LstmParams, ScanSpec, bidi_scan, lstm_cell_step, lstm_param_count, scan
from street.tensor import ShapeError, Tensor, gradcheck, mul, sum_all

F64 = np.float64


def params(n_in, n_out, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)

    def t(shape):
        return Tensor(rng.normal(scale=scale, size=shape), requires_grad=True, dtype=F64)

    return LstmParams(t((n_in, 4 * n_out)), t((n_out, 4 * n_out)), t((4 * n_out,)))


def zero_params(n_in, n_out):
    z = lambda *s: Tensor(np.zeros(s), requires_grad=True, dtype=F64)  # noqa: E731
    return LstmParams(z(n_in, 4 * n_out), z(n_out, 4 * n_out), z(4 * n_out))


def reference_scan(x, spec, p):
    """Step-by-step scan with lstm_cell_step, written independently of the fused op."""
    b, h, w, _ = x.shape
    n = p.n_out
    length = w if spec.axis == "x" else h
    out = np.zeros((b, h, w, n))
    order = range(length - 1, -1, -1) if spec.reverse else range(length)
    lines = h if spec.axis == "x" else w
    last = np.zeros((b, lines, n))
    for bi, li in itertools.product(range(b), range(lines)):
        hs, cs = np.zeros(n), np.zeros(n)
        for t in order:
            xv = x[bi, li, t] if spec.axis == "x" else x[bi, t, li]
            hs, cs = lstm_cell_step(xv, hs, cs, p)
            if spec.axis == "x":
                out[bi, li, t] = hs
            else:
                out[bi, t, li] = hs
        last[bi, li] = hs
    if spec.summarize:
        return last[:, :, None, :] if spec.axis == "x" else last[:, None, :, :]
    return out


def test_cell_step_zero_weights():
    p = zero_params(3, 4)
    c0 = np.array([1.0, -2.0, 0.5, 3.0])
    h, c = lstm_cell_step(np.ones(3), np.zeros(4), c0, p)
    np.testing.assert_allclose(c, 0.5 * c0)
    np.testing.assert_allclose(h, 0.5 * np.tanh(0.5 * c0))


@pytest.mark.parametrize("i,n,count", [(64, 64, 33024), (512, 256, 787456), (128, 128, 131584),
                                       (256, 128, 197120)])
def test_param_count(i, n, count):
    assert lstm_param_count(i, n) == count
    assert LstmParams.init(i, n, np.random.default_rng(0)).count() == count


def test_init_forget_bias_and_bounds():
    p = LstmParams.init(10, 6, np.random.default_rng(3))
    b = p.b.data
    assert np.all(b[6:12] == 1.0) and not b[:6].any() and not b[12:].any()
    assert np.abs(p.wx.data).max() <= np.sqrt(6.0 / 16)


def test_cell_step_dimension_mismatch():
    with pytest.raises(ShapeError):
        lstm_cell_step(np.ones(2), np.zeros(4), np.zeros(4), zero_params(3, 4))


@pytest.mark.parametrize("axis,reverse,summarize", list(itertools.product("xy", (False, True), (False, True))))
def test_scan_matches_reference(axis, reverse, summarize):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 3, 4, 3))
    p = params(3, 5, seed=1)
    spec = ScanSpec(axis, reverse, summarize)
    got = scan(Tensor(x, dtype=F64), spec, p).data
    np.testing.assert_allclose(got, reference_scan(x, spec, p), atol=1e-12)


def test_summarizing_scan_shape_full_size():
    x = Tensor(np.zeros((4, 25, 25, 64), dtype=np.float32))
    p = LstmParams.init(64, 64, np.random.default_rng(0))
    assert scan(x, ScanSpec("y", reverse=True, summarize=True), p).shape == (4, 1, 25, 64)


@pytest.mark.parametrize("axis,reverse", list(itertools.product("xy", (False, True))))
def test_summarize_equals_last_step_of_full_scan(axis, reverse):
    x = Tensor(np.random.default_rng(2).normal(size=(1, 4, 5, 3)), dtype=F64)
    p = params(3, 4)
    full = scan(x, ScanSpec(axis, reverse), p).data
    summ = scan(x, ScanSpec(axis, reverse, summarize=True), p).data
    # a reverse scan finishes at index 0
    end = slice(0, 1) if reverse else slice(-1, None)
    last = full[:, :, end] if axis == "x" else full[:, end]
    np.testing.assert_allclose(summ, last, atol=1e-14)


def test_length_one_scan_is_one_step():
    x = np.random.default_rng(0).normal(size=(1, 1, 1, 3))
    p = params(3, 4)
    h, _ = lstm_cell_step(x[0, 0, 0], np.zeros(4), np.zeros(4), p)
    np.testing.assert_allclose(scan(Tensor(x, dtype=F64), ScanSpec("x"), p).data[0, 0, 0], h)


def test_column_permutation_commutes_with_y_summarizer():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 5, 6, 3))
    perm = rng.permutation(6)
    p = params(3, 4)
    spec = ScanSpec("y", reverse=True, summarize=True)
    a = scan(Tensor(x[:, :, perm], dtype=F64), spec, p).data
    b = scan(Tensor(x, dtype=F64), spec, p).data[:, :, perm]
    np.testing.assert_allclose(a, b, atol=1e-14)


def test_zero_input_zero_weights_gives_zero():
    out = scan(Tensor(np.zeros((1, 2, 9, 3))), ScanSpec("x"), zero_params(3, 4))
    assert not out.data.any()


def test_bidi_depth_and_reversal_symmetry():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(1, 2, 5, 3))
    pf, pb = params(3, 4, seed=1), params(3, 4, seed=2)
    y = bidi_scan(Tensor(x, dtype=F64), pf, pb).data
    assert y.shape == (1, 2, 5, 8)
    flipped = bidi_scan(Tensor(x[:, :, ::-1].copy(), dtype=F64), pb, pf).data
    np.testing.assert_allclose(flipped[:, :, ::-1], np.concatenate([y[..., 4:], y[..., :4]], axis=-1), atol=1e-13)
    with pytest.raises(ShapeError):
        bidi_scan(Tensor(x), pf, params(3, 5))


def test_bidi_reader_sizes():
    p = [LstmParams.init(128, 128, np.random.default_rng(k)) for k in (0, 1)]
    assert sum(q.count() for q in p) == 263168
    y = bidi_scan(Tensor(np.zeros((1, 1, 3, 128), dtype=np.float32)), *p)
    assert y.shape[-1] == 256


@pytest.mark.parametrize("axis,reverse,summarize", list(itertools.product("xy", (False, True), (False, True))))
def test_scan_gradients(axis, reverse, summarize):
    rng = np.random.default_rng(11)
    x = Tensor(rng.normal(size=(2, 3, 4, 3)), requires_grad=True, dtype=F64)
    p = params(3, 4, seed=6)
    spec = ScanSpec(axis, reverse, summarize)
    r = Tensor(rng.normal(size=scan(x, spec, p).shape), dtype=F64)
    err = gradcheck(lambda: sum_all(mul(scan(x, spec, p), r)), [x, *p.tensors()])
    assert err < 1e-4
