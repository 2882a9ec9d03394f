import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodesplit import _pykernels, kernels

ACC_MIN, ACC_MAX = -(2 ** 31), 2 ** 31 - 1


def reference_conv(x, w, bias, stride, pt, pl, oh, ow):
    """Plain Python ints, clamping after every step in (ky, kx, ci) order."""
    H, W, C = x.shape
    kh, kw, _, co = w.shape
    out = np.zeros((oh, ow, co), dtype=np.int64)
    flagged = 0
    for oy in range(oh):
        for ox in range(ow):
            for c in range(co):
                acc = int(bias[c])
                hit = not ACC_MIN <= acc <= ACC_MAX
                acc = min(max(acc, ACC_MIN), ACC_MAX)
                for ky in range(kh):
                    for kx in range(kw):
                        iy, ix = oy * stride + ky - pt, ox * stride + kx - pl
                        if not (0 <= iy < H and 0 <= ix < W):
                            continue
                        for ci in range(C):
                            acc += int(x[iy, ix, ci]) * int(w[ky, kx, ci, c])
                            if acc > ACC_MAX or acc < ACC_MIN:
                                hit = True
                                acc = min(max(acc, ACC_MIN), ACC_MAX)
                out[oy, ox, c] = acc
                flagged += hit
    return out, flagged


@st.composite
def conv_cases(draw):
    h, w, c, co = draw(st.integers(1, 6)), draw(st.integers(1, 6)), draw(st.integers(1, 4)), draw(st.integers(1, 3))
    kh, kw, s = draw(st.integers(1, 3)), draw(st.integers(1, 3)), draw(st.integers(1, 2))
    oh, ow = -(-h // s), -(-w // s)
    pt = max((oh - 1) * s + kh - h, 0) // 2
    pl = max((ow - 1) * s + kw - w, 0) // 2
    big = draw(st.booleans())
    amax = 32767 if big else 255
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    x = rng.integers(-amax - 1 if big else 0, amax + 1, size=(h, w, c)).astype(np.int32)
    wt = rng.integers(-511, 512, size=(kh, kw, c, co)).astype(np.int32)
    bias = rng.integers(-2 ** 33, 2 ** 33, size=co) if big else rng.integers(-1000, 1000, size=co)
    if big:
        x[:] = np.where(rng.random(x.shape) < 0.5, 32767, -32768)
        wt[:] = np.where(rng.random(wt.shape) < 0.5, 511, -511)
    return x, wt, bias.astype(np.int64), s, pt, pl, oh, ow


@settings(max_examples=150, deadline=None)
@given(conv_cases())
def test_backends_match_python_int_reference(case):
    ref, flagged = reference_conv(*case)
    for name in kernels.available_backends():
        with kernels.backend_scope(name):
            out, ovf = kernels.conv2d_sat(*case)
        assert out.dtype == np.int32
        assert (out == ref).all(), name
        assert ovf == flagged, name


def test_compiled_backend_is_built():
    assert "compiled" in kernels.available_backends()
    assert kernels.backend() == "compiled"


def test_backends_agree_on_a_large_layer():
    rng = np.random.default_rng(1)
    x = rng.integers(-32768, 32768, size=(20, 20, 32)).astype(np.int32)
    x[:10] = 32767  # same-sign corner drives some outputs into saturation
    w = rng.integers(-511, 512, size=(3, 3, 32, 16)).astype(np.int32)
    w[..., :4] = 511
    b = rng.integers(-10 ** 6, 10 ** 6, size=16)
    results = []
    for name in kernels.available_backends():
        with kernels.backend_scope(name):
            results.append(kernels.conv2d_sat(x, w, b, 1, 1, 1, 20, 20))
    for out, ovf in results[1:]:
        assert (out == results[0][0]).all() and ovf == results[0][1]
    assert results[0][1] > 0  # this input does saturate


def test_backend_switching_and_errors():
    with pytest.raises(ValueError):
        kernels.use_backend("gpu")
    before = kernels.backend()
    with kernels.backend_scope("python"):
        assert kernels.backend() == "python"
    assert kernels.backend() == before
    x = np.zeros((2, 2, 3), np.int32)
    for name in kernels.available_backends():
        with kernels.backend_scope(name):
            with pytest.raises(ValueError):
                kernels.conv2d_sat(x, np.zeros((1, 1, 2, 1), np.int32), np.zeros(1), 1, 0, 0, 2, 2)
            with pytest.raises(ValueError):
                kernels.conv2d_sat(x, np.zeros((1, 1, 3, 1), np.int32), np.zeros(2), 1, 0, 0, 2, 2)


def test_im2col_column_order():
    x = np.arange(2 * 2 * 2).reshape(2, 2, 2)
    cols = _pykernels.im2col(x, 2, 2, 1, 0, 0, 1, 1)
    assert cols.tolist() == [[0, 1, 2, 3, 4, 5, 6, 7]]
