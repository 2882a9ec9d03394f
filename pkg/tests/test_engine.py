import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodesplit import fxp, kernels
from nodesplit.infer import Engine, InferenceError, quality, run_reference, run_split
from nodesplit.netmodel import infer_shapes, network_from_dict
from nodesplit.tensorio import Tensor, load_tensor
import oracles


def net_of(layers, inp):
    return infer_shapes(network_from_dict({"name": "t", "input": list(inp), "layers": layers}))


def real(a):
    return Tensor(np.asarray(a, np.float32))


def test_identity_dense_passes_input_through():
    net = net_of([{"id": "f", "type": "flatten"}, {"id": "d", "type": "dense", "units": 6}], (1, 2, 3))
    x = np.arange(6, dtype=np.float32).reshape(1, 2, 3)
    w = {("d", "kernel"): real(np.eye(6).reshape(1, 6, 6))}
    assert run_reference(net, w, x).data.reshape(-1).tolist() == list(range(6))


def test_one_by_one_conv_sums_channels():
    net = net_of([{"id": "c", "type": "conv2d", "kernel": [1, 1], "filters": 1}], (3, 3, 4))
    x = np.random.default_rng(0).uniform(0, 9, (3, 3, 4)).astype(np.float32)
    w = {("c", "kernel"): real(np.ones((1, 4, 1)))}
    out = run_reference(net, w, x).data
    assert np.allclose(out[..., 0], x.astype(np.float64).sum(axis=2), rtol=1e-6)


def test_reference_matches_frozen_golden(ae1, ae2, golden_dir):
    for b in (ae1, ae2):
        out = run_reference(b["net"], b["weights"], b["input"]).data
        gold = load_tensor(golden_dir / f"{b['net'].name}_reference.dnnt").data
        assert out.shape == gold.shape
        scale = float(np.abs(gold).max())
        assert np.abs(out - gold).max() <= 1e-5 * scale


@pytest.mark.parametrize("which", ["ae1", "ae2"])
def test_fp32_split_is_transparent(which, request):
    b = request.getfixturevalue(which)
    eng = Engine(b["net"], b["weights"])
    ref = eng.run_reference(b["input"]).data
    for layer in b["net"].layers:
        out = eng.run_split(b["input"], layer.id, "fp32").output.data
        assert out.tobytes() == ref.tobytes()


def test_zero_weights_give_zero_output():
    layers = [{"id": "c", "type": "conv2d", "kernel": [3, 3], "filters": 2, "activation": "relu"},
              {"id": "p", "type": "maxpool", "kernel": [2, 2]},
              {"id": "f", "type": "flatten"},
              {"id": "d", "type": "dense", "units": 3}]
    net = net_of(layers, (4, 4, 1))
    w = {("c", "kernel"): real(np.zeros((9, 1, 2))), ("d", "kernel"): real(np.zeros((1, 8, 3)))}
    x = np.full((4, 4, 1), 7, np.float32)
    for mode in ("fp32", "w10_fp", "w10_f8"):
        for split in ("c", "p", "f", "d"):
            assert not run_split(net, w, x, split, mode).output.data.any()


def test_w10_f8_node_matches_exact_integer_oracle(ae1):
    doc, net, w, x = ae1["doc"], ae1["net"], ae1["weights"], ae1["input"]
    idx = net.index_of("B5")
    real_w = {k: v.to_real() for k, v in w.items()}
    words, frac = oracles.fixed_node(doc, real_w, x.data, idx, 8)
    for name in kernels.available_backends():
        with kernels.backend_scope(name):
            res = Engine(net, w).run_split(x, "B5", "w10_f8")
        assert not any(res.overflow.values())
        assert (res.boundary.data.astype(np.float64) * 2 ** frac == words).all(), name
    # the hub side is plain real arithmetic on the transmitted words
    eng = Engine(net, w)
    hub_in = (words / 2.0 ** frac).astype(np.float32)
    expect = eng._hub(hub_in, idx + 1)
    assert np.array_equal(res.output.data, expect)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 3), st.integers(1, 3), st.integers(1, 4))
def test_single_conv_weight_error_bound(seed, k, cin, stride):
    rng = np.random.default_rng(seed)
    net = net_of([{"id": "c", "type": "conv2d", "kernel": [k, k], "filters": 3, "stride": stride}], (6, 5, cin))
    x = rng.uniform(-4, 4, (6, 5, cin)).astype(np.float32)
    w = {("c", "kernel"): real(rng.uniform(-1, 1, (k * k, cin, 3)))}
    ref = run_reference(net, w, x).data.astype(np.float64)
    got = run_split(net, w, x, "c", "w10_fp").output.data.astype(np.float64)
    bound = k * k * cin * 2.0 ** -9 * float(np.abs(x).max())
    assert np.abs(got - ref).max() <= bound * (1 + 1e-6) + 1e-5


@pytest.mark.parametrize("which", ["ae1", "ae2"])
def test_mode_ordering_on_fixtures(which, request):
    b = request.getfixturevalue(which)
    eng = Engine(b["net"], b["weights"])
    ref = eng.run_reference(b["input"])
    split = {"ae1": "B5", "ae2": "B3"}[which]
    q_fp = quality(ref, eng.run_split(b["input"], split, "w10_fp").output)
    q_f8 = quality(ref, eng.run_split(b["input"], split, "w10_f8").output)
    assert q_fp.max_abs_err <= q_f8.max_abs_err
    assert q_fp.ssim >= q_f8.ssim


def test_determinism_across_runs_and_backends(ae2):
    eng = Engine(ae2["net"], ae2["weights"])
    outs = []
    for name in kernels.available_backends():
        with kernels.backend_scope(name):
            outs.append(eng.run_split(ae2["input"], "B3", "w10_f8").output.data.tobytes())
            outs.append(eng.run_split(ae2["input"], "B3", "w10_f8").output.data.tobytes())
    assert len(set(outs)) == 1


def test_frac_plans(ae2):
    eng = Engine(ae2["net"], ae2["weights"])
    auto = eng.run_split(ae2["input"], "B3", "w10_f8", frac_bits="auto")
    outs = eng.layer_outputs(ae2["input"])
    assert auto.frac_bits["B1"] == fxp.frac_bits_for(float(np.abs(outs[0]).max()))
    assert not any(auto.saturated.values())
    per = eng.run_split(ae2["input"], "B3", "w10_f8", frac_bits={"B1": 4, "B2": 4, "B3": 4})
    assert per.frac_bits["B3"] == 4
    with pytest.raises(InferenceError):
        eng.run_split(ae2["input"], "B3", "w10_f8", frac_bits=16)


def test_saturation_is_reported(ae1):
    res = Engine(ae1["net"], ae1["weights"]).run_split(ae1["input"], "B2", "w10_f8", frac_bits=12)
    assert res.saturated["B1"] > 0 and res.any_overflow
    md = res.metadata()
    assert md["requantize_saturations"]["B1"] == res.saturated["B1"]


def test_batchnorm_folds_and_lut_activations():
    layers = [{"id": "c", "type": "conv2d", "kernel": [3, 3], "filters": 2},
              {"id": "bn", "type": "batchnorm"},
              {"id": "a", "type": "activation", "activation": "sigmoid"},
              {"id": "c2", "type": "conv2d", "kernel": [1, 1], "filters": 2, "activation": "tanh"}]
    net = net_of(layers, (12, 12, 1))
    rng = np.random.default_rng(5)
    # F10-exact weights and power-of-two batchnorm scales: folding then quantizing loses nothing
    w = {("c", "kernel"): real(rng.integers(-6, 7, (9, 1, 2)) * 2 / 256.0),
         ("c", "bias"): real(np.zeros((1, 1, 2))),
         ("bn", "kernel"): real([[[0.5, 2.0]]]), ("bn", "bias"): real([[[0.125, -0.25]]]),
         ("c2", "kernel"): real(rng.integers(-256, 257, (1, 2, 2)) / 256.0)}
    x = rng.integers(0, 256, (12, 12, 1)).astype(np.float32)
    eng = Engine(net, w)
    ref = eng.run_reference(x).data
    fp = eng.run_split(x, "c2", "w10_fp").output.data
    f8 = eng.run_split(x, "c2", "w10_f8").output.data
    assert np.abs(fp - ref).max() < 1e-5
    # sigmoid bucket half-width 0.5 x slope 1/4, then two unit weights into tanh
    assert np.abs(f8 - ref).max() < 0.3
    assert eng.run_split(x, "bn", "fp32").output.data.tobytes() == ref.tobytes()


def test_unfoldable_batchnorm_and_transpose_rejected():
    layers = [{"id": "c", "type": "conv2d", "kernel": [1, 1], "filters": 1, "activation": "relu"},
              {"id": "bn", "type": "batchnorm"}]
    net = net_of(layers, (2, 2, 1))
    w = {("c", "kernel"): real([[[1.0]]]), ("bn", "kernel"): real([[[1.0]]]), ("bn", "bias"): real([[[0.0]]])}
    with pytest.raises(InferenceError, match="fold"):
        run_split(net, w, np.ones((2, 2, 1)), "bn", "w10_f8")
    net2 = net_of([{"id": "t", "type": "conv_transpose2d", "kernel": [2, 2], "filters": 1, "stride": 2}], (2, 2, 1))
    w2 = {("t", "kernel"): real(np.ones((4, 1, 1)))}
    with pytest.raises(InferenceError, match="fixed point"):
        run_split(net2, w2, np.ones((2, 2, 1)), "t", "w10_f8")
    assert run_split(net2, w2, np.ones((2, 2, 1)), "t", "w10_fp").output.data.shape == (4, 4, 1)


def test_weight_and_input_validation():
    net = net_of([{"id": "c", "type": "conv2d", "kernel": [3, 3], "filters": 2}], (4, 4, 1))
    with pytest.raises(InferenceError, match="missing kernel"):
        Engine(net, {})
    with pytest.raises(InferenceError, match="values"):
        Engine(net, {("c", "kernel"): real(np.ones((1, 1, 3)))})
    with pytest.raises(InferenceError, match="unknown layer"):
        Engine(net, {("c", "kernel"): real(np.ones((9, 1, 2))), ("zz", "bias"): real(np.ones((1, 1, 1)))})
    eng = Engine(net, {("c", "kernel"): real(np.ones((9, 1, 2)))})
    with pytest.raises(InferenceError, match="shape"):
        eng.run_reference(np.ones((5, 4, 1)))
    with pytest.raises(InferenceError, match="precision"):
        eng.run_split(np.ones((4, 4, 1)), "c", "int4")
    with pytest.raises(Exception):
        eng.run_split(np.ones((4, 4, 1)), "nope", "fp32")


def test_u8_tensor_input_equals_real_input(ae2):
    eng = Engine(ae2["net"], ae2["weights"])
    a = eng.run_split(ae2["input"], "B3", "w10_f8").output.data
    b = eng.run_split(ae2["input"].to_real(), "B3", "w10_f8").output.data
    assert a.tobytes() == b.tobytes()
