"""Tape engine tests: every primitive op is checked against central finite
differences, plus the backward/optimizer contracts."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modn import autodiff as ad

from conftest import finite_arrays

FD_STEP = 1e-5
FD_TOL = 1e-4


def fd_check(build, params):
    """build(tape) -> scalar loss; FD-checks d(loss)/d(p) for every param.

    Tolerance is relative plus an absolute term scaled to the loss value:
    central differences carry rounding noise of order |loss| * eps / step,
    which dominates whenever a true gradient cancels to ~0.
    """
    store = ad.ParamStore()
    tensors = {name: store.add(name, value) for name, value in params.items()}
    tape = ad.Tape()
    loss = build(tape, tensors)
    ad.backward(tape, loss, store)
    atol = 1e-8 * max(1.0, abs(float(loss.data)))
    for name, tensor in store.items():
        flat = tensor.data.reshape(-1)
        grad = tensor.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + FD_STEP
            up = float(build(None, tensors).data)
            flat[i] = orig - FD_STEP
            down = float(build(None, tensors).data)
            flat[i] = orig
            fd = (up - down) / (2 * FD_STEP)
            err = abs(grad[i] - fd)
            bound = FD_TOL * max(abs(grad[i]), abs(fd)) + atol
            assert err <= bound, f"{name}[{i}]: {grad[i]} vs fd {fd} (err {err:.3e})"


# ---------------------------------------------------------------------------
# per-op finite-difference checks
# ---------------------------------------------------------------------------


@given(x=finite_arrays((5,)), w=finite_arrays((3, 5), -1, 1), b=finite_arrays((3,)))
def test_affine_vector_gradients(x, w, b):
    fd_check(lambda t, p: ad.sse(t, ad.affine(t, p["x"], p["w"], p["b"]), np.arange(3.0)),
             {"x": x, "w": w, "b": b})


@given(x=finite_arrays((4, 3)), w=finite_arrays((2, 3), -1, 1), b=finite_arrays((2,)))
def test_affine_rows_gradients(x, w, b):
    fd_check(lambda t, p: ad.sse(t, ad.affine(t, p["x"], p["w"], p["b"]), np.ones((4, 2))),
             {"x": x, "w": w, "b": b})


@pytest.mark.parametrize("op", [ad.tanh, ad.sigmoid])
@given(x=finite_arrays((6,)))
def test_elementwise_gradients(op, x):
    fd_check(lambda t, p: ad.sse(t, op(t, p["x"]), np.zeros(6)), {"x": x})


@given(x=finite_arrays((6,)))
def test_relu_gradients(x):
    x = np.where(np.abs(x) < 1e-3, 0.5, x)  # keep clear of the kink
    fd_check(lambda t, p: ad.sse(t, ad.relu(t, p["x"]), np.zeros(6)), {"x": x})


@given(a=finite_arrays((4,)), b=finite_arrays((4,)))
def test_add_and_concat_gradients(a, b):
    fd_check(lambda t, p: ad.sse(t, ad.add(t, p["a"], p["b"]), np.ones(4)), {"a": a, "b": b})
    fd_check(lambda t, p: ad.sse(t, ad.concat_last(t, p["a"], p["b"]), np.ones(8)),
             {"a": a, "b": b})


@given(x=finite_arrays((5, 3)))
def test_gather_and_rows_add_gradients(x):
    idx = np.array([0, 2, 4])
    fd_check(lambda t, p: ad.sse(t, ad.gather_rows(t, p["x"], idx), np.ones((3, 3))), {"x": x})
    fd_check(
        lambda t, p: ad.sse(t, ad.rows_add(t, p["x"], idx, ad.gather_rows(t, p["x"], np.array([1, 1, 3]))),
                            np.ones((5, 3))),
        {"x": x},
    )


@given(v=finite_arrays((4,)))
def test_tile_rows_gradients(v):
    fd_check(lambda t, p: ad.sse(t, ad.tile_rows(t, p["v"], 3), np.ones((3, 4))), {"v": v})


@given(z=finite_arrays((5,)), y_bits=st.lists(st.integers(0, 1), min_size=5, max_size=5))
def test_bce_with_logits_gradients(z, y_bits):
    y = np.array(y_bits, dtype=np.float64)
    fd_check(lambda t, p: ad.bce_with_logits(t, p["z"], y), {"z": z})


@given(x=finite_arrays((4,)))
def test_mul_const_and_add_n_gradients(x):
    fd_check(
        lambda t, p: ad.mul_const(t, ad.add_n(t, [ad.sse(t, p["x"], np.zeros(4)),
                                                  ad.sse(t, p["x"], np.ones(4))]), 0.25),
        {"x": x},
    )


# ---------------------------------------------------------------------------
# mlp forward
# ---------------------------------------------------------------------------


def test_identity_network_passes_input_through():
    spec = ad.MlpSpec((2, 2))
    store = ad.ParamStore()
    store.add("w0", np.eye(2))
    store.add("b0", np.zeros(2))
    out = ad.mlp_forward(spec, store, ad.Tensor([0.3, -1.2]), None)
    np.testing.assert_array_equal(out.data, [0.3, -1.2])


def test_zero_params_with_sigmoid_gives_half():
    spec = ad.MlpSpec((3, 4, 2), output_activation="sigmoid")
    store = ad.ParamStore()
    for layer, (i, o) in enumerate([(3, 4), (4, 2)]):
        store.add(f"w{layer}", np.zeros((o, i)))
        store.add(f"b{layer}", np.zeros(o))
    out = ad.mlp_forward(spec, store, ad.Tensor([9.0, -4.0, 2.0]), None)
    np.testing.assert_array_equal(out.data, [0.5, 0.5])


def test_forward_matches_straight_line_reference():
    # independent reference: plain matrix arithmetic, no tape machinery
    spec = ad.MlpSpec((3, 4, 2))
    rng = np.random.default_rng(12)
    store = ad.ParamStore()
    ad.init_mlp_params(store, "", spec, rng)
    x = np.array([1.0, 0.0, -1.0])
    out = ad.mlp_forward(spec, store, ad.Tensor(x), None).data
    expected = store["w1"].data @ np.tanh(store["w0"].data @ x + store["b0"].data) + store["b1"].data
    np.testing.assert_allclose(out, expected, rtol=0, atol=0)


def test_forward_is_deterministic():
    spec = ad.MlpSpec((4, 6, 2), output_activation="sigmoid")
    store = ad.ParamStore()
    ad.init_mlp_params(store, "", spec, np.random.default_rng(5))
    x = ad.Tensor(np.random.default_rng(6).normal(size=4))
    a = ad.mlp_forward(spec, store, x, None).data
    b = ad.mlp_forward(spec, store, x, None).data
    np.testing.assert_array_equal(a, b)


def test_shape_error_names_offending_layer():
    spec = ad.MlpSpec((3, 4, 2))
    store = ad.ParamStore()
    ad.init_mlp_params(store, "", spec, np.random.default_rng(0))
    with pytest.raises(ad.ShapeError):
        ad.mlp_forward(spec, store, ad.Tensor([1.0, 2.0]), None)
    store2 = ad.ParamStore()
    store2.add("w0", np.zeros((4, 3)))
    store2.add("b0", np.zeros(3))  # wrong width
    store2.add("w1", np.zeros((2, 4)))
    store2.add("b1", np.zeros(2))
    with pytest.raises(ad.ShapeError, match="layer 0"):
        ad.mlp_forward(spec, store2, ad.Tensor([1.0, 2.0, 3.0]), None)


@given(x=finite_arrays((3,), -50, 50))
def test_sigmoid_outputs_strictly_inside_unit_interval(x):
    out = ad.sigmoid(None, ad.Tensor(x)).data
    assert np.all(out > 0.0) and np.all(out < 1.0)


# ---------------------------------------------------------------------------
# backward contracts
# ---------------------------------------------------------------------------


def test_constant_loss_gives_zero_gradients():
    store = ad.ParamStore()
    store.add("w", np.array([1.0, 2.0]))
    tape = ad.Tape()
    loss = ad.constant(tape, 3.0)
    ad.backward(tape, loss, store)
    np.testing.assert_array_equal(store["w"].grad, [0.0, 0.0])


def test_sum_of_squares_gradient_is_2w():
    store = ad.ParamStore()
    w = store.add("w", np.array([1.5, -2.0, 0.5]))
    tape = ad.Tape()
    loss = ad.sse(tape, w, np.zeros(3))
    ad.backward(tape, loss, store)
    np.testing.assert_allclose(store["w"].grad, 2 * w.data)


def test_backward_rejects_non_scalar_and_off_tape_nodes():
    store = ad.ParamStore()
    w = store.add("w", np.array([1.0, 2.0]))
    tape = ad.Tape()
    vec = ad.add(tape, w, w)
    with pytest.raises(ad.ContractError, match="scalar"):
        ad.backward(tape, vec, store)
    other = ad.sse(ad.Tape(), w, np.zeros(2))
    with pytest.raises(ad.ContractError, match="tape"):
        ad.backward(tape, other, store)


def test_double_backward_accumulates_exactly_twice():
    store = ad.ParamStore()
    w = store.add("w", np.array([0.3, -0.7, 1.1]))
    tape = ad.Tape()
    loss = ad.bce_with_logits(tape, ad.tanh(tape, w), np.array([1.0, 0.0, 1.0]))
    ad.backward(tape, loss, store)
    once = store["w"].grad.copy()
    ad.backward(tape, loss, store)
    np.testing.assert_array_equal(store["w"].grad, 2 * once)


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------


def test_sgd_step_example():
    store = ad.ParamStore()
    p = store.add("p", np.array([1.0]))
    p.grad[...] = 2.0
    ad.Sgd(0.1).step(store)
    np.testing.assert_allclose(p.data, [0.8])
    np.testing.assert_array_equal(p.grad, [0.0])  # accumulator reset


def test_adam_zero_gradients_leave_parameters_unchanged_but_advance_state():
    store = ad.ParamStore()
    p = store.add("p", np.array([0.4, -0.2]))
    opt = ad.Adam(lr=0.05)
    opt.step(store)
    np.testing.assert_array_equal(p.data, [0.4, -0.2])
    assert opt.t == 1 and "p" in opt._m


def test_adam_matches_scripted_reference_recurrence():
    # independent reference: the Adam recurrence written out longhand
    lr, b1, b2, eps = 1e-2, 0.9, 0.999, 1e-8
    w_ref = 1.0
    m = v = 0.0
    store = ad.ParamStore()
    w = store.add("w", np.array([1.0]))
    opt = ad.Adam(lr, b1, b2, eps)
    for t in range(1, 4):
        grad = 2.0 * w_ref  # quadratic loss w^2
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        w_ref -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)

        tape = ad.Tape()
        loss = ad.sse(tape, w, np.zeros(1))
        ad.backward(tape, loss, store)
        opt.step(store)
    np.testing.assert_allclose(w.data, [w_ref], rtol=1e-12)


def test_invalid_learning_rate_rejected():
    with pytest.raises(ad.ConfigError):
        ad.OptimizerConfig(lr=0.0)
    with pytest.raises(ad.ConfigError):
        ad.Sgd(-1.0)


def test_optimizer_step_function_applies_configured_rule():
    store = ad.ParamStore()
    p = store.add("p", np.array([1.0]))
    p.grad[...] = 2.0
    ad.optimizer_step(store, ad.OptimizerConfig(method="sgd", lr=0.1))
    np.testing.assert_allclose(p.data, [0.8])


# ---------------------------------------------------------------------------
# grad_check
# ---------------------------------------------------------------------------


def test_grad_check_linear_net_is_nearly_exact():
    assert ad.grad_check(ad.MlpSpec((3, 2)), "sse", seed=0) < 1e-8


def test_grad_check_sigmoid_bce():
    assert ad.grad_check(ad.MlpSpec((4, 8, 3), output_activation="sigmoid"), "bce", seed=7) < 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_grad_check_sweep(seed):
    spec = ad.MlpSpec((5, 6, 2), output_activation="sigmoid")
    assert ad.grad_check(spec, "bce", seed) < 1e-4


def test_mlp_spec_validation():
    with pytest.raises(ad.ConfigError):
        ad.MlpSpec((3,))
    with pytest.raises(ad.ConfigError):
        ad.MlpSpec((3, 0, 2))
    with pytest.raises(ad.ConfigError):
        ad.MlpSpec((3, 2), hidden_activation="selu")
