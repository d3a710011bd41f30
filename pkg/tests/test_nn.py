import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cbalance.nn import (
    EPS,
    CheckpointError,
    GradientSet,
    HIDDEN_ACTIVATIONS,
    MlpNetwork,
    ShapeError,
    UsageError,
    backward,
    clamp_prob,
    dumps_network,
    forward,
    grad_check,
    grad_check_report,
    load_network,
    loads_network,
    loss_and_grad,
    mlp_new,
    save_network,
    sgd_step,
)


def single_layer(w, b, out="identity"):
    w = np.array(w, dtype=float)
    return MlpNetwork([w.shape[1], w.shape[0]], [w], [np.array(b, dtype=float)], "relu", out)


def test_mlp_new_is_deterministic():
    a, b = mlp_new([2, 1], seed=7), mlp_new([2, 1], seed=7)
    assert a.same_params(b)
    assert not a.same_params(mlp_new([2, 1], seed=8))


def test_mlp_new_shape_chaining():
    net = mlp_new([3, 4, 1])
    assert [w.shape for w in net.weights] == [(4, 3), (1, 4)]
    assert [b.shape for b in net.biases] == [(4,), (1,)]


@pytest.mark.parametrize("sizes", [[2], [], [2, 0], [3, -1, 1]])
def test_mlp_new_rejects_bad_layer_lists(sizes):
    with pytest.raises(ShapeError):
        mlp_new(sizes)


def test_mlp_new_rejects_unknown_activation():
    with pytest.raises(ValueError):
        mlp_new([2, 1], "gelu")


def test_init_scale_is_glorot_uniform():
    net = mlp_new([50, 30, 1], seed=0)
    a = np.sqrt(6 / 80)
    assert np.abs(net.weights[0]).max() <= a
    assert np.abs(net.weights[0]).max() > 0.9 * a
    assert not np.any(net.biases[0])


def test_forward_examples():
    assert np.array_equal(forward(single_layer([[1, 0], [0, 1]], [0, 0]), [[3, -2]]), [[3, -2]])
    assert forward(single_layer([[1, 1]], [0], "sigmoid"), [[0, 0]])[0, 0] == 0.5
    assert forward(single_layer([[2, -1]], [0.5]), [[1, 1]])[0, 0] == 1.5


def test_forward_dimension_mismatch():
    with pytest.raises(ShapeError):
        forward(mlp_new([3, 2]), np.zeros((4, 2)))


def test_forward_keeps_row_count():
    net = mlp_new([3, 5, 4, 2], "tanh")
    assert forward(net, np.ones((7, 3))).shape == (7, 2)


def test_sigmoid_output_open_interval_and_clamp():
    net = mlp_new([2, 4, 1], "tanh", "sigmoid", seed=1)
    out = forward(net, np.random.default_rng(0).normal(size=(100, 2)))
    assert np.all((out > 0) & (out < 1))
    saturated = np.array([0.0, 1.0, 0.5])
    c = clamp_prob(saturated)
    assert c[0] == EPS and c[1] == 1 - EPS and c[2] == 0.5


def test_backward_requires_forward():
    with pytest.raises(UsageError):
        backward(mlp_new([2, 1]), np.zeros((1, 1)))


def test_backward_shape_mismatch():
    net = mlp_new([2, 1])
    forward(net, np.zeros((3, 2)))
    with pytest.raises(ShapeError):
        backward(net, np.zeros((2, 1)))


def test_zero_upstream_gives_zero_gradients():
    net = mlp_new([3, 4, 2], "tanh", seed=3)
    forward(net, np.random.default_rng(0).normal(size=(5, 3)))
    assert backward(net, np.zeros((5, 2))).is_zero()


def test_single_linear_neuron_chain_rule():
    net = single_layer([[1.5]], [0.0])
    forward(net, [[2.0]])
    g = backward(net, [[1.0]])
    assert g.weights[0][0, 0] == 2.0
    assert g.biases[0][0] == 1.0
    assert g.inputs[0, 0] == 1.5


def test_sgd_step_examples():
    for direction, expected in (("descend", 0.95), ("ascend", 1.05)):
        net = single_layer([[1.0]], [0.0])
        sgd_step(net, GradientSet([np.array([[0.5]])], [np.array([0.0])]), 0.1, direction)
        assert net.weights[0][0, 0] == pytest.approx(expected, abs=1e-15)


def test_sgd_step_zero_grads_is_noop():
    net = mlp_new([2, 3, 1], seed=2)
    before = net.copy()
    forward(net, np.ones((2, 2)))
    sgd_step(net, backward(net, np.zeros((2, 1))), 0.5)
    assert net.same_params(before)


def test_sgd_step_rejects_bad_input():
    net = mlp_new([2, 1])
    bad = GradientSet([np.zeros((2, 2))], [np.zeros(1)])
    with pytest.raises(ShapeError):
        sgd_step(net, bad, 0.1)
    with pytest.raises(ValueError):
        sgd_step(net, GradientSet([np.zeros((1, 2))], [np.zeros(1)]), 0.0)


def test_grad_check_linear_quadratic():
    rng = np.random.default_rng(5)
    net = single_layer(rng.normal(size=(2, 3)), rng.normal(size=2))
    assert grad_check(net, rng.normal(size=(6, 3)), "quadratic", rng.normal(size=(6, 2))) < 1e-7


@pytest.mark.parametrize("loss", ["disc_real", "disc_fake", "disc_log", "gen_saturating", "gen_non_saturating"])
def test_grad_check_sigmoid_discriminator_losses(loss):
    rng = np.random.default_rng(6)
    net = mlp_new([3, 5, 1], "tanh", "sigmoid", seed=4)
    assert grad_check(net, rng.normal(size=(6, 3)), loss) < 1e-4


def test_grad_check_relu_away_from_kinks():
    rng = np.random.default_rng(7)
    net = mlp_new([2, 6, 1], "relu", "identity", seed=9)
    x = rng.normal(size=(4, 2))
    z = x @ net.weights[0].T + net.biases[0]
    assert np.abs(z).min() > 1e-3
    assert grad_check(net, x, "quadratic") < 1e-4


def test_grad_check_detects_corruption():
    net = mlp_new([2, 3, 1], "tanh", "sigmoid", seed=1)
    res = grad_check_report(net, np.ones((2, 2)), "disc_real", corrupt=True)
    assert res.max_relative_error > 1e-2
    assert res.worst_param == "W0"


@settings(max_examples=60, deadline=None)
@given(
    sizes=st.lists(st.integers(1, 8), min_size=2, max_size=3),
    hidden=st.sampled_from(HIDDEN_ACTIVATIONS),
    seed=st.integers(0, 2**16),
)
def test_gradient_fidelity_property(sizes, hidden, seed):
    rng = np.random.default_rng(seed)
    net = mlp_new(sizes, hidden, "identity", seed=seed)
    x = rng.normal(size=(3, sizes[0]))
    if hidden == "relu" and len(sizes) == 3:
        z = x @ net.weights[0].T + net.biases[0]
        if np.abs(z).min() < 1e-3:
            return
    assert grad_check(net, x, "quadratic", rng.normal(size=(3, sizes[-1]))) < 1e-4


def test_loss_gradient_zero_in_clamped_region():
    _, g = loss_and_grad("disc_real", np.array([[0.0], [0.5]]))
    assert g[0, 0] == 0.0 and g[1, 0] != 0.0


def test_determinism_of_operation_sequence():
    def run():
        net = mlp_new([2, 4, 1], "tanh", "sigmoid", seed=3)
        x = np.random.default_rng(1).normal(size=(8, 2))
        for _ in range(5):
            out = forward(net, x)
            sgd_step(net, backward(net, out - 0.3), 0.1)
        return net

    assert run().same_params(run())


def test_checkpoint_round_trip_is_exact(tmp_path):
    net = mlp_new([3, 5, 2], "tanh", "identity", seed=8)
    net.biases[0] += 1 / 3
    save_network(net, tmp_path / "n.ckpt")
    back = load_network(tmp_path / "n.ckpt")
    assert back.same_params(net)
    assert (back.hidden_activation, back.output_activation) == ("tanh", "identity")
    assert dumps_network(net).splitlines()[0] == "mlp 3->5->2 tanh identity"


@pytest.mark.parametrize(
    "text",
    [
        "",
        "mlp 2 relu identity\n",
        "net 2->1 relu identity\n1 2\n0\n",
        "mlp 2->1 relu softmax\n1 2\n0\n",
        "mlp 2->1 relu identity\n1 2 3\n0\n",
        "mlp 2->1 relu identity\n1 x\n0\n",
        "mlp 2->1 relu identity\n1 2\n",
    ],
)
def test_checkpoint_parse_errors(text):
    with pytest.raises(CheckpointError):
        loads_network(text)
