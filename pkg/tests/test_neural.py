import numpy as np
import pytest

from celldtx.neural import AdamState, Mlp, adam_step, backward, forward, init, smooth_l1


def numeric_grads(net, states, actions, targets, normalizers=None, h=1e-5):
    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            lp = backward(net, states, actions, targets, normalizers)[0]
            p[i] = old - h
            lm = backward(net, states, actions, targets, normalizers)[0]
            p[i] = old
            g[i] = (lp - lm) / (2 * h)
        grads.append(g)
    return grads


def max_rel_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-7)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def test_init_seeded_and_bounded():
    a = init(np.random.default_rng(0), [100, 20, 3])
    b = init(np.random.default_rng(0), [100, 20, 3])
    assert all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))
    assert np.abs(a.weights[0]).max() <= 0.1
    assert np.abs(a.weights[1]).max() <= 1 / np.sqrt(20)
    assert all(np.all(bias == 0) for bias in a.biases)
    assert a.layer_sizes == [100, 20, 3]


def test_zero_net_outputs_zero():
    net = Mlp([np.zeros((8, 4)), np.zeros((4, 4)), np.zeros((4, 3))],
              [np.zeros(4), np.zeros(4), np.zeros(3)])
    out = forward(net, np.random.default_rng(0).normal(size=(5, 8)), np.ones(8))
    assert out.shape == (5, 3) and np.all(out == 0)


def hand_net():
    # a single hidden path: h1 = relu(2*x0/4 + 1), h2 = relu(3*h1 - 1), out = [5*h2 + 0.5, -h2]
    w1 = np.zeros((8, 2)); w1[0, 0] = 2.0
    b1 = np.array([1.0, 0.0])
    w2 = np.zeros((2, 2)); w2[0, 0] = 3.0
    b2 = np.array([-1.0, 0.0])
    w3 = np.zeros((2, 2)); w3[0, 0] = 5.0; w3[0, 1] = -1.0
    b3 = np.array([0.5, 0.0])
    return Mlp([w1, w2, w3], [b1, b2, b3])


def test_hand_built_path():
    net = hand_net()
    x = np.zeros(8); x[0] = 6.0
    norm = np.ones(8); norm[0] = 4.0
    # x0/4 = 1.5 -> h1 = 4 -> h2 = 11 -> out = [55.5, -11]
    assert np.array_equal(forward(net, x, norm), [55.5, -11.0])


def test_relu_kills_negated_first_layer():
    net = hand_net()
    x = np.zeros(8); x[0] = 6.0
    flipped = net.copy()
    flipped.weights[0] *= -1
    flipped.biases[0] *= -1
    out = forward(flipped, x, np.ones(8))
    # h1 = relu(-13) = 0, h2 = relu(-1) = 0 -> only the output bias remains
    assert np.array_equal(out, flipped.biases[-1])


def test_forward_rejects_bad_shapes():
    net = init(np.random.default_rng(0), [8, 4, 3])
    with pytest.raises(ValueError):
        forward(net, np.ones(7))
    with pytest.raises(ValueError):
        forward(net, np.ones(8), np.zeros(8))


def test_final_layer_homogeneity():
    rng = np.random.default_rng(3)
    net = init(rng, [8, 16, 16, 5])
    x = rng.uniform(0, 1, size=(20, 8))
    base = forward(net, x)
    scaled = net.copy()
    scaled.weights[-1] *= 2.5
    scaled.biases[-1] *= 2.5
    out = forward(scaled, x)
    assert np.allclose(out, 2.5 * base)
    assert np.array_equal(out.argmax(axis=1), base.argmax(axis=1))


@pytest.mark.parametrize("d,loss,grad", [(0.5, 0.125, 0.5), (2.0, 1.5, 1.0), (0.0, 0.0, 0.0),
                                         (-3.0, 2.5, -1.0)])
def test_smooth_l1(d, loss, grad):
    assert smooth_l1(d, 0.0, 1.0) == (loss, grad)


def test_backward_zero_when_on_target():
    rng = np.random.default_rng(0)
    net = init(rng, [8, 5, 5, 3])
    s = rng.uniform(0, 1, size=(1, 8))
    target = forward(net, s)[0, 2]
    loss, grads = backward(net, s, [2], [target])
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads)


def test_backward_mean_reduction():
    rng = np.random.default_rng(1)
    net = init(rng, [8, 5, 5, 3])
    s = rng.uniform(0, 1, size=(1, 8))
    l1, g1 = backward(net, s, [1], [0.7])
    l2, g2 = backward(net, np.vstack([s, s]), [1, 1], [0.7, 0.7])
    assert l1 == pytest.approx(l2)
    assert all(np.allclose(a, b) for a, b in zip(g1, g2))


def test_backward_only_chosen_output():
    rng = np.random.default_rng(2)
    net = init(rng, [8, 5, 5, 3])
    s = rng.uniform(0, 1, size=(4, 8))
    _, grads = backward(net, s, [0, 0, 2, 2], [1.0, -1.0, 0.3, 0.2])
    assert np.all(grads[-2][:, 1] == 0) and grads[-1][1] == 0


def test_backward_rejects_bad_action():
    net = init(np.random.default_rng(0), [8, 5, 3])
    with pytest.raises(IndexError):
        backward(net, np.ones((1, 8)), [3], [0.0])
    with pytest.raises(ValueError):
        backward(net, np.ones((0, 8)), [], [])


def test_gradient_check_small_net():
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(10):
        net = init(rng, [8, 5, 5, 3])
        for p in net.biases:
            p += rng.normal(scale=0.1, size=p.shape)
        n = int(rng.integers(1, 9))
        states = rng.uniform(0, 3, size=(n, 8))
        norm = rng.uniform(0.5, 3, size=8)
        actions = rng.integers(0, 3, size=n)
        targets = rng.normal(scale=2.0, size=n)
        _, analytic = backward(net, states, actions, targets, norm)
        worst = max(worst, max_rel_error(analytic, numeric_grads(net, states, actions, targets, norm)))
    assert worst < 1e-4


def test_adam_first_step_magnitude():
    net = Mlp([np.array([[1.0]])], [np.array([0.0])])
    adam = AdamState.for_net(net, lr=1e-3)
    adam_step(net, [np.array([[0.37]]), np.array([0.0])], adam)
    assert net.weights[0][0, 0] == pytest.approx(1.0 - 1e-3, abs=1e-10)
    assert net.biases[0][0] == 0.0
    assert adam.step == 1


def test_adam_zero_gradient_decays_moments():
    net = Mlp([np.array([[1.0]])], [np.array([0.0])])
    adam = AdamState.for_net(net, lr=0.1)
    adam.m[0][:] = 0.2
    adam.v[0][:] = 0.04
    adam.step = 5
    w_before = net.weights[0].copy()
    adam_step(net, [np.zeros((1, 1)), np.zeros(1)], adam)
    assert adam.m[0][0, 0] == pytest.approx(0.18)
    assert adam.v[0][0, 0] == pytest.approx(0.04 * 0.999)
    # momentum still moves the parameter; a fresh state would not
    fresh = Mlp([np.array([[1.0]])], [np.array([0.0])])
    fresh_adam = AdamState.for_net(fresh, lr=0.1)
    adam_step(fresh, [np.zeros((1, 1)), np.zeros(1)], fresh_adam)
    assert fresh.weights[0][0, 0] == 1.0
    assert not np.array_equal(net.weights[0], w_before)


def test_adam_two_steps_hand_computed():
    net = Mlp([np.array([[0.0]])], [np.array([0.0])])
    adam = AdamState.for_net(net, lr=0.1)
    g = [np.array([[0.5]]), np.array([0.0])]
    adam_step(net, g, adam)
    assert adam.m[0][0, 0] == pytest.approx(0.05)
    assert adam.v[0][0, 0] == pytest.approx(0.00025)
    adam_step(net, g, adam)
    assert adam.m[0][0, 0] == pytest.approx(0.095)
    assert adam.v[0][0, 0] == pytest.approx(0.00049975)
    # bias-corrected m/sqrt(v) = 0.5 / 0.5 both times
    assert net.weights[0][0, 0] == pytest.approx(-0.2, abs=1e-8)


def test_no_overflow_under_long_random_training():
    rng = np.random.default_rng(0)
    net = init(rng, [8, 16, 16, 6])
    adam = AdamState.for_net(net)
    for _ in range(100_000 // 50):
        states = rng.uniform(0, 1, size=(32, 8)) * rng.lognormal(0, 2, size=8)
        _, grads = backward(net, states, rng.integers(0, 6, 32), rng.normal(scale=5, size=32))
        for _ in range(50):
            adam_step(net, grads, adam)
    assert net.is_finite()
    assert adam.step == 100_000
