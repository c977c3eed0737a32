import numpy as np
import pytest

from hresnas.tree import LinearNode, Network, ResidualNode, validate


def rand_linear(fan_in, fan_out, rng, dtype=np.float64):
    node = LinearNode.random(fan_in, fan_out, rng, dtype)
    node.bias = rng.normal(0.0, 0.1, fan_out).astype(dtype)
    return node


def rand_node(fan_in, fan_out, depth, rng, dtype, counter, max_width=16,
              p_linear=0.35):
    if depth == 0 or rng.random() < p_linear:
        return rand_linear(fan_in, fan_out, rng, dtype)
    hidden = int(rng.integers(1, max_width + 1))
    layer_id = counter[0]
    counter[0] += 1
    return ResidualNode(
        layer_id,
        rand_linear(fan_in, fan_out, rng, dtype),
        rand_node(fan_in, hidden, depth - 1, rng, dtype, counter, max_width, p_linear),
        rand_node(hidden, fan_out, depth - 1, rng, dtype, counter, max_width, p_linear),
    )


def rand_net(seed, depth=3, dtype=np.float64, loss="mse", max_width=16,
             fan_in=None, fan_out=None):
    """Random tree whose root is residual, so a catalog always exists."""
    rng = np.random.default_rng(seed)
    counter = [0]
    fan_in = fan_in or int(rng.integers(2, 9))
    fan_out = fan_out or int(rng.integers(2, 9))
    hidden = int(rng.integers(1, max_width + 1))
    root = ResidualNode(
        counter[0],
        rand_linear(fan_in, fan_out, rng, dtype),
        rand_node(fan_in, hidden, depth - 1, rng, dtype, [1000], max_width),
        rand_node(hidden, fan_out, depth - 1, rng, dtype, [2000], max_width),
    )
    net = Network([root], loss=loss, next_layer_id=10000)
    validate(net)
    return net


def rel_err(a, b, floor=1e-8):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


@pytest.fixture
def rng():
    return np.random.default_rng(0)
