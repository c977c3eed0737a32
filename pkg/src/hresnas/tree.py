"""The hierarchical residual network: a recursive tree of connections.

A connection is either a plain linear layer or a residual block whose output
is shortcut(x) + inner1(relu(dropout(inner0(x)))). The two inner connections
may themselves be residual blocks, recursively. All capacity edits (widen,
grow a layer, decay/prune neurons, remove a layer) preserve or nearly
preserve the function the network currently computes, so training continues
across them without restart.
"""
from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field

import numpy as np

from .heuristics import growth_threshold
from .kernels import (
    AdamState,
    ShapeError,
    adam_step,
    dropout_backward,
    dropout_forward,
    extend_map,
    identity_map,
    linear_backward,
    linear_forward,
    relu,
    remap_adam_state,
)

CHECKPOINT_MAGIC = b"HRNN"
CHECKPOINT_VERSION = 1

LOSS_KINDS = ("softmax_ce", "mse")


class UnknownLayerError(KeyError):
    pass


class StructureError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class LinearNode:
    """A weighted connection y = x W^T + b, with per-tensor Adam state."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray,
                 adam_w: AdamState | None = None, adam_b: AdamState | None = None):
        self.weight = weight
        self.bias = bias
        self.adam_w = adam_w if adam_w is not None else AdamState.for_param(weight)
        self.adam_b = adam_b if adam_b is not None else AdamState.for_param(bias)
        self.gw: np.ndarray | None = None  # scratch gradients from the last backward
        self.gb: np.ndarray | None = None

    @property
    def fan_in(self) -> int:
        return self.weight.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def random(cls, fan_in: int, fan_out: int, rng: np.random.Generator,
               dtype=np.float64) -> "LinearNode":
        scale = np.sqrt(1.0 / max(fan_in, 1))
        w = rng.uniform(-scale, scale, size=(fan_out, fan_in)).astype(dtype)
        return cls(w, np.zeros(fan_out, dtype=dtype))

    @classmethod
    def zeros(cls, fan_in: int, fan_out: int, dtype=np.float64) -> "LinearNode":
        return cls(np.zeros((fan_out, fan_in), dtype=dtype),
                   np.zeros(fan_out, dtype=dtype))


class ResidualNode:
    """shortcut(x) + inner1(relu(dropout(inner0(x)))).

    `decay` maps hidden-neuron index to a factor in (0, 1] that scales the
    neuron's outgoing contribution; neurons present in the map are frozen
    (their incoming weights receive no gradient) while the factor is driven
    toward zero ahead of pruning.
    """

    def __init__(self, layer_id: int, shortcut: LinearNode, inner0, inner1,
                 dropout_p: float = 0.0, decay: dict[int, float] | None = None):
        self.layer_id = layer_id
        self.shortcut = shortcut
        self.inner0 = inner0
        self.inner1 = inner1
        self.dropout_p = dropout_p
        self.decay = dict(decay) if decay else {}

    @property
    def fan_in(self) -> int:
        return self.shortcut.fan_in

    @property
    def fan_out(self) -> int:
        return self.shortcut.fan_out

    @property
    def hidden(self) -> int:
        return self.inner0.fan_out

    def decay_vector(self, dtype) -> np.ndarray:
        vec = np.ones(self.hidden, dtype=dtype)
        for idx, factor in self.decay.items():
            vec[idx] = factor
        return vec


Node = LinearNode | ResidualNode


class Network:
    """An ordered chain of connection trees plus the loss kind."""

    def __init__(self, blocks: list[Node], loss: str = "softmax_ce",
                 next_layer_id: int = 0):
        if loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {loss!r}")
        self.blocks = blocks
        self.loss = loss
        self.next_layer_id = next_layer_id

    @property
    def input_dim(self) -> int:
        return self.blocks[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.blocks[-1].fan_out

    @property
    def dtype(self):
        node = self.blocks[0]
        while isinstance(node, ResidualNode):
            node = node.shortcut
        return node.weight.dtype

    def alloc_layer_id(self) -> int:
        layer_id = self.next_layer_id
        self.next_layer_id += 1
        return layer_id

    def clone(self) -> "Network":
        return copy.deepcopy(self)

    @classmethod
    def linear(cls, input_dim: int, output_dim: int, loss: str,
               rng: np.random.Generator, dtype=np.float64) -> "Network":
        """The smallest starting point: one plain linear block."""
        return cls([LinearNode.random(input_dim, output_dim, rng, dtype)], loss)


# ---------------------------------------------------------------------------
# forward / backward

def _node_forward(node: Node, x: np.ndarray, training: bool,
                  rng: np.random.Generator | None) -> tuple[np.ndarray, dict]:
    if isinstance(node, LinearNode):
        return linear_forward(node.weight, node.bias, x), {"x": x}
    s, cache_s = _node_forward(node.shortcut, x, training, rng)
    z, cache_0 = _node_forward(node.inner0, x, training, rng)
    zd, mask = dropout_forward(z, node.dropout_p, training, rng)
    a = relu(zd)
    decay_vec = node.decay_vector(a.dtype) if node.decay else None
    g = a * decay_vec if decay_vec is not None else a
    r, cache_1 = _node_forward(node.inner1, g, training, rng)
    return s + r, {
        "s": cache_s, "i0": cache_0, "i1": cache_1,
        "zd": zd, "mask": mask, "a": a, "decay_vec": decay_vec,
    }


def forward(net: Network, x: np.ndarray, training: bool = False,
            rng: np.random.Generator | None = None) -> tuple[np.ndarray, list[dict]]:
    """Run the network. Returns (output, caches) where caches feed backward.

    Eval mode (training=False) is a pure deterministic function of weights
    and input; train mode applies dropout and records intermediates.
    """
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(
            f"forward: input {x.shape} does not match network input dim "
            f"{net.input_dim}"
        )
    caches = []
    for block in net.blocks:
        x, cache = _node_forward(block, x, training, rng)
        caches.append(cache)
    return x, caches


def _node_backward(node: Node, cache: dict, d_out: np.ndarray,
                   sink=None) -> np.ndarray:
    if isinstance(node, LinearNode):
        d_x, node.gw, node.gb = linear_backward(node.weight, cache["x"], d_out)
        return d_x
    d_x = _node_backward(node.shortcut, cache["s"], d_out, sink)
    d_g = _node_backward(node.inner1, cache["i1"], d_out, sink)
    decay_vec = cache["decay_vec"]
    d_a = d_g * decay_vec if decay_vec is not None else d_g
    if sink is not None:
        sink.accumulate(node.layer_id, cache["a"], d_a)
    if node.decay:
        # decaying neurons are frozen: no gradient reaches their incoming side
        if decay_vec is None:
            d_a = d_a.copy()
        d_a[:, list(node.decay)] = 0.0
    d_zd = d_a * (cache["zd"] > 0)
    d_z = dropout_backward(d_zd, cache["mask"], node.dropout_p)
    d_x += _node_backward(node.inner0, cache["i0"], d_z, sink)
    return d_x


def backward(net: Network, caches: list[dict], d_out: np.ndarray,
             sink=None) -> np.ndarray:
    """Backpropagate d_out through the tree.

    Gradients land on each linear node's gw/gb scratch fields. If `sink` is
    given, every residual block streams its hidden (activation,
    activation-gradient) pair to sink.accumulate(layer_id, acts, grads).
    """
    if len(caches) != len(net.blocks):
        raise ValueError("backward: cache does not match network (stale?)")
    for block, cache in zip(reversed(net.blocks), reversed(caches)):
        d_out = _node_backward(block, cache, d_out, sink)
    return d_out


def iter_linear_nodes(net: Network):
    stack: list[Node] = list(reversed(net.blocks))
    while stack:
        node = stack.pop()
        if isinstance(node, LinearNode):
            yield node
        else:
            stack.extend([node.inner1, node.inner0, node.shortcut])


def iter_params(net: Network):
    """Yield (name, array) for every trainable tensor, in pre-order."""

    def walk(node: Node, prefix: str):
        if isinstance(node, LinearNode):
            yield f"{prefix}.weight", node.weight
            yield f"{prefix}.bias", node.bias
        else:
            yield from walk(node.shortcut, f"{prefix}.shortcut")
            yield from walk(node.inner0, f"{prefix}.inner0")
            yield from walk(node.inner1, f"{prefix}.inner1")

    for i, block in enumerate(net.blocks):
        yield from walk(block, f"block{i}")


def apply_adam(net: Network, lr: float) -> None:
    """Consume the scratch gradients from the last backward pass."""
    for node in iter_linear_nodes(net):
        if node.gw is None:
            raise ValueError("apply_adam: no gradients recorded")
        adam_step(node.weight, node.gw, node.adam_w, lr)
        adam_step(node.bias, node.gb, node.adam_b, lr)


# ---------------------------------------------------------------------------
# catalog / metrics / validation

@dataclass(frozen=True)
class CatalogEntry:
    layer_id: int
    fan_in: int
    hidden: int
    fan_out: int
    growable: bool  # both inners are plain linear layers


def layer_catalog(net: Network) -> list[CatalogEntry]:
    """All residual blocks in deterministic pre-order."""
    entries: list[CatalogEntry] = []

    def walk(node: Node):
        if isinstance(node, ResidualNode):
            entries.append(CatalogEntry(
                layer_id=node.layer_id, fan_in=node.fan_in, hidden=node.hidden,
                fan_out=node.fan_out,
                growable=isinstance(node.inner0, LinearNode)
                and isinstance(node.inner1, LinearNode),
            ))
            walk(node.inner0)
            walk(node.inner1)

    for block in net.blocks:
        walk(block)
    return entries


def find_layer(net: Network, layer_id: int) -> ResidualNode:
    def walk(node: Node):
        if isinstance(node, ResidualNode):
            if node.layer_id == layer_id:
                return node
            return walk(node.inner0) or walk(node.inner1)
        return None

    for block in net.blocks:
        found = walk(block)
        if found is not None:
            return found
    raise UnknownLayerError(f"no residual block with layer id {layer_id}")


def count_params(net: Network) -> int:
    return sum(node.weight.size + node.bias.size for node in iter_linear_nodes(net))


def depth(net: Network, neuron_floor: int = 10) -> int:
    """Longest input-to-output chain of weight layers at least `neuron_floor`
    wide. Thin layers are structural glue and do not count."""

    def node_depth(node: Node) -> int:
        if isinstance(node, LinearNode):
            return 1 if min(node.fan_in, node.fan_out) >= neuron_floor else 0
        return max(node_depth(node.shortcut),
                   node_depth(node.inner0) + node_depth(node.inner1))

    return sum(node_depth(block) for block in net.blocks)


def validate(net: Network) -> None:
    """Structural consistency walk; raises StructureError on any violation."""
    seen_ids: set[int] = set()

    def check(node: Node, fan_in: int, fan_out: int, where: str):
        if node.fan_in != fan_in or node.fan_out != fan_out:
            raise StructureError(
                f"{where}: expected {fan_in}->{fan_out}, "
                f"found {node.fan_in}->{node.fan_out}"
            )
        if isinstance(node, LinearNode):
            if node.bias.shape != (node.fan_out,):
                raise StructureError(f"{where}: bias shape {node.bias.shape}")
            if node.adam_w.m.shape != node.weight.shape or \
                    node.adam_b.m.shape != node.bias.shape:
                raise StructureError(f"{where}: optimizer state shape mismatch")
            if not (np.isfinite(node.weight).all() and np.isfinite(node.bias).all()):
                raise StructureError(f"{where}: non-finite parameters")
            return
        if node.layer_id in seen_ids:
            raise StructureError(f"{where}: duplicate layer id {node.layer_id}")
        if node.layer_id >= net.next_layer_id:
            raise StructureError(f"{where}: layer id {node.layer_id} not allocated")
        seen_ids.add(node.layer_id)
        h = node.hidden
        if node.inner1.fan_in != h:
            raise StructureError(
                f"{where}: inner widths disagree ({node.inner0.fan_out} vs "
                f"{node.inner1.fan_in})"
            )
        for idx, factor in node.decay.items():
            if not 0 <= idx < h:
                raise StructureError(f"{where}: decay index {idx} out of range")
            if not 0.0 < factor <= 1.0:
                raise StructureError(f"{where}: decay factor {factor} not in (0, 1]")
        check(node.shortcut, fan_in, fan_out, f"{where}.shortcut")
        check(node.inner0, fan_in, h, f"{where}.inner0")
        check(node.inner1, h, fan_out, f"{where}.inner1")

    if not net.blocks:
        raise StructureError("network has no blocks")
    dim = net.blocks[0].fan_in
    for i, block in enumerate(net.blocks):
        check(block, dim, block.fan_out, f"block{i}")
        dim = block.fan_out


# ---------------------------------------------------------------------------
# morphisms

@dataclass
class MorphReport:
    op: str
    layer_id: int | None
    changed: bool
    params_before: int
    params_after: int
    reason: str | None = None
    new_layer_ids: list[int] = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    @property
    def param_delta(self) -> int:
        return self.params_after - self.params_before


def _extend_output(node: Node, k: int, rng: np.random.Generator) -> None:
    """Append k output units. New rows get small random incoming weights."""
    if isinstance(node, LinearNode):
        dtype = node.weight.dtype
        scale = np.sqrt(1.0 / max(node.fan_in, 1))
        new_rows = rng.uniform(-scale, scale, size=(k, node.fan_in)).astype(dtype)
        row_map = extend_map(node.fan_out, k)
        node.adam_w = remap_adam_state(node.adam_w, row_map, identity_map(node.fan_in))
        node.adam_b = remap_adam_state(node.adam_b, row_map)
        node.weight = np.vstack([node.weight, new_rows])
        node.bias = np.concatenate([node.bias, np.zeros(k, dtype=dtype)])
    else:
        _extend_output(node.shortcut, k, rng)
        _extend_output(node.inner1, k, rng)


def _extend_input(node: Node, k: int) -> None:
    """Append k input slots. New columns are zero so the function is kept."""
    if isinstance(node, LinearNode):
        col_map = extend_map(node.fan_in, k)
        node.adam_w = remap_adam_state(node.adam_w, identity_map(node.fan_out), col_map)
        node.weight = np.hstack(
            [node.weight, np.zeros((node.fan_out, k), dtype=node.weight.dtype)]
        )
    else:
        _extend_input(node.shortcut, k)
        _extend_input(node.inner0, k)


def widen(net: Network, layer_id: int, k: int,
          rng: np.random.Generator) -> MorphReport:
    """Add k hidden neurons to a residual block.

    Incoming weights (new output rows of inner0, recursively) are random so
    the recruits see gradient; outgoing weights (new input columns of inner1,
    recursively) are zero, so eval outputs are exactly preserved.
    """
    node = find_layer(net, layer_id)
    before = count_params(net)
    if k < 0:
        raise ValueError("widen: k must be >= 0")
    if k > 0:
        _extend_output(node.inner0, k, rng)
        _extend_input(node.inner1, k)
        validate(net)
    return MorphReport(
        op="widen", layer_id=layer_id, changed=k > 0,
        params_before=before, params_after=count_params(net),
        detail={"added": k, "hidden": node.hidden},
    )


def grow_layer(net: Network, layer_id: int, seed_hidden: int = 2,
               rng: np.random.Generator | None = None) -> MorphReport:
    """Convert both inner connections of a residual block from linear to
    residual, deepening the tree.

    Only fires when both inners are plain linear and the hidden width
    exceeds (fan_in * fan_out^2)^(1/3); otherwise reports a no-op with the
    reason. Each new inner block wraps the old linear as its shortcut
    (weights and optimizer state move) and starts a seed-width residual path
    whose outgoing side is zero, so the function is exactly preserved.
    """
    node = find_layer(net, layer_id)
    before = count_params(net)
    if not (isinstance(node.inner0, LinearNode) and isinstance(node.inner1, LinearNode)):
        return MorphReport(op="grow_layer", layer_id=layer_id, changed=False,
                           params_before=before, params_after=before,
                           reason="inner connections are already residual")
    limit = growth_threshold(node.fan_in, node.fan_out)
    if not node.hidden > limit:
        return MorphReport(op="grow_layer", layer_id=layer_id, changed=False,
                           params_before=before, params_after=before,
                           reason=f"hidden width {node.hidden} <= threshold {limit:.4f}")
    if rng is None:
        rng = np.random.default_rng()
    dtype = net.dtype

    def convert(old: LinearNode) -> ResidualNode:
        return ResidualNode(
            layer_id=net.alloc_layer_id(),
            shortcut=old,
            inner0=LinearNode.random(old.fan_in, seed_hidden, rng, dtype),
            inner1=LinearNode.zeros(seed_hidden, old.fan_out, dtype),
            dropout_p=node.dropout_p,
        )

    node.inner0 = convert(node.inner0)
    node.inner1 = convert(node.inner1)
    validate(net)
    return MorphReport(
        op="grow_layer", layer_id=layer_id, changed=True,
        params_before=before, params_after=count_params(net),
        new_layer_ids=[node.inner0.layer_id, node.inner1.layer_id],
        detail={"seed_hidden": seed_hidden},
    )


def promote_block(net: Network, block_index: int, dropout_p: float = 0.0) -> MorphReport:
    """Wrap a top-level linear block in a residual block with an empty hidden
    layer, making it a growth site. The linear becomes the shortcut, so the
    function is unchanged; widen() then populates the hidden layer."""
    old = net.blocks[block_index]
    before = count_params(net)
    if not isinstance(old, LinearNode):
        return MorphReport(op="promote", layer_id=None, changed=False,
                           params_before=before, params_after=before,
                           reason="block is already residual")
    dtype = old.weight.dtype
    node = ResidualNode(
        layer_id=net.alloc_layer_id(),
        shortcut=old,
        inner0=LinearNode.zeros(old.fan_in, 0, dtype),
        inner1=LinearNode.zeros(0, old.fan_out, dtype),
        dropout_p=dropout_p,
    )
    net.blocks[block_index] = node
    validate(net)
    return MorphReport(
        op="promote", layer_id=node.layer_id, changed=True,
        params_before=before, params_after=count_params(net),
        new_layer_ids=[node.layer_id],
    )


def mark_decay(net: Network, victims: list[tuple[int, int]]) -> None:
    """Register hidden neurons for gradual removal; factors start at 1."""
    for layer_id, idx in victims:
        node = find_layer(net, layer_id)
        if not 0 <= idx < node.hidden:
            raise IndexError(
                f"mark_decay: neuron {idx} out of range for layer {layer_id} "
                f"(hidden {node.hidden})"
            )
        node.decay.setdefault(idx, 1.0)


def apply_decay_step(net: Network, gamma: float) -> None:
    """Multiply every registered neuron's outgoing factor by gamma."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError("apply_decay_step: gamma must be in (0, 1]")

    def walk(node: Node):
        if isinstance(node, ResidualNode):
            for idx in node.decay:
                node.decay[idx] *= gamma
            walk(node.inner0)
            walk(node.inner1)

    for block in net.blocks:
        walk(block)


def _shrink_output(node: Node, keep: np.ndarray) -> None:
    if isinstance(node, LinearNode):
        node.adam_w = remap_adam_state(node.adam_w, keep, identity_map(node.fan_in))
        node.adam_b = remap_adam_state(node.adam_b, keep)
        node.weight = node.weight[keep]
        node.bias = node.bias[keep]
    else:
        _shrink_output(node.shortcut, keep)
        _shrink_output(node.inner1, keep)


def _shrink_input(node: Node, keep: np.ndarray) -> None:
    if isinstance(node, LinearNode):
        node.adam_w = remap_adam_state(node.adam_w, identity_map(node.fan_out), keep)
        node.weight = node.weight[:, keep]
    else:
        _shrink_input(node.shortcut, keep)
        _shrink_input(node.inner0, keep)


def prune(net: Network, victims: list[tuple[int, int]]) -> MorphReport:
    """Delete hidden neurons, the exact mirror of widen.

    Rows/columns are removed recursively, optimizer state is remapped, and
    surviving decay-registry entries are reindexed.
    """
    before = count_params(net)
    by_layer: dict[int, set[int]] = {}
    for layer_id, idx in victims:
        by_layer.setdefault(layer_id, set()).add(idx)
    pruned: dict[int, int] = {}
    for layer_id, idxs in by_layer.items():
        node = find_layer(net, layer_id)
        bad = [i for i in idxs if not 0 <= i < node.hidden]
        if bad:
            raise IndexError(f"prune: neurons {bad} out of range for layer {layer_id}")
        keep = np.array([i for i in range(node.hidden) if i not in idxs],
                        dtype=np.int64)
        _shrink_output(node.inner0, keep)
        _shrink_input(node.inner1, keep)
        new_pos = {int(old): new for new, old in enumerate(keep)}
        node.decay = {new_pos[i]: f for i, f in node.decay.items() if i in new_pos}
        pruned[layer_id] = len(idxs)
    if pruned:
        validate(net)
    return MorphReport(
        op="prune", layer_id=None, changed=bool(pruned),
        params_before=before, params_after=count_params(net),
        detail={"pruned": pruned},
    )


def _branch_constant(node: ResidualNode) -> np.ndarray:
    """Output of the residual path once the hidden layer is empty."""
    dtype = node.shortcut.weight.dtype
    out, _ = _node_forward(node.inner1, np.zeros((1, 0), dtype=dtype),
                           training=False, rng=None)
    return out[0]


def remove_layer_if_empty(net: Network, layer_id: int, floor: int = 1) -> MorphReport:
    """Collapse a residual block down to its shortcut once its hidden layer
    has emptied out (hidden width <= floor).

    Remaining hidden neurons are pruned first; the residual path's constant
    offset (its bias chain) folds into the shortcut bias so a zero-weight
    path is removed with no function change. Nested blocks inside the
    discarded path disappear with it.
    """
    node = find_layer(net, layer_id)
    before = count_params(net)
    if node.hidden > floor:
        return MorphReport(op="remove_layer", layer_id=layer_id, changed=False,
                           params_before=before, params_after=before,
                           reason=f"hidden width {node.hidden} > floor {floor}")
    discarded = node.hidden
    if discarded:
        prune(net, [(layer_id, i) for i in range(discarded)])
    shortcut = node.shortcut
    shortcut.bias = shortcut.bias + _branch_constant(node)

    def replace(parent: Node) -> bool:
        if isinstance(parent, LinearNode):
            return False
        if parent.inner0 is node:
            parent.inner0 = shortcut
            return True
        if parent.inner1 is node:
            parent.inner1 = shortcut
            return True
        return replace(parent.inner0) or replace(parent.inner1)

    for i, block in enumerate(net.blocks):
        if block is node:
            net.blocks[i] = shortcut
            break
        if replace(block):
            break
    validate(net)
    return MorphReport(
        op="remove_layer", layer_id=layer_id, changed=True,
        params_before=before, params_after=count_params(net),
        detail={"neurons_discarded": discarded},
    )


# ---------------------------------------------------------------------------
# architecture export

def architecture_dict(net: Network) -> dict:
    """Nested JSON-ready description of the tree, for export and dashboards."""

    def describe(node: Node) -> dict:
        if isinstance(node, LinearNode):
            return {"kind": "linear", "fan_in": node.fan_in, "fan_out": node.fan_out,
                    "params": node.weight.size + node.bias.size}
        return {
            "kind": "residual", "layer_id": node.layer_id,
            "fan_in": node.fan_in, "fan_out": node.fan_out, "hidden": node.hidden,
            "dropout_p": node.dropout_p, "decaying": len(node.decay),
            "shortcut": describe(node.shortcut),
            "inner0": describe(node.inner0),
            "inner1": describe(node.inner1),
        }

    return {
        "loss": net.loss,
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "param_count": count_params(net),
        "depth": depth(net),
        "blocks": [describe(b) for b in net.blocks],
    }


def validate_architecture(doc: dict) -> None:
    """Check an exported architecture document; raises ValueError naming the
    offending path."""

    def fail(path: str, msg: str):
        raise ValueError(f"architecture schema violation at {path}: {msg}")

    def check_node(node, path: str):
        if not isinstance(node, dict):
            fail(path, "expected an object")
        kind = node.get("kind")
        if kind == "linear":
            for key in ("fan_in", "fan_out", "params"):
                if not isinstance(node.get(key), int) or node[key] < 0:
                    fail(f"{path}.{key}", "expected a nonnegative integer")
        elif kind == "residual":
            for key in ("fan_in", "fan_out", "hidden", "layer_id"):
                if not isinstance(node.get(key), int) or node[key] < 0:
                    fail(f"{path}.{key}", "expected a nonnegative integer")
            for key in ("shortcut", "inner0", "inner1"):
                if key not in node:
                    fail(f"{path}.{key}", "missing child")
                check_node(node[key], f"{path}.{key}")
            if node["shortcut"]["kind"] != "linear":
                fail(f"{path}.shortcut", "shortcut must be linear")
            if node["inner0"]["fan_out"] != node["hidden"]:
                fail(f"{path}.inner0", "fan_out must equal hidden")
            if node["inner1"]["fan_in"] != node["hidden"]:
                fail(f"{path}.inner1", "fan_in must equal hidden")
        else:
            fail(f"{path}.kind", f"unknown kind {kind!r}")

    if not isinstance(doc, dict):
        fail("$", "expected an object")
    if doc.get("loss") not in LOSS_KINDS:
        fail("$.loss", f"expected one of {LOSS_KINDS}")
    blocks = doc.get("blocks")
    if not isinstance(blocks, list) or not blocks:
        fail("$.blocks", "expected a non-empty list")
    for i, block in enumerate(blocks):
        check_node(block, f"$.blocks[{i}]")


# ---------------------------------------------------------------------------
# checkpoint serialization

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_DTYPE_FROM_CODE = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_LOSS_CODES = {"softmax_ce": 0, "mse": 1}
_LOSS_FROM_CODE = {v: k for k, v in _LOSS_CODES.items()}


def _pack_array(out: bytearray, arr: np.ndarray, dtype: np.dtype) -> None:
    out += np.ascontiguousarray(arr, dtype=dtype).tobytes()


def _pack_adam(out: bytearray, state: AdamState, dtype: np.dtype) -> None:
    out += struct.pack("<Qddd", state.step, state.beta1, state.beta2, state.eps)
    _pack_array(out, state.m, dtype)
    _pack_array(out, state.v, dtype)


def _pack_node(out: bytearray, node: Node, dtype: np.dtype) -> None:
    if isinstance(node, LinearNode):
        out += struct.pack("<BII", 0, node.fan_out, node.fan_in)
        _pack_array(out, node.weight, dtype)
        _pack_array(out, node.bias, dtype)
        _pack_adam(out, node.adam_w, dtype)
        _pack_adam(out, node.adam_b, dtype)
        return
    out += struct.pack("<BIdBI", 1, node.layer_id, node.dropout_p, 0, len(node.decay))
    for idx in sorted(node.decay):
        out += struct.pack("<Id", idx, node.decay[idx])
    _pack_node(out, node.shortcut, dtype)
    _pack_node(out, node.inner0, dtype)
    _pack_node(out, node.inner1, dtype)


def serialize(net: Network) -> bytes:
    """Canonical pre-order binary encoding, little-endian throughout."""
    mem_dtype = net.dtype
    if mem_dtype not in _DTYPE_CODES:
        raise CheckpointError(f"unsupported parameter dtype {mem_dtype}")
    wire_dtype = _DTYPE_FROM_CODE[_DTYPE_CODES[mem_dtype]]
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<HBBII", CHECKPOINT_VERSION, _DTYPE_CODES[mem_dtype],
                       _LOSS_CODES[net.loss], net.next_layer_id, len(net.blocks))
    for block in net.blocks:
        _pack_node(out, block, wire_dtype)
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, shape: tuple[int, ...], dtype: np.dtype) -> np.ndarray:
        n = int(np.prod(shape)) if shape else 1
        raw = self.take(n * dtype.itemsize)
        return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def _read_adam(r: _Reader, shape: tuple[int, ...], dtype: np.dtype) -> AdamState:
    step, beta1, beta2, eps = r.unpack("<Qddd")
    return AdamState(m=r.array(shape, dtype), v=r.array(shape, dtype),
                     step=step, beta1=beta1, beta2=beta2, eps=eps)


def _read_node(r: _Reader, dtype: np.dtype) -> Node:
    (kind,) = r.unpack("<B")
    if kind == 0:
        fan_out, fan_in = r.unpack("<II")
        weight = r.array((fan_out, fan_in), dtype)
        bias = r.array((fan_out,), dtype)
        adam_w = _read_adam(r, (fan_out, fan_in), dtype)
        adam_b = _read_adam(r, (fan_out,), dtype)
        return LinearNode(weight, bias, adam_w, adam_b)
    if kind == 1:
        layer_id, dropout_p, activation, n_decay = r.unpack("<IdBI")
        if activation != 0:
            raise CheckpointError(f"unknown activation code {activation}")
        decay = {}
        for _ in range(n_decay):
            idx, factor = r.unpack("<Id")
            decay[idx] = factor
        shortcut = _read_node(r, dtype)
        if not isinstance(shortcut, LinearNode):
            raise CheckpointError("residual shortcut must be a linear node")
        inner0 = _read_node(r, dtype)
        inner1 = _read_node(r, dtype)
        return ResidualNode(layer_id, shortcut, inner0, inner1,
                            dropout_p=dropout_p, decay=decay)
    raise CheckpointError(f"unknown node kind {kind}")


def deserialize(data: bytes) -> Network:
    r = _Reader(data)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError("bad checkpoint magic")
    version, dtype_code, loss_code, next_layer_id, n_blocks = r.unpack("<HBBII")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if dtype_code not in _DTYPE_FROM_CODE:
        raise CheckpointError(f"unknown dtype code {dtype_code}")
    if loss_code not in _LOSS_FROM_CODE:
        raise CheckpointError(f"unknown loss code {loss_code}")
    dtype = _DTYPE_FROM_CODE[dtype_code]
    blocks = [_read_node(r, dtype) for _ in range(n_blocks)]
    if r.pos != len(r.data):
        raise CheckpointError("trailing bytes after checkpoint payload")
    net = Network(blocks, loss=_LOSS_FROM_CODE[loss_code],
                  next_layer_id=next_layer_id)
    validate(net)
    return net
