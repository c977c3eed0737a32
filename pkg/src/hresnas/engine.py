"""The search loop: grow capacity, train until the loss curve flattens,
score and prune the weakest neurons, morph layers, checkpoint, and pick up
meta-parameter edits from the operator between iterations.
"""
from __future__ import annotations

import json
import logging
import os
import queue
import threading
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import tree
from .data import Dataset, batches, gen_grid_regression, gen_spiral, load_mnist
from .heuristics import (
    GrowthAllocator,
    ImportanceAccumulator,
    fit_loss_curve,
    importance_scores,
    select_prune,
    should_stop,
)

logger = logging.getLogger("hresnas")

DECAY_FLOOR = 1e-3  # outgoing factor a victim reaches by the end of decay

# rng stream tags so every random draw is a pure function of (seed, tag, index)
_RNG_INIT, _RNG_EPOCH, _RNG_SHUFFLE, _RNG_MORPH, _RNG_ALLOC = range(5)


class MetaValidationError(ValueError):
    def __init__(self, problems: dict[str, str]):
        self.problems = problems
        super().__init__("; ".join(f"{k}: {v}" for k, v in sorted(problems.items())))


class CheckpointWriteError(RuntimeError):
    def __init__(self, cause: Exception, last_good: str | None):
        self.last_good = last_good
        super().__init__(
            f"checkpoint write failed ({cause}); last good checkpoint: "
            f"{last_good or 'none'}"
        )


@dataclass(frozen=True)
class MetaParams:
    """The operator-steered controls, read back from a watched file between
    iterations (learning rate also between epochs)."""

    neurons_to_add: int = 16
    prune_count: int = 8
    prune_ratio: float | None = None
    learning_rate: float = 1e-3
    max_train_epochs: int = 20
    decay_epochs: int = 2

    FIELDS = ("neurons_to_add", "prune_count", "prune_ratio", "learning_rate",
              "max_train_epochs", "decay_epochs")

    def validate(self) -> None:
        problems: dict[str, str] = {}
        if self.neurons_to_add < 0:
            problems["neurons_to_add"] = "must be >= 0"
        if self.prune_count < 0:
            problems["prune_count"] = "must be >= 0"
        if self.prune_ratio is not None and not 0.0 <= self.prune_ratio <= 1.0:
            problems["prune_ratio"] = "must be in [0, 1]"
        if not self.learning_rate > 0:
            problems["learning_rate"] = "must be > 0"
        if self.max_train_epochs < 1:
            problems["max_train_epochs"] = "must be >= 1"
        if self.decay_epochs < 0:
            problems["decay_epochs"] = "must be >= 0"
        if problems:
            raise MetaValidationError(problems)

    def prune_target(self, neurons_added: int) -> int:
        """Neurons to remove this iteration; the ratio takes precedence."""
        if self.prune_ratio is not None:
            return int(round(self.prune_ratio * neurons_added))
        return self.prune_count

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict, base: "MetaParams | None" = None) -> "MetaParams":
        unknown = set(doc) - set(cls.FIELDS)
        if unknown:
            raise MetaValidationError({k: "unknown field" for k in unknown})
        merged = (base or cls()).to_dict()
        merged.update(doc)
        try:
            params = cls(**merged)
        except TypeError as exc:
            raise MetaValidationError({"body": str(exc)}) from exc
        for key in ("neurons_to_add", "prune_count", "max_train_epochs",
                    "decay_epochs"):
            if not isinstance(getattr(params, key), int):
                raise MetaValidationError({key: "must be an integer"})
        for key in ("learning_rate",):
            if not isinstance(getattr(params, key), (int, float)):
                raise MetaValidationError({key: "must be a number"})
        params.validate()
        return params


@dataclass
class HistoryEvent:
    """One per training or decay epoch; the dashboard's unit of progress."""

    time: float
    epoch: int
    iteration: int
    phase: str
    train_loss: float
    train_acc: float | None
    test_loss: float
    test_acc: float | None
    param_count: int
    depth: int
    learning_rate: float

    CSV_FIELDS = ("epoch", "iteration", "phase", "train_loss", "train_acc",
                  "test_loss", "test_acc", "param_count", "depth",
                  "learning_rate")

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_row(self) -> list[str]:
        # wall-clock time deliberately excluded: exports must be reproducible
        out = []
        for name in self.CSV_FIELDS:
            value = getattr(self, name)
            if value is None:
                out.append("")
            elif isinstance(value, float):
                out.append(repr(value))
            else:
                out.append(str(value))
        return out


@dataclass
class IterationReport:
    iteration: int
    added: dict[int, int] = field(default_factory=dict)
    pruned: dict[int, int] = field(default_factory=dict)
    grown_layers: list[int] = field(default_factory=list)
    removed_layers: list[int] = field(default_factory=list)
    params_before: int = 0
    params_after: int = 0
    depth_before: int = 0
    depth_after: int = 0
    train_epochs: int = 0
    morph_param_delta: int = 0  # sum of per-op shape-arithmetic predictions
    fitted_a: float | None = None
    train_loss: float | None = None
    train_acc: float | None = None
    test_loss: float | None = None
    test_acc: float | None = None
    prune_shortfall: int = 0
    meta: dict = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def delta(self) -> dict[int, int]:
        keys = set(self.added) | set(self.pruned)
        return {k: self.added.get(k, 0) - self.pruned.get(k, 0) for k in keys}

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["delta"] = {str(k): v for k, v in self.delta.items()}
        doc["added"] = {str(k): v for k, v in self.added.items()}
        doc["pruned"] = {str(k): v for k, v in self.pruned.items()}
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "IterationReport":
        doc = dict(doc)
        doc.pop("delta", None)
        doc["added"] = {int(k): v for k, v in doc.get("added", {}).items()}
        doc["pruned"] = {int(k): v for k, v in doc.get("pruned", {}).items()}
        return cls(**doc)


@dataclass
class RunConfig:
    """Everything a run needs; every knob the method leaves unstated is an
    explicit field here so `--print-config` exposes it."""

    dataset: dict = field(default_factory=lambda: {
        "kind": "spiral", "n_per_class": 500, "noise_sd": 0.02,
        "seed": 0, "test_n_per_class": 250,
    })
    meta: MetaParams = field(default_factory=MetaParams)
    seed: int = 0
    batch_size: int = 64
    max_iterations: int = 10
    dtype: str = "float64"
    dropout_p: float = 0.0
    importance_exponent: int = 33
    ma_alpha: float = 0.5
    growth_seed_hidden: int = 2
    layer_floor: int = 1
    depth_floor: int = 10
    flatten_threshold: float = -5.0
    weight_decay: float = 0.0  # not part of the method; must stay 0
    grad_clip: float = 0.0  # not part of the method; must stay 0

    def validate(self) -> None:
        self.meta.validate()
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        if self.weight_decay != 0.0 or self.grad_clip != 0.0:
            raise NotImplementedError(
                "weight_decay and grad_clip are recorded as explicit zeros "
                "and are not implemented"
            )

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["meta"] = self.meta.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        meta = MetaParams.from_dict(doc.pop("meta", {}))
        known = {f for f in cls.__dataclass_fields__ if f != "meta"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(meta=meta, **doc)
        cfg.validate()
        return cfg

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


def build_datasets(spec: dict, data_dir: str | None = None) -> tuple[Dataset, Dataset]:
    """Materialize (train, test) from a config dataset spec."""
    spec = dict(spec)
    kind = spec.pop("kind", "spiral")
    if kind == "spiral":
        seed = spec.get("seed", 0)
        train = gen_spiral(spec.get("n_per_class", 500),
                           spec.get("noise_sd", 0.02), seed, split="train")
        test = gen_spiral(spec.get("test_n_per_class", 250),
                          spec.get("noise_sd", 0.02), seed + 1, split="test")
        return train, test
    if kind == "grid":
        seed = spec.get("seed", 0)
        train = gen_grid_regression(spec.get("n", 2000), seed, split="train")
        test = gen_grid_regression(spec.get("test_n", 500), seed + 1, split="test")
        return train, test
    if kind == "mnist":
        directory = data_dir or spec.get("dir")
        if not directory:
            raise ValueError("mnist dataset needs a 'dir' (or --data)")
        return load_mnist(directory)
    raise ValueError(f"unknown dataset kind {kind!r}")


def default_loss(dataset: Dataset) -> str:
    return "softmax_ce" if dataset.task == "classification" else "mse"


# ---------------------------------------------------------------------------
# losses

def softmax_ce(logits: np.ndarray, targets: np.ndarray):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    picked = probs[np.arange(n), targets]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    d_logits = probs
    d_logits[np.arange(n), targets] -= 1.0
    d_logits /= n
    correct = int((logits.argmax(axis=1) == targets).sum())
    return loss, d_logits.astype(logits.dtype, copy=False), correct


def mse(outputs: np.ndarray, targets: np.ndarray):
    diff = outputs - targets
    loss = float(np.mean(diff ** 2))
    return loss, (2.0 / outputs.size) * diff, None


LOSS_FNS = {"softmax_ce": softmax_ce, "mse": mse}


def evaluate(net: tree.Network, dataset: Dataset, batch_size: int = 256):
    """Eval-mode metrics: (mean loss, accuracy or None for regression)."""
    loss_fn = LOSS_FNS[net.loss]
    dtype = net.dtype
    total_loss = 0.0
    correct = 0
    for x, t in batches(dataset, batch_size, shuffle_seed=None):
        y, _ = tree.forward(net, x.astype(dtype, copy=False), training=False)
        loss, _, corr = loss_fn(y, t)
        total_loss += loss * x.shape[0]
        if corr is not None:
            correct += corr
    n = dataset.n
    acc = correct / n if dataset.task == "classification" else None
    return total_loss / n, acc


# ---------------------------------------------------------------------------
# meta-parameter file watching

def write_json_atomic(path: Path, doc: dict) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2) + "\n")
    os.replace(tmp, path)


class MetaFileWatcher:
    """Reads the operator's meta-parameter file when its mtime changes.

    A malformed or invalid file never interrupts the search: the previous
    values stay in force and a warning is reported.
    """

    def __init__(self, path: Path, initial: MetaParams):
        self.path = Path(path)
        self.current = initial
        self.stop = False
        self._stamp = None

    def ensure_file(self) -> None:
        if not self.path.exists():
            doc = self.current.to_dict()
            doc["stop"] = False
            write_json_atomic(self.path, doc)
            self._stamp = self._file_stamp()

    def _file_stamp(self):
        try:
            st = self.path.stat()
            return (st.st_mtime_ns, st.st_size)
        except OSError:
            return None

    def poll(self) -> str | None:
        """Refresh from the file; returns a warning message on bad input."""
        stamp = self._file_stamp()
        if stamp is None or stamp == self._stamp:
            return None
        self._stamp = stamp
        try:
            doc = json.loads(self.path.read_text())
            if not isinstance(doc, dict):
                raise ValueError("meta file must hold a JSON object")
            stop = bool(doc.pop("stop", False))
            self.current = MetaParams.from_dict(doc, base=self.current)
            self.stop = stop
            return None
        except (ValueError, OSError) as exc:
            warning = f"ignoring meta file update: {exc}"
            logger.warning(warning)
            return warning


# ---------------------------------------------------------------------------
# event stream

class Subscription:
    """Bounded event feed for one client; overflow drops events and injects a
    gap marker so the client knows to backfill."""

    def __init__(self, maxsize: int = 512):
        self._q: queue.Queue = queue.Queue(maxsize=maxsize)
        self._gapped = False

    def push(self, event: dict) -> None:
        if self._gapped:
            try:
                self._q.put_nowait({"type": "gap"})
                self._gapped = False
            except queue.Full:
                return
        try:
            self._q.put_nowait(event)
        except queue.Full:
            self._gapped = True

    def get(self, timeout: float = 1.0) -> dict | None:
        try:
            return self._q.get(timeout=timeout)
        except queue.Empty:
            return None


# ---------------------------------------------------------------------------
# the engine

class SearchEngine:
    """Owns one network and drives the grow/train/shrink loop.

    A single thread runs the search; other threads may read snapshots,
    subscribe to the event stream, or write the meta file through
    submit_meta. All randomness derives from (config.seed, stream, index),
    so identical configs and meta-file histories replay identically, and a
    resumed run continues exactly where the checkpoint left off.
    """

    def __init__(self, config: RunConfig, out_dir: str | Path,
                 train: Dataset | None = None, test: Dataset | None = None,
                 net: tree.Network | None = None,
                 meta_file: str | Path | None = None,
                 data_dir: str | None = None):
        config.validate()
        self.config = config
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        if train is None or test is None:
            train, test = build_datasets(config.dataset, data_dir)
        self.train_ds = train
        self.test_ds = test
        if net is None:
            rng = np.random.default_rng([config.seed, _RNG_INIT])
            net = tree.Network.linear(
                train.input_dim, train.output_dim, default_loss(train),
                rng, dtype=config.np_dtype,
            )
        self.net = net
        self.meta = config.meta
        self.watcher = MetaFileWatcher(
            Path(meta_file) if meta_file else self.out_dir / "meta.json",
            config.meta,
        )
        self.allocator = GrowthAllocator(alpha=config.ma_alpha, seed=config.seed)
        self.history: list[HistoryEvent] = []
        self.reports: list[IterationReport] = []
        self.iteration = 0
        self.global_epoch = 0
        self.phase = "idle"
        self.started = False
        self.clean_stop = False
        self.last_checkpoint: str | None = None
        self._stop_requested = False
        self._lock = threading.Lock()
        self._meta_write_lock = threading.Lock()
        self._subs: list[Subscription] = []
        self._loss_fn = LOSS_FNS[self.net.loss]
        self._steps_per_epoch = -(-train.n // config.batch_size)

    # -- public views (safe from other threads) ------------------------------

    def status(self) -> dict | None:
        if not self.started:
            return None
        with self._lock:
            last = self.history[-1] if self.history else None
            fit_a = None
            for report in reversed(self.reports):
                if report.fitted_a is not None:
                    fit_a = report.fitted_a
                    break
            return {
                "iteration": self.iteration,
                "epoch": self.global_epoch,
                "phase": self.phase,
                "param_count": tree.count_params(self.net),
                "depth": tree.depth(self.net, self.config.depth_floor),
                "meta": self.meta.to_dict(),
                "train_loss": last.train_loss if last else None,
                "train_acc": last.train_acc if last else None,
                "test_loss": last.test_loss if last else None,
                "test_acc": last.test_acc if last else None,
                "fitted_a": fit_a,
                "running": not self.clean_stop,
            }

    def architecture(self) -> dict | None:
        if not self.started:
            return None
        with self._lock:
            return tree.architecture_dict(self.net)

    def history_since(self, epoch: int = 0) -> list[dict]:
        with self._lock:
            return [e.to_dict() for e in self.history if e.epoch > epoch]

    def subscribe(self) -> Subscription:
        sub = Subscription()
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def submit_meta(self, update: dict) -> dict:
        """Validate an update, merge it over the file's values, and write the
        file back atomically. The engine applies it at the next boundary."""
        update = dict(update)
        stop = update.pop("stop", None)
        with self._meta_write_lock:
            base, base_stop = self._read_meta_file()
            merged = MetaParams.from_dict(update, base=base)
            doc = merged.to_dict()
            doc["stop"] = bool(stop) if stop is not None else base_stop
            write_json_atomic(self.watcher.path, doc)
        return doc

    def _read_meta_file(self) -> tuple[MetaParams, bool]:
        try:
            doc = json.loads(self.watcher.path.read_text())
            stop = bool(doc.pop("stop", False))
            return MetaParams.from_dict(doc), stop
        except (OSError, ValueError, MetaValidationError):
            return self.watcher.current, self.watcher.stop

    # -- events ---------------------------------------------------------------

    def _emit(self, event: dict) -> None:
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            sub.push(event)

    def _set_phase(self, phase: str) -> None:
        self.phase = phase
        self._emit({"type": "phase", "phase": phase,
                    "iteration": self.iteration, "epoch": self.global_epoch})

    # -- training internals ---------------------------------------------------

    def _rng(self, stream: int, index: int) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, stream, index])

    def _poll_meta(self, structural: bool) -> None:
        warning = self.watcher.poll()
        if warning:
            self._emit({"type": "warning", "message": warning,
                        "epoch": self.global_epoch})
        incoming = self.watcher.current
        if structural:
            changed = incoming != self.meta
            self.meta = incoming
        else:
            # only the training knobs may move mid-iteration
            updated = replace(self.meta,
                              learning_rate=incoming.learning_rate,
                              max_train_epochs=incoming.max_train_epochs)
            changed = updated != self.meta
            self.meta = updated
        if changed:
            self._emit({"type": "meta", "epoch": self.global_epoch,
                        "meta": self.meta.to_dict()})
        if self.watcher.stop or (self.out_dir / "STOP").exists():
            self._stop_requested = True

    def _train_epoch(self, phase: str, decay_gamma: float | None = None):
        cfg = self.config
        dtype = self.net.dtype
        rng = self._rng(_RNG_EPOCH, self.global_epoch)
        shuffle_seed = [cfg.seed, _RNG_SHUFFLE, self.global_epoch]
        total_loss = 0.0
        correct = 0
        for x, t in batches(self.train_ds, cfg.batch_size, shuffle_seed):
            x = x.astype(dtype, copy=False)
            y, caches = tree.forward(self.net, x, training=True, rng=rng)
            loss, d_y, corr = self._loss_fn(y, t)
            tree.backward(self.net, caches, d_y)
            with self._lock:
                tree.apply_adam(self.net, self.meta.learning_rate)
                if decay_gamma is not None:
                    tree.apply_decay_step(self.net, decay_gamma)
            total_loss += loss * x.shape[0]
            correct += corr or 0
        train_loss = total_loss / self.train_ds.n
        train_acc = (correct / self.train_ds.n
                     if self.train_ds.task == "classification" else None)
        test_loss, test_acc = evaluate(self.net, self.test_ds)
        self.global_epoch += 1
        event = HistoryEvent(
            time=time.time(), epoch=self.global_epoch, iteration=self.iteration,
            phase=phase, train_loss=train_loss, train_acc=train_acc,
            test_loss=test_loss, test_acc=test_acc,
            param_count=tree.count_params(self.net),
            depth=tree.depth(self.net, cfg.depth_floor),
            learning_rate=self.meta.learning_rate,
        )
        with self._lock:
            self.history.append(event)
        self._emit({"type": "history", **event.to_dict()})
        self._poll_meta(structural=False)
        return train_loss, train_acc

    def _train_phase(self, report: IterationReport) -> None:
        self._set_phase("train")
        losses: list[float] = []
        fit = None
        while True:
            loss, _ = self._train_epoch("train")
            losses.append(loss)
            report.train_epochs += 1
            if self._stop_requested:
                break
            fit = fit_loss_curve(losses) if len(losses) >= 3 else None
            if should_stop(fit, len(losses), self.meta.max_train_epochs,
                           self.config.flatten_threshold):
                break
        report.fitted_a = fit.a if fit else None

    def _growth_phase(self, report: IterationReport) -> dict[int, int]:
        self._set_phase("grow")
        cfg = self.config
        for i, block in enumerate(self.net.blocks):
            if isinstance(block, tree.LinearNode):
                morph = tree.promote_block(self.net, i, dropout_p=cfg.dropout_p)
                report.morph_param_delta += morph.param_delta
        catalog = tree.layer_catalog(self.net)
        total = self.meta.neurons_to_add
        if total == 0:
            return {}
        allocation = self.allocator.allocate(
            total, [e.layer_id for e in catalog],
            rng=self._rng(_RNG_ALLOC, self.iteration),
        )
        morph_rng = self._rng(_RNG_MORPH, self.iteration)
        for layer_id, k in allocation.items():
            if k > 0:
                morph = tree.widen(self.net, layer_id, k, morph_rng)
                report.morph_param_delta += morph.param_delta
        report.added = {k: v for k, v in allocation.items() if v > 0}
        return allocation

    def _importance_pass(self) -> ImportanceAccumulator:
        self._set_phase("importance")
        acc = ImportanceAccumulator()
        dtype = self.net.dtype
        for x, t in batches(self.train_ds, self.config.batch_size, None):
            x = x.astype(dtype, copy=False)
            y, caches = tree.forward(self.net, x, training=False)
            _, d_y, _ = self._loss_fn(y, t)
            tree.backward(self.net, caches, d_y, sink=acc)
        return acc

    def _shrink_phase(self, report: IterationReport, neurons_added: int) -> None:
        target = self.meta.prune_target(neurons_added)
        catalog = tree.layer_catalog(self.net)
        if target == 0 or not catalog:
            return
        acc = self._importance_pass()
        scores = importance_scores(acc, self.config.importance_exponent)
        selection = select_prune(scores, target, [e.layer_id for e in catalog])
        report.prune_shortfall = selection.shortfall
        if not selection.victims:
            return
        self._set_phase("decay")
        tree.mark_decay(self.net, selection.victims)
        if self.meta.decay_epochs > 0:
            steps = self.meta.decay_epochs * self._steps_per_epoch
            gamma = DECAY_FLOOR ** (1.0 / steps)
            for _ in range(self.meta.decay_epochs):
                self._train_epoch("decay", decay_gamma=gamma)
                if self._stop_requested:
                    break
        self._set_phase("prune")
        with self._lock:
            morph = tree.prune(self.net, selection.victims)
        report.morph_param_delta += morph.param_delta
        for layer_id, _ in selection.victims:
            report.pruned[layer_id] = report.pruned.get(layer_id, 0) + 1

    def _morph_phase(self, report: IterationReport) -> None:
        self._set_phase("morph")
        cfg = self.config
        with self._lock:
            for entry in tree.layer_catalog(self.net):
                try:
                    morph = tree.remove_layer_if_empty(
                        self.net, entry.layer_id, floor=cfg.layer_floor)
                except tree.UnknownLayerError:
                    continue  # vanished with an enclosing layer
                if morph.changed:
                    report.removed_layers.append(entry.layer_id)
                    report.morph_param_delta += morph.param_delta
                    discarded = morph.detail["neurons_discarded"]
                    if discarded:
                        report.pruned[entry.layer_id] = (
                            report.pruned.get(entry.layer_id, 0) + discarded)
            morph_rng = self._rng(_RNG_MORPH, self.iteration)
            for entry in tree.layer_catalog(self.net):
                if entry.growable:
                    morph = tree.grow_layer(self.net, entry.layer_id,
                                            cfg.growth_seed_hidden, morph_rng)
                    if morph.changed:
                        report.grown_layers.extend(morph.new_layer_ids)
                        report.morph_param_delta += morph.param_delta

    def _update_allocator(self, report: IterationReport) -> None:
        delta = report.delta
        if delta:
            self.allocator.update({k: float(v) for k, v in delta.items()})
        self.allocator.drop_missing(
            [e.layer_id for e in tree.layer_catalog(self.net)])

    # -- checkpointing --------------------------------------------------------

    def save_checkpoint(self) -> Path:
        self._set_phase("checkpoint")
        name = f"ckpt_{self.iteration:04d}.hrnn"
        try:
            path = self.out_dir / name
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_bytes(tree.serialize(self.net))
            os.replace(tmp, path)
            write_json_atomic(
                self.out_dir / f"meta_applied_{self.iteration:04d}.json",
                self.meta.to_dict(),
            )
            self._write_run_json(name)
        except OSError as exc:
            raise CheckpointWriteError(exc, self.last_checkpoint) from exc
        self.last_checkpoint = name
        return path

    def _write_run_json(self, last_checkpoint: str) -> None:
        doc = {
            "config": self.config.to_dict(),
            "engine": {
                "iterations_completed": len(self.reports),
                "global_epoch": self.global_epoch,
                "ma": {str(k): v for k, v in self.allocator.ma.items()},
                "meta": self.meta.to_dict(),
                "last_checkpoint": last_checkpoint,
                "clean_stop": self.clean_stop,
            },
            "history": [e.to_dict() for e in self.history],
            "iterations": [r.to_dict() for r in self.reports],
        }
        write_json_atomic(self.out_dir / "run.json", doc)

    @classmethod
    def resume(cls, run_dir: str | Path, data_dir: str | None = None,
               meta_file: str | Path | None = None) -> "SearchEngine":
        run_dir = Path(run_dir)
        doc = json.loads((run_dir / "run.json").read_text())
        config = RunConfig.from_dict(doc["config"])
        state = doc["engine"]
        net = tree.deserialize((run_dir / state["last_checkpoint"]).read_bytes())
        engine = cls(config, run_dir, net=net, data_dir=data_dir,
                     meta_file=meta_file)
        engine.iteration = state["iterations_completed"]
        engine.global_epoch = state["global_epoch"]
        engine.meta = MetaParams.from_dict(state["meta"])
        engine.watcher.current = engine.meta
        engine.allocator.ma = {int(k): v for k, v in state["ma"].items()}
        engine.history = [HistoryEvent(**event) for event in doc["history"]]
        engine.reports = [IterationReport.from_dict(r)
                          for r in doc["iterations"]]
        engine.last_checkpoint = state["last_checkpoint"]
        return engine

    # -- the loop --------------------------------------------------------------

    def _iteration(self) -> None:
        report = IterationReport(
            iteration=self.iteration,
            params_before=tree.count_params(self.net),
            depth_before=tree.depth(self.net, self.config.depth_floor),
            meta=self.meta.to_dict(),
        )
        clock = time.perf_counter
        t0 = clock()
        allocation = self._growth_phase(report)
        t1 = clock()
        self._train_phase(report)
        t2 = clock()
        if not self._stop_requested:
            self._shrink_phase(report, sum(allocation.values()))
            self._morph_phase(report)
        t3 = clock()
        self._update_allocator(report)
        report.params_after = tree.count_params(self.net)
        report.depth_after = tree.depth(self.net, self.config.depth_floor)
        if self.history:
            last = self.history[-1]
            report.train_loss, report.train_acc = last.train_loss, last.train_acc
            report.test_loss, report.test_acc = last.test_loss, last.test_acc
        report.timings = {"grow": t1 - t0, "train": t2 - t1, "shrink": t3 - t2}
        self.reports.append(report)
        self.save_checkpoint()
        self.iteration += 1
        self._poll_meta(structural=True)

    def run(self, max_iterations: int | None = None) -> Path:
        """Execute iterations until the budget, the stop flag, or a STOP file.

        Returns the path of the final checkpoint.
        """
        budget = (self.config.max_iterations if max_iterations is None
                  else max_iterations)
        self.started = True
        self.clean_stop = False
        self.watcher.ensure_file()
        self._poll_meta(structural=True)
        start = self.iteration
        while self.iteration - start < budget and not self._stop_requested:
            self._iteration()
        self.clean_stop = True
        if self.last_checkpoint is None:
            self.save_checkpoint()
        else:
            self._write_run_json(self.last_checkpoint)
        self._set_phase("stopped")
        return self.out_dir / self.last_checkpoint

    # -- exports ----------------------------------------------------------------

    def export_history_csv(self, path: str | Path) -> None:
        write_history_csv(self.history_since(0), path)


def history_csv_text(events: list[dict]) -> str:
    lines = [",".join(HistoryEvent.CSV_FIELDS)]
    for doc in events:
        event = HistoryEvent(**doc)
        lines.append(",".join(event.csv_row()))
    return "\n".join(lines) + "\n"


def write_history_csv(events: list[dict], path: str | Path) -> None:
    Path(path).write_text(history_csv_text(events))
