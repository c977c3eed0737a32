"""Grow-and-shrink architecture search over hierarchical residual networks.

The hidden capacity of a trained network is edited in place: neurons are
added where past iterations kept them, the least important ones are decayed
and pruned, and layers appear or collapse as hidden widths cross a
size-based threshold. A human steers the process through a handful of
meta-parameters read from a watched file or a small HTTP API.
"""

from .data import Dataset, batches, gen_grid_regression, gen_spiral, load_mnist
from .engine import (
    HistoryEvent,
    IterationReport,
    MetaParams,
    MetaValidationError,
    RunConfig,
    SearchEngine,
    evaluate,
)
from .estimator import GrowingNetClassifier, GrowingNetRegressor
from .heuristics import (
    GrowthAllocator,
    ImportanceAccumulator,
    LossCurveFit,
    fit_loss_curve,
    growth_threshold,
    importance_scores,
    select_prune,
    should_stop,
)
from .tree import (
    LinearNode,
    MorphReport,
    Network,
    ResidualNode,
    apply_decay_step,
    architecture_dict,
    backward,
    count_params,
    depth,
    deserialize,
    apply_adam,
    forward,
    grow_layer,
    iter_params,
    layer_catalog,
    mark_decay,
    promote_block,
    prune,
    remove_layer_if_empty,
    serialize,
    validate,
    widen,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "batches", "gen_grid_regression", "gen_spiral", "load_mnist",
    "HistoryEvent", "IterationReport", "MetaParams", "MetaValidationError",
    "RunConfig", "SearchEngine", "evaluate",
    "GrowingNetClassifier", "GrowingNetRegressor",
    "GrowthAllocator", "ImportanceAccumulator", "LossCurveFit",
    "fit_loss_curve", "growth_threshold", "importance_scores", "select_prune",
    "should_stop",
    "LinearNode", "MorphReport", "Network", "ResidualNode", "apply_decay_step", "apply_adam", "iter_params",
    "architecture_dict", "backward", "count_params", "depth", "deserialize",
    "forward", "grow_layer", "layer_catalog", "mark_decay", "promote_block",
    "prune", "remove_layer_if_empty", "serialize", "validate", "widen",
    "__version__",
]
