"""Trainable graded-logic aggregation trees.

Train left-associative chains of two-input graded conjunction /
disjunction aggregators over a learned feature permutation, then prune,
explain, and export the resulting symbolic decision model.
"""

from .errors import (
    ConfigError,
    DataError,
    DomainError,
    GltreeError,
    ModelFormatError,
    NumericError,
    ParseError,
    ShapeError,
    StateError,
    TrainingFailure,
)
from .graded_logic import (
    AndnessCode,
    CODE_TABLE,
    andness_to_code,
    classify_role,
    gcd2,
    negate,
)
from .lsp_tree import (
    LspTree,
    SimplifiedLeaf,
    SimplifiedNode,
    emit_report_prompt,
    from_json,
    prune,
    simplify,
    to_expression,
    to_json,
)
from .data import (
    Dataset,
    NormalizerSpec,
    RawTable,
    boolean_dataset,
    fit_minmax,
    fit_robust_sigmoid,
    load_csv,
    reverse_features,
    split,
)
from .permutation import (
    PermutationState,
    freeze,
    hungarian,
    sample_gumbel,
    sinkhorn,
    soft_assignment,
)
from .training import (
    LossConfig,
    ModelParams,
    TrainedModel,
    TrainingConfig,
    forward,
    gradients,
    load_model,
    loss,
    save_model,
    train,
)
from .analysis import (
    AttributionReport,
    EquivalenceReport,
    MetricsResult,
    RepeatedEvalReport,
    ThresholdReport,
    attribution,
    bool_equivalence,
    metrics,
    repeated_eval,
    sweep_model,
    threshold_sweep,
)

__version__ = "0.1.0"
