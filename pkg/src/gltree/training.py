"""Differentiable forward pass, loss, and two-phase training.

The trainable parameters are permutation logits plus one raw weight
logit and one raw andness logit per aggregation node:

    w     = sigmoid(theta_w)            in (0, 1)
    alpha = -1 + 3 * sigmoid(theta_a)   in (-1, 2)

keeping training strictly inside the differentiable open ranges (the
drastic endpoints are evaluable but not trainable).

Training follows the two-phase search: explore soft feature assignments
under Gumbel noise, propose a hard permutation via the Hungarian
algorithm once the loss is low enough, freeze it if the hard loss stays
acceptable, then fine-tune only the aggregation parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from . import permutation as perm_mod
from .data import Dataset, NormalizerSpec
from .errors import (
    ConfigError,
    DomainError,
    ModelFormatError,
    NumericError,
    ShapeError,
    StateError,
    TrainingFailure,
)
from .lsp_tree import LspTree
from .permutation import PermutationState

MODEL_FORMAT_VERSION = 1

# Gradient-health thresholds (the training loop aborts an attempt when the
# gradient L-inf norm leaves this window or turns non-finite).
GRAD_VANISH = 1e-10
GRAD_EXPLODE = 1e4

# Clamp applied to gcd2 inputs inside gradient-bearing evaluation only;
# the power form has unbounded slope at 0.
GRAD_CLAMP = 1e-9

_IMPROVEMENT_RATIO = 0.001  # best-of-window must drop 0.1% to count as improving


@dataclass
class LossConfig:
    """Loss shape: amplifier a, weight penalty strength lambda."""

    amplifier: float = 1.0
    weight_penalty: float = 0.0

    def __post_init__(self):
        if self.amplifier <= 0:
            raise ConfigError("loss amplifier must be > 0")
        if self.weight_penalty < 0:
            raise ConfigError("weight penalty must be >= 0")


@dataclass
class TrainingConfig:
    """All tunable knobs, overridable per run.

    The first block mirrors the published hyperparameter names verbatim;
    the second block holds repo defaults for values the reference table
    names but does not fix.
    """

    acceptance_threshold: float = 0.95
    attempts: int = 100
    freeze_loss_threshold: float = 0.01
    is_frozen: bool = False
    lock_loss_tolerance: float = 0.05
    loss_amplifier: float = 1.0
    max_epochs: int = 2000
    save_model: bool = False
    save_path: str = "./assembler.json"
    tree_layout: str = "left"
    weight_penalty_strength: float = 0.01

    learning_rate: float = 0.01
    seed: int = 0
    acceptance_loss_threshold: float | None = None  # L_accept; defaults to L_freeze
    sinkhorn_tau: float = perm_mod.DEFAULT_TAU
    gumbel_scale_min: float = perm_mod.DEFAULT_GUMBEL_MIN
    gumbel_scale_max: float = perm_mod.DEFAULT_GUMBEL_MAX
    gumbel_increase: float = perm_mod.DEFAULT_GUMBEL_INCREASE
    gumbel_decrease: float = perm_mod.DEFAULT_GUMBEL_DECREASE
    tau_decay: float = perm_mod.DEFAULT_TAU_DECAY
    history_window: int = 100

    def __post_init__(self):
        if self.tree_layout == "balanced":
            raise ConfigError(
                "tree_layout 'balanced' is recognized but untested and rejected; "
                "use 'left'"
            )
        if self.tree_layout != "left":
            raise ConfigError(f"unknown tree_layout {self.tree_layout!r}")
        if self.attempts < 1 or self.max_epochs < 1:
            raise ConfigError("attempts and max_epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.history_window < 1:
            raise ConfigError("history_window must be >= 1")

    @property
    def accept_loss(self) -> float:
        if self.acceptance_loss_threshold is not None:
            return self.acceptance_loss_threshold
        return self.freeze_loss_threshold

    def loss_config(self) -> LossConfig:
        return LossConfig(self.loss_amplifier, self.weight_penalty_strength)


@dataclass
class ModelParams:
    """Raw trainable parameters for one attempt."""

    perm: PermutationState
    theta_w: torch.Tensor
    theta_a: torch.Tensor

    @property
    def n(self) -> int:
        return self.perm.n

    def weights(self) -> torch.Tensor:
        return torch.sigmoid(self.theta_w)

    def andness(self) -> torch.Tensor:
        return -1.0 + 3.0 * torch.sigmoid(self.theta_a)


def init_params(
    n: int, rng: np.random.Generator, cfg: TrainingConfig, frozen_identity: bool = False
) -> ModelParams:
    """Fresh parameters: near-neutral weights, diverse node andness.

    theta_a spans U[-1.5, 1.5] (andness roughly in [-0.5, 1.5]) so each
    attempt starts with a mix of conjunctive and disjunctive nodes;
    near-neutral starts tend to collapse into one mediocre basin.
    """
    if frozen_identity:
        perm = perm_mod.identity_state(n, tau=cfg.sinkhorn_tau)
    else:
        perm = perm_mod.initial_state(
            n,
            rng,
            tau=cfg.sinkhorn_tau,
            gumbel_min=cfg.gumbel_scale_min,
            gumbel_max=cfg.gumbel_scale_max,
        )
    theta_w = torch.from_numpy(rng.uniform(-0.1, 0.1, size=n - 1))
    theta_a = torch.from_numpy(rng.uniform(-1.5, 1.5, size=n - 1))
    theta_w.requires_grad_(True)
    theta_a.requires_grad_(True)
    return ModelParams(perm, theta_w, theta_a)


# ---------------------------------------------------------------------------
# Differentiable gcd2 chain
# ---------------------------------------------------------------------------

def _geo_t(x: torch.Tensor, y: torch.Tensor, w: torch.Tensor, alpha: torch.Tensor):
    xc = torch.clamp(x, GRAD_CLAMP, 1.0 - GRAD_CLAMP)
    yc = torch.clamp(y, GRAD_CLAMP, 1.0 - GRAD_CLAMP)
    e = torch.sqrt(3.0 / (2.0 - alpha)) - 1.0
    return torch.exp(e * (2.0 * w * torch.log(xc) + 2.0 * (1.0 - w) * torch.log(yc)))


def gcd2_t(x: torch.Tensor, y: torch.Tensor, w: torch.Tensor, alpha: torch.Tensor):
    """Vectorized differentiable gcd2; alpha must lie inside (-1, 2).

    Branch choice is made on the detached alpha value (the regions are
    fixed intervals); within a branch every tensor flows through
    autograd.  Inputs to the power form are clamped per GRAD_CLAMP.
    """
    a_val = float(alpha.detach()) if isinstance(alpha, torch.Tensor) else float(alpha)
    if not (-1.0 < a_val < 2.0):
        raise DomainError(
            f"trainable andness must lie strictly inside (-1, 2), got {a_val!r}"
        )
    if a_val >= 0.75:
        return _geo_t(x, y, w, alpha)
    if a_val > 0.5:
        mean = w * x + (1.0 - w) * y
        return (3.0 - 4.0 * alpha) * mean + (4.0 * alpha - 2.0) * _geo_t(x, y, w, alpha)
    if a_val == 0.5:
        return w * x + (1.0 - w) * y
    return 1.0 - gcd2_t(1.0 - x, 1.0 - y, w, 1.0 - alpha)


def _fold_chain(xt: torch.Tensor, params: ModelParams) -> torch.Tensor:
    w = params.weights()
    a = params.andness()
    result = xt[:, 0]
    for i in range(params.n - 1):
        result = gcd2_t(result, xt[:, i + 1], w[i], a[i])
    return result


def forward(
    params: ModelParams,
    X,
    rng: np.random.Generator | None = None,
    noise: torch.Tensor | None = None,
) -> torch.Tensor:
    """Model output for a batch (rows of X in [0, 1], dataset column order).

    Soft mode mixes columns through the noisy doubly stochastic
    assignment (noise sampled from ``rng`` unless given); hard mode
    reindexes columns by the frozen permutation and consumes no
    randomness.
    """
    if not isinstance(X, torch.Tensor):
        X = torch.as_tensor(np.asarray(X, dtype=np.float64))
    if X.ndim == 1:
        X = X.unsqueeze(0)
    if X.shape[1] != params.n:
        raise ShapeError(f"batch has {X.shape[1]} columns, model expects {params.n}")
    if params.perm.frozen:
        xt = X[:, torch.as_tensor(params.perm.p_hard, dtype=torch.long)]
    else:
        if noise is None:
            if rng is None:
                raise StateError("soft forward needs an rng or explicit noise")
            noise = perm_mod.sample_gumbel(params.n, params.perm.gumbel_scale, rng)
        P = perm_mod.sinkhorn(
            params.perm.logits + noise, params.perm.tau, perm_mod.SINKHORN_ITERS
        )
        xt = X @ P.T
    return _fold_chain(xt, params)


def loss(
    params: ModelParams,
    X,
    y,
    cfg: LossConfig,
    rng: np.random.Generator | None = None,
    noise: torch.Tensor | None = None,
) -> torch.Tensor:
    """a * (MSE(predictions, y) + lambda * mean((sigmoid(theta_w) - 0.5)^2))."""
    if not isinstance(y, torch.Tensor):
        y = torch.as_tensor(np.asarray(y, dtype=np.float64))
    preds = forward(params, X, rng=rng, noise=noise)
    if preds.shape != y.shape:
        raise ShapeError(f"{preds.shape[0]} predictions vs {y.shape[0]} labels")
    mse = torch.mean((preds - y) ** 2)
    penalty = torch.mean((torch.sigmoid(params.theta_w) - 0.5) ** 2)
    return cfg.amplifier * (mse + cfg.weight_penalty * penalty)


def gradients(
    params: ModelParams,
    X,
    y,
    cfg: LossConfig,
    rng: np.random.Generator | None = None,
    noise: torch.Tensor | None = None,
) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of the loss w.r.t. every raw parameter.

    Gumbel noise is treated as a constant for the pass.  Raises
    NumericError when any gradient comes back non-finite rather than
    letting NaNs propagate silently.
    """
    value = loss(params, X, y, cfg, rng=rng, noise=noise)
    inputs = [params.theta_w, params.theta_a]
    if not params.perm.frozen:
        inputs.append(params.perm.logits)
    grads = torch.autograd.grad(value, inputs, allow_unused=True)
    out = {
        "theta_w": _grad_array(grads[0], params.theta_w),
        "theta_a": _grad_array(grads[1], params.theta_a),
    }
    if params.perm.frozen:
        out["logits"] = np.zeros(
            tuple(params.perm.logits.shape), dtype=np.float64
        )
    else:
        out["logits"] = _grad_array(grads[2], params.perm.logits)
    for name, g in out.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient in {name}")
    return out


def _grad_array(g, ref) -> np.ndarray:
    if g is None:
        return np.zeros(tuple(ref.shape), dtype=np.float64)
    return g.detach().cpu().numpy().copy()


# ---------------------------------------------------------------------------
# Trained model artifact + persistence
# ---------------------------------------------------------------------------

@dataclass
class TrainedModel:
    """Frozen model: dataset feature order, hard permutation, raw logits."""

    features: tuple[str, ...]
    p_hard: np.ndarray
    theta_w: np.ndarray
    theta_a: np.ndarray
    normalizer: NormalizerSpec | None = None
    metadata: dict = field(default_factory=dict)

    def tree(self) -> LspTree:
        names = tuple(self.features[j] for j in self.p_hard)
        w = 1.0 / (1.0 + np.exp(-self.theta_w))
        a = -1.0 + 3.0 / (1.0 + np.exp(-self.theta_a))
        return LspTree(names, tuple(zip(w.tolist(), a.tolist())))

    def predict(self, X) -> np.ndarray:
        """Scores via the exact (unclamped) tree evaluation."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return self.tree().evaluate_many(X[:, self.p_hard])


def prune_model(model: TrainedModel, k: int) -> TrainedModel:
    """Model with the k deepest tree positions dropped.

    The input schema (``features``) is unchanged; the pruned model just
    ignores the dropped columns.
    """
    n = len(model.p_hard)
    if not (0 <= k <= n - 2):
        raise DomainError(f"k must lie in [0, {n - 2}], got {k}")
    meta = dict(model.metadata)
    meta["pruned_from"] = meta.get("pruned_from", n)
    return TrainedModel(
        features=model.features,
        p_hard=model.p_hard[k:].copy(),
        theta_w=model.theta_w[k:].copy(),
        theta_a=model.theta_a[k:].copy(),
        normalizer=model.normalizer,
        metadata=meta,
    )


def save_model(model: TrainedModel, path) -> None:
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "features": list(model.features),
        "p_hard": [int(v) for v in model.p_hard],
        "theta_w": model.theta_w.tolist(),
        "theta_a": model.theta_a.tolist(),
        "normalizer": model.normalizer.to_payload() if model.normalizer else None,
        "metadata": model.metadata,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelFormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported model version {doc.get('version')!r} "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    try:
        normalizer = (
            NormalizerSpec.from_payload(doc["normalizer"]) if doc["normalizer"] else None
        )
        return TrainedModel(
            features=tuple(doc["features"]),
            p_hard=np.asarray(doc["p_hard"], dtype=np.intp),
            theta_w=np.asarray(doc["theta_w"], dtype=np.float64),
            theta_a=np.asarray(doc["theta_a"], dtype=np.float64),
            normalizer=normalizer,
            metadata=dict(doc.get("metadata", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model document: {exc}") from exc


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

def _grad_health(tensors) -> str:
    worst = 0.0
    for t in tensors:
        if t.grad is None:
            continue
        g = t.grad
        if not torch.isfinite(g).all():
            return "nonfinite"
        worst = max(worst, float(g.abs().max()))
    if worst > GRAD_EXPLODE:
        return "exploded"
    if worst < GRAD_VANISH:
        return "vanished"
    return "ok"


def _is_improving(history: list[float], window: int) -> bool:
    if len(history) < 2 * window:
        return True
    recent = min(history[-window:])
    previous = min(history[-2 * window : -window])
    return recent <= previous * (1.0 - _IMPROVEMENT_RATIO)


def _accuracy(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    preds = scores >= threshold
    return float(np.mean(preds == (labels >= threshold)))


def _finalize(params: ModelParams, dataset: Dataset, meta: dict) -> TrainedModel:
    return TrainedModel(
        features=tuple(dataset.feature_names),
        p_hard=np.asarray(params.perm.p_hard, dtype=np.intp),
        theta_w=params.theta_w.detach().cpu().numpy().copy(),
        theta_a=params.theta_a.detach().cpu().numpy().copy(),
        metadata=meta,
    )


def train(dataset: Dataset, cfg: TrainingConfig) -> TrainedModel:
    """Run the two-phase attempt loop until a model passes acceptance.

    Per attempt and epoch: decay the Sinkhorn temperature every 1000
    epochs, take one full-batch gradient step, abort the attempt on
    vanishing/exploding gradients, steer the Gumbel noise scale by the
    sliding loss window, and (while unfrozen) propose and possibly
    freeze a Hungarian permutation once the loss drops under the freeze
    threshold.  A frozen attempt whose training accuracy meets
    ``acceptance_threshold`` wins; running out of attempts raises
    TrainingFailure with per-attempt diagnostics.
    """
    if dataset.n_features < 2:
        raise DomainError("training needs at least 2 features")
    n = dataset.n_features
    X = torch.as_tensor(dataset.X, dtype=torch.float64)
    y = torch.as_tensor(dataset.y, dtype=torch.float64)
    loss_cfg = cfg.loss_config()
    diagnostics: list[dict] = []

    for attempt in range(1, cfg.attempts + 1):
        rng = np.random.default_rng([cfg.seed, attempt])
        params = init_params(n, rng, cfg, frozen_identity=cfg.is_frozen)
        trainables = [params.theta_w, params.theta_a]
        if not params.perm.frozen:
            trainables.append(params.perm.logits)
        optimizer = torch.optim.Adam(trainables, lr=cfg.learning_rate)

        tau = cfg.sinkhorn_tau
        gumbel_scale = params.perm.gumbel_scale
        history: list[float] = []
        abort_reason = None
        freeze_epoch = None

        for epoch in range(1, cfg.max_epochs + 1):
            if epoch % 1000 == 0:
                tau *= cfg.tau_decay
            state = params.perm
            if not state.frozen and (
                state.tau != tau or state.gumbel_scale != gumbel_scale
            ):
                params.perm = PermutationState(
                    logits=state.logits,
                    tau=tau,
                    gumbel_scale=gumbel_scale,
                    gumbel_min=state.gumbel_min,
                    gumbel_max=state.gumbel_max,
                )

            noise = None
            if not params.perm.frozen:
                noise = perm_mod.sample_gumbel(n, gumbel_scale, rng)

            optimizer.zero_grad(set_to_none=True)
            value = loss(params, X, y, loss_cfg, noise=noise)
            value.backward()
            current = float(value.detach())

            health = _grad_health(trainables)
            if health != "ok" and not (health == "vanished" and params.perm.frozen):
                # a frozen, fully converged model legitimately has tiny
                # gradients; anything else aborts the attempt
                abort_reason = f"gradients {health} at epoch {epoch}"
                break

            history.append(current)
            if not params.perm.frozen:
                if _is_improving(history, cfg.history_window):
                    gumbel_scale = max(
                        gumbel_scale * cfg.gumbel_decrease, cfg.gumbel_scale_min
                    )
                else:
                    gumbel_scale = min(
                        gumbel_scale * cfg.gumbel_increase, cfg.gumbel_scale_max
                    )

                if current < cfg.freeze_loss_threshold:
                    candidate = perm_mod.hardening_candidate(params.perm)
                    frozen_trial = perm_mod.freeze(params.perm, candidate)
                    trial_params = ModelParams(
                        frozen_trial, params.theta_w, params.theta_a
                    )
                    with torch.no_grad():
                        hard_loss = float(loss(trial_params, X, y, loss_cfg))
                    if (
                        hard_loss < cfg.accept_loss
                        and abs(hard_loss - current) <= cfg.lock_loss_tolerance
                    ):
                        params.perm.logits.grad = None
                        params.perm.logits.requires_grad_(False)
                        params.perm = frozen_trial
                        freeze_epoch = epoch

            optimizer.step()

        record = {
            "attempt": attempt,
            "epochs": len(history),
            "final_loss": history[-1] if history else math.inf,
            "frozen": params.perm.frozen,
            "freeze_epoch": freeze_epoch,
            "abort_reason": abort_reason,
            "accuracy": None,
        }

        if params.perm.frozen:
            meta = {
                "seed": cfg.seed,
                "attempt": attempt,
                "epochs": len(history),
                "final_loss": record["final_loss"],
                "freeze_epoch": freeze_epoch,
            }
            model = _finalize(params, dataset, meta)
            accuracy = _accuracy(model.predict(dataset.X), dataset.y)
            record["accuracy"] = accuracy
            if accuracy >= cfg.acceptance_threshold:
                model.metadata["train_accuracy"] = accuracy
                diagnostics.append(record)
                model.metadata["attempt_history"] = diagnostics
                if cfg.save_model:
                    save_model(model, cfg.save_path)
                return model
        diagnostics.append(record)

    raise TrainingFailure(
        f"no model reached accuracy {cfg.acceptance_threshold} within "
        f"{cfg.attempts} attempts",
        diagnostics,
    )
