"""Loss, optimizers, and the validation-checkpointed training loop.

The loop trains on mini-batches drawn in a seeded shuffled order, evaluates
the validation windows in eval mode after every epoch, and keeps a snapshot
of the parameters (and BatchNorm running statistics) from the epoch with the
lowest validation MSE.  Early stopping triggers after ``patience`` epochs
without a strict improvement.

Determinism: with an identical model seed, data, and TrainConfig, two runs
produce bitwise-identical parameters and identical (epoch, train_mse,
val_mse) log columns.  Wall-clock seconds are recorded for operators but are
naturally machine-dependent.

Shuffle randomness draws from ``SeedSequence([seed, 3])`` so it can never
collide with the streams used for weight init and dropout ([seed, 0..2]).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .data import WindowSet
from .errors import ContractError, DivergenceError, ShapeError
from .model import Tcnformer

OPTIMIZERS = ("adam", "sgd")


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over every entry, as a differentiable scalar."""
    if pred.data.shape != target.data.shape:
        raise ShapeError(
            f"mse_loss shapes differ: {pred.data.shape} vs {target.data.shape}"
        )
    diff = pred - target
    return (diff * diff).mean()


@dataclass
class OptimState:
    """Shared optimizer state for every named parameter.

    ``first_moment``/``second_moment`` are keyed by parameter name and hold
    arrays with exactly the parameter's shape; both stay empty for plain SGD.
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def _check_finite(name: str, grad: np.ndarray) -> None:
    if not np.all(np.isfinite(grad)):
        raise DivergenceError(f"non-finite gradient in parameter '{name}'")


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is <= max_norm.

    Returns the pre-clip global norm.
    """
    if max_norm <= 0:
        raise ContractError(f"max_norm must be positive, got {max_norm}")
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def adam_step(
    params: dict[str, Tensor], grads: dict[str, np.ndarray], state: OptimState
) -> None:
    """One bias-corrected adaptive update for every parameter, in place."""
    for name, grad in grads.items():
        _check_finite(name, grad)
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, param in params.items():
        grad = grads[name]
        if name not in state.first_moment:
            state.first_moment[name] = np.zeros_like(param.data)
            state.second_moment[name] = np.zeros_like(param.data)
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / bc1
        v_hat = v / bc2
        param.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)


def sgd_step(
    params: dict[str, Tensor], grads: dict[str, np.ndarray], state: OptimState
) -> None:
    """Plain gradient-descent update: p <- p - lr * g, in place."""
    for name, grad in grads.items():
        _check_finite(name, grad)
    state.step_count += 1
    for name, param in params.items():
        param.data -= state.learning_rate * grads[name]


_STEP_FUNCS = {"adam": adam_step, "sgd": sgd_step}


@dataclass(frozen=True)
class TrainConfig:
    """Loop hyperparameters; all counts strictly positive."""

    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    patience: int = 20
    clip_norm: float = 5.0
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ContractError(
                f"learning_rate must be positive, got {self.learning_rate}"
            )
        if self.optimizer not in OPTIMIZERS:
            raise ContractError(
                f"optimizer must be one of {OPTIMIZERS}, got '{self.optimizer}'"
            )
        if self.patience < 1:
            raise ContractError(f"patience must be >= 1, got {self.patience}")
        if self.clip_norm <= 0:
            raise ContractError(f"clip_norm must be positive, got {self.clip_norm}")


@dataclass(frozen=True)
class LogRow:
    """One training-log line: epoch index (1-based) and epoch metrics."""

    epoch: int
    train_mse: float
    val_mse: float
    seconds: float


@dataclass
class TrainResult:
    """Outcome of a training run.

    ``best_state`` snapshots the parameters and BatchNorm running statistics
    from the epoch with the lowest validation MSE; the trained model is also
    left restored to that state.
    """

    best_state: dict[str, np.ndarray]
    best_val_mse: float
    best_epoch: int
    log: list[LogRow]
    epochs_run: int
    stopped_early: bool


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, order.size, batch_size):
        yield order[start : start + batch_size]


def train_model(
    model: Tcnformer,
    train: WindowSet,
    val: WindowSet,
    cfg: TrainConfig,
) -> TrainResult:
    """Train ``model`` on scaled windows, returning the best-validation state.

    On divergence (non-finite loss or gradient) a DivergenceError is raised
    with a ``partial_result`` attribute holding the last good state and the
    log rows completed so far.
    """
    cfg.validate()
    n_train = train.inputs.shape[0]
    if n_train == 0:
        raise ContractError("training window set is empty")
    if val.inputs.shape[0] == 0:
        raise ContractError("validation window set is empty")

    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3]))
    params = dict(model.named_parameters())
    state = OptimState(learning_rate=cfg.learning_rate)
    step = _STEP_FUNCS[cfg.optimizer]

    best_state = model.state_snapshot()
    best_val = float("inf")
    best_epoch = 0
    since_improve = 0
    log: list[LogRow] = []
    stopped_early = False
    epochs_run = 0

    def partial() -> TrainResult:
        return TrainResult(
            best_state=best_state,
            best_val_mse=best_val,
            best_epoch=best_epoch,
            log=list(log),
            epochs_run=epochs_run,
            stopped_early=False,
        )

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n_train)
        model.train()
        loss_total = 0.0
        for batch in _batches(order, cfg.batch_size):
            for p in params.values():
                p.zero_grad()
            x = Tensor(train.inputs[batch])
            y = Tensor(train.targets[batch])
            loss = mse_loss(model(x), y)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                err = DivergenceError(
                    f"non-finite training loss at epoch {epoch}"
                )
                err.partial_result = partial()
                raise err
            loss.backward()
            grads: dict[str, np.ndarray] = {}
            for name, p in params.items():
                if p.grad is None:
                    raise ContractError(
                        f"parameter '{name}' received no gradient"
                    )
                grads[name] = p.grad
            clip_gradients(grads, cfg.clip_norm)
            try:
                step(params, grads, state)
            except DivergenceError as err:
                err.partial_result = partial()
                raise
            loss_total += loss_value * batch.size
        train_mse = loss_total / n_train

        model.eval()
        val_pred = model(Tensor(val.inputs))
        val_mse = float(np.mean((val_pred.data - val.targets) ** 2))
        epochs_run = epoch
        log.append(
            LogRow(
                epoch=epoch,
                train_mse=train_mse,
                val_mse=val_mse,
                seconds=time.perf_counter() - t0,
            )
        )

        if val_mse < best_val:
            best_val = val_mse
            best_epoch = epoch
            best_state = model.state_snapshot()
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= cfg.patience:
                stopped_early = True
                break

    model.restore_state(best_state)
    model.eval()
    return TrainResult(
        best_state=best_state,
        best_val_mse=best_val,
        best_epoch=best_epoch,
        log=log,
        epochs_run=epochs_run,
        stopped_early=stopped_early,
    )
