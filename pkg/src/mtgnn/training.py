"""Training loop with curriculum over the horizon and random node-group sampling."""
import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import tensor as T
from .exceptions import ConfigError, ContractError, TrainingError
from .metrics import metrics

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "iter", "r", "train_mae", "valid_mae", "valid_rmse", "valid_mape", "seconds")


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    l2_penalty: float = 0.0001
    grad_clip: float = 5.0
    batch_size: int = 64
    epochs: int = 100
    curriculum_step: int = 2500
    split_size: int = 1
    seed: int = 0

    def validate(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.l2_penalty < 0:
            raise ConfigError("l2_penalty must be non-negative")
        if self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive")
        for name in ("batch_size", "curriculum_step", "split_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**values)


@dataclass
class TrainState:
    iteration: int = 1
    r: int = 1
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    best_valid: float = float("inf")
    best_params: dict = None
    history: list = field(default_factory=list)


# ------------------------------------------------------------------ pieces


def loss(pred, target, params=(), l2=0.0):
    """Mean absolute error plus ``(l2 / 2) * sum ||theta||^2``."""
    target = T.as_tensor(target)
    if pred.size == 0:
        raise ContractError("empty batch")
    total = T.mean(T.absolute(T.sub(pred, target)))
    if l2 > 0:
        for p in params:
            total = T.add(total, T.mul_scalar(T.sum(T.square(p)), 0.5 * l2))
    return total


def curriculum_step(state, step_size, horizon, enabled=True):
    """Advance the supervised horizon ``r`` at the start of an iteration.

    ``r`` grows by one whenever the iteration counter is a multiple of
    ``step_size``, capped at ``horizon``. With the curriculum disabled the
    full horizon is used from the first iteration.
    """
    if not enabled:
        state.r = horizon
    elif state.iteration % step_size == 0 and state.r <= horizon:
        state.r = min(state.r + 1, horizon)
    return state


def split_nodes(num_nodes, groups, rng):
    """Randomly partition ``range(num_nodes)`` into ``groups`` near-equal parts."""
    if not 1 <= groups <= num_nodes:
        raise ConfigError(f"cannot split {num_nodes} nodes into {groups} groups")
    perm = rng.permutation(num_nodes)
    return [np.sort(part) for part in np.array_split(perm, groups)]


def clip_by_global_norm(grads, max_norm):
    """Scale all gradients together so their joint L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(np.sum([np.sum(g * g) for g in grads.values()])))
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def adam_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8, clip=5.0):
    """One clipped Adam update in place. ``params`` and ``grads`` are dicts keyed by name."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name}")
    if clip is not None:
        grads, _ = clip_by_global_norm(grads, clip)
    b1, b2 = betas
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


# -------------------------------------------------------------------- loop


def to_model_input(x):
    """``[S, P, N, D]`` windows to the network layout ``[S, D, N, P]``."""
    return np.ascontiguousarray(np.transpose(x, (0, 3, 2, 1)))


def predict(model, X, batch_size=256):
    """Normalized forecasts ``[S, Q, N]`` for windows ``X`` in ``[S, P, N, D]`` layout."""
    was_training = model.training
    model.eval()
    out = []
    with T.no_grad():
        for lo in range(0, len(X), batch_size):
            out.append(model(to_model_input(X[lo:lo + batch_size])).data)
    model.train(was_training)
    if not out:
        return np.zeros((0, model.config.output_len, model.config.num_nodes))
    return np.concatenate(out, axis=0)


def evaluate(model, dataset, split="valid", batch_size=256):
    X, Y = dataset.split(split)
    pred = predict(model, X, batch_size)
    return metrics(dataset.denormalize(pred), dataset.denormalize(Y))


def train_iteration(model, x, y, state, cfg, rng):
    """One iteration of the learning algorithm on a batch; returns the per-group losses.

    ``x`` is ``[b, D, N, P]`` and ``y`` is ``[b, Q, N]`` (both normalized).
    """
    c = model.config
    groups = split_nodes(c.num_nodes, cfg.split_size, rng)
    curriculum_step(state, cfg.curriculum_step, c.output_len, c.use_curriculum)
    r = state.r
    losses = []
    for idx in groups:
        idx_arg = None if len(groups) == 1 else idx
        xs = x if idx_arg is None else x[:, :, idx, :]
        ys = y if idx_arg is None else y[:, :, idx]
        params = dict(model.named_parameters())
        model.zero_grad()
        pred = model(xs, idx=idx_arg)
        L = loss(T.narrow(pred, 1, 0, r) if r < pred.shape[1] else pred, ys[:, :r],
                 params.values(), cfg.l2_penalty)
        if not np.isfinite(L.data):
            raise TrainingError(f"loss diverged at iteration {state.iteration}: {float(L.data)}")
        L.backward()
        grads = {k: p.grad for k, p in params.items() if p.grad is not None}
        adam_step(params, grads, state, cfg.learning_rate, clip=cfg.grad_clip)
        losses.append((float(L.data), pred.data[:, :r], ys[:, :r], idx))
    state.iteration += 1
    return losses


def train(model, dataset, cfg, log_file=None, state=None, progress=None):
    """Run the full learning algorithm and keep the best-validation parameters.

    ``log_file`` receives one CSV line per epoch. ``progress(row)`` is called
    after every epoch; a truthy return value stops training. The model is
    left holding the best-validation parameters.
    """
    cfg.validate()
    c = model.config
    if dataset.num_nodes != c.num_nodes or dataset.X.shape[1] != c.input_len \
            or dataset.Y.shape[1] != c.output_len or dataset.X.shape[3] != c.in_dim:
        raise ConfigError(f"dataset windows X{dataset.X.shape[1:]} Y{dataset.Y.shape[1:]} do not match "
                          f"model (P={c.input_len}, Q={c.output_len}, N={c.num_nodes}, D={c.in_dim})")
    rng = np.random.default_rng(cfg.seed)
    state = TrainState() if state is None else state
    X, Y = dataset.split("train")
    if len(X) == 0:
        raise ConfigError("training split is empty")
    has_valid = dataset.splits["valid"][1] > dataset.splits["valid"][0]
    scale = dataset.normalizer.scale
    if log_file is not None:
        log_file.write(",".join(LOG_COLUMNS) + "\n")
        log_file.flush()

    model.train()
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(len(X))
        abs_err, count = 0.0, 0
        for lo in range(0, len(X), cfg.batch_size):
            batch = perm[lo:lo + cfg.batch_size]
            x = to_model_input(X[batch])
            y = Y[batch]
            for _, p, t, idx in train_iteration(model, x, y, state, cfg, rng):
                abs_err += float(np.abs((p - t) * scale[idx]).sum())
                count += p.size
        train_mae = abs_err / max(count, 1)
        if has_valid:
            rep = evaluate(model, dataset, "valid")
            model.train()
        else:
            rep = None
        valid_mae = rep.mae if rep else float("nan")
        if rep is None or valid_mae < state.best_valid:
            state.best_valid = valid_mae if rep else state.best_valid
            state.best_params = model.state_dict()
        row = dict(epoch=epoch, iter=state.iteration - 1, r=state.r, train_mae=train_mae,
                   valid_mae=valid_mae, valid_rmse=rep.rmse if rep else float("nan"),
                   valid_mape=(rep.mape if rep and rep.mape is not None else float("nan")),
                   seconds=time.perf_counter() - t0)
        state.history.append(row)
        if log_file is not None:
            log_file.write(",".join(_cell(row[k]) for k in LOG_COLUMNS) + "\n")
            log_file.flush()
        log.info("epoch %d train_mae %.5f valid_mae %.5f", epoch, train_mae, valid_mae)
        if progress is not None and progress(row):
            break
    if state.best_params is not None:
        model.load_state_dict(state.best_params)
    model.eval()
    return state


def _cell(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{v:.6g}"
