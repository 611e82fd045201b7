"""HyperBand hyperparameter search with epochs as the resource unit."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import BadBudget, ObjectiveFailed


@dataclass(frozen=True)
class Rung:
    n: int  # configurations evaluated
    r: int  # epochs per configuration


@dataclass(frozen=True)
class Bracket:
    s: int
    rungs: tuple[Rung, ...]

    @property
    def budget(self) -> int:
        return sum(rung.n * rung.r for rung in self.rungs)


@dataclass(frozen=True)
class HyperbandPlan:
    R: int
    eta: int
    brackets: tuple[Bracket, ...]

    @property
    def s_max(self) -> int:
        return len(self.brackets) - 1

    @property
    def budget(self) -> int:
        """Total epochs charged when every rung evaluates all its configurations."""
        return sum(b.budget for b in self.brackets)

    def table(self) -> list[list[tuple[int, int]]]:
        return [[(rung.n, rung.r) for rung in b.rungs] for b in self.brackets]


def _floor_log(R: int, eta: int) -> int:
    s = 0
    while eta ** (s + 1) <= R:
        s += 1
    return s


def plan(R: int = 81, eta: int = 3) -> HyperbandPlan:
    """Bracket/rung schedule of standard HyperBand.

    ``s_max = floor(log_eta R)``; bracket ``s`` starts ``n = ceil((s_max + 1)
    / (s + 1) * eta^s)`` configurations at ``r = R * eta^-s`` epochs and keeps
    the best ``floor(n_i / eta)`` after each rung while multiplying epochs by
    ``eta``. Epoch counts are rounded to integers (exact when R is a power of
    eta).
    """
    if not isinstance(R, (int, np.integer)) or not isinstance(eta, (int, np.integer)):
        raise BadBudget("R and eta must be integers")
    if eta < 2:
        raise BadBudget(f"eta must be >= 2, got {eta}")
    if R < eta:
        raise BadBudget(f"R must be >= eta, got R={R}, eta={eta}")
    s_max = _floor_log(R, eta)
    brackets = []
    for s in range(s_max, -1, -1):
        n = math.ceil((s_max + 1) * eta**s / (s + 1))
        rungs = []
        for i in range(s + 1):
            n_i = n // eta**i
            r_i = max(1, round(R * eta ** (i - s)))
            rungs.append(Rung(n_i, r_i))
        brackets.append(Bracket(s, tuple(rungs)))
    return HyperbandPlan(R, eta, tuple(brackets))


# search space ---------------------------------------------------------------


@dataclass
class SearchSpace:
    """Independent dimensions sampled uniformly (lr and dropout continuous).

    ``choices`` maps a config key to a list of candidate values (filter
    counts, kernel sizes, node counts, batch-norm flag, ...).
    """

    lr: tuple[float, float] = (1e-4, 1e-2)
    dropout: tuple[float, float] | None = (0.0, 0.5)
    choices: dict[str, list] = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.lr
        if not 0 < lo <= hi:
            raise ValueError("learning-rate range must satisfy 0 < lo <= hi")
        if self.dropout is not None and not 0 <= self.dropout[0] <= self.dropout[1] < 1:
            raise ValueError("dropout range must lie in [0, 1)")
        for key, vals in self.choices.items():
            if not vals:
                raise ValueError(f"empty choice list for {key!r}")

    def sample(self, rng: np.random.Generator) -> dict:
        lo, hi = self.lr
        cfg = {"lr": float(np.exp(rng.uniform(np.log(lo), np.log(hi))))}
        if self.dropout is not None:
            cfg["dropout"] = float(rng.uniform(*self.dropout))
        for key in sorted(self.choices):
            vals = self.choices[key]
            cfg[key] = vals[int(rng.integers(len(vals)))]
        return cfg

    def to_dict(self) -> dict:
        return {"lr": list(self.lr), "dropout": list(self.dropout) if self.dropout else None,
                "choices": self.choices}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        dropout = d.get("dropout", (0.0, 0.5))
        return cls(lr=tuple(d.get("lr", (1e-4, 1e-2))), dropout=tuple(dropout) if dropout else None,
                   choices=dict(d.get("choices", {})))


@dataclass
class TuningRecord:
    bracket: int
    rung: int
    config_id: int
    epochs: int
    val_rmse: float


@dataclass
class TuningResult:
    best_config: dict
    best_val_rmse: float
    best_config_id: int
    configs: list[dict]
    log: list[TuningRecord]
    epochs_used: int


Objective = Callable[[dict, int], float]


def run(space: SearchSpace, hb_plan: HyperbandPlan, objective: Objective, seed: int = 0) -> TuningResult:
    """Run every bracket of ``hb_plan`` and return the lowest-loss configuration.

    ``objective(config, epochs)`` trains from scratch for ``epochs`` epochs and
    returns the validation RMSE; it must be deterministic. Survivors of each
    rung are the ``floor(n / eta)`` best, ties broken by config id. Non-finite
    losses rank last. Exceptions are re-raised as :class:`ObjectiveFailed`
    carrying the offending configuration.
    """
    rng = np.random.default_rng(seed)
    configs: list[dict] = []
    log: list[TuningRecord] = []
    best = (np.inf, -1)
    used = 0
    for bracket in hb_plan.brackets:
        ids = []
        for _ in range(bracket.rungs[0].n):
            ids.append(len(configs))
            configs.append(space.sample(rng))
        for i, rung in enumerate(bracket.rungs):
            losses = []
            for cid in ids:
                try:
                    loss = float(objective(dict(configs[cid]), rung.r))
                except Exception as exc:
                    raise ObjectiveFailed(configs[cid], exc) from exc
                used += rung.r
                log.append(TuningRecord(bracket.s, i, cid, rung.r, loss))
                key = loss if np.isfinite(loss) else np.inf
                losses.append(key)
                best = min(best, (key, cid)) if best[1] >= 0 else (key, cid)
            if i + 1 < len(bracket.rungs):
                ids = survivors(ids, losses, hb_plan.eta)
    return TuningResult(dict(configs[best[1]]), float(best[0]), best[1], configs, log, used)


def survivors(ids: Sequence[int], losses: Sequence[float], eta: int) -> list[int]:
    """Top ``floor(len / eta)`` ids by loss, ties broken by id."""
    order = sorted(range(len(ids)), key=lambda k: (losses[k], ids[k]))
    return [ids[k] for k in order[: len(ids) // eta]]


def cnn_objective(
    base_spec,
    train_ds,
    val_ds,
    training_defaults: dict | None = None,
    seed: int = 0,
) -> Objective:
    """Objective that builds ``base_spec`` updated with the sampled layer
    settings, trains it and returns the best validation RMSE.

    Config keys ``lr``, ``batch_size`` go to the training config; any other
    key that is a :class:`NetworkSpec` field overrides the architecture.
    Architectures that violate their parameter budget score ``inf``.
    """
    from .errors import SpecInvalid
    from .models import NetworkSpec, TrainingConfig, build_model, train

    spec_fields = set(NetworkSpec.__dataclass_fields__)
    defaults = dict(training_defaults or {})

    def objective(config: dict, epochs: int) -> float:
        arch = {k: v for k, v in config.items() if k in spec_fields}
        tcfg = dict(defaults)
        tcfg.update({k: v for k, v in config.items() if k in ("lr", "batch_size")})
        tcfg.update(epochs=int(epochs), seed=seed)
        try:
            net = build_model(base_spec.with_(seed=seed, **arch))
        except SpecInvalid:
            return float("inf")
        return train(net, train_ds, val_ds, TrainingConfig(**tcfg)).best_val_rmse

    return objective


def config_as_json(config: dict[str, Any]) -> dict:
    return {k: (v.item() if isinstance(v, np.generic) else v) for k, v in config.items()}
