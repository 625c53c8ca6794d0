"""Training loop: backend refresh, energy descent, metric logging, studies.

A run is deterministic given its config: the parameter initialisation is a
pure function of (architecture, seed), the Monte-Carlo stream is seeded per
run, and all gradient reductions have fixed order.  The integration points
are refreshed every ``refresh_every`` epochs starting at epoch 0; between
refreshes they stay frozen while the network evolves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .activation import make_activation
from .loss import (PoissonProblem, energy, energy_var, make_backend,
                   manufactured, relative_l2_error)
from .mesh import MeshError
from .net import adam_init, adam_step, init_params, loss_gradient

__all__ = ["TrainConfig", "RunRecord", "StudySummary", "train", "study"]


@dataclass(frozen=True)
class TrainConfig:
    problem: str = "abse-sinc-1d"
    formulation: str = "weak"
    architecture: tuple = (1, 10, 10, 1)
    activation: str | None = None     # default: the problem's family
    epsilon: float | None = None
    backend: dict = field(default_factory=lambda: {"kind": "AQ", "pieces": 3,
                                                   "order": 5,
                                                   "refresh_every": 10})
    eta: float = 1e-2
    epochs: int = 5000
    beta: float | None = None
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        object.__setattr__(self, "architecture", tuple(self.architecture))
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        nu = int(self.backend.get("refresh_every", 10))
        if self.epochs >= 1 and not 1 <= nu <= max(self.epochs, 1):
            raise ValueError("refresh_every must lie in [1, epochs]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["architecture"] = list(self.architecture)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        keys = cls.__dataclass_fields__.keys()
        return cls(**{k: v for k, v in d.items() if k in keys})


@dataclass
class RunRecord:
    config: TrainConfig
    losses: np.ndarray            # loss before each update (epoch 0 first)
    log_epochs: list
    log_errors: list              # relative L2 at the logged epochs (or None)
    final_error: float | None
    final_energy: float
    avg_n_domain: float
    avg_n_boundary: float
    point_counts: list
    wall_time: float
    params: object = None         # final NetworkParams


def _build_problem(config: TrainConfig) -> PoissonProblem:
    return manufactured(config.problem, config.formulation, config.beta)


def train(config: TrainConfig, problem: PoissonProblem | None = None,
          keep_params: bool = True) -> RunRecord:
    """Train one network; returns the logged record.

    Geometry failures during a remesh abort the run with the epoch stamped
    on the diagnostic.
    """
    t_start = time.perf_counter()
    if problem is None:
        problem = _build_problem(config)
    act = make_activation(config.activation or problem.activation_name,
                          config.epsilon)
    params = init_params(config.architecture, act, config.seed)
    backend = make_backend(problem, config.backend, config.seed, activation=act)
    nu = backend.refresh_every
    opt = adam_init(params, config.eta)
    losses: list[float] = []
    log_epochs: list[int] = []
    log_errors: list[float | None] = []

    def log_metric(epoch):
        log_epochs.append(epoch)
        if problem.exact is not None:
            log_errors.append(relative_l2_error(params, problem))
        else:
            log_errors.append(None)

    pts = None
    if config.epochs == 0:
        pts = _refresh(backend, params, 0)
        losses.append(energy(params, problem, pts))
        log_metric(0)
    for epoch in range(config.epochs):
        if epoch % nu == 0:
            pts = _refresh(backend, params, epoch)
        J, grads = loss_gradient(
            params, lambda pv: energy_var(pv, problem, pts))
        losses.append(J)
        if epoch % config.log_every == 0:
            log_metric(epoch)
        params, opt = adam_step(opt, params, grads)

    final_error = (relative_l2_error(params, problem)
                   if problem.exact is not None else None)
    final_energy = energy(params, problem, pts)
    avg_dom, avg_bnd = backend.average_counts()
    return RunRecord(config=config, losses=np.asarray(losses),
                     log_epochs=log_epochs, log_errors=log_errors,
                     final_error=final_error, final_energy=final_energy,
                     avg_n_domain=avg_dom, avg_n_boundary=avg_bnd,
                     point_counts=list(backend.counts),
                     wall_time=time.perf_counter() - t_start,
                     params=params if keep_params else None)


def _refresh(backend, params, epoch):
    try:
        return backend.refresh(params, epoch)
    except MeshError as exc:
        raise RuntimeError(f"remesh failed at epoch {epoch}: {exc}") from exc


@dataclass
class StudySummary:
    config: TrainConfig
    seeds: list
    errors: list
    e_min: float
    e_avg: float
    e_std: float
    e_max: float
    avg_time: float
    avg_n_domain: float
    avg_n_boundary: float
    records: list


def study(config: TrainConfig, seeds, problem: PoissonProblem | None = None,
          keep_records: bool = True) -> StudySummary:
    """Run one config across seeds and summarise the final errors."""
    import dataclasses

    records = []
    for seed in seeds:
        cfg = dataclasses.replace(config, seed=int(seed))
        records.append(train(cfg, problem=problem, keep_params=keep_records))
    errors = [r.final_error for r in records]
    known = [e for e in errors if e is not None]
    if known:
        stats = (float(np.min(known)), float(np.mean(known)),
                 float(np.std(known)), float(np.max(known)))
    else:
        stats = (float("nan"),) * 4
    return StudySummary(
        config=config, seeds=list(seeds), errors=errors,
        e_min=stats[0], e_avg=stats[1], e_std=stats[2], e_max=stats[3],
        avg_time=float(np.mean([r.wall_time for r in records])),
        avg_n_domain=float(np.mean([r.avg_n_domain for r in records])),
        avg_n_boundary=float(np.mean([r.avg_n_boundary for r in records])),
        records=records if keep_records else [])
