"""SGD loops for empirical and diametrical risk minimization.

Three training routines share one loop skeleton:

  sgd_erm_run         plain SGD on the empirical risk (baseline).
  simple_sgd_drm_run  every iteration: draw r directions of norm gamma, pick
                      the one with worst batch risk, and take the gradient
                      step from the perturbed point.
  sgd_drm_run         same idea, but fresh directions are drawn only on
                      sampling events (every k-th iteration or with
                      probability p) and past winners are kept in a FIFO
                      queue of capacity q for reuse; every iteration the
                      gradient is taken at the worst queued perturbation.

All randomness is split into independent streams derived from the config
seed (batching, perturbations, the sampling coin, per-epoch evaluation), so
runs that should coincide do so bitwise: gamma = 0 reduces both DRM variants
to the ERM baseline, and q = 1 with sampling every iteration reduces the
queued algorithm to the simple one, trace for trace.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .losses import LossModel, Sample
from .params import FeasibleSet, NormKind, ParamVector, Unbounded, axpy, project, sample_sphere
from .risk import diametrical_risk_sampled

# Sub-stream tags for seed derivation; fixed so traces are reproducible.
_STREAM_INIT = 0
_STREAM_BATCH = 1
_STREAM_PERTURB = 2
_STREAM_COIN = 3
_STREAM_EVAL = 4

TRACE_CSV_HEADER = (
    "iter,epoch,event,lr,batch_risk,perturbed_batch_risk,train_risk,test_acc,diam_risk_est"
)


@dataclass(frozen=True)
class EveryK:
    """Deterministic sampling schedule: draw fresh perturbations when t % k == 0."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class DrmConfig:
    """Hyperparameters for the DRM/ERM training loops.

    p is either a probability in [0, 1] (a coin decides whether the next
    iteration draws fresh perturbations) or EveryK(k) for the deterministic
    every-k-th-iteration schedule. lr_schedule is piecewise constant: a list
    of (until_iteration, rate) pairs, each rate applying to iterations below
    its bound; the schedule must cover [0, T].
    """

    gamma: float
    T: int
    batch_size: int
    lr_schedule: tuple[tuple[int, float], ...]
    r: int = 20
    q: int = 1
    p: Union[float, EveryK] = EveryK(5)
    norm_kind: NormKind = NormKind.LAYERWISE_FROBENIUS
    feasible: FeasibleSet = field(default_factory=Unbounded)
    seed: int = 0

    def validate(self) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if isinstance(self.p, EveryK):
            pass
        elif isinstance(self.p, (int, float)) and 0.0 <= float(self.p) <= 1.0:
            pass
        else:
            raise ValueError(f"p must be a probability in [0, 1] or EveryK, got {self.p!r}")
        schedule = tuple(self.lr_schedule)
        if not schedule:
            raise ValueError("lr_schedule must be nonempty")
        prev = 0
        for until, rate in schedule:
            if until <= prev:
                raise ValueError("lr_schedule bounds must be strictly increasing")
            if rate <= 0:
                raise ValueError("learning rates must be > 0")
            prev = until
        if prev < self.T:
            raise ValueError(f"lr_schedule covers [0, {prev}) but T = {self.T}")

    def lr_at(self, t: int) -> float:
        for until, rate in self.lr_schedule:
            if t < until:
                return rate
        raise ValueError(f"iteration {t} outside lr_schedule")


def constant_then_drop_schedule(T: int, lr: float = 0.01, final_lr: float = 0.001,
                                final_fraction: float = 1.0 / 6.0) -> tuple[tuple[int, float], ...]:
    """lr until the final fraction of training, then final_lr."""
    drop_at = max(1, int(round(T * (1.0 - final_fraction))))
    if drop_at >= T:
        return ((T, lr),)
    return ((drop_at, lr), (T, final_lr))


class PerturbQueue:
    """FIFO of past worst-case directions, capacity q (oldest evicted first)."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: list[ParamVector] = []

    @property
    def entries(self) -> tuple[ParamVector, ...]:
        return tuple(self._entries)

    def push(self, u: ParamVector) -> None:
        self._entries.append(u)
        if len(self._entries) > self.capacity:
            self._entries.pop(0)

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class IterationRecord:
    iter: int
    epoch: int
    event: bool  # sampling event under the configured schedule
    lr: float
    batch_risk: float
    perturbed_batch_risk: float


@dataclass
class EpochRecord:
    iter: int  # last iteration of the epoch
    epoch: int
    train_risk: float
    test_acc: Optional[float]
    diam_risk_est: float


@dataclass
class RunTrace:
    iterations: list[IterationRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)
    batch_digest: str = ""

    def rows(self) -> list[tuple]:
        """Merged per-iteration and per-epoch rows in chronological order."""
        out = []
        epoch_by_end = {e.iter: e for e in self.epochs}
        for rec in self.iterations:
            out.append(
                (
                    rec.iter,
                    rec.epoch,
                    "sample" if rec.event else "",
                    rec.lr,
                    rec.batch_risk,
                    rec.perturbed_batch_risk,
                    None,
                    None,
                    None,
                )
            )
            e = epoch_by_end.get(rec.iter)
            if e is not None:
                out.append(
                    (e.iter, e.epoch, "epoch", None, None, None, e.train_risk, e.test_acc, e.diam_risk_est)
                )
        return out

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(TRACE_CSV_HEADER + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        for row in self.rows():
            writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])
        return buf.getvalue()

    def save_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv_text())


def make_batch_indices(m: int, batch_size: int, epoch_seed) -> list[np.ndarray]:
    """Uniform shuffle of range(m) cut into consecutive chunks; the last short
    chunk is kept. Deterministic in epoch_seed."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng(epoch_seed).permutation(m)
    return [order[i : i + batch_size] for i in range(0, m, batch_size)]


def make_batches(data, batch_size: int, epoch_seed) -> list[list[Sample]]:
    samples = data.samples if hasattr(data, "samples") else data
    return [
        [samples[i] for i in idx]
        for idx in make_batch_indices(len(samples), batch_size, epoch_seed)
    ]


def select_worst(
    model: LossModel, w: ParamVector, batch: Sequence[Sample], candidates: Sequence[ParamVector]
) -> tuple[int, ParamVector, float]:
    """Candidate perturbation maximizing batch risk at w + u; ties go to the
    lowest index."""
    if len(candidates) == 0:
        raise ValueError("empty candidate set")
    best_index = -1
    best_value = -np.inf
    for i, u in enumerate(candidates):
        value = model.batch_risk(axpy(w, 1.0, u), batch)
        if value > best_value:
            best_index, best_value = i, value
    return best_index, candidates[best_index], best_value


def simple_sgd_drm_step(
    model: LossModel,
    w: ParamVector,
    batch: Sequence[Sample],
    cfg: DrmConfig,
    rng: np.random.Generator,
    t: int = 0,
) -> ParamVector:
    """One step of the simple algorithm: draw r directions of norm gamma,
    pick the worst on this batch, step from the perturbed point, project."""
    candidates = [sample_sphere(w, cfg.gamma, cfg.norm_kind, rng) for _ in range(cfg.r)]
    _, u_star, _ = select_worst(model, w, batch, candidates)
    _, grad = model.batch_grad(axpy(w, 1.0, u_star), batch)
    return project(axpy(w, -cfg.lr_at(t), grad), cfg.feasible)


def _next_event(p: Union[float, EveryK], t: int, rng_coin: np.random.Generator) -> bool:
    """Whether iteration t is a sampling event. t = 0 always is (the queue
    starts empty). The probabilistic coin is flipped for every t > 0 so the
    coin stream advances identically across algorithm variants."""
    if isinstance(p, EveryK):
        return t % p.k == 0
    flip = rng_coin.random() < float(p)
    return True if t == 0 else flip


def _run_loop(
    model: LossModel,
    data,
    test,
    cfg: DrmConfig,
    algorithm: str,
    w0: Optional[ParamVector],
    queue_probe: Optional[Callable[[int, PerturbQueue], None]] = None,
) -> tuple[ParamVector, RunTrace]:
    cfg.validate()
    if algorithm not in ("erm", "simple", "drm"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    samples = data.samples if hasattr(data, "samples") else list(data)
    if len(samples) == 0:
        raise ValueError("empty training data")
    test_samples = test.samples if hasattr(test, "samples") else (list(test) if test is not None else [])

    rng_perturb = np.random.default_rng([cfg.seed, _STREAM_PERTURB])
    rng_coin = np.random.default_rng([cfg.seed, _STREAM_COIN])
    if w0 is None:
        w0 = model.init_params(np.random.default_rng([cfg.seed, _STREAM_INIT]))
    w = project(w0, cfg.feasible)

    measure_acc = getattr(model, "accuracy", None)
    queue = PerturbQueue(cfg.q)
    trace = RunTrace()
    digest = hashlib.sha256()
    m = len(samples)
    t = 0
    epoch = 0
    while t < cfg.T:
        batch_index_lists = make_batch_indices(m, cfg.batch_size, [cfg.seed, _STREAM_BATCH, epoch])
        for idx in batch_index_lists:
            if t >= cfg.T:
                break
            digest.update(idx.astype(np.int64).tobytes())
            batch = [samples[i] for i in idx]
            lr = cfg.lr_at(t)
            event = _next_event(cfg.p, t, rng_coin) if algorithm != "simple" else True
            batch_risk = model.batch_risk(w, batch)

            if algorithm == "erm":
                perturbed_risk = batch_risk
                grad_point = w
            else:
                if event:
                    candidates = [
                        sample_sphere(w, cfg.gamma, cfg.norm_kind, rng_perturb)
                        for _ in range(cfg.r)
                    ]
                    _, u_star, u_risk = select_worst(model, w, batch, candidates)
                    if algorithm == "drm":
                        queue.push(u_star)
                if algorithm == "simple":
                    v_star, perturbed_risk = u_star, u_risk
                else:
                    _, v_star, perturbed_risk = select_worst(model, w, batch, queue.entries)
                grad_point = axpy(w, 1.0, v_star)
            if queue_probe is not None:
                queue_probe(t, queue)

            _, grad = model.batch_grad(grad_point, batch)
            w = project(axpy(w, -lr, grad), cfg.feasible)
            trace.iterations.append(
                IterationRecord(t, epoch, event, lr, batch_risk, perturbed_risk)
            )
            t += 1

        train_risk = model.batch_risk(w, samples)
        test_acc = measure_acc(w, test_samples) if (measure_acc and len(test_samples)) else None
        diam = diametrical_risk_sampled(
            model,
            w,
            cfg.gamma,
            cfg.norm_kind,
            cfg.r,
            samples,
            rng=np.random.default_rng([cfg.seed, _STREAM_EVAL, epoch]),
        )
        trace.epochs.append(EpochRecord(t - 1, epoch, train_risk, test_acc, diam.value))
        epoch += 1

    trace.batch_digest = digest.hexdigest()
    return w, trace


def sgd_erm_run(model, data, test, cfg: DrmConfig, w0=None) -> tuple[ParamVector, RunTrace]:
    """Plain SGD on the empirical risk; the gradient is taken at w itself."""
    return _run_loop(model, data, test, cfg, "erm", w0)


def simple_sgd_drm_run(model, data, test, cfg: DrmConfig, w0=None) -> tuple[ParamVector, RunTrace]:
    """Simple DRM loop: fresh perturbations every iteration, no reuse queue."""
    return _run_loop(model, data, test, cfg, "simple", w0)


def sgd_drm_run(
    model, data, test, cfg: DrmConfig, w0=None, queue_probe=None
) -> tuple[ParamVector, RunTrace]:
    """Queued DRM loop: sampling events per cfg.p, reuse queue of capacity q."""
    return _run_loop(model, data, test, cfg, "drm", w0, queue_probe)
