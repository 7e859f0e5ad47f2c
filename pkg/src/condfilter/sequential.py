"""Sequential conditional pre-training over a queue of target tasks.

One model is chained through the tasks: for each task the source is
filtered against that task's target, and the model continues training on
the filtered subset from where the previous task left it, under a shrinking
epoch budget.
"""

from __future__ import annotations

import hashlib
import json
import logging
import pickle
import queue
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol

import numpy as np

from .cluster_filter import ClusterFilterSpec, filter_cluster
from .data import METHODS, EmbeddingSet, ScoredSelection, load_embeddings, load_labels, with_labels, write_selection
from .domain_filter import DomainTrainConfig, filter_domain
from .entropy_filter import filter_entropy

log = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (100, 40, 20)
INDEPENDENT_EPOCHS = 100


def default_epoch_schedule(n_tasks):
    """``[100, 40, 20]`` then 20 for every further task."""
    return [DEFAULT_SCHEDULE[min(i, len(DEFAULT_SCHEDULE) - 1)] for i in range(n_tasks)]


@dataclass(frozen=True)
class TaskDescriptor:
    task_id: str
    target_path: str
    arrival_index: int
    filter_method: str
    budget: int
    epochs: int
    target_labels_path: Optional[str] = None

    def __post_init__(self):
        if self.filter_method not in METHODS:
            raise ValueError(f"unknown filter_method {self.filter_method!r}")
        if self.budget < 1 or self.epochs < 1:
            raise ValueError("budget and epochs must be positive")
        if self.arrival_index < 0:
            raise ValueError("arrival_index must be nonnegative")


def validate_plan(plan):
    if not plan:
        raise ValueError("plan must contain at least one task")
    arrivals = [t.arrival_index for t in plan]
    if any(b <= a for a, b in zip(arrivals, arrivals[1:])):
        raise ValueError("arrival_index must be strictly increasing across the plan")
    ids = [t.task_id for t in plan]
    if len(set(ids)) != len(ids):
        raise ValueError("task ids must be unique")


def load_plan(path):
    doc = json.loads(Path(path).read_text())
    tasks = doc["tasks"] if isinstance(doc, dict) else doc
    base = Path(path).parent
    plan = []
    for t in tasks:
        t = dict(t)
        for key in ("target_path", "target_labels_path"):
            if t.get(key) and not Path(t[key]).is_absolute():
                t[key] = str(base / t[key])
        plan.append(TaskDescriptor(**t))
    validate_plan(plan)
    return plan


def save_plan(plan, path):
    Path(path).write_text(json.dumps({"tasks": [asdict(t) for t in plan]}, indent=2) + "\n")


# -- trainers ----------------------------------------------------------------


class Trainer(Protocol):
    def init(self): ...

    def train(self, state, subset: EmbeddingSet, epochs: int): ...

    def evaluate(self, state, target: EmbeddingSet) -> float: ...


class MockTrainer:
    """Records every call; the model payload is the number of train calls so far."""

    def __init__(self):
        self.calls = []

    def init(self):
        self.calls.append(("init",))
        return 0

    def train(self, state, subset, epochs):
        self.calls.append(("train", state, subset.count, epochs))
        return state + 1

    def evaluate(self, state, target):
        self.calls.append(("evaluate", state, target.count))
        return float(state)


class PrototypeTrainer:
    """Nearest-centroid stand-in for pre-training.

    The model is one prototype per source label. Training moves each
    prototype toward the mean of that label's rows in the subset; after
    ``epochs`` passes it has covered ``1 - (1 - rate)**epochs`` of the gap, so
    short budgets leave part of the previous task's state in place.
    ``evaluate`` is nearest-prototype accuracy on the labeled target, or the
    negative mean distance to the nearest prototype when the target is
    unlabeled.
    """

    def __init__(self, rate=0.1):
        self.rate = rate

    def init(self):
        return {}

    def train(self, state, subset, epochs):
        labels = subset.labels if subset.labels is not None else np.zeros(subset.count, dtype=np.int32)
        X = subset.data.astype(np.float64)
        step = 1.0 - (1.0 - self.rate) ** epochs
        new = {k: v.copy() for k, v in state.items()}
        for c in np.unique(labels):
            m = X[labels == c].mean(axis=0)
            c = int(c)
            new[c] = m if c not in new else new[c] + step * (m - new[c])
        return new

    def evaluate(self, state, target):
        if not state:
            return 0.0
        keys = sorted(state)
        P = np.array([state[k] for k in keys])
        X = target.data.astype(np.float64)
        d2 = ((X[:, None, :] - P[None, :, :]) ** 2).sum(axis=2)
        if target.labels is None:
            return float(-np.sqrt(d2.min(axis=1)).mean())
        pred = np.asarray(keys)[np.argmin(d2, axis=1)]
        return float(np.mean(pred == target.labels))


# -- scheduler ---------------------------------------------------------------


@dataclass
class TrainerState:
    payload: object
    cumulative_epochs: int = 0
    history: list = field(default_factory=list)

    def digest(self):
        try:
            blob = pickle.dumps(self.payload, protocol=4)
        except Exception:
            blob = repr(self.payload).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class TaskResult:
    task_id: str
    epochs: int
    metric: Optional[float] = None
    subset_digest: Optional[str] = None
    source_digest: Optional[str] = None
    selected_count: int = 0
    error: Optional[str] = None
    selection: Optional[ScoredSelection] = field(default=None, repr=False)


@dataclass
class SequentialResult:
    tasks: list
    state: TrainerState

    @property
    def total_epochs(self):
        return self.state.cumulative_epochs


class SequentialAbort(RuntimeError):
    """Trainer failure; ``partial`` holds the results completed so far."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def run_filter(method, source, target, budget, seed=0, k=200, agg_p=2, domain_cfg=None, threads=None):
    """Dispatch to the filter named by ``method``."""
    if method in ("cluster_avg", "cluster_min"):
        spec = ClusterFilterSpec(budget, method.split("_")[1], agg_p, seed)
        return filter_cluster(source, target, spec, k=min(k, target.count), threads=threads)
    if method == "domain":
        cfg = domain_cfg or DomainTrainConfig(seed=seed)
        return filter_domain(source, target, cfg, budget, threads)
    if method in ("entropy_active", "entropy_inverse"):
        cfg = domain_cfg or DomainTrainConfig(seed=seed)
        return filter_entropy(source, target, cfg, budget, method.split("_")[1], threads=threads)
    if method == "random":
        scores = np.random.default_rng(seed).random(source.count)
        return ScoredSelection.from_scores(scores, budget, "random", seed, "ascending")
    raise ValueError(f"unknown filter method {method!r}")


def _load_target(task):
    target = load_embeddings(task.target_path)
    if task.target_labels_path:
        target = with_labels(target, load_labels(task.target_labels_path))
    return target


class SequentialPretrainer:
    """Single consumer over a blocking task queue.

    Producers call :meth:`submit` (from any thread) and :meth:`close` when no
    more tasks will arrive; :meth:`serve` processes tasks strictly in the
    order they were enqueued, one at a time.

    ``source`` is either an :class:`EmbeddingSet` or a zero-argument callable
    that returns the current source, which is re-read for every task.
    ``targets`` optionally maps task ids to in-memory target sets; tasks not
    in it are loaded from their ``target_path``.
    """

    _CLOSE = object()

    def __init__(self, source, trainer, targets=None, seed=0, out_dir=None, maxsize=0,
                 filter_fn: Optional[Callable] = None, threads=None):
        self.source = source
        self.trainer = trainer
        self.targets = dict(targets or {})
        self.seed = seed
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.filter_fn = filter_fn or run_filter
        self.threads = threads
        self._queue = queue.Queue(maxsize)
        self._last_arrival = -1

    def submit(self, task):
        self._queue.put(task)

    def close(self):
        self._queue.put(self._CLOSE)

    def _source(self):
        return self.source() if callable(self.source) else self.source

    def _persist(self, result, state):
        if self.out_dir is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        stem = self.out_dir / result.task_id
        if result.selection is not None:
            write_selection(result.selection, f"{stem}.sel.txt", f"{stem}.report.json",
                            input_digests=[result.source_digest])
        doc = {k: v for k, v in asdict(result).items() if k != "selection"}
        doc["state_digest"] = state.digest()
        doc["cumulative_epochs"] = state.cumulative_epochs
        Path(f"{stem}.task.json").write_text(json.dumps(doc, indent=2) + "\n")

    def serve(self, state=None):
        state = state or TrainerState(self.trainer.init())
        results = []
        while True:
            task = self._queue.get()
            if task is self._CLOSE:
                break
            if task.arrival_index <= self._last_arrival:
                raise ValueError(f"task {task.task_id} arrived out of order")
            self._last_arrival = task.arrival_index
            result, state = self._run_task(task, state, results)
            results.append(result)
            self._persist(result, state)
        return SequentialResult(results, state)

    def _run_task(self, task, state, done):
        source = self._source()
        result = TaskResult(task.task_id, task.epochs, source_digest=source.digest())
        try:
            target = self.targets[task.task_id] if task.task_id in self.targets else _load_target(task)
            seed = self.seed + task.arrival_index
            sel = self.filter_fn(task.filter_method, source, target, task.budget, seed, threads=self.threads)
        except Exception as exc:
            log.warning("task %s: filtering failed, skipping: %s", task.task_id, exc)
            result.epochs = 0
            result.error = f"filter: {exc}"
            return result, state
        result.selection = sel
        result.subset_digest = sel.digest()
        result.selected_count = int(sel.selected.shape[0])
        try:
            payload = self.trainer.train(state.payload, source.subset(sel.selected), task.epochs)
            state = TrainerState(
                payload,
                state.cumulative_epochs + task.epochs,
                state.history + [(task.task_id, task.epochs, result.subset_digest)],
            )
            result.metric = self.trainer.evaluate(state.payload, target)
        except Exception as exc:
            result.error = f"trainer: {exc}"
            self._persist(result, state)
            raise SequentialAbort(f"task {task.task_id}: trainer failed: {exc}", done + [result]) from exc
        log.info("task %s: %d epochs, metric=%s", task.task_id, task.epochs, result.metric)
        return result, state


def run_sequential(plan, source, trainer, targets=None, seed=0, out_dir=None, filter_fn=None, threads=None):
    """Process ``plan`` in arrival order, chaining one model through every task."""
    validate_plan(plan)
    runner = SequentialPretrainer(source, trainer, targets, seed, out_dir, filter_fn=filter_fn, threads=threads)
    for task in plan:
        runner.submit(task)
    runner.close()
    return runner.serve()


@dataclass
class ComparisonReport:
    sequential_total_epochs: int
    independent_total_epochs: int
    per_task: list

    def to_dict(self):
        return asdict(self)


def compare_independent(plan, source, trainer, targets=None, seed=0, default_epochs=INDEPENDENT_EPOCHS,
                        filter_fn=None, threads=None):
    """Sequential plan versus restarting from ``init()`` for every task."""
    validate_plan(plan)
    seq = run_sequential(plan, source, trainer, targets, seed, filter_fn=filter_fn, threads=threads)
    independent_total = 0
    rows = []
    for task, seq_result in zip(plan, seq.tasks):
        solo = run_sequential([_with_epochs(task, default_epochs)], source, trainer, targets, seed,
                              filter_fn=filter_fn, threads=threads)
        independent_total += solo.total_epochs
        rows.append({
            "task_id": task.task_id,
            "sequential_epochs": seq_result.epochs,
            "independent_epochs": solo.tasks[0].epochs,
            "sequential_metric": seq_result.metric,
            "independent_metric": solo.tasks[0].metric,
        })
    return ComparisonReport(seq.total_epochs, independent_total, rows)


def _with_epochs(task, epochs):
    d = asdict(task)
    d["epochs"] = epochs
    return TaskDescriptor(**d)
