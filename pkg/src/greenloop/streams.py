"""Task streams: arrival-ordered tasks with labeled eval splits and
unlabeled pools, plus a simulation oracle and synthetic generators.

On-disk layout is a directory per stream: ``manifest.csv`` with columns
``task_id,arrival_slot,pool_file,eval_file,seed_file`` (seed_file may be
empty), and one CSV per split with header ``x0,...,x{d-1},label``. Pool
labels are the oracle's ground truth; scoring never reads them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import RejectedInputError
from .learner import Batch
from .samples import PROV_HUMAN, PROV_SEED, LabeledSample, UnlabeledSample


@dataclass(frozen=True)
class Task:
    task_id: int
    arrival_slot: int
    pool: tuple[UnlabeledSample, ...]
    eval_batch: Batch
    seed_batch: Batch | None = None

    def __post_init__(self):
        pool_ids = {s.sample_id for s in self.pool}
        eval_ids = {s.sample_id for s in self.eval_batch.samples}
        if pool_ids & eval_ids:
            raise RejectedInputError(f"task {self.task_id}: pool overlaps eval split")
        if self.arrival_slot < 0:
            raise RejectedInputError("arrival slot must be >= 0")
        d = self.eval_batch.d_in
        if any(s.features.shape[0] != d for s in self.pool):
            raise RejectedInputError(f"task {self.task_id}: pool dimension differs from eval split")


@dataclass(frozen=True)
class TaskStream:
    tasks: tuple[Task, ...]

    def __post_init__(self):
        tasks = tuple(self.tasks)
        for a, b in zip(tasks, tasks[1:]):
            if b.arrival_slot < a.arrival_slot:
                raise RejectedInputError("arrival slots must be nondecreasing")
        if len({t.eval_batch.d_in for t in tasks}) > 1:
            raise RejectedInputError("all tasks must share feature dimension")
        object.__setattr__(self, "tasks", tasks)

    def __len__(self) -> int:
        return len(self.tasks)

    @property
    def d_in(self) -> int:
        return self.tasks[0].eval_batch.d_in

    @property
    def n_classes(self) -> int:
        labels = set()
        for t in self.tasks:
            labels.update(int(v) for v in t.eval_batch.y)
        return max(labels) + 1


class Oracle:
    """Ground-truth labeler with a label-noise rate.

    With probability eta the true label is replaced by a uniformly random
    other class. Deterministic per (seed, sample_id) so replays and
    out-of-order queries agree.
    """

    def __init__(self, n_classes: int, noise_eta: float = 0.0, seed: int = 0):
        if not (0.0 <= noise_eta < 1.0):
            raise RejectedInputError("noise rate must be in [0, 1)")
        self.n_classes = n_classes
        self.noise_eta = noise_eta
        self.seed = seed

    def label(self, sample: UnlabeledSample) -> int:
        if sample.true_label is None:
            raise RejectedInputError(f"sample {sample.sample_id} has no ground truth for the oracle")
        rng = np.random.default_rng((self.seed, sample.sample_id))
        if self.noise_eta > 0.0 and rng.random() < self.noise_eta:
            shift = int(rng.integers(1, self.n_classes))
            return (sample.true_label + shift) % self.n_classes
        return sample.true_label


def _gaussian_blobs(n: int, centers: np.ndarray, scales: Sequence[float],
                    class_weights: Sequence[float], rng: np.random.Generator):
    """Sample n points from a mixture of per-class isotropic Gaussians."""
    weights = np.asarray(class_weights, dtype=float)
    weights = weights / weights.sum()
    labels = rng.choice(len(weights), size=n, p=weights)
    d = centers.shape[1]
    X = centers[labels] + rng.normal(size=(n, d)) * np.asarray(scales)[labels][:, None]
    return X, labels


def make_gaussian_task(task_id: int, arrival_slot: int, *,
                       centers: Sequence[Sequence[float]],
                       scales: Sequence[float] | float = 1.0,
                       class_weights: Sequence[float] | None = None,
                       pool_size: int = 200, eval_size: int = 100,
                       n_seed_labels: int = 0, seed: int = 0,
                       id_offset: int = 0) -> Task:
    """One classification task from class-conditional Gaussian blobs."""
    centers_arr = np.asarray(centers, dtype=float)
    k = centers_arr.shape[0]
    if isinstance(scales, (int, float)):
        scales = [float(scales)] * k
    if class_weights is None:
        class_weights = [1.0] * k
    rng = np.random.default_rng(seed)
    Xp, yp = _gaussian_blobs(pool_size, centers_arr, scales, class_weights, rng)
    Xe, ye = _gaussian_blobs(eval_size, centers_arr, scales, class_weights, rng)
    pool = tuple(
        UnlabeledSample(sample_id=id_offset + i, features=Xp[i], true_label=int(yp[i]))
        for i in range(pool_size)
    )
    eval_batch = Batch(
        samples=tuple(
            LabeledSample(sample_id=id_offset + pool_size + i, features=Xe[i],
                          label=int(ye[i]), provenance=PROV_HUMAN)
            for i in range(eval_size)
        ),
        task_id=task_id,
    )
    seed_batch = None
    if n_seed_labels > 0:
        Xs, ys = _gaussian_blobs(n_seed_labels, centers_arr, scales, class_weights, rng)
        seed_batch = Batch(
            samples=tuple(
                LabeledSample(sample_id=id_offset + pool_size + eval_size + i,
                              features=Xs[i], label=int(ys[i]), provenance=PROV_SEED)
                for i in range(n_seed_labels)
            ),
            task_id=task_id,
        )
    return Task(task_id=task_id, arrival_slot=arrival_slot, pool=pool,
                eval_batch=eval_batch, seed_batch=seed_batch)


def make_gaussian_stream(n_tasks: int, *, centers_per_task: Sequence[Sequence[Sequence[float]]] | None = None,
                         pool_size: int = 200, eval_size: int = 100,
                         n_seed_labels: int = 4, seed: int = 0,
                         arrival_stride: int = 1, scales: float = 1.0,
                         class_weights: Sequence[float] | None = None) -> TaskStream:
    """Stream of Gaussian-blob tasks; default geometry is two mirrored blobs."""
    tasks = []
    span = pool_size + eval_size + n_seed_labels + 10
    for i in range(n_tasks):
        centers = (centers_per_task[i] if centers_per_task is not None
                   else [[-2.0, 0.0], [2.0, 0.0]])
        tasks.append(make_gaussian_task(
            task_id=i, arrival_slot=i * arrival_stride, centers=centers,
            scales=scales, class_weights=class_weights, pool_size=pool_size,
            eval_size=eval_size, n_seed_labels=n_seed_labels,
            seed=seed * 7919 + i, id_offset=i * span,
        ))
    return TaskStream(tasks=tuple(tasks))


MANIFEST_NAME = "manifest.csv"
MANIFEST_HEADER = ["task_id", "arrival_slot", "pool_file", "eval_file", "seed_file"]


def _write_split_csv(path: Path, ids: Sequence[int], X: np.ndarray, y: Sequence[int]) -> None:
    d = X.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", *[f"x{i}" for i in range(d)], "label"])
        for sid, row, label in zip(ids, X, y):
            writer.writerow([sid, *[repr(float(v)) for v in row], int(label)])


def _read_split_csv(path: Path):
    ids, rows, labels = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "sample_id" or header[-1] != "label":
            raise RejectedInputError(f"{path}: expected header sample_id,x0..,label")
        d = len(header) - 2
        for row in reader:
            if not row:
                continue
            ids.append(int(row[0]))
            rows.append([float(v) for v in row[1 : 1 + d]])
            labels.append(int(row[-1]))
    return ids, np.asarray(rows, dtype=float), labels


def write_stream_dir(stream: TaskStream, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / MANIFEST_NAME, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for task in stream.tasks:
            pool_file = f"task{task.task_id}_pool.csv"
            eval_file = f"task{task.task_id}_eval.csv"
            seed_file = f"task{task.task_id}_seed.csv" if task.seed_batch else ""
            _write_split_csv(directory / pool_file,
                             [s.sample_id for s in task.pool],
                             np.stack([s.features for s in task.pool]),
                             [s.true_label if s.true_label is not None else -1 for s in task.pool])
            _write_split_csv(directory / eval_file,
                             [s.sample_id for s in task.eval_batch.samples],
                             task.eval_batch.X, task.eval_batch.y)
            if task.seed_batch:
                _write_split_csv(directory / seed_file,
                                 [s.sample_id for s in task.seed_batch.samples],
                                 task.seed_batch.X, task.seed_batch.y)
            writer.writerow([task.task_id, task.arrival_slot, pool_file, eval_file, seed_file])


def load_stream_dir(directory: str | Path) -> TaskStream:
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.exists():
        raise RejectedInputError(f"stream manifest not found: {manifest}")
    tasks = []
    with open(manifest, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise RejectedInputError(f"{manifest}: expected header {','.join(MANIFEST_HEADER)}")
        for row in reader:
            if not row:
                continue
            task_id, arrival = int(row[0]), int(row[1])
            pool_ids, pool_X, pool_y = _read_split_csv(directory / row[2])
            eval_ids, eval_X, eval_y = _read_split_csv(directory / row[3])
            pool = tuple(
                UnlabeledSample(sample_id=sid, features=pool_X[i],
                                true_label=None if pool_y[i] < 0 else pool_y[i])
                for i, sid in enumerate(pool_ids)
            )
            eval_batch = Batch(
                samples=tuple(
                    LabeledSample(sample_id=sid, features=eval_X[i], label=eval_y[i],
                                  provenance=PROV_HUMAN)
                    for i, sid in enumerate(eval_ids)
                ),
                task_id=task_id,
            )
            seed_batch = None
            if len(row) > 4 and row[4]:
                seed_ids, seed_X, seed_y = _read_split_csv(directory / row[4])
                seed_batch = Batch(
                    samples=tuple(
                        LabeledSample(sample_id=sid, features=seed_X[i], label=seed_y[i],
                                      provenance=PROV_SEED)
                        for i, sid in enumerate(seed_ids)
                    ),
                    task_id=task_id,
                )
            tasks.append(Task(task_id=task_id, arrival_slot=arrival, pool=pool,
                              eval_batch=eval_batch, seed_batch=seed_batch))
    return TaskStream(tasks=tuple(tasks))


def _demo() -> None:
    import argparse

    parser = argparse.ArgumentParser(description="write a small demo stream directory")
    parser.add_argument("out", help="output directory")
    parser.add_argument("--tasks", type=int, default=2)
    parser.add_argument("--pool", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    stream = make_gaussian_stream(args.tasks, pool_size=args.pool, seed=args.seed)
    write_stream_dir(stream, args.out)
    print(f"wrote {args.tasks} task(s) to {args.out}")


if __name__ == "__main__":
    _demo()
