"""Evaluation harness: experiments, significance, learning curves, reports.

Every random choice in an experiment flows from one 64-bit base seed. Stage
seeds derive as the first 8 little-endian bytes of blake2b("<base>:<stage>"),
so adding a stage never disturbs the draws of another.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .autoencoder import AEHyper
from .convnet import PipelineConfig, PipelineModel, pretrain
from .dataset import ConfigError, VTDataset
from .decode import (DesignMatrix, cnn_features, hrf_mvpa_features, knn_classify,
                     raw_mvpa_features, t_mvpa_features)

METHODS = ("raw", "hrf", "tmvpa", "cnn1", "cnn2")

_CSV_HEADER = "method,depth,delta1,delta2,dim,accuracy,p_value,seed"


def stage_seed(base_seed: int, stage: str) -> int:
    digest = hashlib.blake2b(f"{base_seed}:{stage}".encode("ascii"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def accuracy(predictions: np.ndarray, truth: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape or predictions.size == 0:
        raise ConfigError("predictions and truth must be non-empty and aligned")
    return float(np.mean(predictions == truth))


def binomial_pvalue(n_correct: int, n_trials: int, chance: float) -> float:
    """Exact upper-tail P(X >= n_correct) for X ~ Binomial(n_trials, chance).

    Terms are built in log space from exact integer binomial coefficients and
    summed with compensated addition; no normal approximation anywhere.
    """
    if n_trials < 1 or not 0 <= n_correct <= n_trials:
        raise ConfigError("need 0 <= n_correct <= n_trials with n_trials >= 1")
    if not 0.0 < chance < 1.0:
        raise ConfigError("chance must lie in (0, 1)")
    if n_correct == 0:
        return 1.0
    log_p = math.log(chance)
    log_q = math.log1p(-chance)
    terms = []
    for successes in range(n_correct, n_trials + 1):
        log_term = (math.log(float(math.comb(n_trials, successes)))
                    + successes * log_p + (n_trials - successes) * log_q)
        terms.append(math.exp(log_term))
    return min(1.0, math.fsum(terms))


@dataclass
class EvalReport:
    """Decoding outcome for one method on one dataset."""

    method: str
    depth: int | None
    delta1: int | None
    delta2: int | None
    feature_dim: int
    accuracy: float
    p_value: float
    confusion: np.ndarray
    classes: list[int]
    seed: int

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        self.confusion = np.asarray(self.confusion, dtype=np.int64)
        c = len(self.classes)
        if self.confusion.shape != (c, c):
            raise ConfigError("confusion must be square over the class list")
        total = int(self.confusion.sum())
        if total > 0:
            trace_ratio = float(np.trace(self.confusion)) / total
            if abs(trace_ratio - self.accuracy) > 1e-12:
                raise ConfigError("accuracy must equal the confusion trace ratio")
        if not 0.0 <= self.accuracy <= 1.0 or not 0.0 <= self.p_value <= 1.0:
            raise ConfigError("accuracy and p_value must lie in [0, 1]")


@dataclass
class LearningCurve:
    """(train_size, train_error, test_error) triples at growing train sizes."""

    points: list[tuple[int, float, float]]
    step: int

    def __post_init__(self):
        if not self.points:
            raise ConfigError("learning curve is empty")
        prev = 0
        for size, train_err, test_err in self.points:
            if size <= prev:
                raise ConfigError("train sizes must increase")
            if size - prev > self.step:
                raise ConfigError("train sizes may grow by at most the step")
            for err in (train_err, test_err):
                if not (math.isfinite(err) and 0.0 <= err <= 1.0):
                    raise ConfigError("errors must be finite within [0, 1]")
            prev = size


def _confusion(classes: list[int], truth: np.ndarray, predictions: np.ndarray) -> np.ndarray:
    index = {cls: i for i, cls in enumerate(classes)}
    out = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth, predictions):
        out[index[int(t)], index[int(p)]] += 1
    return out


def learning_curve(pool: DesignMatrix, step: int = 20, k: int = 1,
                   metric: str = "euclidean", seed: int = 0) -> LearningCurve:
    """Hold out a fixed seeded 25% of the pool, grow training in step sizes.

    The holdout is floor(pool / 4) rows drawn uniformly; the remainder joins
    the training set in a seeded uniform order, step rows at a time, with one
    final partial step when the remainder is not a multiple of the step.
    """
    if step < 1:
        raise ConfigError("step must be at least 1")
    if len(pool) < 2 * step:
        raise ConfigError(f"pool must hold at least {2 * step} rows")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(pool))
    n_test = len(pool) // 4
    if n_test == 0:
        raise ConfigError("pool too small to hold out a test quarter")
    test = pool.subset(perm[:n_test])
    remainder = perm[n_test:]

    sizes = [step * (i + 1) for i in range(len(remainder) // step)]
    if len(remainder) % step:
        sizes.append(len(remainder))

    points = []
    for size in sizes:
        train = pool.subset(remainder[:size])
        train_err = 1.0 - accuracy(knn_classify(train, train, k, metric), train.labels)
        test_err = 1.0 - accuracy(knn_classify(train, test, k, metric), test.labels)
        points.append((size, train_err, test_err))
    return LearningCurve(points, step)


def run_experiment(d: VTDataset, method: str, *, delta1: int | None = None,
                   delta2: int | None = None, tau1: int = 6, tau2: int = 9,
                   k1: int = 16, k2: int = 4, rho: float = 0.03, beta: float = 1.0,
                   lam: float = 1e-4, num_windows: int = 10000, max_iters: int = 400,
                   step_size: float = 0.1, knn_k: int = 1, metric: str = "euclidean",
                   tmvpa_window: int = 6, seed: int = 0,
                   model: PipelineModel | None = None) -> EvalReport:
    """Decode retrieve-phase labels from encode-phase exemplars with one method.

    Methods: raw (voxel column), hrf (kernel-correlated column), tmvpa
    (concatenated window), cnn1/cnn2 (learned representation at depth 1/2).
    The cnn methods pretrain a pipeline unless a model is supplied.
    """
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")

    depth: int | None = None
    if method == "raw":
        design = raw_mvpa_features(d)
    elif method == "hrf":
        design = hrf_mvpa_features(d)
    elif method == "tmvpa":
        design = t_mvpa_features(d, tmvpa_window)
    else:
        depth = 1 if method == "cnn1" else 2
        if model is None:
            if delta1 is None or delta2 is None:
                raise ConfigError("cnn methods need delta1 and delta2 (or a model)")
            train_seed = stage_seed(seed, "pretrain")
            config = PipelineConfig(
                delta1=delta1, delta2=delta2,
                layer1_hyper=AEHyper(k=k1, rho=rho, beta=beta, lam=lam,
                                     max_iters=max_iters, step_size=step_size, seed=train_seed),
                layer2_hyper=AEHyper(k=k2, rho=rho, beta=beta, lam=lam,
                                     max_iters=max_iters, step_size=step_size, seed=train_seed),
                tau1=tau1, tau2=tau2, num_windows=num_windows,
            )
            model = pretrain(d, config)
        design = cnn_features(d, model, depth)
        delta1 = model.config.delta1
        delta2 = model.config.delta2 if depth == 2 else None

    train, test = design.phase_split()
    if len(train) == 0 or len(test) == 0:
        raise ConfigError("both phases need labeled columns")
    predictions = knn_classify(train, test, knn_k, metric)
    acc = accuracy(predictions, test.labels)
    n_correct = int(np.sum(predictions == test.labels))
    classes = d.class_ids()
    chance = 1.0 / len(classes)
    p_value = binomial_pvalue(n_correct, len(test), chance)
    confusion = _confusion(classes, test.labels, predictions)

    return EvalReport(
        method=method, depth=depth,
        delta1=delta1 if method.startswith("cnn") else None,
        delta2=delta2 if method == "cnn2" else None,
        feature_dim=design.feature_dim, accuracy=acc, p_value=p_value,
        confusion=confusion, classes=classes, seed=seed,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def report_csv(reports: list[EvalReport]) -> str:
    lines = [_CSV_HEADER]
    for r in reports:
        lines.append(",".join([
            r.method, _fmt(r.depth), _fmt(r.delta1), _fmt(r.delta2),
            _fmt(r.feature_dim), _fmt(r.accuracy), _fmt(r.p_value), _fmt(r.seed),
        ]))
    return "\n".join(lines) + "\n"


def report_json(reports: list[EvalReport]) -> str:
    payload = []
    for r in reports:
        payload.append({
            "method": r.method,
            "depth": r.depth,
            "delta1": r.delta1,
            "delta2": r.delta2,
            "dim": r.feature_dim,
            "accuracy": r.accuracy,
            "p_value": r.p_value,
            "seed": r.seed,
            "classes": r.classes,
            "confusion": r.confusion.tolist(),
        })
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def curve_csv(curve: LearningCurve) -> str:
    lines = ["train_size,train_error,test_error"]
    for size, train_err, test_err in curve.points:
        lines.append(f"{size},{_fmt(train_err)},{_fmt(test_err)}")
    return "\n".join(lines) + "\n"


def curve_svg(curve: LearningCurve, width: int = 640, height: int = 400) -> str:
    """Minimal standalone plot: one polyline per error series, labeled."""
    pad = 50.0
    sizes = [p[0] for p in curve.points]
    lo, hi = min(sizes), max(sizes)
    span = float(hi - lo) if hi > lo else 1.0

    def x(size):
        return pad + (width - 2 * pad) * (size - lo) / span

    def y(err):
        return height - pad - (height - 2 * pad) * err

    def poly(idx):
        return " ".join(f"{x(p[0]):.2f},{y(p[idx]):.2f}" for p in curve.points)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{poly(1)}"/>',
        f'<polyline fill="none" stroke="#d62728" stroke-width="2" points="{poly(2)}"/>',
        f'<text x="{width - pad}" y="{pad}" fill="#1f77b4" text-anchor="end">train error</text>',
        f'<text x="{width - pad}" y="{pad + 18}" fill="#d62728" text-anchor="end">test error</text>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">training set size</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def save_design_csv(design: DesignMatrix, path) -> None:
    header = "label,phase," + ",".join(f"f{i}" for i in range(design.feature_dim))
    lines = [header]
    for row, label, phase in zip(design.features, design.labels, design.phases):
        lines.append(f"{int(label)},{phase}," + ",".join(format(v, ".17g") for v in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_report(reports: list[EvalReport], fmt: str = "csv", out_path=None,
                curve: LearningCurve | None = None, plot_path=None) -> str:
    """Render reports as CSV or JSON, optionally writing an SVG curve plot."""
    if fmt not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    rendered = report_csv(reports) if fmt == "csv" else report_json(reports)
    if out_path is not None:
        with open(out_path, "w", encoding="ascii") as fh:
            fh.write(rendered)
    if plot_path is not None:
        if curve is None:
            raise ConfigError("plotting needs a learning curve")
        with open(plot_path, "w", encoding="ascii") as fh:
            fh.write(curve_svg(curve))
    return rendered
