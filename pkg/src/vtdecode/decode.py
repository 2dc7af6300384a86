"""Design matrices for decoding, the response kernel, and a kNN classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .convnet import PipelineModel, temporal_convolve, transform
from .dataset import ConfigError, VTDataset

# canonical double-gamma response: rise peaking at 6 s, undershoot at 16 s
_PEAK_SECONDS = 6.0
_P1 = 6.0
_P2 = 16.0
_B1 = 1.0
_B2 = 1.0
_UNDERSHOOT_RATIO = 1.0 / 6.0

METRICS = ("euclidean", "cosine")


@dataclass(frozen=True)
class HRFKernel:
    """Sampled hemodynamic response, peak-normalized to 1."""

    taps: np.ndarray
    tr_seconds: float

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        object.__setattr__(self, "taps", taps)
        if taps.ndim != 1 or taps.shape[0] < 2:
            raise ConfigError("kernel needs at least two taps")
        if not np.all(np.isfinite(taps)) or taps.max() != 1.0:
            raise ConfigError("kernel taps must be finite with peak 1")

    @property
    def span(self) -> int:
        return self.taps.shape[0]


def hrf_kernel(tr_seconds: float, span: int = 6) -> HRFKernel:
    """Sample the double-gamma response at t = tr * (s + 1), s = 0..span-1.

    h(t) = (t/a1)^p1 exp(-(t-a1)/b1) - c (t/a2)^p2 exp(-(t-a2)/b2) with
    p1=6, p2=16, b1=b2=1, a1=6, a2=16, c=1/6, then divided by its peak tap.
    The sampled span must reach the 6 s response peak.
    """
    if tr_seconds <= 0:
        raise ConfigError("tr_seconds must be positive")
    if span < 2:
        raise ConfigError("span must be at least 2")
    if span * tr_seconds < _PEAK_SECONDS:
        raise ConfigError(
            f"span of {span} samples at tr={tr_seconds} s ends before the {_PEAK_SECONDS} s peak"
        )
    a1 = _P1 * _B1
    a2 = _P2 * _B2
    t = tr_seconds * (np.arange(span, dtype=np.float64) + 1.0)
    h = (t / a1) ** _P1 * np.exp(-(t - a1) / _B1) \
        - _UNDERSHOOT_RATIO * (t / a2) ** _P2 * np.exp(-(t - a2) / _B2)
    return HRFKernel(h / h.max(), float(tr_seconds))


@dataclass
class DesignMatrix:
    """Feature rows aligned with label metadata, one row per labeled column."""

    features: np.ndarray
    labels: np.ndarray
    phases: list[str]
    feature_dim: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ConfigError("features must be 2-d")
        rows = self.features.shape[0]
        if self.labels.shape != (rows,) or len(self.phases) != rows:
            raise ConfigError("labels and phases must align with feature rows")
        if self.features.shape[1] != self.feature_dim:
            raise ConfigError("feature_dim does not match the feature columns")

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, mask: np.ndarray) -> "DesignMatrix":
        """Select rows by boolean mask or by index array."""
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        return DesignMatrix(self.features[idx], self.labels[idx],
                            [self.phases[i] for i in idx], self.feature_dim)

    def phase_split(self) -> tuple["DesignMatrix", "DesignMatrix"]:
        """Encode-phase rows for training, retrieve-phase rows for testing."""
        enc = np.array([p == "encode" for p in self.phases])
        return self.subset(enc), self.subset(~enc)


def _columns_to_design(d: VTDataset, matrix: np.ndarray) -> DesignMatrix:
    cols = [l.column for l in d.labels]
    features = matrix[:, cols].T.copy()
    labels = np.array([l.class_id for l in d.labels], dtype=np.int64)
    phases = [l.phase for l in d.labels]
    return DesignMatrix(features, labels, phases, matrix.shape[0])


def raw_mvpa_features(d: VTDataset) -> DesignMatrix:
    """One voxel column per label, taken directly from the recording."""
    if not d.labels:
        raise ConfigError("dataset has no labels")
    return _columns_to_design(d, d.values)


def hrf_mvpa_features(d: VTDataset, span: int = 6) -> DesignMatrix:
    """Label columns extracted after correlating each voxel with the kernel."""
    if not d.labels:
        raise ConfigError("dataset has no labels")
    kern = hrf_kernel(d.tr_seconds, span)
    return _columns_to_design(d, temporal_convolve(d.values, kern.taps))


def t_mvpa_features(d: VTDataset, window: int = 6) -> DesignMatrix:
    """Concatenated columns t .. t+window-1 per label, voxel-major."""
    if not d.labels:
        raise ConfigError("dataset has no labels")
    if window < 1:
        raise ConfigError("window must be at least 1")
    for lab in d.labels:
        if lab.column + window > d.n:
            raise ConfigError(
                f"label at column {lab.column} leaves no room for a {window}-sample window"
            )
    rows = [d.values[:, l.column:l.column + window].reshape(-1) for l in d.labels]
    features = np.stack(rows)
    labels = np.array([l.class_id for l in d.labels], dtype=np.int64)
    return DesignMatrix(features, labels, [l.phase for l in d.labels], d.m * window)


def cnn_features(d: VTDataset, model: PipelineModel, depth: int) -> DesignMatrix:
    """Label columns of the learned convolutional representation."""
    if not d.labels:
        raise ConfigError("dataset has no labels")
    return _columns_to_design(d, transform(d, model, depth))


def _euclidean_distances(test_rows: np.ndarray, train_rows: np.ndarray) -> np.ndarray:
    return np.sqrt(kernels.pairwise_sq_dists(
        np.ascontiguousarray(test_rows), np.ascontiguousarray(train_rows)))


def _cosine_distances(test_rows: np.ndarray, train_rows: np.ndarray) -> np.ndarray:
    def unit(rows):
        norms = np.linalg.norm(rows, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0  # zero vectors get similarity 0
        return rows / norms

    return 1.0 - unit(test_rows) @ unit(train_rows).T


def knn_classify(train: DesignMatrix, test: DesignMatrix, k: int = 1,
                 metric: str = "euclidean") -> np.ndarray:
    """Predict a class for every test row by majority vote of k neighbors.

    Equidistant train rows rank by index. Vote ties go to the tied class with
    the smallest summed neighbor distance, then to the smallest class id.
    """
    if metric not in METRICS:
        raise ConfigError(f"metric must be one of {METRICS}")
    if train.feature_dim != test.feature_dim:
        raise ConfigError("train and test feature dimensions differ")
    if len(train) == 0 or len(test) == 0:
        raise ConfigError("train and test must be non-empty")
    if not 1 <= k <= len(train):
        raise ConfigError(f"k must be in 1..{len(train)}")

    if metric == "euclidean":
        dists = _euclidean_distances(test.features, train.features)
    else:
        dists = _cosine_distances(test.features, train.features)

    predictions = np.empty(len(test), dtype=np.int64)
    for i in range(len(test)):
        order = np.argsort(dists[i], kind="stable")[:k]
        votes: dict[int, int] = {}
        sums: dict[int, float] = {}
        for idx in order:
            cls = int(train.labels[idx])
            votes[cls] = votes.get(cls, 0) + 1
            sums[cls] = sums.get(cls, 0.0) + float(dists[i, idx])
        top = max(votes.values())
        tied = [cls for cls, cnt in votes.items() if cnt == top]
        tied.sort(key=lambda cls: (sums[cls], cls))
        predictions[i] = tied[0]
    return predictions
