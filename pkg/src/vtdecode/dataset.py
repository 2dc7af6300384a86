"""Voxel-by-time datasets: synthesis, persistence and window sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ENCODE = "encode"
RETRIEVE = "retrieve"
PHASES = (ENCODE, RETRIEVE)

# samples covered by one stimulus bump; matches the default response kernel span
BUMP_SPAN = 6

_MAGIC = "vtdataset"
_VERSION = 1
_PAYLOAD_MARKER = "payload"


class ConfigError(ValueError):
    """A configuration or type invariant was violated."""


class DatasetFormatError(ValueError):
    """Base class for dataset file parse failures."""


class HeaderError(DatasetFormatError):
    pass


class VersionError(DatasetFormatError):
    pass


class PayloadError(DatasetFormatError):
    pass


class SamplingError(RuntimeError):
    """Raised when no admissible window positions exist."""


@dataclass(frozen=True)
class Label:
    """One labeled stimulus column."""

    column: int
    class_id: int
    phase: str


@dataclass(eq=False)
class VTDataset:
    """A voxel-by-time recording with stimulus labels.

    values holds one row per voxel and one column per sample. voxel_order
    lists row indices so that consecutive entries are spatial neighbors;
    spatial pooling groups consecutive runs of it.
    """

    values: np.ndarray
    tr_seconds: float
    voxel_order: np.ndarray
    labels: list[Label]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ConfigError("values must be a non-empty 2-d array (voxels x samples)")
        if not float(self.tr_seconds) > 0.0:
            raise ConfigError("tr_seconds must be positive")
        self.tr_seconds = float(self.tr_seconds)
        order = np.asarray(self.voxel_order, dtype=np.int64)
        m = self.values.shape[0]
        if order.shape != (m,) or not np.array_equal(np.sort(order), np.arange(m)):
            raise ConfigError("voxel_order must be a permutation of 0..m-1")
        self.voxel_order = order
        n = self.values.shape[1]
        seen = set()
        for lab in self.labels:
            if lab.phase not in PHASES:
                raise ConfigError(f"unknown phase {lab.phase!r}")
            if not 0 <= lab.column < n:
                raise ConfigError(f"label column {lab.column} outside 0..{n - 1}")
            if lab.column in seen:
                raise ConfigError(f"duplicate label column {lab.column}")
            seen.add(lab.column)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def label_columns(self, phase: str | None = None) -> list[int]:
        return [l.column for l in self.labels if phase is None or l.phase == phase]

    def class_ids(self) -> list[int]:
        return sorted({l.class_id for l in self.labels})

    def __eq__(self, other) -> bool:
        if not isinstance(other, VTDataset):
            return NotImplemented
        return (
            self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
            and self.tr_seconds == other.tr_seconds
            and np.array_equal(self.voxel_order, other.voxel_order)
            and self.labels == other.labels
        )


@dataclass(frozen=True)
class SynthConfig:
    """Parameters for the synthetic generator.

    Labeled columns must stay sparse in time: at most one label per five
    samples, so stimulus bumps sit in distinguishable inter-stimulus gaps.
    """

    m: int
    n: int
    num_classes: int
    samples_per_class_per_phase: int
    noise_sigma: float = 1.0
    voxels_per_class: int = 4
    hrf_amplitude: float = 2.0
    tr_seconds: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ConfigError("m and n must be at least 1")
        if self.num_classes < 1 or self.samples_per_class_per_phase < 1:
            raise ConfigError("num_classes and samples_per_class_per_phase must be at least 1")
        if self.voxels_per_class < 1:
            raise ConfigError("voxels_per_class must be at least 1")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if self.hrf_amplitude <= 0:
            raise ConfigError("hrf_amplitude must be positive")
        if self.tr_seconds <= 0:
            raise ConfigError("tr_seconds must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        if self.voxels_per_class * self.num_classes > self.m:
            raise ConfigError(
                "voxels_per_class * num_classes exceeds m "
                f"({self.voxels_per_class} * {self.num_classes} > {self.m})"
            )
        labels = self.num_labels
        if 5 * labels > self.n:
            raise ConfigError(
                f"label density too high: {labels} labels need at least {5 * labels} samples, n={self.n}"
            )
        if self.num_classes == 1 and 6 * labels > self.n - BUMP_SPAN:
            # single-class runs put same-class bumps in adjacent slots
            raise ConfigError("single-class config too dense for non-overlapping bumps")

    @property
    def num_labels(self) -> int:
        return 2 * self.num_classes * self.samples_per_class_per_phase


def _baseline_drift(seed, m: int, n: int, amplitude: float) -> np.ndarray:
    """Slow per-voxel sinusoid standing in for scanner drift."""
    rng = np.random.default_rng(seed)
    periods = rng.uniform(n / 4.0, n / 2.0, size=m)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=m)
    t = np.arange(n, dtype=np.float64)
    return amplitude * np.sin(2.0 * np.pi * t[None, :] / periods[:, None] + phases[:, None])


def generate_synthetic(config: SynthConfig) -> VTDataset:
    """Build a dataset with class-specific bump responses buried in noise.

    Each class owns a block of voxels_per_class consecutive entries of
    voxel_order. Every labeled column adds a response-kernel-shaped bump of
    height hrf_amplitude to that class's voxels, on top of a low sinusoidal
    drift (amplitude 0.25 * hrf_amplitude) and i.i.d. Gaussian noise. The
    encode-phase labels occupy the first half of the run, retrieve-phase
    labels the second half, with classes in shuffled round-robin order so
    same-class bumps never overlap.
    """
    from .decode import hrf_kernel  # deferred, the kernel op lives downstream

    c = config.num_classes
    per_phase = c * config.samples_per_class_per_phase
    num_labels = config.num_labels

    s_layout, s_voxels, s_drift, s_noise = np.random.SeedSequence(config.seed).spawn(4)

    stride = (config.n - BUMP_SPAN) / num_labels
    cols = np.floor(np.arange(num_labels) * stride).astype(np.int64)

    rng_layout = np.random.default_rng(s_layout)
    enc_perm = rng_layout.permutation(c)
    ret_perm = rng_layout.permutation(c)
    if c >= 2:
        # keep the last encode class and first retrieve class distinct so the
        # two closest same-class labels stay >= 2 slots apart
        while ret_perm[0] == enc_perm[(per_phase - 1) % c]:
            ret_perm = rng_layout.permutation(c)

    labels = []
    for j in range(num_labels):
        if j < per_phase:
            labels.append(Label(int(cols[j]), int(enc_perm[j % c]), ENCODE))
        else:
            labels.append(Label(int(cols[j]), int(ret_perm[(j - per_phase) % c]), RETRIEVE))

    voxel_order = np.random.default_rng(s_voxels).permutation(config.m)

    values = _baseline_drift(s_drift, config.m, config.n, 0.25 * config.hrf_amplitude)
    taps = hrf_kernel(config.tr_seconds, BUMP_SPAN).taps * config.hrf_amplitude
    for lab in labels:
        block = voxel_order[lab.class_id * config.voxels_per_class:(lab.class_id + 1) * config.voxels_per_class]
        for v in block:
            values[v, lab.column:lab.column + BUMP_SPAN] += taps
    if config.noise_sigma > 0:
        values += np.random.default_rng(s_noise).normal(0.0, config.noise_sigma, size=values.shape)

    return VTDataset(values, config.tr_seconds, voxel_order, labels)


def save_dataset(d: VTDataset, path) -> None:
    """Write the text header, label table, voxel order and raw float payload."""
    lines = [
        f"format={_MAGIC}",
        f"version={_VERSION}",
        f"m={d.m}",
        f"n={d.n}",
        f"tr_seconds={d.tr_seconds!r}",
        f"labels={len(d.labels)}",
        "",
    ]
    lines.extend(f"{l.column},{l.class_id},{l.phase}" for l in d.labels)
    lines.append(",".join(str(int(v)) for v in d.voxel_order))
    lines.append(_PAYLOAD_MARKER)
    header = ("\n".join(lines) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(d.values.astype("<f8").tobytes(order="C"))


def _parse_header_value(fields: dict, key: str):
    if key not in fields:
        raise HeaderError(f"missing header field {key!r}")
    return fields[key]


def load_dataset(path) -> VTDataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    marker = (_PAYLOAD_MARKER + "\n").encode("ascii")
    head, sep, payload = blob.partition(b"\n" + marker)
    if not sep:
        raise HeaderError("missing payload marker")
    try:
        text = head.decode("ascii")
    except UnicodeDecodeError as exc:
        raise HeaderError("header is not ascii text") from exc

    header_part, _, tail = text.partition("\n\n")
    fields = {}
    for line in header_part.splitlines():
        key, eq, value = line.partition("=")
        if not eq:
            raise HeaderError(f"malformed header line {line!r}")
        fields[key] = value
    if _parse_header_value(fields, "format") != _MAGIC:
        raise HeaderError(f"not a {_MAGIC} file")
    if fields.get("version") != str(_VERSION):
        raise VersionError(f"unsupported version {fields.get('version')!r}")
    try:
        m = int(_parse_header_value(fields, "m"))
        n = int(_parse_header_value(fields, "n"))
        tr_seconds = float(_parse_header_value(fields, "tr_seconds"))
        num_labels = int(_parse_header_value(fields, "labels"))
    except ValueError as exc:
        raise HeaderError(f"bad header value: {exc}") from exc

    body_lines = tail.splitlines()
    if len(body_lines) != num_labels + 1:
        raise HeaderError(f"expected {num_labels} label lines plus voxel order, got {len(body_lines)}")
    labels = []
    for line in body_lines[:num_labels]:
        parts = line.split(",")
        if len(parts) != 3:
            raise HeaderError(f"malformed label line {line!r}")
        try:
            labels.append(Label(int(parts[0]), int(parts[1]), parts[2]))
        except ValueError as exc:
            raise HeaderError(f"malformed label line {line!r}") from exc
    try:
        voxel_order = np.array([int(v) for v in body_lines[num_labels].split(",")], dtype=np.int64)
    except ValueError as exc:
        raise HeaderError("malformed voxel_order line") from exc

    expected = m * n * 8
    if len(payload) != expected:
        raise PayloadError(f"payload holds {len(payload)} bytes, header implies {expected}")
    values = np.frombuffer(payload, dtype="<f8").reshape(m, n).copy()
    return VTDataset(values, tr_seconds, voxel_order, labels)


@dataclass
class WindowSet:
    """Sampled temporal windows plus their (row, start_column) provenance."""

    windows: np.ndarray
    tau: int
    source_rows: np.ndarray

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        self.source_rows = np.asarray(self.source_rows, dtype=np.int64)
        if self.windows.ndim != 2 or self.windows.shape[1] != self.tau:
            raise ConfigError("windows must be 2-d with tau columns")
        if self.source_rows.shape != (self.windows.shape[0], 2):
            raise ConfigError("source_rows must pair with windows")

    def __len__(self) -> int:
        return self.windows.shape[0]


def test_exclusion_columns(d: VTDataset, tau1: int, tau2: int) -> set[int]:
    """Columns no pretraining window may touch.

    Any window of length up to max(tau1, tau2) overlapping a retrieve-phase
    label column starts within max-1 columns of it, so the union of
    [t - max + 1, t + max - 1] over retrieve labels is excluded.
    """
    if tau1 < 1 or tau2 < 1:
        raise ConfigError("window lengths must be at least 1")
    width = max(tau1, tau2)
    excluded: set[int] = set()
    for t in d.label_columns(RETRIEVE):
        excluded.update(range(max(0, t - width + 1), min(d.n, t + width)))
    return excluded


def sample_windows(matrix: np.ndarray, tau: int, count: int,
                   excluded_columns: Iterable[int], seed: int) -> WindowSet:
    """Draw windows uniformly with replacement from admissible positions.

    A position (row, start) is admissible when [start, start + tau) avoids
    every excluded column. Sampling is deterministic given the seed.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ConfigError("matrix must be 2-d")
    rows, n = matrix.shape
    if not 1 <= tau <= n:
        raise ConfigError(f"tau must be in 1..{n}, got {tau}")
    if count < 1:
        raise ConfigError("count must be at least 1")

    blocked = np.zeros(n, dtype=bool)
    for col in excluded_columns:
        if 0 <= col < n:
            blocked[col] = True
    bad = np.concatenate(([0], np.cumsum(blocked)))
    # start s is admissible when no blocked column falls in [s, s + tau)
    starts = np.flatnonzero(bad[tau:n + 1] - bad[0:n + 1 - tau] == 0)
    if starts.size == 0:
        raise SamplingError("no admissible window positions after exclusion")

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, rows * starts.size, size=count)
    row_idx = idx // starts.size
    start_idx = starts[idx % starts.size]
    windows = matrix[row_idx[:, None], start_idx[:, None] + np.arange(tau)[None, :]]
    provenance = np.stack([row_idx, start_idx], axis=1)
    return WindowSet(windows, tau, provenance)
