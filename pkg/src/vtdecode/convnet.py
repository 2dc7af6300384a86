"""Two-block temporal convolution / spatial pooling feature extractor.

Each block correlates every input matrix with a bank of temporal filters
(forward-looking windows, zero-padded past the last column), max-pools rows
over consecutive spatial groups and applies tanh. Filter responses are kept
as separate matrices, never summed across filters.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .autoencoder import AEHyper, FilterBank, _bank_header_lines, _parse_bank_blob, train
from .dataset import ConfigError, VTDataset, sample_windows, test_exclusion_columns

_MODEL_MAGIC = "vtmodel"
_MODEL_VERSION = 1


def temporal_convolve(matrix: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """Correlate each row with the filter over forward windows.

    out[v, t] = sum_s filt[s] * matrix[v, t + s], treating columns past the
    end as zero, so the output keeps the input shape.
    """
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    filt = np.ascontiguousarray(filt, dtype=np.float64)
    if matrix.ndim != 2:
        raise ConfigError("matrix must be 2-d")
    if filt.ndim != 1:
        raise ConfigError("filter must be 1-d")
    if not 1 <= filt.shape[0] <= matrix.shape[1]:
        raise ConfigError("filter longer than the time axis")
    return kernels.temporal_correlate(matrix, filt)


def spatial_max_pool(matrix: np.ndarray, delta: int, voxel_order: np.ndarray) -> np.ndarray:
    """Max over consecutive groups of delta rows taken in voxel_order."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ConfigError("matrix must be 2-d")
    rows = matrix.shape[0]
    order = np.asarray(voxel_order, dtype=np.int64)
    if order.shape != (rows,) or not np.array_equal(np.sort(order), np.arange(rows)):
        raise ConfigError("voxel_order must be a permutation of the row indices")
    if delta < 1 or rows % delta != 0:
        raise ConfigError(f"delta must divide the row count ({delta} vs {rows})")
    return kernels.group_max(np.ascontiguousarray(matrix[order]), delta)


@dataclass
class ResponseStack:
    """Filter response matrices with their filter-index provenance paths."""

    matrices: np.ndarray
    provenance: list[tuple[int, ...]]

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=np.float64)
        if self.matrices.ndim != 3:
            raise ConfigError("matrices must be a stack of equal-shape 2-d arrays")
        if len(self.provenance) != self.matrices.shape[0]:
            raise ConfigError("provenance length must match the stack")
        if len(set(self.provenance)) != len(self.provenance):
            raise ConfigError("provenance paths must be unique")

    @classmethod
    def single(cls, values: np.ndarray) -> "ResponseStack":
        values = np.asarray(values, dtype=np.float64)
        return cls(values[None, :, :], [()])

    def __len__(self) -> int:
        return self.matrices.shape[0]


@dataclass(frozen=True)
class PipelineConfig:
    """Architecture and training settings for the two blocks."""

    delta1: int
    delta2: int
    layer1_hyper: AEHyper
    layer2_hyper: AEHyper
    tau1: int = 6
    tau2: int = 9
    num_windows: int = 10000

    def __post_init__(self):
        if self.tau1 < 1 or self.tau2 < 1:
            raise ConfigError("tau1 and tau2 must be at least 1")
        if self.delta1 < 1 or self.delta2 < 1:
            raise ConfigError("delta1 and delta2 must be at least 1")
        if self.num_windows < 1:
            raise ConfigError("num_windows must be at least 1")


@dataclass
class PipelineModel:
    """One first-block bank plus one second-block bank per response matrix."""

    layer1: FilterBank
    layer2: list[FilterBank]
    config: PipelineConfig
    voxel_order: np.ndarray

    def __post_init__(self):
        self.voxel_order = np.asarray(self.voxel_order, dtype=np.int64)
        if len(self.layer2) != self.layer1.k:
            raise ConfigError("need one second-block bank per first-block filter")
        if self.layer1.tau != self.config.tau1:
            raise ConfigError("layer1 bank length does not match tau1")
        for bank in self.layer2:
            if bank.tau != self.config.tau2:
                raise ConfigError("layer2 bank length does not match tau2")
            if bank.k != self.layer2[0].k:
                raise ConfigError("layer2 banks must share one filter count")

    @property
    def m(self) -> int:
        return self.voxel_order.shape[0]


def apply_block(stack: ResponseStack, banks, delta: int, voxel_order: np.ndarray) -> ResponseStack:
    """Convolve, pool and squash every (input matrix, filter) pair.

    banks is a single FilterBank shared by all inputs or a list with one bank
    per input. Output provenance appends the filter index to each input path;
    outputs are ordered input-major, so concatenation is lexicographic in the
    provenance paths.
    """
    if isinstance(banks, FilterBank):
        bank_list = [banks] * len(stack)
    else:
        bank_list = list(banks)
        if len(bank_list) != len(stack):
            raise ConfigError(f"need 1 or {len(stack)} banks, got {len(bank_list)}")

    outputs = []
    provenance = []
    for mat, path, bank in zip(stack.matrices, stack.provenance, bank_list):
        for j in range(bank.k):
            pooled = spatial_max_pool(temporal_convolve(mat, bank.filters[j]), delta, voxel_order)
            outputs.append(np.tanh(pooled))
            provenance.append(path + (j,))
    return ResponseStack(np.stack(outputs), provenance)


def output_dim(m: int, k1: int, k2: int | None, delta1: int, delta2: int | None, depth: int) -> int:
    """Feature dimension of the concatenated representation at a depth."""
    if depth not in (1, 2):
        raise ConfigError("depth must be 1 or 2")
    if m < 1 or k1 < 1 or delta1 < 1:
        raise ConfigError("m, k1 and delta1 must be at least 1")
    if m % delta1 != 0:
        raise ConfigError(f"delta1 must divide m ({delta1} vs {m})")
    if depth == 1:
        return m * k1 // delta1
    if k2 is None or delta2 is None or k2 < 1 or delta2 < 1:
        raise ConfigError("depth 2 needs k2 and delta2")
    if (m // delta1) % delta2 != 0:
        raise ConfigError(f"delta2 must divide m/delta1 ({delta2} vs {m // delta1})")
    return m * k1 * k2 // (delta1 * delta2)


def pretrain(d: VTDataset, config: PipelineConfig) -> PipelineModel:
    """Learn both filter banks from windows that avoid retrieve-phase columns.

    The second-block banks are trained one per first-block response matrix;
    their seeds derive from the first-block seed as seed + 1 + matrix index.
    """
    if config.tau1 > d.n or config.tau2 > d.n:
        raise ConfigError("window length exceeds the time axis")
    if d.m % config.delta1 != 0:
        raise ConfigError(f"delta1 must divide m ({config.delta1} vs {d.m})")
    if (d.m // config.delta1) % config.delta2 != 0:
        raise ConfigError(f"delta2 must divide m/delta1 ({config.delta2} vs {d.m // config.delta1})")

    excluded = test_exclusion_columns(d, config.tau1, config.tau2)
    base_seed = config.layer1_hyper.seed

    first_windows = sample_windows(d.values, config.tau1, config.num_windows, excluded, base_seed)
    layer1 = train(first_windows, config.layer1_hyper)

    stack = apply_block(ResponseStack.single(d.values), layer1, config.delta1, d.voxel_order)
    layer2 = []
    for i in range(len(stack)):
        seed_i = base_seed + 1 + i
        hyper_i = dataclasses.replace(config.layer2_hyper, seed=seed_i)
        wins = sample_windows(stack.matrices[i], config.tau2, config.num_windows, excluded, seed_i)
        layer2.append(train(wins, hyper_i))
    return PipelineModel(layer1, layer2, config, d.voxel_order.copy())


def transform(d: VTDataset, model: PipelineModel, depth: int) -> np.ndarray:
    """Concatenated response rows for the dataset at depth 1 or 2.

    Rows follow the lexicographic provenance order of the response matrices;
    columns are the original time axis. The second block pools over the
    already-pooled rows, whose spatial order is their position.
    """
    if depth not in (1, 2):
        raise ConfigError("depth must be 1 or 2")
    if d.m != model.m:
        raise ConfigError(f"dataset has {d.m} voxels, model expects {model.m}")
    stack = apply_block(ResponseStack.single(d.values), model.layer1,
                        model.config.delta1, model.voxel_order)
    if depth == 2:
        rows = stack.matrices.shape[1]
        stack = apply_block(stack, model.layer2, model.config.delta2, np.arange(rows))
    L, rows, n = stack.matrices.shape
    return stack.matrices.reshape(L * rows, n)


def save_model(model: PipelineModel, path) -> None:
    cfg = model.config
    lines = [
        f"format={_MODEL_MAGIC}",
        f"version={_MODEL_VERSION}",
        f"tau1={cfg.tau1}",
        f"tau2={cfg.tau2}",
        f"delta1={cfg.delta1}",
        f"delta2={cfg.delta2}",
        f"num_windows={cfg.num_windows}",
        f"voxels={model.m}",
        "voxel_order=" + ",".join(str(int(v)) for v in model.voxel_order),
        f"banks={1 + len(model.layer2)}",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n\n").encode("ascii"))
        for bank in [model.layer1] + model.layer2:
            fh.write(("\n".join(_bank_header_lines(bank)) + "\n").encode("ascii"))
            fh.write(bank.filters.astype("<f8").tobytes(order="C"))


def load_model(path) -> PipelineModel:
    from .dataset import HeaderError, PayloadError, VersionError

    with open(path, "rb") as fh:
        blob = fh.read()
    head, sep, rest = blob.partition(b"\n\n")
    if not sep:
        raise HeaderError("missing model header terminator")
    fields = {}
    for line in head.decode("ascii").splitlines():
        key, eq, value = line.partition("=")
        if not eq:
            raise HeaderError(f"malformed model header line {line!r}")
        fields[key] = value
    if fields.get("format") != _MODEL_MAGIC:
        raise HeaderError(f"not a {_MODEL_MAGIC} file")
    if fields.get("version") != str(_MODEL_VERSION):
        raise VersionError(f"unsupported model version {fields.get('version')!r}")
    try:
        tau1 = int(fields["tau1"])
        tau2 = int(fields["tau2"])
        delta1 = int(fields["delta1"])
        delta2 = int(fields["delta2"])
        num_windows = int(fields["num_windows"])
        voxels = int(fields["voxels"])
        voxel_order = np.array([int(v) for v in fields["voxel_order"].split(",")], dtype=np.int64)
        num_banks = int(fields["banks"])
    except (KeyError, ValueError) as exc:
        raise HeaderError(f"bad model header: {exc}") from exc
    if voxel_order.shape[0] != voxels:
        raise HeaderError("voxel_order length does not match voxels")

    banks = []
    for _ in range(num_banks):
        bank, rest = _parse_bank_blob(rest)
        banks.append(bank)
    if rest:
        raise PayloadError(f"{len(rest)} unexpected trailing bytes")
    if num_banks < 2:
        raise HeaderError("model needs a first-block bank and at least one second-block bank")

    layer1, layer2 = banks[0], banks[1:]
    config = PipelineConfig(
        delta1=delta1, delta2=delta2,
        layer1_hyper=layer1.hyper, layer2_hyper=layer2[0].hyper,
        tau1=tau1, tau2=tau2, num_windows=num_windows,
    )
    return PipelineModel(layer1, layer2, config, voxel_order)
