"""Synthetic generation, persistence, exclusion zones and window sampling."""

import numpy as np
import pytest

from vtdecode.dataset import (
    BUMP_SPAN,
    ConfigError,
    HeaderError,
    Label,
    PayloadError,
    SamplingError,
    SynthConfig,
    VersionError,
    VTDataset,
    _baseline_drift,
    generate_synthetic,
    load_dataset,
    sample_windows,
    save_dataset,
)
from vtdecode.dataset import test_exclusion_columns as exclusion_columns
from vtdecode.decode import hrf_kernel


def small_dataset(seed=7):
    cfg = SynthConfig(m=16, n=400, num_classes=4, samples_per_class_per_phase=4, seed=seed)
    return generate_synthetic(cfg)


# ---------------------------------------------------------------- generation

def test_generated_shape_and_label_counts():
    d = generate_synthetic(SynthConfig(m=64, n=600, num_classes=5,
                                       samples_per_class_per_phase=6, seed=7))
    assert d.values.shape == (64, 600)
    assert len(d.labels) == 60
    assert len(d.label_columns("encode")) == 30
    assert len(d.label_columns("retrieve")) == 30


def test_phases_partition_and_class_balance():
    d = small_dataset()
    for phase in ("encode", "retrieve"):
        cols = d.label_columns(phase)
        assert len(cols) == 16
        per_class = {}
        for lab in d.labels:
            if lab.phase == phase:
                per_class[lab.class_id] = per_class.get(lab.class_id, 0) + 1
        assert per_class == {c: 4 for c in range(4)}


def test_generation_deterministic_and_seed_sensitive():
    a = small_dataset(seed=3)
    b = small_dataset(seed=3)
    c = small_dataset(seed=4)
    assert a == b
    assert not (a == c)


def test_zero_noise_values_are_drift_plus_exact_bumps():
    cfg = SynthConfig(m=12, n=500, num_classes=3, samples_per_class_per_phase=4,
                      noise_sigma=0.0, hrf_amplitude=1.0, voxels_per_class=2, seed=11)
    d = generate_synthetic(cfg)

    # rebuild the additive pieces: drift comes from the third spawned child,
    # bumps go to each class's consecutive slice of voxel_order
    s_drift = np.random.SeedSequence(cfg.seed).spawn(4)[2]
    drift = _baseline_drift(s_drift, cfg.m, cfg.n, 0.25 * cfg.hrf_amplitude)
    taps = hrf_kernel(cfg.tr_seconds, BUMP_SPAN).taps
    expected = drift.copy()
    for lab in d.labels:
        block = d.voxel_order[lab.class_id * 2:(lab.class_id + 1) * 2]
        for v in block:
            expected[v, lab.column:lab.column + BUMP_SPAN] += taps

    assert np.array_equal(d.values, expected)
    # voxels owned by no class carry pure drift
    unowned = d.voxel_order[3 * 2:]
    assert np.array_equal(d.values[unowned], drift[unowned])


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(m=0, n=100, num_classes=2, samples_per_class_per_phase=2)
    with pytest.raises(ConfigError):
        SynthConfig(m=16, n=100, num_classes=5, samples_per_class_per_phase=5)  # too dense
    with pytest.raises(ConfigError):
        SynthConfig(m=4, n=400, num_classes=4, samples_per_class_per_phase=2,
                    voxels_per_class=2)  # needs 8 voxels
    with pytest.raises(ConfigError):
        SynthConfig(m=16, n=400, num_classes=2, samples_per_class_per_phase=2,
                    noise_sigma=-1.0)
    with pytest.raises(ConfigError):
        SynthConfig(m=16, n=400, num_classes=2, samples_per_class_per_phase=2,
                    hrf_amplitude=0.0)


def test_same_class_bumps_never_overlap():
    # labels of one class must sit at least BUMP_SPAN columns apart
    for seed in range(5):
        d = generate_synthetic(SynthConfig(m=20, n=600, num_classes=5,
                                           samples_per_class_per_phase=6, seed=seed))
        by_class = {}
        for lab in d.labels:
            by_class.setdefault(lab.class_id, []).append(lab.column)
        for cols in by_class.values():
            cols = sorted(cols)
            gaps = np.diff(cols)
            assert gaps.min() >= BUMP_SPAN


# --------------------------------------------------------------- persistence

def test_roundtrip_bit_exact(tmp_path):
    d = small_dataset()
    path = tmp_path / "d.vt"
    save_dataset(d, path)
    assert load_dataset(path) == d


def test_truncated_payload_is_payload_error(tmp_path):
    d = small_dataset()
    path = tmp_path / "d.vt"
    save_dataset(d, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])  # drop one float
    with pytest.raises(PayloadError):
        load_dataset(path)


def test_zero_voxel_header_is_rejected(tmp_path):
    d = small_dataset()
    path = tmp_path / "d.vt"
    save_dataset(d, path)
    blob = path.read_bytes()
    # header says m=0: with the payload intact this is a dimension mismatch
    path.write_bytes(blob.replace(b"m=16\n", b"m=0\n", 1))
    with pytest.raises(PayloadError):
        load_dataset(path)


def test_unknown_version_is_version_error(tmp_path):
    d = small_dataset()
    path = tmp_path / "d.vt"
    save_dataset(d, path)
    blob = path.read_bytes()
    path.write_bytes(blob.replace(b"version=1\n", b"version=9\n", 1))
    with pytest.raises(VersionError):
        load_dataset(path)


def test_malformed_header_is_header_error(tmp_path):
    path = tmp_path / "junk.vt"
    path.write_bytes(b"not a header at all\n")
    with pytest.raises(HeaderError):
        load_dataset(path)


# ----------------------------------------------------------------- exclusion

def test_exclusion_empty_without_retrieve_labels():
    values = np.zeros((2, 50))
    d = VTDataset(values, 2.0, np.arange(2), [Label(3, 0, "encode")])
    assert exclusion_columns(d, 6, 9) == set()


def test_exclusion_single_label_window():
    values = np.zeros((2, 200))
    d = VTDataset(values, 2.0, np.arange(2), [Label(100, 0, "retrieve")])
    assert exclusion_columns(d, 6, 9) == set(range(92, 109))


def test_exclusion_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = int(rng.integers(40, 200))
        cols = rng.choice(n, size=int(rng.integers(1, 8)), replace=False)
        labels = [Label(int(c), 0, "retrieve" if i % 2 == 0 else "encode")
                  for i, c in enumerate(cols)]
        d = VTDataset(np.zeros((2, n)), 2.0, np.arange(2), labels)
        tau1 = int(rng.integers(1, 10))
        tau2 = int(rng.integers(1, 10))

        expected = set()
        width = max(tau1, tau2)
        for lab in labels:
            if lab.phase != "retrieve":
                continue
            for off in range(-(width - 1), width):
                col = lab.column + off
                if 0 <= col < n:
                    expected.add(col)
        assert exclusion_columns(d, tau1, tau2) == expected


# ------------------------------------------------------------------ sampling

def test_sampling_error_when_everything_excluded():
    with pytest.raises(SamplingError):
        sample_windows(np.zeros((3, 20)), 4, 10, set(range(20)), seed=0)


def test_full_row_windows_when_tau_equals_n():
    matrix = np.random.default_rng(0).normal(size=(5, 12))
    ws = sample_windows(matrix, 12, 40, set(), seed=1)
    assert len(ws) == 40
    for win, (row, start) in zip(ws.windows, ws.source_rows):
        assert start == 0
        assert np.array_equal(win, matrix[row])


def test_windows_match_their_provenance():
    rng = np.random.default_rng(9)
    matrix = rng.normal(size=(8, 90))
    excluded = set(range(30, 41))
    ws = sample_windows(matrix, 7, 500, excluded, seed=2)
    assert ws.tau == 7
    for win, (row, start) in zip(ws.windows, ws.source_rows):
        assert np.array_equal(win, matrix[row, start:start + 7])
        span = set(range(start, start + 7))
        assert not span & excluded


def test_sampling_deterministic():
    matrix = np.random.default_rng(1).normal(size=(4, 60))
    a = sample_windows(matrix, 6, 100, {10, 11}, seed=7)
    b = sample_windows(matrix, 6, 100, {10, 11}, seed=7)
    assert np.array_equal(a.windows, b.windows)
    assert np.array_equal(a.source_rows, b.source_rows)


def test_large_sample_avoids_excluded_block():
    matrix = np.random.default_rng(2).normal(size=(100, 100))
    excluded = set(range(40, 60))
    ws = sample_windows(matrix, 6, 10_000, excluded, seed=3)
    starts = ws.source_rows[:, 1]
    # a window [s, s+6) dodges [40, 60) iff it ends by 40 or starts at 60+
    assert np.all((starts + 6 <= 40) | (starts >= 60))
