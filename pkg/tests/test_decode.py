"""Response kernel, feature builders and the nearest-neighbor classifier."""

import math

import numpy as np
import pytest

from vtdecode.autoencoder import AEHyper, FilterBank
from vtdecode.convnet import PipelineConfig, PipelineModel, output_dim, transform
from vtdecode.dataset import ConfigError, Label, VTDataset
from vtdecode.decode import (
    DesignMatrix,
    cnn_features,
    hrf_kernel,
    hrf_mvpa_features,
    knn_classify,
    raw_mvpa_features,
    t_mvpa_features,
)


def double_gamma(t):
    rise = (t / 6.0) ** 6 * math.exp(-(t - 6.0))
    undershoot = (t / 16.0) ** 16 * math.exp(-(t - 16.0)) / 6.0
    return rise - undershoot


# ---------------------------------------------------------------- hrf kernel

def test_taps_match_closed_form():
    kern = hrf_kernel(2.0, 6)
    raw = np.array([double_gamma(2.0 * (s + 1)) for s in range(6)])
    assert np.allclose(kern.taps, raw / raw.max(), rtol=1e-15, atol=1e-15)


def test_peak_at_third_sample():
    kern = hrf_kernel(2.0, 6)
    assert int(np.argmax(kern.taps)) == 2
    assert kern.taps[2] == 1.0


def test_tail_returns_toward_baseline():
    kern = hrf_kernel(2.0, 6)
    assert kern.taps[-1] < 0.2


def test_curve_rises_then_falls():
    taps = hrf_kernel(2.0, 6).taps
    assert taps[0] < taps[1] < taps[2]
    assert taps[2] > taps[3] > taps[4] > taps[5]


def test_kernel_precondition():
    with pytest.raises(ConfigError):
        hrf_kernel(1.0, 2)  # window ends before the response peaks


# ------------------------------------------------------------ feature builders

def labeled_dataset(rng, m=6, n=40):
    labels = [Label(4, 0, "encode"), Label(12, 1, "encode"),
              Label(22, 0, "retrieve"), Label(30, 1, "retrieve")]
    return VTDataset(rng.normal(size=(m, n)), 2.0, rng.permutation(m), labels)


def test_raw_features_extract_label_columns():
    rng = np.random.default_rng(0)
    d = labeled_dataset(rng)
    design = raw_mvpa_features(d)
    assert design.feature_dim == 6
    assert len(design) == 4
    for row, lab in zip(design.features, d.labels):
        assert np.array_equal(row, d.values[:, lab.column])
    assert list(design.labels) == [0, 1, 0, 1]
    assert design.phases == ["encode", "encode", "retrieve", "retrieve"]


def test_hrf_features_of_zero_data_are_zero():
    d = VTDataset(np.zeros((3, 30)), 2.0, np.arange(3),
                  [Label(5, 0, "encode"), Label(20, 0, "retrieve")])
    assert np.array_equal(hrf_mvpa_features(d).features, np.zeros((2, 3)))


def test_hrf_feature_peaks_at_stimulus_with_autocorrelation_value():
    # one noiseless kernel-shaped bump right at the label: the correlated
    # response at that column is the kernel's energy, the row's maximum
    taps = hrf_kernel(2.0, 6).taps
    values = np.zeros((2, 50))
    col = 17
    values[1, col:col + 6] = taps
    d = VTDataset(values, 2.0, np.arange(2),
                  [Label(col, 0, "encode"), Label(40, 0, "retrieve")])
    design = hrf_mvpa_features(d)
    energy = float(taps @ taps)
    assert design.features[0, 1] == pytest.approx(energy, rel=1e-12)

    full = np.array([sum(taps[s] * values[1, t + s] for s in range(6) if t + s < 50)
                     for t in range(50)])
    assert int(np.argmax(full)) == col


def test_tmvpa_window_one_equals_raw():
    rng = np.random.default_rng(1)
    d = labeled_dataset(rng)
    a = t_mvpa_features(d, window=1)
    b = raw_mvpa_features(d)
    assert np.array_equal(a.features, b.features)


def test_tmvpa_hand_assembled():
    values = np.arange(20, dtype=np.float64).reshape(2, 10)
    d = VTDataset(values, 2.0, np.arange(2),
                  [Label(3, 0, "encode"), Label(7, 0, "retrieve")])
    design = t_mvpa_features(d, window=2)
    assert design.feature_dim == 4
    # voxel-major: voxel 0's pair first, then voxel 1's
    assert np.array_equal(design.features[0], np.array([3.0, 4.0, 13.0, 14.0]))


def test_tmvpa_rejects_label_near_the_end():
    d = VTDataset(np.zeros((2, 20)), 2.0, np.arange(2),
                  [Label(2, 0, "encode"), Label(16, 0, "retrieve")])
    with pytest.raises(ConfigError, match="16"):
        t_mvpa_features(d, window=6)


def test_cnn_features_reference_dim():
    rng = np.random.default_rng(2)
    m, k1, k2 = 1024, 16, 4
    cfg = PipelineConfig(delta1=16, delta2=16,
                         layer1_hyper=AEHyper(k=k1), layer2_hyper=AEHyper(k=k2),
                         tau1=6, tau2=9)
    layer2 = [FilterBank(rng.normal(size=(k2, 9)), 9, AEHyper(k=k2), 0.0)
              for _ in range(k1)]
    model = PipelineModel(FilterBank(rng.normal(size=(k1, 6)), 6, AEHyper(k=k1), 0.0),
                          layer2, cfg, rng.permutation(m))
    d = VTDataset(rng.normal(size=(m, 30)), 2.0, np.arange(m),
                  [Label(5, 0, "encode"), Label(20, 0, "retrieve")])
    design = cnn_features(d, model, depth=2)
    assert design.feature_dim == output_dim(m, k1, k2, 16, 16, 2) == 256
    assert np.all(np.abs(design.features) < 1.0)
    rep = transform(d, model, 2)
    assert np.array_equal(design.features[0], rep[:, 5])
    assert np.array_equal(design.features[1], rep[:, 20])


# ----------------------------------------------------------------------- knn

def knn_oracle(train, test, k, metric):
    """Exhaustive-sort reference with the full tie-break ladder."""
    def dist(a, b):
        if metric == "euclidean":
            return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
        na = math.sqrt(sum(x * x for x in a)) or 1.0
        nb = math.sqrt(sum(x * x for x in b)) or 1.0
        return 1.0 - sum(x * y for x, y in zip(a, b)) / (na * nb)

    out = []
    for q in test.features:
        ranked = sorted(((dist(q, r), i) for i, r in enumerate(train.features)))
        top = ranked[:k]
        votes, sums = {}, {}
        for dv, i in top:
            cls = int(train.labels[i])
            votes[cls] = votes.get(cls, 0) + 1
            sums[cls] = sums.get(cls, 0.0) + dv
        most = max(votes.values())
        tied = sorted((cls for cls, v in votes.items() if v == most),
                      key=lambda cls: (sums[cls], cls))
        out.append(tied[0])
    return np.array(out)


def design_of(features, labels):
    features = np.asarray(features, dtype=np.float64)
    return DesignMatrix(features, np.asarray(labels),
                        ["encode"] * len(labels), features.shape[1])


def test_exact_match_wins_at_k1():
    rng = np.random.default_rng(3)
    train = design_of(rng.normal(size=(10, 4)), rng.integers(0, 3, size=10))
    probe = design_of(train.features[[6]], [0])
    assert knn_classify(train, probe, k=1)[0] == train.labels[6]


def test_full_vote_is_majority():
    train = design_of([[0.0], [1.0], [2.0], [3.0], [4.0]], [1, 1, 1, 2, 2])
    probe = design_of([[10.0]], [0])
    assert knn_classify(train, probe, k=5)[0] == 1


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(4)
    train = design_of(rng.normal(size=(120, 5)), rng.integers(0, 4, size=120))
    test = design_of(rng.normal(size=(80, 5)), np.zeros(80, dtype=int))
    for metric in ("euclidean", "cosine"):
        for k in (1, 3, 5):
            got = knn_classify(train, test, k=k, metric=metric)
            assert np.array_equal(got, knn_oracle(train, test, k, metric))


def test_distance_tie_prefers_lower_train_index():
    train = design_of([[1.0, 0.0], [1.0, 0.0]], [7, 3])  # identical rows
    probe = design_of([[0.0, 0.0]], [0])
    assert knn_classify(train, probe, k=1)[0] == 7


def test_vote_tie_prefers_smaller_summed_distance():
    # class 5 contributes one close neighbor, class 2 one farther: 1-1 vote
    train = design_of([[0.0], [3.0]], [5, 2])
    probe = design_of([[1.0]], [0])
    assert knn_classify(train, probe, k=2)[0] == 5


def test_vote_and_sum_tie_prefers_smaller_class_id():
    train = design_of([[-1.0], [1.0]], [9, 4])
    probe = design_of([[0.0]], [0])
    assert knn_classify(train, probe, k=2)[0] == 4


def test_prediction_invariant_to_train_order():
    rng = np.random.default_rng(5)
    train = design_of(rng.normal(size=(40, 3)), rng.integers(0, 3, size=40))
    test = design_of(rng.normal(size=(25, 3)), np.zeros(25, dtype=int))
    base = knn_classify(train, test, k=3)
    perm = rng.permutation(40)
    shuffled = design_of(train.features[perm], train.labels[perm])
    assert np.array_equal(knn_classify(shuffled, test, k=3), base)


def test_knn_validation():
    train = design_of([[0.0, 1.0]], [0])
    with pytest.raises(ConfigError):
        knn_classify(train, design_of([[1.0]], [0]), k=1)
    with pytest.raises(ConfigError):
        knn_classify(train, design_of([[1.0, 2.0]], [0]), k=2)
    with pytest.raises(ConfigError):
        knn_classify(train, design_of([[1.0, 2.0]], [0]), metric="manhattan")


def test_zero_vector_cosine_distance_is_one():
    train = design_of([[1.0, 0.0], [0.5, 0.5]], [1, 2])
    probe = design_of([[0.0, 0.0]], [0])
    # zero query is distance 1 from everything; tie resolves by index then id
    assert knn_classify(train, probe, k=1, metric="cosine")[0] == 1
