import numpy as np
import pytest

from glupruner import (
    GluVariant,
    MlpWeights,
    NormAccumulator,
    Tensor2D,
    accumulate,
    calibrate_mlp,
    finalize,
)
from glupruner.calibration import (
    batches_from_tensor_file,
    calibrate_linear,
    merge,
    synthetic_batches,
)
from glupruner.errors import DimensionError, EmptyCalibrationError
from glupruner.tensor_store import TensorFile
from conftest import rand_mlp
from oracles import column_norms


def test_accumulate_basic():
    acc = accumulate(NormAccumulator(dim=2), Tensor2D.from_list(2, 2, [3, 0, 4, 0]))
    assert np.array_equal(acc.sumsq, [25.0, 0.0])
    assert acc.token_count == 2


def test_accumulate_associative(rng):
    b1 = Tensor2D(rng.standard_normal((5, 3)).astype(np.float32))
    b2 = Tensor2D(rng.standard_normal((7, 3)).astype(np.float32))
    both = Tensor2D(np.vstack([b1.data, b2.data]))
    a = accumulate(accumulate(NormAccumulator(dim=3), b1), b2)
    b = accumulate(NormAccumulator(dim=3), both)
    np.testing.assert_allclose(a.sumsq, b.sumsq, rtol=1e-12)
    assert a.token_count == b.token_count


def test_finalize_three_four_five():
    acc = NormAccumulator(dim=2, sumsq=np.array([25.0, 0.0]), token_count=2)
    assert np.array_equal(finalize(acc), [5.0, 0.0])


def test_finalize_all_zero():
    assert np.array_equal(finalize(NormAccumulator(dim=4)), np.zeros(4))


def test_streamed_vs_oneshot_column_norms(rng):
    x = rng.standard_normal((100, 16)).astype(np.float32)
    acc = NormAccumulator(dim=16)
    for start in range(0, 100, 7):
        acc = accumulate(acc, Tensor2D(x[start : start + 7]))
    np.testing.assert_allclose(finalize(acc), column_norms(x), rtol=1e-6)


def test_merge_commutative(rng):
    b1 = Tensor2D(rng.standard_normal((5, 4)).astype(np.float32))
    b2 = Tensor2D(rng.standard_normal((9, 4)).astype(np.float32))
    p1 = accumulate(NormAccumulator(dim=4), b1)
    p2 = accumulate(NormAccumulator(dim=4), b2)
    m12 = merge(p1, p2)
    m21 = merge(p2, p1)
    np.testing.assert_allclose(m12.sumsq, m21.sumsq, rtol=1e-12)
    assert m12.token_count == m21.token_count == 14


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        accumulate(NormAccumulator(dim=3), Tensor2D.from_list(1, 2, [1, 2]))


def test_calibrate_mlp_identity_reglu():
    eye = Tensor2D(np.eye(2, dtype=np.float32))
    w = MlpWeights(gate=eye, up=eye, down=eye, variant=GluVariant.REGLU)
    stats = calibrate_mlp(w, [Tensor2D.from_list(1, 2, [1, -1])])
    assert np.array_equal(stats.input_norms, [1.0, 1.0])
    assert np.array_equal(stats.intermediate_norms, [1.0, 0.0])
    assert stats.token_count == 1


def test_batch_partition_invariance(rng):
    w = rand_mlp(rng, 8, 12)
    x = rng.standard_normal((64, 8)).astype(np.float32)
    one = calibrate_mlp(w, [Tensor2D(x)])
    two = calibrate_mlp(w, [Tensor2D(x[:30]), Tensor2D(x[30:])])
    np.testing.assert_allclose(one.input_norms, two.input_norms, rtol=1e-6)
    np.testing.assert_allclose(
        one.intermediate_norms, two.intermediate_norms, rtol=1e-6
    )
    assert one.token_count == two.token_count == 64


def test_intermediate_norms_match_dense_oracle(rng):
    from glupruner import mlp_forward

    w = rand_mlp(rng, 32, 64)
    batches = [
        Tensor2D(rng.standard_normal((512, 32)).astype(np.float32)) for _ in range(8)
    ]
    stats = calibrate_mlp(w, batches)
    y_full = np.vstack([mlp_forward(w, b)[0].data for b in batches])
    np.testing.assert_allclose(
        stats.intermediate_norms, column_norms(y_full), rtol=1e-5
    )
    np.testing.assert_allclose(
        stats.input_norms, column_norms(np.vstack([b.data for b in batches])), rtol=1e-5
    )


def test_input_norm_scale_covariance(rng):
    w = rand_mlp(rng, 6, 10)
    x = rng.standard_normal((20, 6)).astype(np.float32)
    s1 = calibrate_mlp(w, [Tensor2D(x)])
    s2 = calibrate_mlp(w, [Tensor2D(2.0 * x)])
    np.testing.assert_allclose(s2.input_norms, 2.0 * s1.input_norms, rtol=1e-6)


def test_empty_calibration_rejected(rng):
    w = rand_mlp(rng, 4, 6)
    with pytest.raises(EmptyCalibrationError):
        calibrate_mlp(w, [])


def test_calibrate_linear(rng):
    x = rng.standard_normal((50, 8)).astype(np.float32)
    norms, count = calibrate_linear([Tensor2D(x)], dim=8)
    assert count == 50
    np.testing.assert_allclose(norms, column_norms(x), rtol=1e-6)


def test_batches_from_tensor_file():
    tf = TensorFile(
        entries={
            "x.10": Tensor2D.from_list(1, 2, [3, 4]),
            "x.2": Tensor2D.from_list(1, 2, [1, 2]),
            "other": Tensor2D.from_list(1, 2, [9, 9]),
        }
    )
    batches = batches_from_tensor_file(tf)
    assert len(batches) == 2
    assert np.array_equal(batches[0].data, [[1, 2]])
    assert np.array_equal(batches[1].data, [[3, 4]])


def test_synthetic_batches_reproducible():
    a = np.vstack([b.data for b in synthetic_batches(300, 8, outliers=2, scale=5.0, seed=9)])
    b = np.vstack([b.data for b in synthetic_batches(300, 8, outliers=2, scale=5.0, seed=9)])
    assert np.array_equal(a, b)
    assert a.shape == (300, 8)
    c = np.vstack([b.data for b in synthetic_batches(300, 8, outliers=2, scale=5.0, seed=10)])
    assert not np.array_equal(a, c)


def test_synthetic_outlier_columns_have_larger_norms():
    batches = list(synthetic_batches(4096, 16, outliers=3, scale=10.0, seed=3))
    x = np.vstack([b.data for b in batches])
    norms = column_norms(x)
    top3 = set(np.argsort(norms)[-3:])
    plain = sorted(set(range(16)) - top3)
    assert min(norms[i] for i in top3) > 5 * max(norms[i] for i in plain)
