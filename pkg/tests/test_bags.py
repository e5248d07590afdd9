import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from llpfc.bags import (
    Bag,
    Dataset,
    LLPInstance,
    _bag_counts,
    empirical_proportion,
    generate_bags,
    pooled_prior,
    read_bags_jsonl,
    read_dataset_csv,
    sample_gamma_uniform,
    write_bags_jsonl,
    write_dataset_csv,
)
from llpfc.errors import DataError
from llpfc.simplex import is_prob_vector


def balanced(n_per_class, C=2, d=2, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(C), n_per_class)
    return Dataset(rng.normal(size=(y.size, d)), y, C)


def test_sample_gamma_is_deterministic_and_valid():
    a = sample_gamma_uniform(2, np.random.default_rng(7))
    b = sample_gamma_uniform(2, np.random.default_rng(7))
    assert is_prob_vector(a)
    np.testing.assert_array_equal(a, b)


def test_sample_gamma_mean_is_uniform():
    rng = np.random.default_rng(1)
    draws = np.array([sample_gamma_uniform(3, rng) for _ in range(100_000)])
    np.testing.assert_allclose(draws.mean(axis=0), 1 / 3, atol=0.01)


def test_sample_gamma_rejects_one_class():
    with pytest.raises(ValueError):
        sample_gamma_uniform(1, np.random.default_rng(0))


def test_generate_bags_are_disjoint():
    inst = generate_bags(balanced(100), 10, 4, np.random.default_rng(0))
    assert inst.n_bags == 4
    assert all(b.size == 10 for b in inst.bags)
    union = np.concatenate([b.indices for b in inst.bags])
    assert np.unique(union).size == 40


def test_bag_size_one_gives_one_hot():
    inst = generate_bags(balanced(50), 1, 20, np.random.default_rng(0))
    for b in inst.bags:
        assert sorted(b.gamma_hat) == [0.0, 1.0]


def test_generate_bags_needs_enough_points():
    with pytest.raises(DataError):
        generate_bags(balanced(10), 10, 3, np.random.default_rng(0))


def test_overflow_is_redistributed():
    # class 0 runs out early; the overflow lands on class 1
    y = np.r_[np.zeros(3, int), np.ones(30, int)]
    ds = Dataset(np.zeros((33, 1)), y, 2)
    inst = generate_bags(ds, 11, 3, np.random.default_rng(0))
    assert sum(b.size for b in inst.bags) == 33


def test_exhausted_classes_are_named():
    with pytest.raises(DataError, match=r"classes \[0, 1\] exhausted"):
        _bag_counts(np.array([0.5, 0.5]), 10, np.array([3, 4]), np.random.default_rng(0))


def test_gamma_hat_is_exact_histogram():
    ds = balanced(200, C=3)
    inst = generate_bags(ds, 37, 10, np.random.default_rng(3))
    for b in inst.bags:
        counts = np.bincount(ds.labels[b.indices], minlength=3)
        np.testing.assert_array_equal(b.gamma_hat, counts / 37)
        assert is_prob_vector(b.gamma_hat)


def test_gamma_hat_is_unbiased():
    # E[gamma_hat] = gamma for a fixed governing proportion
    rng = np.random.default_rng(5)
    gamma = np.array([0.2, 0.5, 0.3])
    hats = rng.multinomial(64, gamma, size=10_000) / 64
    se = hats.std(axis=0, ddof=1) / np.sqrt(10_000)
    assert np.all(np.abs(hats.mean(axis=0) - gamma) <= 3 * se)


def test_generation_is_reproducible(tmp_path):
    ds = balanced(100)
    for name in ("a", "b"):
        inst = generate_bags(ds, 10, 5, np.random.default_rng(9), seed=9)
        write_bags_jsonl(tmp_path / name, inst)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_pooled_prior_examples():
    one = Bag([0, 1], [0.5, 0.5])
    np.testing.assert_array_equal(pooled_prior([one]), [0.5, 0.5])
    a, b = Bag(np.arange(10), [1, 0]), Bag(np.arange(10, 20), [0, 1])
    np.testing.assert_allclose(pooled_prior([a, b]), [0.5, 0.5])
    a, b = Bag(np.arange(30), [1, 0]), Bag(np.arange(30, 100), [0, 1])
    np.testing.assert_allclose(pooled_prior([a, b]), [0.3, 0.7], atol=1e-15)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=200))
def test_empirical_proportion_matches_counts(labels):
    p = empirical_proportion(labels, 5)
    np.testing.assert_array_equal(p, np.bincount(labels, minlength=5) / len(labels))
    assert is_prob_vector(p)


def test_bag_validation():
    with pytest.raises(DataError):
        Bag([], [1.0, 0.0])
    with pytest.raises(DataError):
        Bag([1, 1], [1.0, 0.0])


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), np.array([0, 1, 2]), 2)
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), np.array([0, 1]), 2)


def test_csv_round_trip(tmp_path):
    ds = balanced(5, C=3, d=4)
    write_dataset_csv(tmp_path / "d.csv", ds)
    back = read_dataset_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.n_classes == 3


def test_csv_errors_name_row_and_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x0,x1,label\n0.1,0.2,0\n0.3,oops,1\n")
    with pytest.raises(DataError, match="row 3, column 2"):
        read_dataset_csv(path)
    path.write_text("0.1,0.2,0\n0.3,1\n")
    with pytest.raises(DataError, match="row 2"):
        read_dataset_csv(path)


def test_bags_round_trip(tmp_path):
    ds = balanced(50)
    inst = generate_bags(ds, 8, 6, np.random.default_rng(1), seed=1)
    write_bags_jsonl(tmp_path / "b.jsonl", inst, {"bag_size": 8})
    back, meta = read_bags_jsonl(tmp_path / "b.jsonl", ds)
    assert meta == {"n_bags": 6, "C": 2, "seed": 1, "bag_size": 8}
    for a, b in zip(inst.bags, back.bags):
        np.testing.assert_array_equal(a.indices, b.indices)
        np.testing.assert_array_equal(a.gamma_hat, b.gamma_hat)
        np.testing.assert_array_equal(a.gamma_true, b.gamma_true)


def test_bags_file_errors(tmp_path):
    ds = balanced(10)
    path = tmp_path / "b.jsonl"
    path.write_text('{"n_bags": 1, "C": 2, "seed": 0}\n{"indices": [0, 1]}\n')
    with pytest.raises(DataError, match="line 2"):
        read_bags_jsonl(path, ds)
    path.write_text('{"n_bags": 1, "C": 3, "seed": 0}\n')
    with pytest.raises(DataError):
        read_bags_jsonl(path, ds)


def test_instance_rejects_out_of_range_index():
    ds = balanced(2)
    with pytest.raises(DataError):
        LLPInstance(ds, (Bag([0, 9], [0.5, 0.5]),))
