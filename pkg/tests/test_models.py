import numpy as np
import pytest

from llpfc.bags import Dataset
from llpfc.errors import ConfigError, DataError
from llpfc.losses import softmax
from llpfc.models import Classifier, evaluate, init_classifier


def test_zero_init_linear_is_uniform_and_predicts_class_zero(rng):
    clf = init_classifier(4, 3)
    X = rng.normal(size=(20, 4))
    np.testing.assert_allclose(softmax(clf.scores(X)), 1 / 3)
    np.testing.assert_array_equal(clf.predict(X), 0)


def test_init_is_deterministic():
    a = init_classifier(5, 3, (8, 4), seed=11)
    b = init_classifier(5, 3, (8, 4), seed=11)
    assert a == b
    assert a != init_classifier(5, 3, (8, 4), seed=12)
    assert all(np.abs(W).max() <= 1 / np.sqrt(W.shape[0]) for W in a.params[::2])


def test_zero_width_rejected():
    with pytest.raises(ConfigError):
        init_classifier(3, 2, (0,))


def test_output_length_is_c(rng):
    clf = init_classifier(6, 4, (5,), seed=0)
    assert clf.scores(rng.normal(size=(7, 6))).shape == (7, 4)


def test_predict_examples():
    clf = Classifier((1, 2), [np.zeros((1, 2)), np.array([0.1, 0.9])])
    assert clf.predict_one([0.0]) == 1
    clf = Classifier((1, 3), [np.zeros((1, 3)), np.array([0.5, 0.5, 0.2])])
    assert clf.predict_one([3.0]) == 0
    with pytest.raises(DataError):
        clf.predict_one([1.0, 2.0])


def test_mlp_backward_matches_differences(rng):
    clf = init_classifier(3, 2, (4, 5), seed=1)
    X = rng.normal(size=(6, 3))
    R = rng.normal(size=(6, 2))
    S, acts = clf.forward(X)
    grads = clf.backward(acts, R)
    h = 1e-6
    for p, g in zip(clf.params, grads):
        for j in range(p.size):
            old = p.flat[j]
            p.flat[j] = old + h
            up = np.sum(R * clf.scores(X))
            p.flat[j] = old - h
            down = np.sum(R * clf.scores(X))
            p.flat[j] = old
            assert (up - down) / (2 * h) == pytest.approx(g.flat[j], abs=1e-7)


def test_evaluate_examples():
    X = np.array([[-1.0], [1.0], [-2.0], [2.0]])
    y = np.array([0, 1, 0, 1])
    perfect = Classifier((1, 2), [np.array([[-1.0, 1.0]]), np.zeros(2)])
    assert evaluate(perfect, Dataset(X, y, 2)) == 1.0
    assert evaluate(init_classifier(1, 2), Dataset(X, y, 2)) == 0.5
    with pytest.raises(DataError):
        evaluate(perfect, None)


def test_text_round_trip(tmp_path):
    clf = init_classifier(3, 4, (5,), seed=2)
    clf.save(tmp_path / "m.txt", {"seed": 2})
    text = (tmp_path / "m.txt").read_text()
    assert text.startswith("llpfc-model 1\n") and "meta seed 2" in text
    assert Classifier.load(tmp_path / "m.txt") == clf


def test_text_rejects_other_formats():
    with pytest.raises(DataError):
        Classifier.from_text("something else\nkind linear\ndims 1 2\n")


def test_text_rejects_truncated_parameters():
    text = init_classifier(2, 2).to_text()
    with pytest.raises(DataError):
        Classifier.from_text(text.rsplit("\n", 2)[0])
