import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dntsc import DistributedNTSC, DistributedNTSCC
from dntsc.exceptions import InputError, ShapeError
from dntsc.harness.data import synth_pairs


@pytest.fixture(scope="module")
def X():
    return np.stack([np.stack([p.x1, p.x2]) for p in synth_pairs(3, (16, 32), seed=1)])


def test_params_and_clone():
    est = DistributedNTSC(preset="micro", weight=8.0, epochs=2)
    params = est.get_params()
    assert params["weight"] == 8.0 and params["preset"] == "micro"
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(K=2)
    assert est.K == 2


def test_not_fitted():
    with pytest.raises(NotFittedError):
        DistributedNTSC().transform(np.zeros((1, 2, 16, 32, 3)))


@pytest.mark.parametrize("bad,err", [
    (np.zeros((1, 2, 16, 30, 3)), ShapeError),
    (np.zeros((1, 3, 16, 32, 3)), ShapeError),
    (np.full((1, 2, 16, 32, 3), 2.0), InputError),
    (np.full((1, 2, 16, 32, 3), np.nan), InputError),
])
def test_fit_validates_input(bad, err):
    with pytest.raises(err):
        DistributedNTSC(preset="micro", epochs=1).fit(bad)


def test_ntsc_fit_transform_inverse(X):
    est = DistributedNTSC(preset="micro", epochs=1, random_state=0).fit(X)
    codes = est.transform(X)
    assert codes.shape == (3, 2) and all(isinstance(c, bytes) for c in codes.ravel())
    R = est.inverse_transform(codes)
    assert R.shape == X.shape
    assert np.array_equal(R, est.predict(X))
    assert np.isfinite(est.score(X))
    assert len(est.history_) == 1 and len(est.accounting_) == 3
    with pytest.raises(ShapeError):
        est.transform(np.zeros((1, 2, 32, 32, 3)))
    pts = est.rd_points(X, label="x")
    assert [p.user for p in pts] == ["1", "2", "mean"]


def test_ntsc_fit_is_reproducible(X):
    a = DistributedNTSC(preset="micro", epochs=1, random_state=4).fit(X).transform(X)
    b = DistributedNTSC(preset="micro", epochs=1, random_state=4).fit(X).transform(X)
    assert all(x == y for x, y in zip(a.ravel(), b.ravel()))


def test_ntscc_fit_transform_inverse(X):
    est = DistributedNTSCC(preset="micro", epochs=1, bandwidths=(8, 16), snr_db=5.0).fit(X)
    lat = est.transform(X)
    assert lat.shape == (3, 2, 8, 1, 2)
    R = est.inverse_transform(lat)
    assert R.shape == X.shape and 0 <= R.min() and R.max() <= 1
    assert np.isfinite(est.score(X))
