import numpy as np
import pytest

from tltarnet import DataError, mean_ite, pehe
from tltarnet.metrics import (ReplicationResult, SUMMARY_COLUMNS, dispersion,
                              summarize)


def test_pehe_hand_values():
    assert pehe([1.0, 2.0], [0.0, 0.0]) == 2.5
    assert pehe([1.0, 1.0], [1.0, 1.0]) == 0.0
    with pytest.raises(DataError):
        pehe([1.0], [1.0, 2.0])
    with pytest.raises(DataError):
        pehe([], [])


def test_mean_ite_and_dispersion():
    assert mean_ite([1.0, 3.0]) == 2.0
    sd, se = dispersion([1.0, 3.0])
    assert np.isclose(sd, np.sqrt(2)) and np.isclose(se, 1.0)
    assert dispersion([4.0]) == (0.0, 0.0)
    with pytest.raises(DataError):
        mean_ite([])


def _rr(method, seed, mean, p, cita=None):
    return ReplicationResult(n_source=100, n_target=10, sampling="random",
                             method=method, seed=seed, mean_ite=mean,
                             pehe_sq=p, cita=cita)


def test_summarize_hand_fixture():
    results = [
        _rr("tarnet", 0, 2.0, 4.0, cita=0.2),
        _rr("tarnet", 1, 4.0, 16.0, cita=0.4),
        _rr("tl-tarnet", 0, 1.0, 1.0),
        _rr("tl-tarnet", 1, 1.0, 9.0),
    ]
    out = summarize(results, beta=1.0)
    assert [s.method for s in out] == ["tarnet", "tl-tarnet"]
    plain, tl = out
    assert plain.replications == 2
    assert plain.mean_ite == 3.0 and plain.bias == 2.0
    # SE of (2, 4): sd sqrt(2), / sqrt(2) = 1
    assert np.isclose(plain.se, 1.0)
    assert plain.pehe_sq_mean == 10.0
    assert plain.pehe_rmse_mean == 3.0  # mean of sqrt(4), sqrt(16)
    assert np.isclose(plain.cita_mean, 0.3)
    assert tl.bias == 0.0 and tl.cita_mean is None
    row = tl.row()
    assert list(row) == SUMMARY_COLUMNS
    assert row["cita_mean"] == ""


def test_summarize_single_replication_has_no_se():
    out = summarize([_rr("tarnet", 0, 1.5, 2.0)], beta=1.0)
    assert out[0].se is None and out[0].row()["se"] == ""


def test_summarize_empty_raises():
    with pytest.raises(DataError):
        summarize([], beta=1.0)
