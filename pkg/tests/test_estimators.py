import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from qstab.channels import Channel, dephasing
from qstab.estimators import CPTPProjector, QuasiLocalStabilizer, check_state_batch
from qstab.exceptions import NotQLSError
from qstab.sampling import haar_pure_state, trial_rng
from qstab.states import dicke, w_state

D42 = [[0, 1, 2], [1, 2, 3]]


def batch(d, m, seed=0):
    return np.array([haar_pure_state(d, trial_rng(seed, k)) for k in range(m)])


def test_stabilizer_reaches_target():
    est = QuasiLocalStabilizer(neighborhoods=D42).fit(dicke(4, 2))
    out = est.transform(batch(16, 3))
    assert out.shape == (3, 16, 16)
    assert all(tr.converged for tr in est.trajectories_)
    assert est.score(batch(16, 2, seed=1)) > -1e-9
    assert est.report_.decision


def test_stabilizer_refuses_non_qls():
    with pytest.raises(NotQLSError):
        QuasiLocalStabilizer(neighborhoods=[[0, 1], [1, 2]]).fit(w_state(3))


def test_stabilizer_override_builds_maps():
    est = QuasiLocalStabilizer(neighborhoods=[[0, 1], [1, 2]], override=True, max_steps=50).fit(w_state(3))
    assert len(est.maps_) == 2 and not est.report_.decision


def test_stabilizer_needs_factor_dims():
    with pytest.raises(ValueError):
        QuasiLocalStabilizer(neighborhoods=[[0]]).fit(np.eye(6) / 6)
    with pytest.raises(ValueError):
        QuasiLocalStabilizer().fit(dicke(4, 2))


def test_unfitted_transform():
    with pytest.raises(NotFittedError):
        QuasiLocalStabilizer(neighborhoods=D42).transform(batch(16, 1))


def test_clone_keeps_params():
    est = QuasiLocalStabilizer(neighborhoods=D42, max_steps=10)
    c = clone(est)
    assert c.get_params() == est.get_params()


def test_projector_dephases():
    Z = np.diag([1.0, -1.0]).astype(complex)
    proj = CPTPProjector().fit(Channel.unitary(Z))
    rho = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert np.allclose(proj.transform(rho)[0], np.eye(2) / 2, atol=1e-9)


def test_projector_from_kraus_array():
    proj = CPTPProjector(lam=0.3).fit(dephasing(2).kraus)
    rho = np.array([[0.7, 0.2], [0.2, 0.3]])
    assert np.allclose(proj.transform(rho)[0], np.diag([0.7, 0.3]))


def test_state_batch_validation():
    assert check_state_batch(np.eye(2) / 2).shape == (1, 2, 2)
    with pytest.raises(ValueError):
        check_state_batch(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        check_state_batch(np.eye(2) / 2, dim=4)
    with pytest.raises(ValueError):
        check_state_batch(np.diag([1.5, -0.5]))
