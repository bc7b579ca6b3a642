import numpy as np
import pytest

from mocon import catalog
from mocon.errors import ChartNotOrthonormal
from mocon.geometry import (classify_fitness, curvature_from_geodesics, curvature_tensor,
                            geodesic_ivp, leaf_return_displacement, orthogonal_complement_basis)
from mocon.io import read_table
from mocon.metric import MetricModel, evaluate_metric


def test_curvature_tensor_examples(bead, pendulum, identity):
    assert np.isclose(curvature_tensor(bead.model, [3.0], [0.0]).components[0, 0, 0], 6.0)
    assert np.isclose(curvature_tensor(pendulum.model, [np.pi / 4], [0.0]).components[0, 0, 0], -1.0)
    assert np.allclose(curvature_tensor(identity.model, [0.3], [0.2]).components, 0.0)


def test_curvature_tensor_symmetric(double_pendulum):
    c = curvature_tensor(double_pendulum.model, [0.3, -0.2], [0.1, 0.0]).components
    assert np.allclose(c, np.swapaxes(c, 1, 2))


def test_classification(pendulum, bead, identity):
    nfit = classify_fitness(catalog.nfit_fixture().model, [-1, -1], [1, 1])
    assert nfit.classification == "strongly N-fit" and nfit.n_fit
    v = classify_fitness(pendulum.model, [-np.pi, 0], [np.pi, 0])
    assert v.classification == "generic" and abs(v.max_curvature - 1.0) < 1e-3
    assert classify_fitness(bead.model, [0.1, -1], [3, 1]).classification == "generic"
    assert classify_fitness(identity.model, [-1, -1], [1, 1]).classification == "strongly N-fit"


def test_n_fit_but_not_strong():
    # G12 != 0 with E constant: the u-u block of G^-1 is constant but g^{i,N+a} is not zero
    m = MetricModel(1, 1, lambda q, u: np.array([[2.0, 1.0], [1.0, 1.0]]))
    assert classify_fitness(m, [-1, -1], [1, 1]).classification == "N-fit"


def test_geodesic_straight_line(identity):
    arc = geodesic_ivp(identity.model, [0.1], [0.2], [1.0], [2.0], length=1.0, step=1e-2)
    assert np.allclose(arc.q[:, 0], 0.1 + arc.s) and np.allclose(arc.u[:, 0], 0.2 + 2 * arc.s)


def test_geodesic_initial_acceleration():
    e = catalog.synthetic_linear()
    arc = geodesic_ivp(e.model, [0.0], [0.0], [0.0], [1.0], length=0.01, step=1e-4)
    # Euler-Lagrange for diag(1, 1 + q): q'' = 1/2 e'(q) u'^2 = 1/2
    assert abs(arc.q[-1, 0] / (0.5 * 0.01 ** 2) - 0.5) < 1e-2


def test_geodesic_hamiltonian_conservation(pendulum, tmp_path):
    arc = geodesic_ivp(pendulum.model, [0.3], [0.0], [0.5], [1.0], length=1.0, step=1e-4)
    assert arc.hamiltonian_drift() <= 1e-9
    arc.to_csv(tmp_path / "arc.csv")
    header, data = read_table(tmp_path / "arc.csv")
    assert header == ["s", "q1", "u1", "p1", "pi1"] and data.shape == (len(arc.s), 5)


def test_orthogonal_complement(identity, pendulum):
    assert np.allclose(orthogonal_complement_basis(identity.model, [0.0], [0.0]), [[0.0, 1.0]])
    for q in (0.3, 1.2, -2.0):
        J = orthogonal_complement_basis(pendulum.model, [q], [0.0])
        assert np.isclose(J[0, 0], np.sin(q) * J[0, 1])
        G = evaluate_metric(pendulum.model, [q], [0.0])
        assert np.isclose(J[0] @ G @ J[0], 1.0, atol=1e-10)
        assert np.allclose((G @ J[0])[:1], 0.0, atol=1e-12)


def test_leaf_return_zero_for_n_fit():
    e = catalog.nfit_fixture()
    for s in (0.1, 0.01):
        for w in (1.0, -2.0):
            assert np.abs(leaf_return_displacement(e.model, [0.0], [0.0], [w], s)).max() <= 1e-10


@pytest.mark.parametrize("w,expected", [(1.0, 0.5), (2.0, 2.0)])
def test_curvature_limit(w, expected):
    lim = curvature_from_geodesics(catalog.synthetic_linear().model, [0.0], [0.0], [w])
    assert abs(lim.limit[0] - expected) <= 1e-4
    assert abs(lim.tensor[0] - expected) <= 1e-12
    err = np.abs(lim.ratios[:, 0] - expected)
    # remainder decays linearly in s
    assert np.all(err / lim.s <= 2 * err[0] / lim.s[0])
    assert err[-1] < err[0] / 50


def test_curvature_limit_identity(identity):
    lim = curvature_from_geodesics(identity.model, [0.0], [0.0], [1.0], s_sequence=[0.1, 0.05])
    assert np.abs(lim.limit).max() <= 1e-10


def test_chart_not_orthonormal(pendulum):
    with pytest.raises(ChartNotOrthonormal):
        curvature_from_geodesics(pendulum.model, [0.3], [0.0], [1.0])


@pytest.mark.parametrize("name", ["pendulum", "bead", "double-pendulum"])
def test_tensoriality_under_control_rescaling(name):
    """With u = 2 v the components pick up the factor (du/dv)^2 = 4 in v-coordinates."""
    e = catalog.build(name)
    N, M = e.model.dim_q, e.model.dim_u
    J = np.diag(np.r_[np.ones(N), 2.0 * np.ones(M)])
    scaled = MetricModel(N, M, lambda q, v: J @ e.model.metric(q, 2.0 * v) @ J)
    for q, u in catalog.sample_points(e, 5, seed=13):
        a = curvature_tensor(e.model, q, u).components
        b = curvature_tensor(scaled, q, u / 2.0).components
        assert np.allclose(b, 4.0 * a, rtol=1e-6, atol=1e-8)
