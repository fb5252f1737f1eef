import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from layerlab.cross_section import CrossSectionDomain, dirichlet_modes
from layerlab.discretization import LayerGrid, assemble_forms
from layerlab.exceptions import DomainTooShort
from layerlab.estimators import DirichletModes, LayerSpectrum, WeylCertifier
from layerlab.geometry import ImmersedBase, constant_profile, fermi_metric
from layerlab._validation import check_forms, check_grid_vectors, check_lambdas

import oracles


@pytest.fixture(scope="module")
def strip():
    dom = CrossSectionDomain.interval(np.pi, cells=8)
    grid = LayerGrid.strip(64.0, 128, dom)
    forms = assemble_forms(fermi_metric(ImmersedBase.curve([constant_profile(0.0)]), None, grid))
    return dom, forms, dirichlet_modes(dom, 2)


def test_params_round_trip():
    for est in (DirichletModes(count=3), LayerSpectrum(n_eigenvalues=4, shift=0.5),
                WeylCertifier(r0=4.0, c_disc=1.5)):
        p = est.get_params()
        c = clone(est)
        assert c.get_params() == p
        key = next(iter(p))
        est.set_params(**{key: p[key]})
    assert WeylCertifier(gap_ratio=2.0).thresholds().gap_ratio == 2.0


def test_not_fitted():
    with pytest.raises(NotFittedError):
        DirichletModes().transform(np.zeros((1, 3)))
    with pytest.raises(NotFittedError):
        LayerSpectrum().predict([1.0])
    with pytest.raises(NotFittedError):
        WeylCertifier().transform([1.0])


def test_dirichlet_modes(strip):
    dom, _, _ = strip
    est = DirichletModes(count=3).fit(dom)
    exact = oracles.discrete_dirichlet_1d(8, np.pi)[:3]
    assert np.allclose(est.energies_, exact, rtol=1e-9)
    C = est.transform(est.modes_.modes)
    assert np.allclose(C, np.eye(3), atol=1e-9)
    with pytest.raises(TypeError):
        DirichletModes().fit("interval")
    with pytest.raises(ValueError):
        est.transform(np.zeros((2, 5)))


def test_layer_spectrum(strip):
    _, forms, _ = strip
    est = LayerSpectrum(n_eigenvalues=3, shift=0.5).fit(forms)
    w = oracles.dense_eigvals(forms.K, forms.mass, 3)
    assert np.allclose(est.eigenvalues_, w, rtol=1e-9)
    C = est.transform(est.eigenvectors_.T)
    assert C.shape == (3, 3) and np.allclose(C, np.eye(3), atol=1e-8)
    back = est.inverse_transform(C)
    assert np.allclose(back, est.eigenvectors_.T, atol=1e-8)
    thr = [w[0] - 0.01, w[2] + 1e-6]
    assert list(est.predict(thr)) == [0, 3]


def test_weyl_certifier(strip):
    _, forms, modes = strip
    est = WeylCertifier(r0=4.0, workers=1).fit(forms, modes)
    assert np.array_equal(est.radii_, [4.0, 8.0, 16.0])
    lams = [est.E1_ - 0.3, est.E1_ + 0.5]
    Q = est.transform(lams)
    assert Q.shape == (2, 3)
    rep = est.scan(lams)
    assert np.allclose(Q, rep.quotients)
    assert list(est.predict(lams)) == rep.decisions
    assert rep.decisions[0] == "rejected"
    assert list(est.decide(Q, lams, rep.eps_hat, rep.level_spacing)) == rep.decisions
    with pytest.raises(DomainTooShort):
        WeylCertifier(r0=32.0).fit(forms, modes)
    with pytest.raises(ValueError):
        WeylCertifier().fit(forms, dirichlet_modes(CrossSectionDomain.interval(1.0, cells=12), 1))


def test_validation_helpers(strip):
    _, forms, _ = strip
    assert check_forms(forms) is forms
    with pytest.raises(TypeError):
        check_forms(object())
    assert check_lambdas(2.0).shape == (1,)
    with pytest.raises(ValueError):
        check_lambdas([1.0, np.nan])
    assert check_grid_vectors(np.zeros(4), 4).shape == (1, 4)
    with pytest.raises(ValueError):
        check_grid_vectors(np.zeros((2, 3)), 4)
