"""scikit-learn style wrappers around the functional core.

The estimators hold configuration in ``__init__`` (exposed through
``get_params``/``set_params``), learn state in ``fit`` (attributes ending in
an underscore) and delegate all numerics to the module functions.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_forms, check_grid_vectors, check_lambdas
from .cross_section import CrossSectionDomain, dirichlet_modes
from .spectral import CG_TOL, EIG_TOL, count_below, smallest_eigenpairs
from .weyl import (ScanThresholds, build_singular_family, certify_scan, decide,
                   weyl_quotient)


class DirichletModes(BaseEstimator):
    """Cross-section eigenpairs; ``fit`` takes a CrossSectionDomain."""

    def __init__(self, count=6, eig_tol=EIG_TOL):
        self.count = count
        self.eig_tol = eig_tol

    def fit(self, domain, y=None):
        if not isinstance(domain, CrossSectionDomain):
            raise TypeError("fit expects a CrossSectionDomain")
        self.modes_ = dirichlet_modes(domain, self.count, self.eig_tol)
        self.energies_ = self.modes_.energies
        self.E1_ = self.modes_.E1
        return self

    def transform(self, X):
        """Coefficients of fiber vectors (rows, interior unknowns) in the fitted modes."""
        check_is_fitted(self, "modes_")
        X = check_grid_vectors(X, self.modes_.modes.shape[1])
        return X @ self.modes_.modes.T * self.modes_.grid.cell_volume


class LayerSpectrum(BaseEstimator):
    """Lowest eigenpairs of a pencil; ``fit`` takes DiscreteForms."""

    def __init__(self, n_eigenvalues=6, eig_tol=EIG_TOL, preconditioner="auto", shift=0.0):
        self.n_eigenvalues = n_eigenvalues
        self.eig_tol = eig_tol
        self.preconditioner = preconditioner
        self.shift = shift

    def fit(self, forms, y=None):
        check_forms(forms)
        res = smallest_eigenpairs(forms, self.n_eigenvalues, self.eig_tol,
                                  preconditioner=self.preconditioner, shift=self.shift)
        self.forms_ = forms
        self.eigenvalues_ = res.values
        self.eigenvectors_ = res.vectors
        self.residuals_ = res.residuals
        self.n_iter_ = res.iterations
        return self

    def transform(self, X):
        """M-inner products of grid vectors (rows) with the fitted eigenvectors."""
        check_is_fitted(self, "eigenvectors_")
        X = check_grid_vectors(X, self.forms_.n)
        return (X * self.forms_.mass) @ self.eigenvectors_

    def inverse_transform(self, C):
        check_is_fitted(self, "eigenvectors_")
        return np.atleast_2d(C) @ self.eigenvectors_.T

    def predict(self, thresholds):
        """Number of eigenvalues of the fitted pencil below each threshold."""
        check_is_fitted(self, "forms_")
        return np.array([count_below(self.forms_, t) for t in check_lambdas(thresholds)])


class WeylCertifier(BaseEstimator):
    """Weyl-criterion certification of spectral parameters.

    ``fit(forms, modes)`` binds a pencil and its cross-section modes;
    ``transform(lambdas)`` returns the quotient table (one row per lambda),
    ``predict(lambdas)`` the decisions and ``scan(lambdas)`` a full ScanReport.
    """

    def __init__(self, n_members=3, r0=16.0, slope_max=-0.3, c_disc=2.0, floor_slack=0.2,
                 gap_ratio=1.0, region=None, dispersion="continuum", cg_tol=CG_TOL, workers=None):
        self.n_members = n_members
        self.r0 = r0
        self.slope_max = slope_max
        self.c_disc = c_disc
        self.floor_slack = floor_slack
        self.gap_ratio = gap_ratio
        self.region = region
        self.dispersion = dispersion
        self.cg_tol = cg_tol
        self.workers = workers

    def thresholds(self):
        return ScanThresholds(self.slope_max, self.c_disc, self.floor_slack, self.r0, self.n_members,
                              self.gap_ratio)

    def fit(self, forms, modes):
        check_forms(forms)
        if modes.grid.shape != forms.grid.fiber.shape:
            raise ValueError("cross-section modes were computed on a different fiber grid")
        # fails early when the radius schedule does not fit the truncated base
        build_singular_family(forms.grid, modes, modes.E1, self.n_members, self.r0,
                              region=self.region, dispersion=self.dispersion)
        self.forms_ = forms
        self.modes_ = modes
        self.E1_ = modes.E1
        self.radii_ = self.r0 * 2.0 ** np.arange(self.n_members)
        return self

    def transform(self, lambdas):
        check_is_fitted(self, "forms_")
        rows = []
        for lam in check_lambdas(lambdas):
            fam = build_singular_family(self.forms_.grid, self.modes_, lam, self.n_members, self.r0,
                                        region=self.region, dispersion=self.dispersion,
                                        mass=self.forms_.mass)
            rows.append(weyl_quotient(self.forms_, fam, lam, self.cg_tol).values)
        return np.array(rows)

    def scan(self, lambdas):
        check_is_fitted(self, "forms_")
        return certify_scan(self.forms_, self.modes_, check_lambdas(lambdas), self.thresholds(),
                            region=self.region, dispersion=self.dispersion, workers=self.workers,
                            cg_tol=self.cg_tol)

    def predict(self, lambdas):
        return np.array(self.scan(lambdas).decisions)

    def decide(self, quotients, lambdas, eps_hat, spacing=None):
        """Decisions from a precomputed quotient table (no solves)."""
        check_is_fitted(self, "forms_")
        h = max(self.forms_.grid.spacing)
        th = self.thresholds()
        lambdas = check_lambdas(lambdas)
        spacing = [None] * len(lambdas) if spacing is None else spacing
        return np.array([decide(q, self.radii_, lam, h, e, th, s)
                         for q, lam, e, s in zip(np.atleast_2d(quotients), lambdas, eps_hat, spacing)])
