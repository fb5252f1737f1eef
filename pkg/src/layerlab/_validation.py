"""Input validation helpers shared by the estimators."""

import numpy as np
import scipy.sparse as sp
from sklearn.utils.validation import check_array


def check_forms(forms):
    """Require a pencil-like object with a square sparse ``K`` and positive ``mass``."""
    K = getattr(forms, "K", None)
    mass = getattr(forms, "mass", None)
    if K is None or mass is None:
        raise TypeError("expected DiscreteForms-like input with attributes K and mass")
    if not sp.issparse(K) or K.shape[0] != K.shape[1]:
        raise ValueError("K must be a square sparse matrix")
    mass = np.asarray(mass)
    if mass.shape != (K.shape[0],) or np.any(mass <= 0) or not np.all(np.isfinite(mass)):
        raise ValueError("mass must hold one positive finite weight per unknown")
    return forms


def check_lambdas(lambdas):
    """1-D array of finite spectral parameters."""
    lam = check_array(np.atleast_1d(np.asarray(lambdas, dtype=float)).reshape(-1, 1),
                      ensure_all_finite=True).ravel()
    return lam


def check_grid_vectors(X, n_unknowns):
    """2-D array of grid vectors (one per row) matching the unknown count."""
    X = check_array(X, ensure_2d=False, dtype=float)
    X = np.atleast_2d(X)
    if X.shape[1] != n_unknowns:
        raise ValueError(f"grid vectors have {X.shape[1]} entries, the pencil has {n_unknowns} unknowns")
    return X
