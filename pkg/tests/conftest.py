import warnings

import numpy as np
import pytest

from nmcat import liouvillian as lv
from nmcat import meanfield
from nmcat.errors import TruncationWarning


class ModelCache:
    """Session-wide cache of calibrated models, steady states, and spectra.

    Keyed by (n, m, nbar, dim) so heavy solves are shared between unit and
    acceptance tests.
    """

    def __init__(self):
        self._params = {}
        self._steady = {}
        self._spectra = {}

    def params(self, n, m, nbar, dim, gamma1=1.0) -> lv.ModelParams:
        key = (n, m, nbar, dim, gamma1)
        if key not in self._params:
            base = lv.ModelParams(n=n, m=m, eta_n=1.0, dim=dim, gamma1=gamma1)
            res = meanfield.eta_for_photon_number(nbar, base, rel_tol=1e-3)
            self._params[key] = base.with_(eta_n=res.eta)
        return self._params[key]

    def steady(self, n, m, nbar, dim, gamma1=1.0) -> np.ndarray:
        key = (n, m, nbar, dim, gamma1)
        if key not in self._steady:
            p = self.params(n, m, nbar, dim, gamma1)
            self._steady[key] = lv.steady_states(p, check=False)[0]
        return self._steady[key]

    def spectrum(self, n, m, nbar, dim, k, gamma1=1.0) -> lv.Spectrum:
        key = (n, m, nbar, dim, gamma1)
        found = self._spectra.get(key)
        if found is None or len(found.eigenvalues) < k:
            p = self.params(n, m, nbar, dim, gamma1)
            found = lv.spectrum(p, k=k)
            self._spectra[key] = found
        return found


@pytest.fixture(scope="session")
def cache():
    return ModelCache()


@pytest.fixture(autouse=True)
def _quiet_truncation():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        yield
