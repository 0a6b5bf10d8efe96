import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qplab.models import LyapunovCertificate, SystemSpec

settings.register_profile("qplab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "qplab"))


def linear_gradient_system(d=2, a=1.0):
    """b = -a x, sigma = I.  Gradient system with U = a|x|^2/2, so V(0, y) = a|y|^2."""
    eye = np.eye(d)

    def drift(x):
        return -a * np.asarray(x, float)

    def diffusion(x):
        x = np.asarray(x, float)
        return np.broadcast_to(eye, x.shape[:-1] + (d, d)).copy()

    def jac(x):
        x = np.asarray(x, float)
        return np.broadcast_to(-a * eye, x.shape[:-1] + (d, d)).copy()

    cert = LyapunovCertificate(
        V=lambda x: 0.5 * np.sum(np.asarray(x) ** 2, axis=-1),
        grad=lambda x: np.asarray(x, float),
        hess=lambda x: np.broadcast_to(eye, np.asarray(x).shape[:-1] + (d, d)).copy(),
        theta=1.0, eta=1.0, C=10.0, M=10.0)
    return SystemSpec("linear", d, d, drift, diffusion, jac, constant_diffusion=True,
                      certificate=cert)


@pytest.fixture
def linear_sys():
    return linear_gradient_system()
