import numpy as np
import pytest

from qael.asymptotics import certify
from qael.models import CavityQubitParams, build_cavity_qubit, build_purcell_two_qubit
from qael.reduction import build_reduced_model

SIGMAM = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMAP = SIGMAM.T.copy()


@pytest.fixture(scope="session")
def cavity_params():
    return CavityQubitParams(kappa=10.0, g=0.1, u=1.0, n_trunc=16)


@pytest.fixture(scope="session")
def cavity(cavity_params):
    return build_cavity_qubit(cavity_params)


@pytest.fixture(scope="session")
def cavity_analysis(cavity):
    return certify(cavity.fast, cavity.tolerances)


@pytest.fixture(scope="session")
def cavity_reduced(cavity, cavity_analysis):
    return build_reduced_model(cavity.fast, cavity.slow, cavity.epsilon, 2,
                               analysis=cavity_analysis)


@pytest.fixture(scope="session")
def purcell():
    return build_purcell_two_qubit(1.0, 0.05)


@pytest.fixture(scope="session")
def purcell_reduced(purcell):
    return build_reduced_model(purcell.fast, purcell.slow, purcell.epsilon, 2)
