import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile('ratecert', max_examples=60, deadline=None)
settings.load_profile('ratecert')

LOG_SPREAD = 3.0


def positive_vectors(n: int):
    """Interior points of R+^n with log-coordinates in [-3, 3]"""
    return arrays(np.float64, (n,), elements=st.floats(-LOG_SPREAD, LOG_SPREAD)).map(np.exp)


@st.composite
def psd_interior(draw, n: int = 2):
    """Interior points of S_n+ with log-eigenvalues in [-3, 3] and a random frame"""
    logs = draw(arrays(np.float64, (n,), elements=st.floats(-LOG_SPREAD, LOG_SPREAD)))
    angle = draw(st.floats(0.0, np.pi))
    if n == 2:
        Q = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    else:
        Q, _ = np.linalg.qr(np.random.default_rng(int(angle * 1e6)).standard_normal((n, n)))
    X = (Q * np.exp(logs)) @ Q.T
    return (X + X.T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
