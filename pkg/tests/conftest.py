import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)


@st.composite
def memories(draw, max_p=4, max_n=4, elements=finite):
    p = draw(st.integers(1, max_p))
    n = draw(st.integers(1, max_n))
    return draw(arrays(np.float64, (p, n), elements=elements))


@st.composite
def memory_and_state(draw, max_p=4, max_n=4):
    xi = draw(memories(max_p, max_n))
    v = draw(arrays(np.float64, xi.shape[1], elements=finite))
    return xi, v


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
