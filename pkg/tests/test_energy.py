import math
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from attnbm.energy import (
    AttnBMModel,
    energy_b,
    enumerate_tuples,
    grad_energy_b,
    grad_log_partition,
    grad_nll,
    jensen_log_partition_bound,
    load_model,
    log_likelihood,
    log_partition,
    log_sum_exp,
    mean_nll,
    model_from_bytes,
    model_to_bytes,
    save_model,
    softmax,
)
from attnbm.exceptions import BudgetExceededError, FormatError, UnsupportedBetaError
from attnbm.oracles import central_difference, integrate_box, quad_log_partition

from conftest import finite, memories, memory_and_state

# Fixed instance; log Z frozen from adaptive cubature of exp(-beta E_B) at rtol 1e-12.
XI_N2P3 = np.array([[0.352, -0.571], [-0.381, 0.599], [0.992, -0.716]])
QUAD_LOGZ = {1: 3.3752583155833973, 2: 3.9570031029365587, 3: 4.818140888043398, 1.7: 3.7387153992620776}


# -- kernels -------------------------------------------------------------------

def test_log_sum_exp_examples():
    assert log_sum_exp(np.zeros(3)) == pytest.approx(math.log(3), rel=1e-15)
    assert log_sum_exp(np.array([1000.0, 1000.0])) == pytest.approx(1000 + math.log(2), rel=1e-15)
    x = np.array([0.3, -1.2, 2.5])
    assert log_sum_exp(x) == pytest.approx(math.log(math.fsum(math.exp(t) for t in x)), rel=1e-15)


def test_log_sum_exp_empty_raises():
    with pytest.raises(ValueError):
        log_sum_exp(np.array([]))
    with pytest.raises(ValueError):
        softmax(np.array([]))


def test_softmax_examples():
    np.testing.assert_allclose(softmax(np.zeros(3)), np.full(3, 1 / 3), rtol=1e-15)
    assert softmax(np.array([7.5]))[0] == 1.0
    e = math.e
    np.testing.assert_allclose(softmax(np.array([1.0, 2.0])), [1 / (1 + e), e / (1 + e)], rtol=1e-15)


@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-50, 50)), st.floats(-500, 500))
def test_softmax_translation_invariant_and_normalized(x, c):
    s = softmax(x)
    assert np.all(s > 0)
    assert abs(s.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(softmax(x + c), s, atol=1e-12)


# -- energy ----------------------------------------------------------------------

def test_energy_b_examples(rng):
    xi = rng.standard_normal((5, 3))
    assert energy_b(np.zeros(3), xi) == pytest.approx(-math.log(5), rel=1e-15)
    v = rng.standard_normal(3)
    assert energy_b(v, v[None, :]) == pytest.approx(-0.5 * v @ v, rel=1e-14)
    xi = rng.standard_normal((4, 3))
    ref = 0.5 * v @ v - math.log(math.fsum(math.exp(float(r @ v)) for r in xi))
    assert energy_b(v, xi) == pytest.approx(ref, rel=1e-14)


def test_energy_b_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        energy_b(np.zeros(2), np.zeros((3, 4)))


def test_energy_b_batch_matches_rows(rng):
    xi = rng.standard_normal((3, 4))
    vs = rng.standard_normal((6, 4))
    np.testing.assert_allclose(energy_b(vs, xi), [energy_b(v, xi) for v in vs], rtol=1e-14)


# -- model type and validation ---------------------------------------------------

def test_model_kind_inference_and_immutability():
    m = AttnBMModel(np.ones((2, 2)), 2)
    assert m.beta_kind == "integer" and m.integer_beta == 2
    r = AttnBMModel(np.ones((2, 2)), 1.5)
    assert r.beta_kind == "real" and r.integer_beta is None
    with pytest.raises(ValueError):
        m.xi[0, 0] = 5.0


@pytest.mark.parametrize("xi", [np.array([[np.nan, 1.0]]), np.array([[np.inf]]), np.zeros((0, 2))])
def test_model_rejects_bad_memory(xi):
    with pytest.raises(ValueError):
        AttnBMModel(xi, 1)


@pytest.mark.parametrize("beta", [0, -1.0, float("nan")])
def test_model_rejects_bad_beta(beta):
    with pytest.raises(ValueError):
        AttnBMModel(np.ones((1, 1)), beta)


def test_integer_kind_requires_integer_value():
    with pytest.raises(ValueError):
        AttnBMModel(np.ones((1, 1)), 1.5, beta_kind="integer")


# -- partition function --------------------------------------------------------

def test_log_partition_examples():
    assert log_partition(AttnBMModel(np.zeros((4, 3)), 1)) == pytest.approx(1.5 * math.log(2 * math.pi) + math.log(4), rel=1e-15)
    assert log_partition(AttnBMModel(np.array([[1.0, 0.0]]), 1)) == pytest.approx(math.log(2 * math.pi) + 0.5, rel=1e-15)


@pytest.mark.parametrize("beta", [1, 2, 3])
def test_log_partition_frozen_quadrature(beta):
    assert log_partition(AttnBMModel(XI_N2P3, beta)) == pytest.approx(QUAD_LOGZ[beta], rel=1e-6)


def test_log_partition_rejects_real_beta():
    with pytest.raises(UnsupportedBetaError):
        log_partition(AttnBMModel(XI_N2P3, 1.7))


def test_tuple_budget_guard():
    with pytest.raises(BudgetExceededError):
        log_partition(AttnBMModel(np.ones((10, 1)), 4), budget=1000)
    with pytest.raises(BudgetExceededError):
        enumerate_tuples(10, 3, budget=999)


def test_enumerate_tuples_lexicographic():
    t = enumerate_tuples(3, 2)
    assert t.tolist() == [[a, b] for a in range(3) for b in range(3)]


@given(memories(max_p=5, max_n=5))
def test_beta_one_reduction(xi):
    ref = 0.5 * xi.shape[1] * math.log(2 * math.pi) + log_sum_exp(0.5 * np.sum(xi * xi, axis=1))
    assert log_partition(AttnBMModel(xi, 1)) == pytest.approx(ref, rel=1e-13, abs=1e-13)


@pytest.mark.parametrize("beta", [1, 2, 3])
@pytest.mark.parametrize("n", [1, 2])
def test_likelihood_normalizes(beta, n):
    rng = np.random.default_rng(beta * 10 + n)
    model = AttnBMModel(rng.uniform(-1, 1, (3, n)), beta)
    r = float(np.max(np.linalg.norm(model.xi, axis=1))) + 12 / math.sqrt(beta)
    total, _ = integrate_box(lambda v: np.exp(log_likelihood(v, model)), [-r] * n, [r] * n)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_log_likelihood_at_single_memory_mode(rng):
    xi = rng.standard_normal((1, 3))
    assert log_likelihood(xi[0], AttnBMModel(xi, 1)) == pytest.approx(-1.5 * math.log(2 * math.pi), rel=1e-14)


# -- gradients -------------------------------------------------------------------

def test_grad_energy_b_examples(rng):
    v = rng.standard_normal(3)
    np.testing.assert_allclose(grad_energy_b(v, rng.standard_normal((1, 3))), -v[None, :], rtol=1e-15)
    assert np.all(grad_energy_b(np.zeros(3), rng.standard_normal((4, 3))) == 0)


@given(memory_and_state())
def test_grad_energy_b_finite_differences(case):
    xi, v = case
    fd = central_difference(lambda x: energy_b(v, x), xi)
    np.testing.assert_allclose(grad_energy_b(v, xi), fd, atol=1e-6)


def test_grad_log_partition_examples(rng):
    xi = rng.standard_normal((1, 4))
    np.testing.assert_allclose(grad_log_partition(AttnBMModel(xi, 1)), xi, rtol=1e-15)
    assert np.all(grad_log_partition(AttnBMModel(np.zeros((3, 2)), 2)) == 0)


@given(memories(max_p=3, max_n=3, elements=st.floats(-1.5, 1.5)), st.sampled_from([1, 2, 3]))
def test_grad_log_partition_finite_differences(xi, beta):
    fd = central_difference(lambda x: log_partition(AttnBMModel(x, beta)), xi)
    np.testing.assert_allclose(grad_log_partition(AttnBMModel(xi, beta)), fd, atol=1e-5)


def test_grad_log_partition_is_model_expectation(rng):
    """beta * grad log Z equals the model expectation of -beta grad E_B (quadrature)."""
    xi = rng.uniform(-1, 1, (2, 1))
    model = AttnBMModel(xi, 2)
    r = 14.0
    for mu in range(2):
        def f(v, mu=mu):
            return np.exp(log_likelihood(v, model)) * v[:, 0] * softmax(v @ xi.T, axis=1)[:, mu]
        val, _ = integrate_box(f, [-r], [r])
        # d log Z / d xi_mu = beta <v softmax_mu> under the model
        assert grad_log_partition(model)[mu, 0] == pytest.approx(2 * val, rel=1e-8)


def test_grad_nll_examples(rng):
    xi = rng.standard_normal((1, 3))
    np.testing.assert_allclose(grad_nll(np.zeros((1, 3)), AttnBMModel(xi, 1)), xi, rtol=1e-15)


@given(memories(max_p=3, max_n=3, elements=st.floats(-1.5, 1.5)),
       st.sampled_from([1, 2]), st.integers(0, 2**31 - 1))
def test_grad_nll_finite_differences(xi, beta, seed):
    batch = np.random.default_rng(seed).standard_normal((4, xi.shape[1]))
    fd = central_difference(lambda x: mean_nll(batch, AttnBMModel(x, beta)), xi)
    np.testing.assert_allclose(grad_nll(batch, AttnBMModel(xi, beta)), fd, atol=1e-5)


def test_grad_nll_shrinks_with_batch_size():
    """Batches drawn from the model itself give a gradient that vanishes as n grows."""
    from attnbm.gmm import sample, to_gmm
    rng = np.random.default_rng(7)
    model = AttnBMModel(rng.standard_normal((3, 2)), 1)
    norms = []
    for n in (100, 10_000, 1_000_000):
        x, _ = sample(to_gmm(model), rng, n)
        norms.append(np.linalg.norm(grad_nll(x, model)))
    assert norms[2] < norms[1] < norms[0]
    assert norms[2] < 0.02


def test_grad_nll_empty_batch():
    with pytest.raises(ValueError):
        grad_nll(np.zeros((0, 2)), AttnBMModel(np.ones((1, 2)), 1))


@given(memories(max_p=3, max_n=3, elements=st.floats(-2, 2)), st.integers(0, 2**31 - 1))
def test_small_gradient_step_decreases_nll(xi, seed):
    model = AttnBMModel(xi, 1)
    batch = np.random.default_rng(seed).standard_normal((5, xi.shape[1])) * 2
    g = grad_nll(batch, model)
    if np.linalg.norm(g) < 1e-6:
        return
    before = mean_nll(batch, model)
    step = 1e-3
    while step > 1e-10:  # line-search fallback
        after = mean_nll(batch, model.with_xi(xi - step * g))
        if after < before:
            break
        step /= 10
    assert after < before + 1e-10


# -- Jensen bound ---------------------------------------------------------------

def test_jensen_bound_frozen_quadrature():
    bound = jensen_log_partition_bound(AttnBMModel(XI_N2P3, 1.7))
    assert bound >= QUAD_LOGZ[1.7] - 1e-9


def test_jensen_bound_limits(rng):
    xi = rng.standard_normal((3, 2))
    near_one = jensen_log_partition_bound(AttnBMModel(xi, 1 + 1e-9))
    assert near_one == pytest.approx(log_partition(AttnBMModel(xi, 1)), rel=1e-8)
    single = rng.standard_normal((1, 2))
    for beta in (1.5, 2.0, 3.0):
        exact = quad_log_partition(single, beta)
        assert jensen_log_partition_bound(AttnBMModel(single, beta)) == pytest.approx(exact, rel=1e-9)


@pytest.mark.parametrize("beta", [1.0, 0.5])
def test_jensen_bound_requires_beta_above_one(beta):
    with pytest.raises(ValueError):
        jensen_log_partition_bound(AttnBMModel(np.ones((2, 1)), beta))


def test_jensen_bound_dominates_integer_beta(rng):
    for beta in (2, 3):
        xi = rng.standard_normal((3, 2))
        assert jensen_log_partition_bound(AttnBMModel(xi, beta)) >= log_partition(AttnBMModel(xi, beta)) - 1e-12


# -- ABM1 container ---------------------------------------------------------------

@given(memories(), st.one_of(st.integers(1, 5), st.floats(0.1, 5.0)))
def test_model_bytes_round_trip(xi, beta):
    m = AttnBMModel(xi, beta)
    back = model_from_bytes(model_to_bytes(m))
    assert back.beta == m.beta and back.beta_kind == m.beta_kind
    assert np.array_equal(back.xi, m.xi)


def test_model_bytes_layout():
    m = AttnBMModel(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]), 2)
    buf = model_to_bytes(m)
    assert buf[:4] == b"ABM1"
    assert struct.unpack_from("<IIdB", buf, 4) == (2, 3, 2.0, 0)
    assert np.frombuffer(buf[21:], "<f8").tolist() == [1, 2, 3, 4, 5, 6]
    assert len(buf) == 21 + 6 * 8


def test_model_bytes_errors():
    buf = model_to_bytes(AttnBMModel(np.ones((2, 2)), 1))
    with pytest.raises(FormatError) as exc:
        model_from_bytes(b"XXXX" + buf[4:])
    assert exc.value.offset == 0
    with pytest.raises(FormatError):
        model_from_bytes(buf[:-3])
    with pytest.raises(FormatError):
        model_from_bytes(buf[:20] + b"\x07" + buf[21:])


def test_save_load_model(tmp_path, rng):
    m = AttnBMModel(rng.standard_normal((3, 4)), 3)
    save_model(tmp_path / "m.abm", m)
    back = load_model(tmp_path / "m.abm")
    assert np.array_equal(back.xi, m.xi) and back.beta == 3
