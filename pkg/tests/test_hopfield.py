import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from attnbm.energy import energy_b, softmax
from attnbm.hopfield import retrieve, update_step

from conftest import memory_and_state


def _separated_memories(rng, p=10, n=64, scale=5.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    return scale * q.T


def test_update_step_examples(rng):
    xi = rng.standard_normal((1, 4))
    np.testing.assert_array_equal(update_step(rng.standard_normal(4), xi), xi[0])
    assert np.all(update_step(rng.standard_normal(3), np.zeros((5, 3))) == 0)


def test_update_step_recovers_memory_from_noise(rng):
    xi = _separated_memories(rng)
    for mu in range(10):
        out = update_step(xi[mu] + 0.1 * rng.standard_normal(64), xi)
        assert out @ xi[mu] / (np.linalg.norm(out) * np.linalg.norm(xi[mu])) >= 0.99


def test_update_step_dimension_mismatch():
    with pytest.raises(ValueError):
        update_step(np.zeros(3), np.zeros((2, 4)))


def test_update_step_batch(rng):
    xi = rng.standard_normal((3, 4))
    vs = rng.standard_normal((5, 4))
    np.testing.assert_allclose(update_step(vs, xi), [update_step(v, xi) for v in vs], rtol=1e-14)


@given(memory_and_state(max_p=6, max_n=5))
def test_update_is_convex_combination(case):
    xi, v = case
    w = softmax(xi @ v)
    np.testing.assert_allclose(update_step(v, xi), w @ xi, atol=1e-12)
    assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-12


@given(memory_and_state(max_p=6, max_n=5), st.randoms(use_true_random=False))
def test_update_permutation_equivariant(case, rnd):
    xi, v = case
    perm = list(range(xi.shape[0]))
    rnd.shuffle(perm)
    np.testing.assert_allclose(update_step(v, xi[perm]), update_step(v, xi), atol=1e-12)


@given(memory_and_state(max_p=6, max_n=5))
def test_single_update_does_not_increase_energy(case):
    xi, v = case
    assert energy_b(update_step(v, xi), xi) <= energy_b(v, xi) + 1e-9


def test_energy_descent_sweep():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n, p = rng.integers(1, 6, size=2)
        xi = rng.standard_normal((p, n)) * rng.uniform(0.1, 4.0)
        v = rng.standard_normal(n) * 3
        assert energy_b(update_step(v, xi), xi) <= energy_b(v, xi) + 1e-9


def test_retrieve_fixed_point(rng):
    xi = _separated_memories(rng)
    fixed = retrieve(xi[0], xi, max_iters=200).final_state
    res = retrieve(fixed, xi)
    assert res.iterations == 1 and res.converged
    assert np.linalg.norm(res.final_state - fixed) < 1e-8


def test_retrieve_single_memory(rng):
    xi = rng.standard_normal((1, 3))
    res = retrieve(rng.standard_normal(3), xi)
    np.testing.assert_array_equal(res.final_state, xi[0])
    # first step lands on xi_1, second confirms convergence
    assert res.iterations <= 2 and res.converged


def test_retrieve_trace_non_increasing_on_random_starts():
    rng = np.random.default_rng(1)
    xi = _separated_memories(rng, p=10, n=16, scale=2.0)
    for _ in range(1000):
        res = retrieve(rng.standard_normal(16) * 2, xi, max_iters=20)
        assert len(res.energy_trace) == res.iterations + 1
        assert np.all(np.diff(res.energy_trace) <= 1e-9)


def test_retrieve_reports_non_convergence(rng):
    xi = rng.standard_normal((4, 3))
    res = retrieve(rng.standard_normal(3) * 10, xi, max_iters=1, tol=0.0)
    assert not res.converged and res.iterations == 1


def test_retrieve_validation():
    with pytest.raises(ValueError):
        retrieve(np.zeros(2), np.ones((1, 2)), max_iters=0)
