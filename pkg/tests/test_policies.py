"""Policy selection rules, the polytope solver, drift diagnostics, engines."""

import math

import numpy as np
import pytest

from spnsched import policies
from spnsched.errors import ConfigurationError, NumericError
from spnsched.policies import (DriftTerms, PolicySpec, drift_series, drift_terms,
                               lyapopt_index, lyapopt_select, make_engine,
                               maxweight_index, maxweight_select)
from spnsched.scheduling import (CapacityRegion, boundary_sample, finite_set,
                                 polytope_set, sample_integer_set)


def residual_objective(q, d):
    r = np.maximum(np.asarray(q, float) - np.asarray(d, float), 0.0)
    return float(r @ r)


def segment_points(v0, v1, count):
    s = np.linspace(0.0, 1.0, count)[:, None]
    return (1.0 - s) * np.asarray(v0, float) + s * np.asarray(v1, float)


# ---------------------------------------------------------------- MaxWeight


def test_maxweight_frozen():
    dset = finite_set([[2, 0], [0, 2], [1, 1]])
    assert np.array_equal(maxweight_select(np.array([3.0, 1.0]), dset), [2, 0])
    assert np.array_equal(maxweight_select(np.array([0.0, 3.0]), dset), [0, 2])


def test_maxweight_tie_flag():
    dset = finite_set([[2, 0], [0, 2]])
    i, tied = maxweight_index(np.array([1.0, 1.0]), dset)
    assert i == 0 and tied
    i, tied = maxweight_index(np.array([2.0, 1.0]), dset)
    assert i == 0 and not tied


def test_maxweight_zero_queue_convention():
    # empty system: first row, not a tie
    dset = finite_set([[2, 0], [0, 2]])
    i, tied = maxweight_index(np.zeros(2), dset)
    assert i == 0 and not tied


def test_maxweight_scale_invariance():
    rng = np.random.default_rng(42)
    for _ in range(50):
        n = int(rng.integers(1, 5))
        dset = finite_set(rng.uniform(0, 3, size=(int(rng.integers(2, 7)), n)))
        q = rng.uniform(0.1, 5, size=n)
        base, _ = maxweight_index(q, dset)
        for c in (0.1, 7.0, 1000.0):
            i, _ = maxweight_index(c * q, dset)
            assert i == base


def test_maxweight_shape_check():
    with pytest.raises(ConfigurationError):
        maxweight_select(np.zeros(3), finite_set([[1, 2]]))


# ------------------------------------------------------------------ LyapOpt


def test_lyapopt_finite_frozen():
    dset = finite_set([[3, 0], [0, 3], [1, 1]])
    assert np.array_equal(lyapopt_select(np.array([2.0, 2.0]), dset), [1, 1])
    # one long queue: drain it
    assert np.array_equal(lyapopt_select(np.array([5.0, 0.0]), dset), [3, 0])


def test_lyapopt_finite_tie_and_zero():
    dset = finite_set([[2, 0], [0, 2]])
    i, tied = lyapopt_index(np.array([1.0, 1.0]), dset)
    assert i == 0 and tied
    i, tied = lyapopt_index(np.zeros(2), dset)
    assert i == 0 and not tied


def test_lyapopt_finite_enumeration_optimal():
    rng = np.random.default_rng(1234)
    for _ in range(2000):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(2, 8))
        dset = finite_set(rng.uniform(0, 4, size=(m, n)))
        q = rng.uniform(0, 6, size=n)
        chosen = lyapopt_select(q, dset)
        g_star = residual_objective(q, chosen)
        g_all = [residual_objective(q, p) for p in dset.points]
        assert g_star == min(g_all)


def test_lyapopt_polytope_zero_queue():
    dset = polytope_set([[4, 0], [0, 4]])
    assert np.array_equal(lyapopt_select(np.zeros(2), dset), [4, 0])


def test_lyapopt_polytope_interior_solution():
    # q inside the reachable box: residual can be driven to exactly 0
    dset = polytope_set([[4, 0], [0, 4]])
    d = lyapopt_select(np.array([2.0, 2.0]), dset)
    assert residual_objective([2.0, 2.0], d) <= 1e-10


def test_lyapopt_polytope_matches_segment_grid():
    rng = np.random.default_rng(777)
    for _ in range(10):
        v0 = rng.uniform(0, 5, size=2)
        v1 = rng.uniform(0, 5, size=2)
        q = rng.uniform(0, 6, size=2)
        dset = polytope_set([v0, v1])
        d = lyapopt_select(q, dset)
        got = residual_objective(q, d)
        grid = segment_points(v0, v1, 100_001)
        r = np.maximum(q[None, :] - grid, 0.0)
        best = float(np.einsum("ij,ij->i", r, r).min())
        assert got <= best + 1e-8
        assert got >= -1e-12


def waterfill_simplex_value(q, total):
    """Exact optimum of the residual objective over {d >= 0, sum d = total}.

    Residuals equalize at a threshold tau with sum(min(tau, q_i)) = sum(q)-total
    when the queues hold more than total, else the objective is 0.
    """
    q = np.asarray(q, float)
    excess = q.sum() - total
    if excess <= 0:
        return 0.0
    lo, hi = 0.0, float(q.max())
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        if np.minimum(tau, q).sum() < excess:
            lo = tau
        else:
            hi = tau
    tau = 0.5 * (lo + hi)
    r = np.minimum(tau, q)
    return float(r @ r)


def test_lyapopt_polytope_matches_waterfilling():
    rng = np.random.default_rng(606)
    for _ in range(30):
        n = int(rng.integers(2, 6))
        total = float(rng.uniform(2, 10))
        dset = polytope_set(total * np.eye(n))
        q = rng.uniform(0, 8, size=n)
        d = lyapopt_select(q, dset)
        got = residual_objective(q, d)
        assert got == pytest.approx(waterfill_simplex_value(q, total), abs=1e-8)


def test_lyapopt_polytope_face_optimum_regression():
    """Asymmetric state whose optimum sits on a simplex face; a plain
    conditional-gradient loop stalls here around gap 6e-7."""
    q = np.array([20.57, 19.51, 20.65, 11.67])
    total = 4.0
    dset = polytope_set(total * np.eye(4))
    d = lyapopt_select(q, dset)
    got = residual_objective(q, d)
    assert got == pytest.approx(waterfill_simplex_value(q, total), abs=1e-9)


def test_lyapopt_polytope_beats_every_vertex():
    rng = np.random.default_rng(31)
    for _ in range(40):
        n = int(rng.integers(2, 5))
        m = int(rng.integers(2, 6))
        dset = polytope_set(rng.uniform(0, 4, size=(m, n)))
        q = rng.uniform(0, 6, size=n)
        d = lyapopt_select(q, dset)
        got = residual_objective(q, d)
        for p in dset.points:
            assert got <= residual_objective(q, p) + 1e-10


def test_lyapopt_nonconvergence_raises():
    dset = polytope_set([[4, 0], [0, 4]])
    opts = PolicySpec(variant="lyapopt", max_iterations=1, tolerance=1e-14)
    with pytest.raises(NumericError) as err:
        lyapopt_select(np.array([5.0, 5.0]), dset, opts)
    assert err.value.iterations == 1
    assert err.value.gap is not None and err.value.gap > 1e-14


# ---------------------------------------------------------------- line search


def test_linesearch_hand_cases():
    # h(eta) = max(1 - 2 eta, 0)^2: flat beyond 0.5
    eta = policies._linesearch(np.array([1.0]), np.array([2.0]), 1.0)
    assert eta == pytest.approx(0.5)
    # monotone decreasing on [0, 1]: take the full step
    eta = policies._linesearch(np.array([2.0]), np.array([1.0]), 1.0)
    assert eta == pytest.approx(1.0)
    # descent direction pointing the wrong way: stay put
    eta = policies._linesearch(np.array([1.0]), np.array([-1.0]), 1.0)
    assert eta == 0.0


def test_linesearch_beats_grid():
    rng = np.random.default_rng(2718)

    def h(a, b, eta):
        r = np.maximum(a - eta * b, 0.0)
        return float(r @ r)

    for _ in range(60):
        n = int(rng.integers(1, 6))
        a = rng.normal(0, 2, size=n)
        b = rng.normal(0, 2, size=n)
        eta_max = float(rng.uniform(0.2, 2.0))
        eta = policies._linesearch(a, b, eta_max)
        assert 0.0 <= eta <= eta_max
        grid_best = min(h(a, b, e) for e in np.linspace(0, eta_max, 2001))
        assert h(a, b, eta) <= grid_best + 1e-9


# -------------------------------------------------------------------- drift


def test_drift_terms_frozen():
    dt = drift_terms([2.0, 0.0], [3.0, 0.0], [1.0, 1.0])
    assert dt.first_order == pytest.approx(-8.0)
    assert dt.second_order == pytest.approx(7.0)
    assert dt.f_value == pytest.approx(-1.0)
    zero = drift_terms([1.0, 1.0], [1.0, 1.0], [1.0, 1.0])
    assert zero.first_order == 0.0 and zero.second_order == 0.0


def test_drift_terms_shape_check():
    with pytest.raises(ConfigurationError):
        drift_terms([1.0], [1.0, 2.0], [1.0])


def test_drift_series_slot0_fallback():
    q = np.array([[0.0, 0.0], [1.0, 2.0]])
    d = np.array([[1.0, 0.0], [0.0, 1.0]])
    means = {0: np.array([0.5, 0.5]), 1: np.array([2.0, 2.0])}
    first, second = drift_series(q, d, lambda t: means[max(t, 0)])
    # slot 0 uses its own mean, slot 1 uses slot 0's
    dt0 = drift_terms(q[0], d[0], means[0])
    dt1 = drift_terms(q[1], d[1], means[0])
    assert first[0] == dt0.first_order and second[0] == dt0.second_order
    assert first[1] == dt1.first_order and second[1] == dt1.second_order


def test_maxweight_drift_sign_property():
    rng = np.random.default_rng(9090)
    for _ in range(40):
        n = int(rng.integers(2, 5))
        dset = sample_integer_set(n, rng)
        lam = np.maximum(boundary_sample(CapacityRegion(dset), rng) - 1e-6, 0.0)
        q = rng.uniform(0, 50, size=n)
        d = maxweight_select(q, dset)
        assert drift_terms(q, d, lam).first_order <= 1e-9


def test_lyapopt_objective_dominates_in_set_rate():
    # when the rate vector is itself an element, g(chosen) <= g(lambda)
    rng = np.random.default_rng(55)
    for _ in range(40):
        n = int(rng.integers(2, 5))
        dset = sample_integer_set(n, rng)
        lam = dset.points[int(rng.integers(dset.size))]
        q = rng.uniform(0, 20, size=n)
        chosen = lyapopt_select(q, dset)
        assert residual_objective(q, chosen) <= residual_objective(q, lam)


# ------------------------------------------------------------------- engines


def test_policy_spec_validation():
    with pytest.raises(ConfigurationError):
        PolicySpec(variant="unknown")
    with pytest.raises(ConfigurationError):
        PolicySpec(variant="fixed_schedule")
    with pytest.raises(ConfigurationError):
        PolicySpec(variant="lyapopt", tolerance=0.0)
    with pytest.raises(ConfigurationError):
        PolicySpec(variant="lyapopt", max_iterations=0)


def test_policy_spec_json_round_trip():
    for spec in (PolicySpec(variant="maxweight"),
                 PolicySpec(variant="fixed_schedule", index=2),
                 PolicySpec(variant="lyapopt", max_iterations=500,
                            tolerance=1e-8)):
        back = PolicySpec.from_json(spec.to_json())
        assert back.variant == spec.variant
        if spec.variant == "fixed_schedule":
            assert back.index == spec.index
        if spec.variant == "lyapopt":
            assert back.max_iterations == spec.max_iterations
            assert back.tolerance == spec.tolerance


def test_engine_tie_counter():
    dset = finite_set([[2, 0], [0, 2]])
    engine = make_engine(PolicySpec(variant="maxweight"), dset)
    rng = np.random.default_rng(0)
    engine.select(np.array([1.0, 1.0]), 0, rng)
    engine.select(np.array([1.0, 1.0]), 1, rng)
    engine.select(np.array([2.0, 1.0]), 2, rng)
    engine.select(np.zeros(2), 3, rng)  # empty system, not counted
    assert engine.tie_count == 2
    engine.reset()
    assert engine.tie_count == 0


def test_random_vertex_engine_seeded():
    dset = finite_set([[1, 0], [0, 1], [1, 1]])
    engine = make_engine(PolicySpec(variant="random_vertex"), dset)
    picks1 = [tuple(engine.select(np.ones(2), t, np.random.default_rng(5)))
              for t in range(4)]
    picks2 = [tuple(engine.select(np.ones(2), t, np.random.default_rng(5)))
              for t in range(4)]
    assert picks1 == picks2
    rng = np.random.default_rng(8)
    varied = {tuple(engine.select(np.ones(2), t, rng)) for t in range(60)}
    assert len(varied) == 3


def test_fixed_schedule_engine():
    dset = finite_set([[1, 0], [0, 1]])
    engine = make_engine(PolicySpec(variant="fixed_schedule", index=1), dset)
    out = engine.select(np.array([5.0, 0.0]), 0, np.random.default_rng(0))
    assert np.array_equal(out, [0, 1])
    with pytest.raises(ConfigurationError):
        make_engine(PolicySpec(variant="fixed_schedule", index=7), dset)


def test_lyapopt_engine_dispatch():
    fin = make_engine(PolicySpec(variant="lyapopt"), finite_set([[1, 0]]))
    poly = make_engine(PolicySpec(variant="lyapopt"), polytope_set([[1, 0]]))
    assert type(fin) is not type(poly)
    # polytope engine honors the zero-queue shortcut
    out = poly.select(np.zeros(2), 0, np.random.default_rng(0))
    assert np.array_equal(out, [1, 0])
