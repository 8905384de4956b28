"""Stream optimizers: pinned single-step examples, truncation invariants,
implicit fixed-point accuracy, and cross-algorithm consistency checks."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from numpy.testing import assert_allclose, assert_array_equal

from streamci.model import (
    CovarianceKind,
    DataPoint,
    Dataset,
    ModelKind,
    ModelSpec,
    covariance_factor,
    loss_grad,
    make_theta_star,
    sample_dataset,
)
from streamci.optim import (
    ALGORITHM_NAMES,
    WARM_START_STEP,
    AlgorithmKind,
    ConstantStep,
    PolynomialStep,
    _implicit_update,
    advance,
    gradient_truncate,
    init_state,
    run_stream,
    step_size,
    warm_start,
)
from streamci.statutil import RngStream


def _linear_data(n, d, seed, cov=CovarianceKind.IDENTITY):
    spec = ModelSpec(ModelKind.LINEAR, d, cov)
    return spec, sample_dataset(spec, covariance_factor(spec), RngStream(seed, 0), n)


class TestStepSize:
    def test_polynomial_first_step_is_c(self):
        assert step_size(PolynomialStep(0.5), 1) == 0.5

    def test_polynomial_decay(self):
        assert step_size(PolynomialStep(0.5, 0.505), 100) == pytest.approx(0.048862, abs=1e-6)

    def test_constant(self):
        assert step_size(ConstantStep(0.01), 12345) == 0.01

    def test_step_index_positive(self):
        with pytest.raises(ValueError):
            step_size(ConstantStep(0.1), 0)

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_constant_validation(self, bad):
        with pytest.raises(ValueError):
            ConstantStep(bad)

    @pytest.mark.parametrize("c,gamma", [(0.0, 0.505), (1.0, 0.5), (1.0, 1.0), (1.0, 1.5)])
    def test_polynomial_validation(self, c, gamma):
        with pytest.raises(ValueError):
            PolynomialStep(c, gamma)


class TestAlgorithmKind:
    def test_all_names_construct(self):
        for name in ALGORITHM_NAMES:
            assert AlgorithmKind(name).name == name

    def test_averaged_flag(self):
        averaged = {name for name in ALGORITHM_NAMES if AlgorithmKind(name).averaged}
        assert averaged == {"asgd", "implicit-avg"}

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            AlgorithmKind("adam")

    @pytest.mark.parametrize(
        "kwargs",
        [{"eps2": 0.0}, {"eps2": 1.5}, {"sigma": 0.0}, {"beta": 0.0}, {"beta": 0.6}],
    )
    def test_hyperparameter_validation(self, kwargs):
        with pytest.raises(ValueError):
            AlgorithmKind("truncated", **kwargs)


class TestInitState:
    def test_noisy_requires_rng(self):
        with pytest.raises(ValueError):
            init_state(AlgorithmKind("noisy-truncated"), np.zeros(2))

    def test_others_reject_rng(self):
        with pytest.raises(ValueError):
            init_state(AlgorithmKind("sgd"), np.zeros(2), rng=RngStream(0, 0))

    def test_copies_theta0(self):
        theta0 = np.ones(3)
        state = init_state(AlgorithmKind("sgd"), theta0)
        state.theta[0] = 99.0
        assert theta0[0] == 1.0
        assert state.t == 0 and np.all(state.avg == 0.0)


class TestWarmStart:
    def test_empty_stream_is_origin(self):
        assert_array_equal(warm_start(ModelKind.LINEAR, 4, []), np.zeros(4))

    def test_three_step_recursion(self):
        # theta <- theta - 0.001 * (theta - 1) starting from 0.
        p = DataPoint(np.array([1.0]), 1.0)
        out = warm_start(ModelKind.LINEAR, 1, [p, p, p])
        assert_allclose(out, [0.002997001], atol=1e-9)
        assert WARM_START_STEP == 0.001


class TestAdvancePinned:
    def test_sgd_single_step(self):
        state = init_state(AlgorithmKind("sgd"), np.zeros(1))
        advance(state, ConstantStep(0.5), ModelKind.LINEAR, DataPoint(np.array([1.0]), 1.0))
        assert_allclose(state.theta, [0.5])
        assert_allclose(state.avg, [0.5])
        assert state.t == 1

    def test_implicit_single_step(self):
        # (1 + eta x x')^{-1} (theta + eta y x) = 1/2 for theta=1, y=0, eta=1.
        state = init_state(AlgorithmKind("implicit-last"), np.ones(1))
        advance(state, ConstantStep(1.0), ModelKind.LINEAR, DataPoint(np.array([1.0]), 0.0))
        assert_allclose(state.theta, [0.5], atol=1e-12)

    def test_root_first_step_matches_sgd(self):
        p = DataPoint(np.array([1.0, -2.0]), 0.7)
        root = init_state(AlgorithmKind("root"), np.array([0.3, 0.1]))
        sgd = init_state(AlgorithmKind("sgd"), np.array([0.3, 0.1]))
        advance(root, ConstantStep(0.2), ModelKind.LINEAR, p)
        advance(sgd, ConstantStep(0.2), ModelKind.LINEAR, p)
        assert_array_equal(root.theta, sgd.theta)
        assert_array_equal(root.v, loss_grad(ModelKind.LINEAR, np.array([0.3, 0.1]), p))


class TestGradientTruncate:
    def test_half_mass_threshold(self):
        kappa, out = gradient_truncate(np.array([3.0, 0.0, 2.0]), 0.5)
        assert kappa == 2.0
        assert_array_equal(out, [3.0, 0.0, 2.0])

    def test_ties_at_threshold_survive(self):
        kappa, out = gradient_truncate(np.array([2.0, -2.0, 1.0]), 1.0)
        assert kappa == 2.0
        assert_array_equal(out, [2.0, -2.0, 0.0])

    def test_zero_gradient(self):
        kappa, out = gradient_truncate(np.zeros(2), 0.5)
        assert kappa == 0.0
        assert_array_equal(out, np.zeros(2))

    def test_budget_never_reached_keeps_all(self):
        kappa, out = gradient_truncate(np.array([5.0, 5.0]), 0.1)
        assert kappa == 5.0
        assert_array_equal(out, [5.0, 5.0])

    def test_single_coordinate(self):
        kappa, out = gradient_truncate(np.array([-7.0]), 0.3)
        assert kappa == 7.0
        assert_array_equal(out, [-7.0])

    def test_eps2_validation(self):
        for bad in (0.0, 1.0001, -0.5):
            with pytest.raises(ValueError):
                gradient_truncate(np.ones(2), bad)

    def test_input_not_mutated(self):
        g = np.array([1.0, 10.0])
        gradient_truncate(g, 0.9)
        assert_array_equal(g, [1.0, 10.0])

    @given(
        g=hnp.arrays(
            np.float64,
            st.integers(1, 8),
            elements=st.floats(-100.0, 100.0, allow_nan=False),
        ),
        eps2=st.floats(0.01, 1.0),
    )
    def test_invariants(self, g, eps2):
        kappa, out = gradient_truncate(g, eps2)
        # Coordinates pass through untouched or are zeroed, by strict |g| < kappa.
        assert_array_equal(out, np.where(np.abs(g) < kappa, 0.0, g))
        # kappa is an observed magnitude whenever the squared norm is nonzero
        # in float; a squared-norm underflow keeps everything with kappa = 0.
        total = float((g * g).sum())
        if total > 0.0:
            assert kappa in np.abs(g)
        else:
            assert kappa == 0.0
            assert_array_equal(out, g)
        # Dropped squared mass never exceeds the eps2 budget.
        kept = float((out * out).sum())
        assert kept >= (1.0 - eps2) * total - 1e-9 * max(total, 1.0)


class TestImplicitUpdate:
    def test_linear_closed_form(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            d = int(rng.integers(1, 6))
            theta = rng.standard_normal(d)
            x = rng.standard_normal(d)
            y = float(rng.standard_normal())
            eta = float(rng.uniform(0.01, 2.0))
            got = _implicit_update(ModelKind.LINEAR, theta, x, y, eta)
            want = np.linalg.solve(np.eye(d) + eta * np.outer(x, x), theta + eta * y * x)
            assert_allclose(got, want, rtol=1e-9, atol=1e-10)

    @pytest.mark.parametrize("model_kind", [ModelKind.LINEAR, ModelKind.LOGISTIC])
    def test_fixed_point_residual_along_run(self, model_kind):
        spec = ModelSpec(model_kind, 3, CovarianceKind.TOEPLITZ)
        data = sample_dataset(spec, covariance_factor(spec), RngStream(22, 0), 1000)
        sched = PolynomialStep(0.5)
        state = init_state(AlgorithmKind("implicit-last"), np.zeros(3))
        for p in data:
            before = state.theta.copy()
            advance(state, sched, model_kind, p)
            eta = step_size(sched, state.t)
            residual = state.theta - (before - eta * loss_grad(model_kind, state.theta, p))
            assert np.linalg.norm(residual) <= 1e-10 * (1.0 + np.linalg.norm(state.theta))

    def test_zero_step_direction_is_identity(self):
        theta = np.array([1.0, 2.0])
        p = DataPoint(np.array([1.0, 0.5]), float(np.array([1.0, 0.5]) @ theta))
        assert_array_equal(_implicit_update(ModelKind.LINEAR, theta, p.x, p.y, 0.3), theta)


class TestRootReduction:
    def test_zero_weight_recovers_sgd(self, monkeypatch):
        monkeypatch.setattr("streamci.optim._root_weight", lambda t: 0.0)
        _, data = _linear_data(100, 3, seed=23)
        sched = PolynomialStep(0.5)
        root = init_state(AlgorithmKind("root"), np.zeros(3))
        sgd = init_state(AlgorithmKind("sgd"), np.zeros(3))
        for p in data:
            advance(root, sched, ModelKind.LINEAR, p)
            advance(sgd, sched, ModelKind.LINEAR, p)
            assert_array_equal(root.theta, sgd.theta)


class TestAveraging:
    @pytest.mark.parametrize("name", ALGORITHM_NAMES)
    def test_running_average_matches_batch_mean(self, name):
        kind = AlgorithmKind(name)
        _, data = _linear_data(1000, 3, seed=24)
        rng = RngStream(24, 9) if name == "noisy-truncated" else None
        state = init_state(kind, np.zeros(3), rng=rng)
        sched = PolynomialStep(0.5)
        iterates = []
        for p in data:
            advance(state, sched, ModelKind.LINEAR, p)
            iterates.append(state.theta.copy())
        assert_allclose(state.avg, np.mean(iterates, axis=0), rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("name", ALGORITHM_NAMES)
    def test_run_stream_reports_declared_estimate(self, name):
        kind = AlgorithmKind(name)
        _, data = _linear_data(50, 2, seed=25)
        sched = PolynomialStep(0.5)
        rng = RngStream(25, 9) if name == "noisy-truncated" else None
        reported = run_stream(kind, sched, ModelKind.LINEAR, np.zeros(2), data,
                              rng=rng.clone() if rng else None)
        state = init_state(kind, np.zeros(2), rng=rng.clone() if rng else None)
        for p in data:
            advance(state, sched, ModelKind.LINEAR, p)
        assert_array_equal(reported, state.avg if kind.averaged else state.theta)


class TestNoisyTruncated:
    def test_vanishing_noise_recovers_truncated(self):
        _, data = _linear_data(100, 3, seed=26)
        sched = PolynomialStep(0.5)
        noisy = init_state(
            AlgorithmKind("noisy-truncated", sigma=1e-12), np.zeros(3), rng=RngStream(26, 9)
        )
        plain = init_state(AlgorithmKind("truncated"), np.zeros(3))
        for p in data:
            advance(noisy, sched, ModelKind.LINEAR, p)
            advance(plain, sched, ModelKind.LINEAR, p)
        assert_allclose(noisy.theta, plain.theta, atol=1e-6)

    def test_noise_scale_enters_update(self):
        p = DataPoint(np.array([1.0]), 0.0)
        small = init_state(AlgorithmKind("noisy-truncated", sigma=1e-12), np.zeros(1),
                           rng=RngStream(27, 9))
        large = init_state(AlgorithmKind("noisy-truncated", sigma=10.0), np.zeros(1),
                           rng=RngStream(27, 9))
        advance(small, ConstantStep(1.0), ModelKind.LINEAR, p)
        advance(large, ConstantStep(1.0), ModelKind.LINEAR, p)
        assert not np.allclose(small.theta, large.theta)


class TestRunStream:
    def test_empty_stream_raises(self):
        with pytest.raises(ValueError):
            run_stream(AlgorithmKind("sgd"), ConstantStep(0.1), ModelKind.LINEAR, np.zeros(2), [])

    def test_noiseless_stationary_point_is_fixed(self):
        theta_star = make_theta_star(3)
        rng = np.random.default_rng(28)
        X = np.column_stack([np.ones(40), rng.standard_normal((40, 2))])
        y = np.array([float(X[i] @ theta_star) for i in range(40)])
        data = Dataset(X, y)
        out = run_stream(
            AlgorithmKind("asgd"), PolynomialStep(0.5), ModelKind.LINEAR, theta_star, data
        )
        assert_array_equal(out, theta_star)

    def test_asgd_converges_across_replications(self):
        spec = ModelSpec(ModelKind.LINEAR, 5, CovarianceKind.IDENTITY)
        chol = covariance_factor(spec)
        sched = PolynomialStep(0.5)
        close = 0
        reps = 50
        for rep in range(reps):
            data = sample_dataset(spec, chol, RngStream(29, rep), 10_000)
            est = run_stream(AlgorithmKind("asgd"), sched, ModelKind.LINEAR, np.zeros(5), data)
            close += np.linalg.norm(est - spec.theta_star) < 0.2
        assert close >= 0.95 * reps
