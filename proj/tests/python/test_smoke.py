import math

import numpy as np
import pytest

import icl_lab


def test_covariances_and_gamma0():
    s0 = icl_lab.pretrain_covariance(4, 2, 0.1)
    assert np.allclose(np.diag(s0), [0.1, 0.1, 1.0, 1.0])
    st = icl_lab.posttest_covariance(4, 2, 0.1)
    assert np.allclose(np.diag(st), [1.1, 1.1, 1.0, 1.0])
    g = icl_lab.gamma0_inverse(s0, 10)
    assert g.shape == (4, 4)
    assert np.all(np.linalg.eigvalsh(g) > 0)


def test_pinv_matches_numpy():
    a = np.arange(12.0).reshape(3, 4)
    assert np.allclose(icl_lab.pinv(a), np.linalg.pinv(a))


def test_batch_is_seeded():
    a = icl_lab.posttrain_covariance(6, 3, 0.1, 0.1, 0.2)
    b1 = icl_lab.gen_prompt_batch(a, 5, 8, seed=3)
    b2 = icl_lab.gen_prompt_batch(a, 5, 8, seed=3)
    assert b1.size == 5 and b1.dim == 6
    assert np.array_equal(b1.signal, b2.signal)
    assert len(b1.covariances) == 5


def test_sft_minimizer_zero_loss_when_underdetermined():
    d, B = 6, 4
    a = icl_lab.posttrain_covariance(d, 3, 0.1, 0.1, 0.2)
    batch = icl_lab.gen_prompt_batch(a, B, 20, seed=1)
    g = icl_lab.gamma0_inverse(icl_lab.pretrain_covariance(d, 3, 0.1), 20)
    v = icl_lab.sft_minimizer(batch.signal, batch.omega, g, 0.2)
    assert np.allclose(v @ batch.signal, -0.2 * batch.omega, atol=1e-9)
    assert np.allclose(icl_lab.sft_closed_form(batch, g, 0.2), v)


def test_os_gradient_matches_finite_difference():
    a = icl_lab.posttest_covariance(3, 1, 0.1)
    batch = icl_lab.gen_prompt_batch(a, 4, 10, seed=2)
    v = -0.4 * np.eye(3)
    g = icl_lab.os_grad(v, batch, 3)
    h = 1e-6
    e = np.zeros((3, 3))
    e[1, 2] = 1.0
    fd = (icl_lab.os_loss(v + h * e, batch, 3) - icl_lab.os_loss(v - h * e, batch, 3)) / (2 * h)
    assert fd == pytest.approx(g[1, 2], rel=1e-6, abs=1e-10)


def test_posttest_exact_vs_mc():
    sigma = np.diag([1.0, 2.0])
    v = -0.5 * np.eye(2)
    exact = icl_lab.posttest_error_exact(v, sigma, 10)
    rep = icl_lab.posttest_error_mc(v, sigma, 10, 1, 20000, seed=4)
    assert abs(rep["mean"] - exact) <= 4 * rep["stderr"]
    assert rep["exact"] == pytest.approx(exact)


def test_theory_pole_and_components():
    c = icl_lab.theory_components(0.4, gamma=0.6)
    assert 0.5 * c["w1"] + 0.5 * c["w2"] == pytest.approx(0.4, abs=1e-12)
    assert c["F"] > 0
    with pytest.raises(icl_lab.DomainError):
        icl_lab.theory_components(1.0)
    f0, f_inf, fp0 = icl_lab.theory_endpoints(gamma=0.6)
    assert math.isfinite(f0) and math.isfinite(f_inf) and fp0 < 0


def test_run_experiment_csv():
    assert "theory-curve" in icl_lab.experiment_names()
    csv = icl_lab.run_experiment(
        {"experiment": "theory-curve", "d": "100", "m": "50", "n": "200", "beta": "0.5,2", "trials": "0"}
    )
    lines = csv.strip().split("\n")
    assert lines[0].split(",") == icl_lab.schema("theory-curve")
    assert len(lines) == 3


def test_config_errors_raise():
    with pytest.raises(icl_lab.ConfigError):
        icl_lab.run_experiment({"experiment": "sft-sweep-B", "d": "10", "m": "10"})
    with pytest.raises(icl_lab.ConfigError):
        icl_lab.run_experiment({"colour": "blue"})
