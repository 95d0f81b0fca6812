import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lcbf.bf_core import DegeneratePrecoderError, apply_power_constraint
from lcbf.harness.config import dbm_to_watt
from lcbf.harness.experiment import build_episode
from lcbf.lnn import autodiff as ad
from lcbf.lnn import checkpoint
from lcbf.lnn.adam import TrainState, adam_step
from lcbf.lnn.network import (NetworkSpec, as_vars, cfc_cell, count_params, featurize, init_params,
                              network_forward, zero_state)
from lcbf.lnn.ode import (LTCParams, leaky_closed_form, ltc_closed_form, ltc_gated_approx, ltc_ode_integrate,
                          ltc_rhs)
from lcbf.lnn.train import Episode, TrainConfig, TrainingDiverged, new_model, run_episode, train
from lcbf.rng import stream

from conftest import crandn, fd_check, pipeline_loss_fn, tiny_config


# ODE reference ---------------------------------------------------------------------

def test_ode_pure_decay():
    p = LTCParams(o_tau=np.array([1.0]), a=np.array([0.0]))
    x = ltc_ode_integrate(np.array([1.0]), lambda t: np.zeros(1), p, lambda i: np.zeros(1), 1.0, 0.01)
    assert x[0] == pytest.approx(math.exp(-1.0), abs=1e-8)


def test_ode_fixed_point():
    p = LTCParams(o_tau=np.array([0.7, 2.0]), a=np.zeros(2))
    x = ltc_ode_integrate(np.zeros(2), lambda t: np.ones(2), p, lambda i: 0.3 * i, 3.0, 0.05)
    np.testing.assert_array_equal(x, 0.0)


def test_ode_rejects_bad_step():
    p = LTCParams(o_tau=np.ones(1), a=np.zeros(1))
    with pytest.raises(ValueError):
        ltc_ode_integrate(np.ones(1), lambda t: np.ones(1), p, np.tanh, 1.0, 0.0)
    with pytest.raises(ValueError):
        LTCParams(o_tau=np.array([0.0]), a=np.zeros(1))


def _random_ltc(rng, D=6):
    return (rng.normal(size=D), LTCParams(o_tau=rng.uniform(0.1, 3.0, D), a=rng.normal(size=D)),
            rng.normal(size=D), rng.normal(size=(D, D)) / np.sqrt(D))


def test_closed_form_matches_rk4():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x0, p, i, A = _random_ltc(rng)
        head = lambda inp: np.logaddexp(0.0, A @ inp)
        t_end = float(rng.uniform(0.1, 3.0))
        ode = ltc_ode_integrate(x0, lambda t: i, p, head, t_end, 1e-3)
        cf = ltc_closed_form(x0, p.a, p.o_tau, head(i), t_end)
        np.testing.assert_allclose(ode, cf, rtol=1e-6, atol=1e-12)


def test_zero_target_variant_matches_its_closed_form():
    rng = np.random.default_rng(1)
    for _ in range(10):
        x0, p, i, A = _random_ltc(rng)
        head = lambda inp: np.logaddexp(0.0, A @ inp)
        ode = ltc_ode_integrate(x0, lambda t: i, p, head, 1.5, 1e-3, leak_to_bias=False)
        np.testing.assert_allclose(ode, leaky_closed_form(x0, p.a, p.o_tau, head(i), 1.5), rtol=1e-6, atol=1e-12)


def test_rhs_variants_agree_when_f_absent():
    p = LTCParams(o_tau=np.array([1.5]), a=np.array([0.0]))
    assert ltc_rhs(np.array([2.0]), 0.0, p, True) == ltc_rhs(np.array([2.0]), 0.0, p, False)


def test_closed_form_limits():
    x0, a = np.array([1.0, -2.0]), np.array([0.5, 0.3])
    np.testing.assert_array_equal(ltc_closed_form(x0, a, np.ones(2), np.ones(2), 0.0), x0)
    np.testing.assert_array_equal(ltc_closed_form(x0, a, np.ones(2), np.ones(2), 400.0), a)
    with pytest.raises(ValueError):
        ltc_closed_form(x0, a, 1.0, 1.0, -1.0)


def test_gated_approx_at_zero_time():
    p = LTCParams(o_tau=np.ones(2), a=np.array([0.1, 0.2]), b=np.array([2.0, 3.0]))
    i = np.array([0.5, -1.0])
    np.testing.assert_allclose(ltc_gated_approx(i, p, np.tanh, 0.0), p.b * np.tanh(-i) + p.a)


# CfC cell --------------------------------------------------------------------------

def _cell_params(rng, C, D, f_bias=None):
    p = {}
    for h in "fgh":
        p[f"c.{h}.W"] = rng.normal(size=(D, C + D))
        p[f"c.{h}.b"] = rng.normal(size=D)
    if f_bias is not None:
        p["c.f.W"][:] = 0.0
        p["c.f.b"][:] = f_bias
    return {k: ad.const(v) for k, v in p.items()}, p


def _heads(p, x, i):
    z = np.concatenate([i, x], axis=-1)
    return [np.tanh(z @ p[f"c.{h}.W"].T + p[f"c.{h}.b"]) for h in "gh"]


def test_cfc_zero_rate_averages():
    rng = np.random.default_rng(0)
    pv, p = _cell_params(rng, 5, 4, f_bias=-800.0)
    x, i = rng.normal(size=(1, 4)), rng.normal(size=(1, 5))
    out = cfc_cell(ad.const(x), ad.const(i), 1.0, pv, "c.").value
    g, h = _heads(p, x, i)
    np.testing.assert_allclose(out, (g + h) / 2, atol=1e-12)


def test_cfc_saturated_rate_gives_h():
    rng = np.random.default_rng(1)
    pv, p = _cell_params(rng, 5, 4, f_bias=800.0)
    x, i = rng.normal(size=(1, 4)), rng.normal(size=(1, 5))
    out = cfc_cell(ad.const(x), ad.const(i), 1.0, pv, "c.").value
    np.testing.assert_allclose(out, _heads(p, x, i)[1], atol=1e-12)


def test_cfc_time_zero_averages():
    rng = np.random.default_rng(2)
    pv, p = _cell_params(rng, 5, 4)
    x, i = rng.normal(size=(1, 4)), rng.normal(size=(1, 5))
    g, h = _heads(p, x, i)
    np.testing.assert_allclose(cfc_cell(ad.const(x), ad.const(i), 0.0, pv, "c.").value, (g + h) / 2, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 10.0))
def test_cfc_state_in_convex_hull(seed, t):
    rng = np.random.default_rng(seed)
    pv, p = _cell_params(rng, 6, 5)
    x, i = rng.normal(size=(3, 5)) * 3, rng.normal(size=(3, 6)) * 3
    out = cfc_cell(ad.const(x), ad.const(i), t, pv, "c.").value
    g, h = _heads(p, x, i)
    assert np.all(out >= np.minimum(g, h) - 1e-12) and np.all(out <= np.maximum(g, h) + 1e-12)


# network ---------------------------------------------------------------------------

def test_featurize_order():
    H = np.array([[1 + 2j, 3 + 4j], [5 + 6j, 7 + 8j]])
    np.testing.assert_array_equal(featurize(H), [1, 3, 5, 7, 2, 4, 6, 8])
    np.testing.assert_array_equal(featurize(np.stack([H, 2 * H]))[1], 2 * featurize(H))


def test_param_count_default():
    spec = NetworkSpec.for_system(16, 48, 4)
    assert count_params(init_params(spec, np.random.default_rng(0))) == 365248
    assert spec.n_out == 2 * 16 * 4


def test_init_bounds():
    spec = NetworkSpec.for_system(4, 8, 2, hidden=(8, 8, 8))
    p = init_params(spec, np.random.default_rng(0))
    assert np.all(np.abs(p["l0.f.W"]) <= 1 / np.sqrt(64 + 8))
    assert np.all(np.abs(p["out.W"]) <= 1 / np.sqrt(8))


def test_zero_network_is_degenerate():
    spec = NetworkSpec.for_system(4, 8, 2, hidden=(8, 8, 8))
    params = {k: np.zeros_like(v) for k, v in init_params(spec, np.random.default_rng(0)).items()}
    H = crandn(np.random.default_rng(1), 4, 8)
    X, _ = network_forward(spec, params, H, zero_state(spec))
    assert np.all(X == 0)
    with pytest.raises(DegeneratePrecoderError):
        apply_power_constraint(H, X[0], 1.0)


def test_forward_deterministic_and_shapes():
    spec = NetworkSpec.for_system(4, 8, 2, hidden=(8, 8, 8))
    params = init_params(spec, np.random.default_rng(0))
    H = crandn(np.random.default_rng(1), 3, 4, 8)
    X1, s1 = network_forward(spec, params, H, zero_state(spec))
    X2, s2 = network_forward(spec, params, H, zero_state(spec))
    assert X1.shape == (3, 4, 2) and [s.shape for s in s1] == [(3, 8)] * 3
    assert np.array_equal(X1, X2) and all(np.array_equal(a, b) for a, b in zip(s1, s2))


def test_forward_rejects_bad_dims():
    spec = NetworkSpec.for_system(4, 8, 2, hidden=(8, 8, 8))
    params = init_params(spec, np.random.default_rng(0))
    with pytest.raises(ValueError):
        network_forward(spec, params, np.zeros((4, 6)), zero_state(spec))
    with pytest.raises(ValueError):
        network_forward(spec, params, np.zeros((4, 8)), zero_state(spec)[:2])


def test_state_carries_information():
    spec = NetworkSpec.for_system(4, 8, 2, hidden=(8, 8, 8))
    params = init_params(spec, np.random.default_rng(0))
    Hs = crandn(np.random.default_rng(1), 5, 4, 8)
    state = zero_state(spec)
    for H in Hs:
        X_stateful, state = network_forward(spec, params, H, state)
    X_reset, _ = network_forward(spec, params, Hs[-1], zero_state(spec))
    assert not np.allclose(X_stateful, X_reset)


# loss and autodiff -----------------------------------------------------------------

def test_log_loss_examples():
    assert ad.log_loss(ad.const(np.ones((1, 3))), 1e-6).value[0] == 0.0
    assert ad.log_loss(ad.const(np.full((1, 2), math.e)), 1e-6).value[0] == pytest.approx(-2.0)
    assert ad.log_loss(ad.const(np.array([[0.0, 1.0]])), 1e-6).value[0] == pytest.approx(13.815510557964274)


@settings(max_examples=50)
@given(st.lists(st.floats(0.0, 1e6), min_size=1, max_size=6))
def test_log_loss_floor(rates):
    L = ad.log_loss(ad.const(np.array([rates])), 1e-6).value[0]
    assert math.isfinite(L) and L <= -len(rates) * math.log(1e-6) + 1e-9


def test_unused_parameter_has_zero_gradient():
    a, b = ad.param(np.array([0.3, -0.2])), ad.param(np.array([1.0]))
    ad.backward(ad.total(ad.tanh(a)))
    assert b.grad is None
    np.testing.assert_allclose(a.grad, 1 - np.tanh([0.3, -0.2]) ** 2)


def test_doubling_loss_doubles_gradients():
    spec = NetworkSpec.for_system(4, 8, 2, hidden=(4, 4, 4))
    params = init_params(spec, np.random.default_rng(0))
    H = crandn(np.random.default_rng(1), 4, 8) * 3
    fn = pipeline_loss_fn(spec, H, zero_state(spec))
    _, g1 = fn(params)
    from lcbf.lnn.network import pipeline_graph
    pv = as_vars(params, record=True)
    loss, *_ = pipeline_graph(spec, pv, H[None], zero_state(spec), 1.0, 1.0, 1e-6)
    ad.backward(ad.scale(ad.total(loss), 2.0))
    for k in params:
        np.testing.assert_allclose(pv[k].grad, 2 * g1[k], rtol=1e-12, atol=1e-300)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_gradient_raises():
    a = ad.param(np.array([0.0]))
    y = ad.mul(a, ad.const(np.array([np.inf])))
    with pytest.raises(ad.GradientFault):
        ad.backward(ad.total(y))


@pytest.mark.parametrize("cell", ["cfc", "gru"])
def test_pipeline_gradients_match_finite_differences(cell):
    rng = np.random.default_rng(3)
    spec = NetworkSpec.for_system(4, 8, 2, hidden=(8, 8, 8), cell=cell)
    params = init_params(spec, rng)
    H = crandn(rng, 4, 8) * 2.0
    state = [rng.normal(size=(1, 8)) * 0.5 for _ in range(3)]
    assert fd_check(pipeline_loss_fn(spec, H, state, P=3.0), params) < 1e-4


# Adam ------------------------------------------------------------------------------

def test_adam_zero_gradient_no_move():
    p = {"w": np.array([1.0, -2.0])}
    new, st_ = adam_step(p, {"w": np.zeros(2)}, TrainState())
    np.testing.assert_array_equal(new["w"], p["w"])
    assert st_.step == 1


def test_adam_first_step_is_sign_step():
    new, _ = adam_step({"w": np.array([0.0])}, {"w": np.array([0.5])}, TrainState(lr=0.01))
    assert new["w"][0] == pytest.approx(-0.01, rel=1e-6)


def _adam_reference(w, n, lr=0.01, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    trace = []
    for t in range(1, n + 1):
        g = 2 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        trace.append(w)
    return trace


def test_adam_quadratic_matches_reference():
    params, state = {"w": np.array([1.0])}, TrainState(lr=0.01)
    trace = []
    for _ in range(100):
        params, state = adam_step(params, {"w": 2 * params["w"]}, state)
        trace.append(float(params["w"][0]))
    np.testing.assert_allclose(trace, _adam_reference(1.0, 100), rtol=1e-12)
    assert all(abs(b) < abs(a) for a, b in zip(trace, trace[1:]))
    assert abs(trace[-1]) < 0.5


# training ------------------------------------------------------------------------

def _tiny(seed, cee=-10.0):
    cfg = tiny_config()
    return cfg, build_episode(cfg, seed, "lc", cee)


def test_training_improves_se():
    ratios = []
    P = dbm_to_watt(30)
    for seed in range(5):
        cfg, ep = _tiny(seed)
        tc = TrainConfig(seed=seed)
        model = new_model(4, 8, 2, tc, rng=stream(seed, "init", "cfc"))
        se0 = run_episode(model, ep, cfg.sigma2, P).se_true
        model, metrics = train([ep], cfg.sigma2, P, 2, tc, model)
        assert len(metrics.loss) == 200 and all(math.isfinite(x) for x in metrics.loss)
        ratios.append(run_episode(model, ep, cfg.sigma2, P).se_true / se0)
    assert np.median(ratios) >= 1.5


def test_perfect_csi_training_not_worse():
    P = dbm_to_watt(30)
    diffs = []
    for seed in range(5):
        out = []
        for cee in (-math.inf, 0.0):
            cfg, ep = _tiny(seed, cee)
            tc = TrainConfig(seed=seed, n_steps=100)
            model, _ = train([ep], cfg.sigma2, P, 2, tc, new_model(4, 8, 2, tc, rng=stream(seed, "init", "cfc")))
            out.append(run_episode(model, ep, cfg.sigma2, P).se_true)
        diffs.append(out[0] - out[1])
    assert np.median(diffs) >= 0


def test_training_deterministic():
    cfg, ep = _tiny(0)
    tc = TrainConfig(n_steps=20)
    runs = [train([ep], cfg.sigma2, 1.0, 2, tc)[0] for _ in range(2)]
    for k in runs[0].params:
        assert np.array_equal(runs[0].params[k], runs[1].params[k])


def test_single_pattern_training():
    cfg, ep = _tiny(0)
    one = Episode(ep.H_true[:, :1], ep.H_hat[:, :1])
    model, metrics = train([one], cfg.sigma2, 1.0, 2, TrainConfig(n_steps=8))
    assert set(metrics.best_p) == {1}
    assert run_episode(model, one, cfg.sigma2, 1.0).p_star == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_divergence_detected():
    cfg, ep = _tiny(0)
    bad = Episode(ep.H_true, np.full_like(ep.H_hat, np.nan))
    with pytest.raises((TrainingDiverged, ad.GradientFault, FloatingPointError, np.linalg.LinAlgError)):
        train([bad], cfg.sigma2, 1.0, 2, TrainConfig(n_steps=3))


def test_metrics_epochs_and_histogram():
    cfg, ep = _tiny(1)
    _, m = train([ep], cfg.sigma2, 1.0, 2, TrainConfig(n_steps=12))
    d = m.to_dict(ep.n_p)
    assert len(d["epoch_se"]) == 3 and sum(d["best_p_histogram"]) == 12


def test_episode_validation():
    with pytest.raises(ValueError):
        Episode(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))


# checkpoints -----------------------------------------------------------------------

def _trained(cell="cfc"):
    cfg, ep = _tiny(2)
    tc = TrainConfig(n_steps=6, cell=cell, hidden=(8, 8, 8))
    return train([ep], cfg.sigma2, 1.0, 2, tc)[0]


@pytest.mark.parametrize("cell", ["cfc", "gru"])
def test_checkpoint_roundtrip_bytes(cell, tmp_path):
    model = _trained(cell)
    blob = checkpoint.dumps(model, "lnn" if cell == "cfc" else "gru")
    loaded, method = checkpoint.loads(blob)
    assert checkpoint.dumps(loaded, method) == blob
    assert loaded.opt.step == 6 and loaded.spec == model.spec
    assert loaded.rng.bit_generator.state == model.rng.bit_generator.state
    for k in model.params:
        assert np.array_equal(loaded.params[k], model.params[k])
    checkpoint.save(tmp_path / "m.ckpt", model, method)
    assert (tmp_path / "m.ckpt").read_bytes() == blob
    assert checkpoint.load(tmp_path / "m.ckpt")[1] == method


def test_checkpoint_rejects_garbage():
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(b"not a checkpoint at all")
    blob = checkpoint.dumps(_trained(), "lnn")
    bumped = blob.replace(b'"format_version": 1', b'"format_version": 9')
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(bumped)
