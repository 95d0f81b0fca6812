import numpy as np
import pytest


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_config(**kw):
    from lcbf.channel import SystemConfig
    from lcbf.harness.config import ExperimentConfig

    return ExperimentConfig(system=SystemConfig(M=8, K=2, N_k=2), **kw)


def fd_check(loss_fn, params, step=1e-5):
    """Worst per-array relative error between ``grads`` and central differences.

    ``loss_fn(params) -> (loss, grads)``.
    """
    _, grads = loss_fn(params)
    worst = 0.0
    for k, v in params.items():
        fd = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            plus = {**params, k: v.copy()}
            minus = {**params, k: v.copy()}
            plus[k][idx] += step
            minus[k][idx] -= step
            fd[idx] = (loss_fn(plus)[0] - loss_fn(minus)[0]) / (2 * step)
        denom = max(np.linalg.norm(fd), np.linalg.norm(grads[k]), 1e-12)
        worst = max(worst, np.linalg.norm(grads[k] - fd) / denom)
    return worst


def pipeline_loss_fn(spec, H_norm, state, P=1.0, eps=1e-6, t=1.0):
    from lcbf.lnn import autodiff as ad
    from lcbf.lnn.network import as_vars, pipeline_graph

    def fn(params):
        pv = as_vars(params, record=True)
        loss, _, _, _ = pipeline_graph(spec, pv, H_norm[None], state, t, P, eps)
        total = ad.total(loss)
        ad.backward(total)
        return float(total.value), {k: (v.grad if v.grad is not None else np.zeros_like(v.value))
                                    for k, v in pv.items()}
    return fn


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """``criterion(n, text, ok, detail)`` records a pass/fail line and asserts."""

    def check(n, text, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {text}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
