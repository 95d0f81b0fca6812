"""Liquid time-constant neuron: ODE reference integrator and its closed forms.

These are reference paths used to check the closed-form cell, not part of the
trainable network.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class LTCParams:
    o_tau: np.ndarray
    a: np.ndarray
    b: np.ndarray | None = None

    def __post_init__(self):
        self.o_tau = np.asarray(self.o_tau, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        if np.any(self.o_tau <= 0):
            raise ValueError("o_tau must be positive")


def ltc_rhs(x, f_val, params: LTCParams, leak_to_bias: bool = True):
    """Right-hand side of the LTC state equation.

    With ``leak_to_bias`` the leak ``o_tau`` relaxes the state towards ``a``,
    ``dx/dt = -(o_tau + f) (x - a)``, which is the equation whose
    integrating-factor solution is :func:`ltc_closed_form`. Otherwise the leak
    relaxes towards zero: ``dx/dt = -(o_tau + f) x + a f``.
    """
    if leak_to_bias:
        return -(params.o_tau + f_val) * (x - params.a)
    return -(params.o_tau + f_val) * x + params.a * f_val


def ltc_ode_integrate(x0, input_fn: Callable[[float], np.ndarray], params: LTCParams,
                      head_f: Callable[[np.ndarray], np.ndarray], t_end: float, dt: float,
                      leak_to_bias: bool = True) -> np.ndarray:
    """Classical RK4 from 0 to ``t_end``; the last step is shortened to land exactly."""
    if dt <= 0 or t_end < 0:
        raise ValueError("need dt > 0 and t_end >= 0")
    x = np.array(x0, dtype=float)
    t = 0.0

    def rhs(t, x):
        return ltc_rhs(x, head_f(input_fn(t)), params, leak_to_bias)

    n = int(np.ceil(t_end / dt - 1e-12))
    for _ in range(n):
        h = min(dt, t_end - t)
        k1 = rhs(t, x)
        k2 = rhs(t + h / 2, x + h / 2 * k1)
        k3 = rhs(t + h / 2, x + h / 2 * k2)
        k4 = rhs(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return x


def ltc_closed_form(x0, a, o_tau, f_val, t):
    """``(x0 - a) exp(-(o_tau + f) t) + a`` for a constant head output ``f``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    x0, a = np.asarray(x0, float), np.asarray(a, float)
    decay = np.exp(-(np.asarray(o_tau) + np.asarray(f_val)) * t)
    # convex-combination form: exact at t = 0 and in the t -> inf limit
    return x0 * decay + a * (1.0 - decay)


def ltc_gated_approx(i, params: LTCParams, head_f, t):
    """Integral-free approximation ``b * exp(-(o_tau + f(i)) t) * f(-i) + a``."""
    if params.b is None:
        raise ValueError("the gated approximation needs b")
    return params.b * np.exp(-(params.o_tau + head_f(i)) * t) * head_f(-np.asarray(i)) + params.a


def leaky_closed_form(x0, a, o_tau, f_val, t):
    """Exact solution of the zero-leak-target equation for constant ``f``."""
    rate = np.asarray(o_tau) + np.asarray(f_val)
    fixed = np.asarray(a) * np.asarray(f_val) / rate
    return (np.asarray(x0, float) - fixed) * np.exp(-rate * t) + fixed
