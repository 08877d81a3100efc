"""Adam updates and deterministic parameter initialization."""

from __future__ import annotations

import zlib

import numpy as np

from .autodiff import Parameter, ParameterStore
from .errors import ConfigError, ContractError

__all__ = ["AdamState", "adam_step", "seeded_init", "param_seed"]


class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    def __init__(self, store: ParameterStore, learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.step = 0
        self.m = {p.name: np.zeros_like(p.data) for p in store}
        self.v = {p.name: np.zeros_like(p.data) for p in store}


def adam_step(store: ParameterStore, state: AdamState) -> None:
    """One bias-corrected Adam update over every parameter; zeroes grads after."""
    for p in store:
        if p.grad is None:
            raise ContractError(f"parameter {p.name!r} has no gradient")
        if p.grad.shape != p.data.shape:
            raise ContractError(f"gradient shape mismatch for {p.name!r}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for p in store:
        g = p.grad
        m = state.m[p.name] = b1 * state.m[p.name] + (1.0 - b1) * g
        v = state.v[p.name] = b2 * state.v[p.name] + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data = p.data - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
        p.zero_grad()


def seeded_init(shape, seed: int, scheme: str = "uniform", bound: float | None = None) -> np.ndarray:
    """Deterministic float64 initial values.

    ``uniform`` draws from ``[-b, b]`` with ``b = 1/sqrt(fan_in)`` by
    default (fan_in = last dimension); ``zeros`` returns zeros. The same
    (shape, seed, scheme, bound) always yields bit-identical output.
    """
    shape = tuple(int(s) for s in shape)
    if scheme == "zeros":
        return np.zeros(shape, dtype=np.float64)
    if scheme != "uniform":
        raise ConfigError(f"unknown init scheme: {scheme!r}")
    if bound is None:
        fan_in = shape[-1] if shape else 1
        bound = 1.0 / np.sqrt(float(fan_in))
    rng = np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=shape).astype(np.float64)


def param_seed(master_seed: int, name: str) -> int:
    """Stable per-parameter seed derived from the run seed and the name."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))])
    return int(ss.generate_state(1)[0])


def new_parameter(store: ParameterStore, name: str, shape, master_seed: int,
                  scheme: str = "uniform", bound: float | None = None) -> Parameter:
    """Create, register and return a freshly initialized parameter."""
    value = seeded_init(shape, param_seed(master_seed, name), scheme, bound)
    return store.add(Parameter(name, value))
