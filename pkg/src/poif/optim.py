"""Adam with decoupled weight decay.

The decay term is applied directly to the weights (w -= lr * wd * w) on
top of the bias-corrected Adam step, never folded into the gradient.
Parameters and moments are handled as flat lists of arrays in a fixed
traversal order (audio layers then video, weight before bias), which
keeps updates reproducible and makes the state easy to serialize.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncoderParams, Mlp


@dataclass(eq=False)
class OptimState:
    """First/second moment estimates plus the shared step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0


def flatten_params(params: EncoderParams) -> list[np.ndarray]:
    """Fixed traversal order: per modality, per layer, weight then bias."""
    arrays: list[np.ndarray] = []
    for mlp in (params.audio, params.video):
        for w, b in zip(mlp.weights, mlp.biases):
            arrays.append(w)
            arrays.append(b)
    return arrays


def unflatten_params(template: EncoderParams, arrays: list[np.ndarray]) -> EncoderParams:
    """Rebuild an EncoderParams with the template's layer structure."""
    it = iter(arrays)
    mlps = []
    for mlp in (template.audio, template.video):
        weights, biases = [], []
        for _ in range(mlp.n_layers):
            weights.append(next(it))
            biases.append(next(it))
        mlps.append(Mlp(weights, biases))
    return EncoderParams(audio=mlps[0], video=mlps[1])


def init_optim_state(params: EncoderParams) -> OptimState:
    arrays = flatten_params(params)
    return OptimState(
        m=[np.zeros_like(a) for a in arrays],
        v=[np.zeros_like(a) for a in arrays],
        step=0,
    )


def adamw_step(
    params: EncoderParams,
    state: OptimState,
    grads: EncoderParams,
    cfg,
) -> tuple[EncoderParams, OptimState]:
    """One update; cfg supplies learning_rate, weight_decay, beta1, beta2, epsilon.

    Returns fresh parameter and state objects; inputs are left untouched.
    """
    p_arrays = flatten_params(params)
    g_arrays = flatten_params(grads)
    if len(p_arrays) != len(g_arrays):
        raise ValueError(f"{len(g_arrays)} gradient arrays for {len(p_arrays)} parameters")
    if len(state.m) != len(p_arrays):
        raise ValueError(f"optimizer state tracks {len(state.m)} arrays, params have {len(p_arrays)}")

    lr = cfg.learning_rate
    wd = cfg.weight_decay
    b1, b2, eps = cfg.beta1, cfg.beta2, cfg.epsilon
    t = state.step + 1

    new_p, new_m, new_v = [], [], []
    for w, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
        if w.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter shape {w.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        w = w - lr * (m_hat / (np.sqrt(v_hat) + eps)) - lr * wd * w
        new_p.append(w)
        new_m.append(m)
        new_v.append(v)

    return unflatten_params(params, new_p), OptimState(m=new_m, v=new_v, step=t)
