"""
Single-block, single-head transformer classifier.

Token rows are embedded, passed through residual self-attention and a
residual project-up / GELU / project-down MLP, mean-pooled over positions and
mapped to class scores. Activations are row vectors multiplied on the right;
there are no biases and no layer norm.
"""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from app.errors import ContractError, NumericalError
from app.linalg import row_log_softmax, row_softmax
from app.model.base import Batch, GradSet, ParamSet
from app.schemas import ModelConfig

_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_K = 0.044715

Tensor = npt.NDArray[np.float64]


def expected_shapes(cfg: ModelConfig) -> dict[str, tuple[int, int]]:
    return cfg.matrix_shapes


def gelu(u: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    return 0.5 * u * (1.0 + np.tanh(_GELU_C * (u + _GELU_K * u**3)))


def gelu_grad(u: Tensor) -> Tensor:
    """Derivative of :func:`gelu`."""
    t = np.tanh(_GELU_C * (u + _GELU_K * u**3))
    return 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_K * u * u)


@dataclass(frozen=True)
class TransformerCache:
    """Activations of one batched forward pass."""

    params: ParamSet
    batch: Batch
    tokens: npt.NDArray[np.int64]
    x: Tensor
    q: Tensor
    k: Tensor
    v: Tensor
    attn: Tensor
    z: Tensor
    h1: Tensor
    u: Tensor
    g: Tensor
    pooled: Tensor
    logits: Tensor


def _check_finite(name: str, value: Tensor) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericalError("Non-finite activation", layer=name)


def _check_params(params: ParamSet, cfg: ModelConfig) -> None:
    for name, shape in expected_shapes(cfg).items():
        if params[name].shape != shape:
            raise ContractError(f"{name} has shape {params[name].shape}, expected {shape}")


def _tokens(cfg: ModelConfig, inputs: npt.NDArray[np.generic]) -> npt.NDArray[np.int64]:
    tokens = np.asarray(inputs)
    if not np.issubdtype(tokens.dtype, np.integer):
        if not np.all(np.equal(np.mod(tokens, 1), 0)):
            raise ContractError("Token sequences must hold integers")
        tokens = tokens.astype(np.int64)
    if tokens.shape[1] != cfg.seq_len:
        raise ContractError(f"Expected sequences of length {cfg.seq_len}, got {tokens.shape[1]}")
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        raise ContractError(f"Token ids must lie in [0, {cfg.vocab_size})")
    return tokens.astype(np.int64)


def _run(params: ParamSet, cfg: ModelConfig, tokens: npt.NDArray[np.int64]) -> dict[str, Tensor]:
    _check_params(params, cfg)
    scale = 1.0 / np.sqrt(cfg.hidden_dim)
    x = params["Emb"][tokens]
    q = x @ params["Wq"]
    k = x @ params["Wk"]
    v = x @ params["Wv"]
    scores = (q @ np.swapaxes(k, 1, 2)) * scale
    _check_finite("attention_scores", scores)
    attn = row_softmax(scores)
    z = attn @ v
    h1 = x + z @ params["Wo"]
    _check_finite("attention_output", h1)
    u = h1 @ params["Wup"]
    _check_finite("project_up", u)
    g = gelu(u)
    h2 = h1 + g @ params["Wdown"]
    _check_finite("project_down", h2)
    pooled = h2.mean(axis=1)
    out = pooled @ params["Wcls"]
    _check_finite("logits", out)
    return {
        "x": x,
        "q": q,
        "k": k,
        "v": v,
        "attn": attn,
        "z": z,
        "h1": h1,
        "u": u,
        "g": g,
        "pooled": pooled,
        "logits": out,
    }


def logits(params: ParamSet, cfg: ModelConfig, inputs: npt.NDArray[np.generic]) -> Tensor:
    """Class scores for token sequences."""
    return _run(params, cfg, _tokens(cfg, inputs))["logits"]


def forward(params: ParamSet, cfg: ModelConfig, batch: Batch) -> tuple[float, TransformerCache]:
    """Mean cross-entropy over the batch."""
    batch.check_labels(cfg.num_classes)
    tokens = _tokens(cfg, batch.inputs)
    acts = _run(params, cfg, tokens)
    n = len(batch)
    loss = -float(np.sum(row_log_softmax(acts["logits"])[np.arange(n), batch.labels])) / n
    if not np.isfinite(loss):
        raise NumericalError("Non-finite loss", layer="loss")
    return loss, TransformerCache(params=params, batch=batch, tokens=tokens, **acts)


def backward(cfg: ModelConfig, cache: TransformerCache) -> GradSet:
    """Gradients of the batch loss with respect to every matrix of the block."""
    p = cache.params
    n, seq_len = cache.tokens.shape
    scale = 1.0 / np.sqrt(cfg.hidden_dim)

    dlogits = row_softmax(cache.logits)
    dlogits[np.arange(n), cache.batch.labels] -= 1.0
    dlogits /= n

    grads: GradSet = {"Wcls": cache.pooled.T @ dlogits}
    dpooled = dlogits @ p["Wcls"].T
    dh2 = np.repeat(dpooled[:, None, :] / seq_len, seq_len, axis=1)

    # MLP
    grads["Wdown"] = np.einsum("nlm,nlh->mh", cache.g, dh2)
    du = (dh2 @ p["Wdown"].T) * gelu_grad(cache.u)
    grads["Wup"] = np.einsum("nlh,nlm->hm", cache.h1, du)
    dh1 = dh2 + du @ p["Wup"].T

    # attention
    grads["Wo"] = np.einsum("nlh,nlk->hk", cache.z, dh1)
    dz = dh1 @ p["Wo"].T
    dattn = dz @ np.swapaxes(cache.v, 1, 2)
    dv = np.swapaxes(cache.attn, 1, 2) @ dz
    dscores = cache.attn * (dattn - np.sum(dattn * cache.attn, axis=-1, keepdims=True)) * scale
    dq = dscores @ cache.k
    dk = np.swapaxes(dscores, 1, 2) @ cache.q
    grads["Wq"] = np.einsum("nlh,nlk->hk", cache.x, dq)
    grads["Wk"] = np.einsum("nlh,nlk->hk", cache.x, dk)
    grads["Wv"] = np.einsum("nlh,nlk->hk", cache.x, dv)

    dx = dh1 + dq @ p["Wq"].T + dk @ p["Wk"].T + dv @ p["Wv"].T
    demb = np.zeros_like(p["Emb"])
    np.add.at(demb, cache.tokens.reshape(-1), dx.reshape(-1, cfg.hidden_dim))
    grads["Emb"] = demb
    return grads
