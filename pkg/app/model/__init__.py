"""Differentiable model families."""

from app.model.base import Batch, GradSet, ParamEntry, ParamSet, check_grads
from app.model.gradcheck import finite_diff_grad, max_relative_error
from app.model.network import (
    backward,
    convex_hessian,
    expected_shapes,
    forward,
    init_params,
    loss,
    loss_and_grads,
    predict,
    predict_logits,
    select_trainable,
)

__all__ = [
    "Batch",
    "GradSet",
    "ParamEntry",
    "ParamSet",
    "backward",
    "check_grads",
    "convex_hessian",
    "expected_shapes",
    "finite_diff_grad",
    "forward",
    "init_params",
    "loss",
    "loss_and_grads",
    "max_relative_error",
    "predict",
    "predict_logits",
    "select_trainable",
]
