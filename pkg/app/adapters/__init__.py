"""Low-rank adapters."""

from app.adapters.lora import (
    A_SUFFIX,
    B_SUFFIX,
    LoraPair,
    adapter_params,
    attach_lora,
    effective_update,
    lora_backward_map,
    lora_loss_and_grads,
    lora_scale,
    merge_lora,
    merged_params,
    trainable_parameter_count,
    update_pairs,
)

__all__ = [
    "A_SUFFIX",
    "B_SUFFIX",
    "LoraPair",
    "adapter_params",
    "attach_lora",
    "effective_update",
    "lora_backward_map",
    "lora_loss_and_grads",
    "lora_scale",
    "merge_lora",
    "merged_params",
    "trainable_parameter_count",
    "update_pairs",
]
