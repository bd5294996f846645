"""fedftg-sim: desk-scale simulator for federated fine-tuning with GaLore and LoRA baselines."""

__version__ = "0.1.0"
