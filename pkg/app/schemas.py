"""Pydantic models for experiment configuration."""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ModelFamily(str, Enum):
    """Differentiable model families."""

    CONVEX = "convex"
    TRANSFORMER = "transformer"


class ConvexLoss(str, Enum):
    """Loss of the convex family."""

    CROSS_ENTROPY = "cross_entropy"
    SQUARED = "squared"


class SelectionScheme(str, Enum):
    """Which weight matrices are fine-tuned."""

    ALL = "all"
    ATTENTION_QKV = "attention_qkv"
    PROJECT_UP = "project_up"
    CLASSIFIER_AND_PROJECT_UP = "classifier_and_project_up"


class Method(str, Enum):
    """Federated fine-tuning methods."""

    FEDFTG = "fedftg"
    DIRECT_ADAM = "direct_adam"
    DIRECT_SGD = "direct_sgd"
    FEDIT = "fedit"
    FLEXLORA = "flexlora"
    FFALORA = "ffalora"


class AggregationKind(str, Enum):
    """Server-side aggregation rules."""

    DIRECT = "direct"
    FEDIT = "fedit"
    FLEXLORA = "flexlora"
    FFALORA = "ffalora"


class Weighting(str, Enum):
    """Client weights in FedAvg."""

    UNIFORM = "uniform"
    BY_TRAIN_SIZE = "by_train_size"


class Factorization(str, Enum):
    """How FlexLoRA splits the truncated SVD back into (B, A)."""

    FOLD = "fold"
    SQRT = "sqrt"


class ScaleConvention(str, Enum):
    """How the LoRA scaling factor is derived from lora_alpha."""

    DIVIDE = "divide"
    RAW = "raw"


class OptimizerKind(str, Enum):
    """Local optimizers."""

    SGD = "sgd"
    ADAM = "adam"
    GALORE = "galore"


class DataSource(str, Enum):
    """Where training data comes from."""

    SYNTHETIC = "synthetic"
    CSV = "csv"
    SHARDS = "shards"


LORA_METHODS = {Method.FEDIT, Method.FLEXLORA, Method.FFALORA}

TRANSFORMER_NAMES = ("Emb", "Wq", "Wk", "Wv", "Wo", "Wup", "Wdown", "Wcls")
CONVEX_NAMES = ("W",)


class ModelConfig(BaseModel):
    """Shapes and hyperparameters of a model family."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    family: ModelFamily = Field(default=ModelFamily.CONVEX, description="Model family")
    num_classes: int = Field(default=4, ge=1, description="Number of classes C")
    feature_dim: int = Field(default=8, ge=1, description="Input dimension (convex family)")
    vocab_size: int = Field(default=32, ge=1, description="Vocabulary size V (transformer)")
    hidden_dim: int = Field(default=16, ge=1, description="Hidden width h (transformer)")
    mlp_mult: int = Field(default=2, ge=1, description="MLP expansion factor (transformer)")
    seq_len: int = Field(default=8, ge=1, description="Sequence length (transformer)")
    l2_lambda: float = Field(
        default=1e-3, ge=0.0, description="L2 regularization strength (convex family)"
    )
    convex_loss: ConvexLoss = Field(default=ConvexLoss.CROSS_ENTROPY)
    init_std: float | None = Field(
        default=None, gt=0.0, description="Gaussian init scale (family default when unset)"
    )

    @property
    def resolved_init_std(self) -> float:
        """Init scale with the family default applied."""
        if self.init_std is not None:
            return self.init_std
        return 0.01 if self.family == ModelFamily.CONVEX else 0.3

    @property
    def mlp_dim(self) -> int:
        """Width of the project-up output."""
        return self.hidden_dim * self.mlp_mult

    @property
    def param_names(self) -> tuple[str, ...]:
        """Fixed matrix names of the family."""
        return CONVEX_NAMES if self.family == ModelFamily.CONVEX else TRANSFORMER_NAMES

    @property
    def matrix_shapes(self) -> dict[str, tuple[int, int]]:
        """Shape of every weight matrix of the family."""
        if self.family == ModelFamily.CONVEX:
            return {"W": (self.num_classes, self.feature_dim)}
        h, m = self.hidden_dim, self.mlp_dim
        return {
            "Emb": (self.vocab_size, h),
            "Wq": (h, h),
            "Wk": (h, h),
            "Wv": (h, h),
            "Wo": (h, h),
            "Wup": (h, m),
            "Wdown": (m, h),
            "Wcls": (h, self.num_classes),
        }


class PartitionSpec(BaseModel):
    """Dirichlet non-IID partition parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_clients: int = Field(default=4, ge=1, description="Number of clients N")
    alpha: float = Field(default=0.1, gt=0.0, description="Dirichlet concentration")
    seed: int = Field(default=0, ge=0, description="Partition seed")
    equal_sizes: bool = Field(default=True, description="Rebalance shards to equal sizes")


class RoundSchedule(BaseModel):
    """Local-step and aggregation schedule."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=3, ge=1, description="Epochs e")
    local_steps_per_round: int = Field(
        default=10, ge=1, description="Local steps between aggregations (t_agg)"
    )
    batch_size: int = Field(default=1, ge=1, description="Mini-batch size")
    steps_per_epoch: int | None = Field(
        default=None, ge=1, description="Mini-batches per epoch T (derived from shard size when unset)"
    )
    seed: int | None = Field(default=None, ge=0, description="Batch sampling seed")


class AggregationStrategy(BaseModel):
    """Server aggregation rule."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: AggregationKind = Field(default=AggregationKind.DIRECT)
    weighting: Weighting = Field(default=Weighting.UNIFORM)
    r_target: int = Field(default=8, ge=1, description="FlexLoRA redistribution rank")
    factorization: Factorization = Field(default=Factorization.FOLD)


class SgdConfig(BaseModel):
    """Plain SGD."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lr: float = Field(default=0.01, gt=0.0, description="Learning rate")


class AdamConfig(BaseModel):
    """Adam with bias correction."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    lr: float = Field(default=0.001, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)


class GaloreConfig(BaseModel):
    """Gradient low-rank projection wrapped around an inner regularizer."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    rank: int = Field(default=4, ge=1, description="Projection rank r")
    update_proj_gap: int = Field(default=50, ge=1, description="Projection refresh period")
    scale: float = Field(default=1.0, gt=0.0)
    inner: OptimizerKind = Field(default=OptimizerKind.ADAM)
    targets: tuple[str, ...] = Field(default=("Wup", "Wcls", "W"))
    reset_inner_on_refresh: bool = Field(default=False)
    refresh_after_broadcast: bool = Field(default=True)

    @field_validator("inner")
    @classmethod
    def inner_is_entrywise(cls, v: OptimizerKind) -> OptimizerKind:
        """The inner regularizer cannot itself be GaLore."""
        if v == OptimizerKind.GALORE:
            raise ValueError("GaLore inner regularizer must be 'sgd' or 'adam'")
        return v


def _split_list(v: object) -> object:
    if isinstance(v, str):
        return [part.strip() for part in v.split(",") if part.strip()]
    return v


class DataSection(BaseModel):
    """Data source of an experiment."""

    model_config = ConfigDict(extra="forbid")

    source: DataSource = Field(default=DataSource.SYNTHETIC)
    n: int = Field(default=2000, ge=1, description="Synthetic sample count")
    cluster_sep: float = Field(default=3.0, gt=0.0, description="Synthetic cluster separation")
    purity: float = Field(default=0.7, ge=0.0, le=1.0, description="Synthetic chain purity")
    csv_path: str | None = Field(default=None, description="Dataset CSV (source=csv)")
    shards_dir: str | None = Field(default=None, description="Partition directory (source=shards)")


class AdapterSection(BaseModel):
    """LoRA adapter settings."""

    model_config = ConfigDict(extra="forbid")

    rank: int = Field(default=8, ge=1)
    lora_alpha: float = Field(default=16.0, gt=0.0)
    std: float = Field(default=0.02, gt=0.0)
    convention: ScaleConvention = Field(default=ScaleConvention.DIVIDE)
    targets: list[str] | None = Field(default=None)
    shared_init: bool = Field(default=True, description="Server samples A once for all clients")

    _split_targets = field_validator("targets", mode="before")(_split_list)


class OptimizerSection(BaseModel):
    """Local optimizer settings."""

    model_config = ConfigDict(extra="forbid")

    kind: OptimizerKind | None = Field(default=None, description="Resolved from method when unset")
    lr: float = Field(default=0.01, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    galore_rank: int = Field(default=4, ge=1)
    update_proj_gap: int = Field(default=50, ge=1)
    galore_scale: float = Field(default=1.0, gt=0.0)
    galore_inner: OptimizerKind = Field(default=OptimizerKind.ADAM)
    reset_inner_on_refresh: bool = Field(default=False)
    refresh_after_broadcast: bool = Field(default=True)
    reset_on_broadcast: bool = Field(default=False)


class StrategySection(BaseModel):
    """Aggregation settings; the kind follows from the method."""

    model_config = ConfigDict(extra="forbid")

    weighting: Weighting = Field(default=Weighting.UNIFORM)
    r_target: int | None = Field(default=None, ge=1, description="Defaults to adapter.rank")
    factorization: Factorization = Field(default=Factorization.FOLD)


class FederationSection(BaseModel):
    """Client execution between barriers."""

    model_config = ConfigDict(extra="forbid")

    parallel: bool = Field(default=False)
    max_workers: int | None = Field(default=None, ge=1)
    shuffle_seed: int | None = Field(default=None, ge=0, description="Permute execution order")


class BoundsSection(BaseModel):
    """Constants of the generalization bounds."""

    model_config = ConfigDict(extra="forbid")

    sigma: float = Field(default=1.0, gt=0.0)
    q_bits: int = Field(default=32, ge=1)


class ExperimentConfig(BaseModel):
    """Complete description of one run."""

    model_config = ConfigDict(extra="forbid")

    method: Method = Field(default=Method.FEDFTG)
    seed: int = Field(default=0, ge=0)
    output_dir: str | None = Field(default=None)
    eval_fraction: float = Field(default=0.05, gt=0.0, le=0.5)
    selection: SelectionScheme | None = Field(default=None, description="Resolved from method")
    model: ModelConfig = Field(default_factory=ModelConfig)
    data: DataSection = Field(default_factory=DataSection)
    partition: PartitionSpec = Field(default_factory=PartitionSpec)
    schedule: RoundSchedule = Field(default_factory=RoundSchedule)
    strategy: StrategySection = Field(default_factory=StrategySection)
    adapter: AdapterSection = Field(default_factory=AdapterSection)
    optimizer: OptimizerSection = Field(default_factory=OptimizerSection)
    federation: FederationSection = Field(default_factory=FederationSection)
    bounds: BoundsSection = Field(default_factory=BoundsSection)

    @model_validator(mode="after")
    def check_compatibility(self) -> "ExperimentConfig":
        """Reject method/adapter/optimizer/data combinations that cannot run."""
        if self.data.source == DataSource.CSV and not self.data.csv_path:
            raise ValueError("data.csv_path is required when data.source = csv")
        if self.data.source == DataSource.SHARDS and not self.data.shards_dir:
            raise ValueError("data.shards_dir is required when data.source = shards")
        if self.model.family == ModelFamily.CONVEX:
            if self.selection not in (None, SelectionScheme.ALL):
                raise ValueError("convex family supports only selection = all")
            if self.model.l2_lambda <= 0:
                raise ValueError("model.l2_lambda must be > 0 for the convex family")
        kind = self.optimizer.kind
        if self.method == Method.FEDFTG and kind not in (None, OptimizerKind.GALORE):
            raise ValueError("method fedftg requires optimizer.kind = galore")
        if self.method == Method.DIRECT_SGD and kind not in (None, OptimizerKind.SGD):
            raise ValueError("method direct_sgd requires optimizer.kind = sgd")
        if self.method == Method.DIRECT_ADAM and kind not in (None, OptimizerKind.ADAM):
            raise ValueError("method direct_adam requires optimizer.kind = adam")
        if self.method in LORA_METHODS and kind == OptimizerKind.GALORE:
            raise ValueError(f"method {self.method.value} trains adapters and cannot use galore")
        if self.optimizer.galore_inner == OptimizerKind.GALORE:
            raise ValueError("optimizer.galore_inner must be 'sgd' or 'adam'")
        if self.uses_adapters:
            names = set(self.model.param_names)
            unknown = [t for t in self.adapter_targets if t not in names]
            if unknown:
                raise ValueError(f"adapter.targets not in model: {', '.join(unknown)}")
            shapes = self.model.matrix_shapes
            for target in self.adapter_targets:
                short = min(shapes[target])
                if self.adapter.rank > short:
                    raise ValueError(
                        f"adapter.rank {self.adapter.rank} exceeds min(d, k) = {short} of {target}"
                    )
                r_target = self.strategy.r_target
                if self.method == Method.FLEXLORA and r_target is not None and r_target > short:
                    raise ValueError(
                        f"strategy.r_target {r_target} exceeds min(d, k) = {short} of {target}"
                    )
        return self

    @property
    def uses_adapters(self) -> bool:
        """Whether the method trains LoRA adapters."""
        return self.method in LORA_METHODS

    @property
    def resolved_seed(self) -> int:
        """Batch sampling seed."""
        return self.schedule.seed if self.schedule.seed is not None else self.seed

    @property
    def resolved_selection(self) -> SelectionScheme:
        """Selection scheme after method defaults."""
        if self.selection is not None:
            return self.selection
        if self.model.family == ModelFamily.CONVEX:
            return SelectionScheme.ALL
        return SelectionScheme.CLASSIFIER_AND_PROJECT_UP

    @property
    def resolved_optimizer_kind(self) -> OptimizerKind:
        """Local optimizer after method defaults."""
        if self.optimizer.kind is not None:
            return self.optimizer.kind
        if self.method == Method.FEDFTG:
            return OptimizerKind.GALORE
        if self.method == Method.DIRECT_SGD:
            return OptimizerKind.SGD
        return OptimizerKind.ADAM

    @property
    def adapter_targets(self) -> list[str]:
        """Adapter targets after family defaults."""
        if self.adapter.targets:
            return list(self.adapter.targets)
        if self.model.family == ModelFamily.CONVEX:
            return list(CONVEX_NAMES)
        return ["Wq", "Wk", "Wv"]

    @property
    def frozen_a(self) -> bool:
        """FFA-LoRA freezes the Gaussian factor."""
        return self.method == Method.FFALORA

    def aggregation_strategy(self) -> AggregationStrategy:
        """Aggregation rule implied by the method."""
        kinds = {
            Method.FEDIT: AggregationKind.FEDIT,
            Method.FLEXLORA: AggregationKind.FLEXLORA,
            Method.FFALORA: AggregationKind.FFALORA,
        }
        return AggregationStrategy(
            kind=kinds.get(self.method, AggregationKind.DIRECT),
            weighting=self.strategy.weighting,
            r_target=self.strategy.r_target or self.adapter.rank,
            factorization=self.strategy.factorization,
        )

    def galore_config(self) -> GaloreConfig:
        """GaLore settings of the optimizer section."""
        return GaloreConfig(
            rank=self.optimizer.galore_rank,
            update_proj_gap=self.optimizer.update_proj_gap,
            scale=self.optimizer.galore_scale,
            inner=self.optimizer.galore_inner,
            reset_inner_on_refresh=self.optimizer.reset_inner_on_refresh,
            refresh_after_broadcast=self.optimizer.refresh_after_broadcast,
        )
