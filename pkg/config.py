from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from utils.errors import ConfigError

Architecture = Literal["amil", "admil", "hybrid"]
Magnification = Literal["5x", "10x", "20x"]


class Settings(BaseSettings):
    PROJECT_NAME: str = "MIL Regions of Interest in Whole Slide Images"
    DATA_DIR: Path = Path(__file__).parents[0] / "data"
    LOG_LEVEL: str = "INFO"

    # Parallel slides/folds/runs; results are always merged in key order
    WORKERS: int = Field(1, ge=1, validation_alias="MIL_WORKERS")

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


settings = Settings()


class ExperimentConfig(BaseModel):
    """Every key an experiment reads; ``--describe`` lists them with their defaults."""

    model_config = ConfigDict(extra="forbid")

    task: str = Field("synthetic", description="Task tag written to reports")
    magnification: Magnification = Field("5x", description="Magnification tag of the bags")
    architecture: Architecture = Field("amil", description="amil | admil | hybrid")

    embed_dim: int = Field(1024, ge=1, description="Embedding width M")
    attention_dim: int = Field(128, ge=1, description="Attention hidden width L")
    classifier_hidden: Tuple[int, ...] = Field((), description="Hidden widths of the bag/patch classifier")

    lr0: float = Field(5e-4, gt=0, description="Initial learning rate")
    lr_min: float = Field(1e-5, ge=0, description="Final learning rate of the cosine schedule")
    use_cosine: bool = Field(True, description="Cosine annealing (False keeps lr0 constant)")
    epochs: int = Field(30, ge=1, description="Epochs per fold")
    k_folds: int = Field(5, ge=2, description="Cross-validation folds on the training split")
    test_frac: float = Field(0.2, gt=0, lt=1, description="Held-out test fraction")
    runs: int = Field(5, ge=1, description="Independent runs with distinct split seeds")
    seed: int = Field(0, ge=0, description="Base seed; run r uses seed + r")
    balance: bool = Field(False, description="Down-sample the majority class before splitting")

    num_bags: int = Field(200, ge=5, description="Synthetic bags")
    bag_size_min: int = Field(20, ge=1, description="Smallest synthetic bag")
    bag_size_max: int = Field(100, ge=1, description="Largest synthetic bag")
    positive_instance_rate: float = Field(0.5, gt=0, le=1, description="Positive instance rate in positive bags")
    class_separation: float = Field(2.0, ge=0, description="Shift of positive instances along the signal direction")
    label_noise: float = Field(0.0, ge=0, le=1, description="Fraction of bag labels flipped")

    color_distance: float = Field(60.0, ge=0, description="RGB distance to the mean tissue colour")
    tissue_fraction: float = Field(0.25, ge=0, le=1, description="Minimum tissue fraction of a kept tile")
    sample_fraction: float = Field(0.6, gt=0, le=1, description="Fraction sampled at 5x above the limit")
    sample_limit: int = Field(1000, ge=0, description="5x tile count above which sampling applies")
    n_per_cluster: int = Field(20, ge=1, description="Tiles sampled per k-means cluster")
    k_clusters: int = Field(8, ge=1, description="k-means clusters on the previous magnification")
    kmeans_iters: int = Field(100, ge=1, description="Lloyd iterations cap")
    kmeans_restarts: int = Field(10, ge=1, description="k-means++ restarts, lowest WCSS kept")
    tile_size: int = Field(512, ge=8, description="Tile edge in pixels after padding")
    augment: bool = Field(True, description="Join two augmented embeddings per tile to the bag")
    hed_alpha: float = Field(0.05, ge=0, lt=1, description="HED channel scale range +-alpha")
    noise_sigma: float = Field(2.0, ge=0, description="Gaussian noise sigma in 8-bit units")
    extractor: str = Field("handcrafted", description="Registered name or module:Class")

    workers: Optional[int] = Field(None, ge=1, description="Worker count (defaults to MIL_WORKERS)")
    output_dir: Path = Field(Path("outputs"), description="Where reports, checkpoints and images go")
    manifest: Optional[Path] = Field(None, description="Dataset or slide manifest")

    @model_validator(mode="after")
    def _check_ranges(self) -> "ExperimentConfig":
        if self.bag_size_min > self.bag_size_max:
            raise ValueError("bag_size_min must not exceed bag_size_max")
        if self.lr_min > self.lr0:
            raise ValueError("lr_min must not exceed lr0")
        if self.manifest is not None and not self.manifest.exists():
            raise ValueError(f"manifest not found: {self.manifest}")
        return self

    @property
    def worker_count(self) -> int:
        return self.workers or settings.WORKERS

    @classmethod
    def load(cls, path: Optional[Path] = None, **overrides: Any) -> "ExperimentConfig":
        """Read a ``key=value`` file, then apply non-None overrides on top."""
        values: Dict[str, Any] = {}
        if path is not None:
            if not Path(path).exists():
                raise ConfigError(f"config file not found: {path}")
            values.update({k.lower(): v for k, v in dotenv_values(path).items() if v is not None})
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            if isinstance(values.get("classifier_hidden"), str):
                raw = values["classifier_hidden"].strip()
                values["classifier_hidden"] = tuple(int(p) for p in raw.split(",") if p.strip())
            return cls(**values)
        except (ValidationError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def describe(cls) -> str:
        lines = []
        for name, field in cls.model_fields.items():
            lines.append(f"{name}={field.default!s}  # {field.description or ''}".rstrip())
        return "\n".join(lines)
