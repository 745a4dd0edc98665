from pathlib import Path
from typing import Any, Dict, Literal
import os

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from fusion_graphs.errors import ConfigError

BASE_DIR = Path(__file__).resolve().parents[2]
load_dotenv(BASE_DIR / '.env')


def _as_bool(value: str, default: bool = False) -> bool:
    if value is None:
        return default
    return value.strip().lower() in ('1', 'true', 'yes', 'on')


class Settings:
    # Learning defaults
    FUSION_BINS: int = int(os.getenv('FUSION_BINS', '8'))
    FUSION_ALPHA: float = float(os.getenv('FUSION_ALPHA', '1.0'))
    FUSION_TMAX: int = int(os.getenv('FUSION_TMAX', '10'))
    FUSION_J_TOL: float = float(os.getenv('FUSION_J_TOL', '1e-3'))
    FUSION_CLAMP: float = float(os.getenv('FUSION_CLAMP', '10.0'))
    FUSION_MARGIN: str = os.getenv('FUSION_MARGIN', 'sign')
    FUSION_ALLOW_FOREST: bool = _as_bool(os.getenv('FUSION_ALLOW_FOREST', 'false'), default=False)
    FUSION_FOREST_TOL: float = float(os.getenv('FUSION_FOREST_TOL', '2e-3'))
    FUSION_INIT_STRUCTURE: str = os.getenv('FUSION_INIT_STRUCTURE', 'discriminative')
    FUSION_REBALANCE: bool = _as_bool(os.getenv('FUSION_REBALANCE', 'false'), default=False)
    FUSION_RESAMPLE: bool = _as_bool(os.getenv('FUSION_RESAMPLE', 'false'), default=False)
    FUSION_WORKERS: int = int(os.getenv('FUSION_WORKERS', '1'))
    FUSION_SEED: int = int(os.getenv('FUSION_SEED', '0'))

    # Feature extraction
    FUSION_WAVELET: str = os.getenv('FUSION_WAVELET', 'haar')
    FUSION_LEVELS: int = int(os.getenv('FUSION_LEVELS', '2'))
    CHIP_SIZE: int = int(os.getenv('CHIP_SIZE', '64'))

    # Serving
    MODEL_PATH: Path = Path(os.getenv('MODEL_PATH') or (BASE_DIR / 'data' / 'model.json'))
    BACKEND_PORT: int = int(os.getenv('BACKEND_PORT', '8000'))
    LOG_LEVEL: str = os.getenv('LOG_LEVEL', 'INFO')


settings = Settings()


class FusionConfig(BaseModel):
    """Hyper-parameters of one training run.

    Defaults come from `settings`, so `.env` changes the baseline and CLI flags override it.
    """

    model_config = ConfigDict(frozen=True, extra='forbid', validate_default=True)

    bins: int = Field(default=settings.FUSION_BINS, ge=2)
    alpha: float = Field(default=settings.FUSION_ALPHA, gt=0.0)
    t_max: int = Field(default=settings.FUSION_TMAX, ge=0)
    j_tol: float = Field(default=settings.FUSION_J_TOL, ge=0.0)
    clamp: float = Field(default=settings.FUSION_CLAMP, gt=0.0)
    margin: Literal['sign', 'llr'] = settings.FUSION_MARGIN
    allow_forest: bool = settings.FUSION_ALLOW_FOREST
    forest_tol: float = Field(default=settings.FUSION_FOREST_TOL, ge=0.0)
    init_structure: Literal['discriminative', 'chow_liu'] = settings.FUSION_INIT_STRUCTURE
    epsilon_floor: float = Field(default=1e-6, gt=0.0, lt=0.5)
    rebalance: bool = settings.FUSION_REBALANCE
    resample: bool = settings.FUSION_RESAMPLE
    seed: int = settings.FUSION_SEED
    tau: float = 0.0
    tau_out: float = float('-inf')
    workers: int = Field(default=settings.FUSION_WORKERS, ge=1)

    @model_validator(mode='after')
    def _check_tau(self) -> 'FusionConfig':
        if self.tau != self.tau or self.tau_out != self.tau_out:
            raise ValueError('tau and tau_out must not be NaN')
        return self

    @classmethod
    def build(cls, **overrides: Any) -> 'FusionConfig':
        """Validate overrides (None values fall back to defaults) and raise ConfigError on failure."""
        fields: Dict[str, Any] = {k: v for k, v in overrides.items() if v is not None}
        try:
            return cls(**fields)
        except ValidationError as exc:
            raise ConfigError(f'invalid configuration: {exc}') from exc

    def updated(self, **overrides: Any) -> 'FusionConfig':
        changes = {k: v for k, v in overrides.items() if v is not None}
        return FusionConfig.build(**{**self.model_dump(), **changes})
