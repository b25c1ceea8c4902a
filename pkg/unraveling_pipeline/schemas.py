"""
pydantic models for every JSON document the tool reads or writes: distributions,
realizations, matchings, analyze requests and run manifests.
"""
from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from unraveling_pipeline.dist_core import TypeDistribution
from unraveling_pipeline.errors import ConfigurationError
from unraveling_pipeline.market_model import EarlyMatching, MarketRealization

ModelT = TypeVar("ModelT", bound=BaseModel)


class DistributionModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: Literal["uniform", "piecewise_linear_cdf"]
    lower: float = 0.0
    upper: float = 1.0
    knots: Optional[List[Tuple[float, float]]] = None

    def to_distribution(self) -> TypeDistribution:
        return TypeDistribution.from_dict(self.model_dump(exclude_none=True))


def _uniform() -> DistributionModel:
    return DistributionModel(family="uniform")


class RealizationModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: Optional[int] = Field(default=None, ge=0)
    k: int = Field(default=1, ge=0)
    men: List[float]
    women: List[float]
    dist_men: DistributionModel = Field(default_factory=_uniform)
    dist_women: DistributionModel = Field(default_factory=_uniform)

    @field_validator("men", "women")
    @classmethod
    def _sorted(cls, values: List[float]) -> List[float]:
        if any(a > b for a, b in zip(values, values[1:])):
            raise ValueError("must be sorted ascending")
        return values

    @model_validator(mode="after")
    def _lengths(self) -> "RealizationModel":
        if len(self.men) != len(self.women):
            raise ValueError("men and women must have the same length")
        if self.n is not None and self.n != len(self.men):
            raise ValueError(f"n = {self.n} but {len(self.men)} types were given")
        return self

    def to_realization(self) -> MarketRealization:
        return MarketRealization(
            n=len(self.men),
            k=self.k,
            men=tuple(self.men),
            women=tuple(self.women),
            dist_men=self.dist_men.to_distribution(),
            dist_women=self.dist_women.to_distribution(),
        )

    @classmethod
    def from_realization(cls, C: MarketRealization) -> "RealizationModel":
        return cls(
            n=C.n,
            k=C.k,
            men=list(C.men),
            women=list(C.women),
            dist_men=DistributionModel(**C.dist_men.to_dict()),
            dist_women=DistributionModel(**C.dist_women.to_dict()),
        )


class MatchingModel(BaseModel):
    """Early pairs as [man rank, woman rank]; omitted ranks wait."""

    model_config = ConfigDict(extra="forbid")

    pairs: List[Tuple[int, int]] = Field(default_factory=list)

    def to_matching(self, n: int) -> EarlyMatching:
        return EarlyMatching(n, tuple(self.pairs))


class AnalyzeRequest(BaseModel):
    realization: RealizationModel
    matching: Optional[MatchingModel] = None


class RunManifest(BaseModel):
    """Everything needed to re-run a randomized subcommand."""

    tool: str = "unraveling_pipeline"
    version: str
    subcommand: str
    parameters: Dict[str, Any]
    seed: int
    run_id: Optional[str] = None
    digest: Optional[str] = None
    wall_time: Optional[float] = None
    runtime: Dict[str, Any] = Field(default_factory=dict)


# ---------------------------------------------------------------------------#
#                       LOADING                                               #
# ---------------------------------------------------------------------------#
def _describe(exc: ValidationError) -> str:
    first = exc.errors()[0]
    location = ".".join(str(part) for part in first.get("loc", ())) or "document"
    message = str(first.get("msg", "invalid value")).removeprefix("Value error, ")
    return f"{location}: {message}"


def parse_payload(model: Type[ModelT], payload: Union[Dict[str, Any], str, bytes]) -> ModelT:
    """Validate a dict or raw JSON text, turning validation failures into ConfigurationError."""
    try:
        if isinstance(payload, (str, bytes)):
            return model.model_validate_json(payload)
        return model.model_validate(payload)
    except ValidationError as exc:
        raise ConfigurationError(_describe(exc)) from exc


def load_json_file(path: Union[str, Path], model: Type[ModelT]) -> ModelT:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"{path.name}: cannot read file ({exc.strerror})") from exc
    return parse_payload(model, text)


def distribution_from_argument(value: Optional[str]) -> TypeDistribution:
    """A distribution given inline as JSON or as a path to a JSON file; uniform[0, 1] when absent."""
    if value is None:
        return TypeDistribution.uniform()
    if value.lstrip().startswith("{"):
        return parse_payload(DistributionModel, value).to_distribution()
    return load_json_file(value, DistributionModel).to_distribution()
