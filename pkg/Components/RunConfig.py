"""
YAML run configuration validated with pydantic.

Sections: domain, physics, players, solver, workflow, metadata.
"""
import logging
import os
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from Components.Mesh import DomainSpec, MeshSpecError, validate_domain
from Components.NashGame import SolverOptions

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid run configuration; ``problems`` lists (dotted key, message) pairs"""

    def __init__(self, problems: List[Tuple[str, str]], source: str = "config"):
        self.problems = list(problems)
        lines = [f"  {key}: {message}" for key, message in self.problems]
        super().__init__(f"Invalid {source} ({len(self.problems)} problem(s)):\n" + "\n".join(lines))


class TargetSelector(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["zero", "manufactured", "streamfunction-O1"] = Field(
        default="zero", description="Desired velocity for this player")
    label: str = Field(default="O1", description="Subdomain holding the stream-function target")


class PlayerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(gt=0, description="Control cost weight")
    target: TargetSelector = Field(default_factory=TargetSelector)
    subdomain: Union[Literal["all"], List[str]] = Field(
        default="all", description="'all' or a list of subdomain labels")

    def labels(self) -> Optional[Tuple[str, ...]]:
        return None if self.subdomain == "all" else tuple(self.subdomain)


class PhysicsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    viscosity: float = Field(default=1.0, gt=0)
    source: Literal["zero", "manufactured"] = "zero"


class SolverConfig(SolverOptions):
    model_config = ConfigDict(extra="forbid")

    control_degree: Literal[0, 1] = 1

    def options(self) -> SolverOptions:
        return SolverOptions(**self.model_dump(exclude={"control_degree"}))


Method = Literal["fixed-point", "gradient", "reduced-cg", "dense-oracle"]


class WorkflowConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["solve", "converge", "compare", "example-multidomain"] = "solve"
    levels: List[int] = Field(default_factory=lambda: [8], description="Mesh resolutions n")
    methods: List[Method] = Field(
        default_factory=lambda: ["dense-oracle", "fixed-point", "gradient", "reduced-cg"],
        description="Methods run by the compare workflow")
    output_dir: str = "output"


class ExampleMetadata(BaseModel):
    """Recorded with the multi-domain example; not used in any equation"""
    model_config = ConfigDict(extra="forbid")

    reynolds: List[int] = Field(default_factory=lambda: [240, 720, 1200])
    a: float = 1.99
    mu: float = 0.01


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    domain: DomainSpec = Field(default_factory=DomainSpec)
    physics: PhysicsConfig = Field(default_factory=PhysicsConfig)
    players: List[PlayerConfig] = Field(
        default_factory=lambda: [PlayerConfig(alpha=1.0), PlayerConfig(alpha=0.5)])
    solver: SolverConfig = Field(default_factory=SolverConfig)
    workflow: WorkflowConfig = Field(default_factory=WorkflowConfig)
    metadata: ExampleMetadata = Field(default_factory=ExampleMetadata)

    def domain_at(self, resolution: int) -> DomainSpec:
        return self.domain.model_copy(update={"resolution": resolution})


def _cross_checks(config: RunConfig) -> List[Tuple[str, str]]:
    problems = []
    kind = config.workflow.kind
    levels = config.workflow.levels
    labels = config.domain.labels()

    if len(config.players) != 2:
        problems.append(("players", f"exactly two players are required, got {len(config.players)}"))
    if not levels:
        problems.append(("workflow.levels", "at least one mesh level is required"))
    for j, n in enumerate(levels):
        if n < 1:
            problems.append((f"workflow.levels.{j}", f"resolution must be >= 1, got {n}"))
            continue
        try:
            validate_domain(config.domain_at(n))
        except MeshSpecError as e:
            problems.append((f"workflow.levels.{j}", str(e)))
    if kind == "converge":
        if len(levels) < 3:
            problems.append(("workflow.levels", f"converge needs at least 3 levels, got {len(levels)}"))
        for j in range(len(levels) - 1):
            if levels[j + 1] != 2 * levels[j]:
                problems.append((f"workflow.levels.{j + 1}",
                                 f"levels must double to stay nested, got {levels[j]} -> {levels[j + 1]}"))
        if config.physics.source != "manufactured":
            problems.append(("physics.source", "converge measures errors against the manufactured solution"))
        for i, player in enumerate(config.players):
            if player.target.kind != "manufactured":
                problems.append((f"players.{i}.target.kind", "converge needs manufactured targets"))
    if kind == "compare" and len(config.workflow.methods) < 2:
        problems.append(("workflow.methods", "compare needs at least two methods"))
    if kind == "example-multidomain" and config.domain.kind != "multi-domain":
        problems.append(("domain.kind", "example-multidomain requires the multi-domain geometry"))

    uses_manufactured = config.physics.source == "manufactured" or any(
        p.target.kind == "manufactured" for p in config.players)
    if uses_manufactured and config.domain.kind != "unit-square":
        problems.append(("domain.kind", "manufactured data is defined on the unit square only"))

    for i, player in enumerate(config.players):
        key = f"players.{i}"
        if player.target.kind == "manufactured" and player.subdomain != "all":
            problems.append((f"{key}.subdomain", "manufactured targets need whole-domain controls ('all')"))
        if player.target.kind == "streamfunction-O1":
            if config.domain.kind != "multi-domain":
                problems.append((f"{key}.target.kind", "streamfunction-O1 is only valid with the multi-domain geometry"))
            elif player.target.label not in labels:
                problems.append((f"{key}.target.label", f"unknown subdomain '{player.target.label}', expected one of {labels}"))
        if player.subdomain != "all":
            if not player.subdomain:
                problems.append((f"{key}.subdomain", "label list is empty"))
            for label in player.subdomain:
                if label not in labels:
                    problems.append((f"{key}.subdomain", f"unknown subdomain '{label}', expected one of {labels}"))

    if abs(config.metadata.mu - (2.0 - config.metadata.a)) > 1e-12:
        logger.warning(f"metadata.mu={config.metadata.mu} differs from 2 - a = {2.0 - config.metadata.a}")
    return problems


def _set_dotted(data: Dict[str, Any], key: str, value: Any) -> None:
    node = data
    parts = key.split(".")
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


def _dotted(loc) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def validate_config(data: Dict[str, Any], source: str = "config") -> RunConfig:
    """Validate a parsed mapping; every problem is collected into one ConfigError"""
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError([(_dotted(err["loc"]), err["msg"]) for err in e.errors()], source) from None
    problems = _cross_checks(config)
    if problems:
        raise ConfigError(problems, source)
    return config


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Read and validate a YAML run configuration.

    Args:
        path: YAML file; None starts from the defaults
        overrides: dotted keys (e.g. "solver.tol") applied on top of the file

    Raises:
        ConfigError: unreadable file, YAML syntax, or invalid fields
    """
    data: Dict[str, Any] = {}
    source = "config"
    if path is not None:
        source = os.path.basename(path)
        if not os.path.exists(path):
            raise ConfigError([("<file>", f"config file not found: {path}")], source)
        try:
            with open(path) as handle:
                loaded = yaml.safe_load(handle)
        except yaml.YAMLError as e:
            raise ConfigError([("<file>", f"YAML syntax error: {e}")], source) from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError([("<root>", f"expected a mapping of sections, got {type(loaded).__name__}")], source)
        data = loaded

    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(data, key, value)

    config = validate_config(data, source)
    logger.debug(f"Loaded {source}: workflow {config.workflow.kind}, levels {config.workflow.levels}")
    return config
