"""JSON experiment configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from ..core import LearningConfig
from ..envs import RewardTransform, make_chain, make_grid_pacman, make_risky_path, wrap_rewards
from ..profiles import PRESETS, BiasProfile

SCHEMA_VERSION = 1

ENV_FAMILIES = {
    "chain": make_chain,
    "grid_pacman": make_grid_pacman,
    "risky_path": make_risky_path,
}


class ConfigError(ValueError):
    """Bad configuration; the message names the offending field."""


@dataclass
class EnvSpec:
    family: str
    params: dict[str, Any] = field(default_factory=dict)

    def build(self, seed=None, transform: RewardTransform | None = None):
        """Fresh environment; ``seed`` feeds both the env and any reward wrapper."""
        if seed is None:
            env_seq = wrap_seq = None
        else:
            seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
            env_seq, wrap_seq = seq.spawn(2)
        env = ENV_FAMILIES[self.family](**self.params)
        env.rng = np.random.default_rng(env_seq)
        if transform is not None and not transform.is_identity:
            env = wrap_rewards(env, transform, rng=np.random.default_rng(wrap_seq))
        return env


@dataclass
class Variant:
    name: str
    transform: RewardTransform


@dataclass
class AdaptSettings:
    grid: list[list[float]]
    rounds: int = 20
    episodes_per_round: int = 200
    beta: float = 4.0
    beta_schedule: str = "constant"
    kernel_lengthscale: float = 1.0
    kernel_variance: float = 1.0
    noise_variance: float = 1e-2
    baseline_seeds: int = 10


@dataclass
class RecoverSettings:
    candidates: list[str] = field(default_factory=lambda: ["standard", "PD", "bvFTD"])
    seeds_per_candidate: int = 5
    n_trajectories: int = 10
    gamma: float | None = None  # defaults to the learning discount


@dataclass
class ExperimentConfig:
    environment: EnvSpec
    profiles: list[BiasProfile]
    learning: LearningConfig
    transform: RewardTransform = field(default_factory=RewardTransform)
    variants: list[Variant] = field(default_factory=list)
    repetitions: int = 1
    output_dir: str = "runs"
    deterministic_profiles: bool = False
    workers: int = 1
    adapt: AdaptSettings | None = None
    recover: RecoverSettings = field(default_factory=RecoverSettings)
    raw: dict[str, Any] = field(default_factory=dict, repr=False)

    def snapshot(self) -> dict[str, Any]:
        """Normalised JSON-able config that :func:`parse_config` accepts back."""
        data = dict(self.raw)
        data["schema_version"] = SCHEMA_VERSION
        data["learning"] = asdict(self.learning)
        data["repetitions"] = self.repetitions
        data["deterministic_profiles"] = self.deterministic_profiles
        data["output_dir"] = self.output_dir
        return data


def _require(mapping, key, where):
    if key not in mapping:
        raise ConfigError(f"missing field '{where}{key}'")
    return mapping[key]


def _parse_profile(item, index) -> BiasProfile:
    where = f"profiles[{index}]"
    if isinstance(item, str):
        if item not in PRESETS:
            raise ConfigError(f"{where}: unknown profile label {item!r} (known: {', '.join(PRESETS)})")
        return PRESETS[item]
    if isinstance(item, dict):
        phi = _require(item, "phi", where + ".")
        ranges = item.get("ranges", [0.0] * 4)
        try:
            return BiasProfile(str(item.get("label", f"custom{index}")), *(float(v) for v in phi),
                               ranges=tuple(float(v) for v in ranges))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from None
    raise ConfigError(f"{where}: expected a preset label or an object with 'phi'")


def _parse_transform(data, where) -> RewardTransform:
    if data is None:
        return RewardTransform()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    data = dict(data)
    after = data.pop("after", None)
    known = {f.name for f in fields(RewardTransform)} - {"after"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    try:
        after_t = _parse_transform(after, where + ".after") if after is not None else None
        return RewardTransform(**data, after=after_t)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(data: dict[str, Any]) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")

    env_data = _require(data, "environment", "")
    family = _require(env_data, "family", "environment.")
    if family not in ENV_FAMILIES:
        raise ConfigError(f"environment.family: unknown family {family!r} (known: {', '.join(ENV_FAMILIES)})")
    env = EnvSpec(family, dict(env_data.get("params", {})))
    try:
        env.build()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"environment.params: {exc}") from None

    profile_items = data.get("profiles", ["standard"])
    if not profile_items:
        raise ConfigError("profiles: at least one profile is required")
    profiles = [_parse_profile(item, i) for i, item in enumerate(profile_items)]
    labels = [p.label for p in profiles]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"profiles: labels must be unique, got {labels}")

    learning_data = dict(data.get("learning", {}))
    unknown = set(learning_data) - {f.name for f in fields(LearningConfig)}
    if unknown:
        raise ConfigError(f"learning: unknown field(s) {sorted(unknown)}")
    try:
        learning = LearningConfig(**learning_data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"learning: {exc}") from None

    repetitions = data.get("repetitions", 1)
    if not isinstance(repetitions, int) or repetitions < 1:
        raise ConfigError("repetitions: must be an integer >= 1")

    variants = []
    for i, item in enumerate(data.get("variants", [])):
        name = _require(item, "name", f"variants[{i}].")
        variants.append(Variant(str(name), _parse_transform(item.get("transform", {}), f"variants[{i}].transform")))
    if len({v.name for v in variants}) != len(variants):
        raise ConfigError("variants: names must be unique")

    adapt = None
    if "adapt" in data:
        a = dict(data["adapt"])
        try:
            adapt = AdaptSettings(**a)
        except TypeError as exc:
            raise ConfigError(f"adapt: {exc}") from None
        if len(adapt.grid) != 4 or not all(adapt.grid):
            raise ConfigError("adapt.grid: needs four non-empty coordinate lists")

    recover = RecoverSettings()
    if "recover" in data:
        try:
            recover = RecoverSettings(**data["recover"])
        except TypeError as exc:
            raise ConfigError(f"recover: {exc}") from None
        for label in recover.candidates:
            if label not in PRESETS:
                raise ConfigError(f"recover.candidates: unknown profile label {label!r}")

    workers = data.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers: must be an integer >= 1")

    return ExperimentConfig(
        environment=env,
        profiles=profiles,
        learning=learning,
        transform=_parse_transform(data.get("transform"), "transform"),
        variants=variants,
        repetitions=repetitions,
        output_dir=str(data.get("output_dir", "runs")),
        deterministic_profiles=bool(data.get("deterministic_profiles", False)),
        workers=workers,
        adapt=adapt,
        recover=recover,
        raw=json.loads(json.dumps(data)),
    )


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data)
