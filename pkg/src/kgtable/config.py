"""Run configuration: one flat dataclass, a JSON file, and flag overrides.

Flags win over the file, the file wins over defaults. Unknown keys in the
file are rejected so stale experiment manifests fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

from .dataset import BuildSettings, ConfigurationError
from .paths import DEFAULT_BANNED_PREFIXES
from .query import QueryBudget
from .ranker import RankerConfig
from .selector import SelectorHyperParams


@dataclass
class RunConfig:
    # input files
    graph_path: str = ""
    entity_meta_path: str = ""
    predicate_meta_path: str = ""
    corpus_path: str = ""
    url2mid_path: str = ""
    mid2types_path: str = ""
    fget_path: str = ""
    embeddings_path: str = ""
    # artifact locations
    dataset_dir: str = "dataset"
    output_dir: str = "out"
    selector_model_path: str = ""
    ranker_model_path: str = ""
    # component choices
    selector: str = "embedding"  # oracle | random | jacsim | linear | embedding
    ranker: str = "feature"  # feature | random
    eval_split: str = "test"  # validation | test
    seed: int = 13
    threads: int = 1
    # path search and query execution
    max_path_len: int = 3
    degree_cap: int = 500
    banned_prefixes: tuple[str, ...] = DEFAULT_BANNED_PREFIXES
    max_rows: int = 10000
    max_steps: int = 1_000_000
    # dataset construction
    k_negatives: int = 10
    # selector training
    margin: float = 0.25
    l2_weight: float = 5e-6
    learning_rate: float = 1e-5
    batch_size: int = 250
    epochs: int = 2000
    optimizer: str = "sgd"
    dim_qis: int = 100
    dim_cn: int = 25
    dim_set: int = 100
    dim_chain: int = 250
    max_qis_tokens: int = 100
    max_cn_tokens: int = 10
    max_set_tokens: int = 100
    max_chain_tokens: int = 200
    linear_l2: float = 1e-3
    # ranker training
    tree_count: int = 100
    tree_depth: int = 4
    tree_learning_rate: float = 0.1
    pairwise_sigma: float = 1.0

    def budget(self) -> QueryBudget:
        return QueryBudget(max_rows=self.max_rows, max_steps=self.max_steps)

    def build_settings(self) -> BuildSettings:
        return BuildSettings(
            max_path_len=self.max_path_len,
            degree_cap=self.degree_cap,
            banned_prefixes=tuple(self.banned_prefixes),
            budget=self.budget(),
        )

    def selector_hp(self) -> SelectorHyperParams:
        return SelectorHyperParams(
            margin=self.margin,
            l2_weight=self.l2_weight,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            k_negatives=self.k_negatives,
            optimizer=self.optimizer,
            dim_qis=self.dim_qis,
            dim_cn=self.dim_cn,
            dim_set=self.dim_set,
            dim_chain=self.dim_chain,
            max_qis_tokens=self.max_qis_tokens,
            max_cn_tokens=self.max_cn_tokens,
            max_set_tokens=self.max_set_tokens,
            max_chain_tokens=self.max_chain_tokens,
            linear_l2=self.linear_l2,
        )

    def ranker_cfg(self) -> RankerConfig:
        return RankerConfig(
            tree_count=self.tree_count,
            tree_depth=self.tree_depth,
            learning_rate=self.tree_learning_rate,
            sigma=self.pairwise_sigma,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name: str, value):
    default = getattr(RunConfig(), name)
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        if isinstance(value, str):
            return tuple(v for v in value.split(",") if v)
        return tuple(value)
    return str(value)


def load_config(
    config_path: str | None = None, overrides: dict | None = None
) -> RunConfig:
    """Defaults, then the JSON file, then flag overrides; unknown keys fail."""
    values = {}
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            file_values = json.load(fh)
        if not isinstance(file_values, dict):
            raise ConfigurationError(f"{config_path}: expected a JSON object")
        for name, value in file_values.items():
            if name not in _FIELD_TYPES:
                raise ConfigurationError(f"{config_path}: unknown config key {name!r}")
            values[name] = _coerce(name, value)
    for name, value in (overrides or {}).items():
        if value is None:
            continue
        if name not in _FIELD_TYPES:
            raise ConfigurationError(f"unknown config key {name!r}")
        values[name] = _coerce(name, value)
    return RunConfig(**values)


def config_defaults() -> dict:
    """Field name to default value, for help text and documentation."""
    return {f.name: getattr(RunConfig(), f.name) for f in fields(RunConfig)}
