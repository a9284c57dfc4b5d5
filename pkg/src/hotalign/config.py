"""Run configuration shared by the pipeline, the evaluator and the CLI."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Union

from .errors import ConfigurationError
from .ot import SolverConfig

DEFAULT_K_LIST = (1, 5, 10, 30, 50)


@dataclass(frozen=True)
class RunConfig:
    lam: float = 1e-3
    alpha: float = 0.5
    beta: float = 0.15
    clusters: Union[int, str] = "auto"
    seed: int = 0
    outer_iters: int = 20
    inner_iters: int = 50
    tol: float = 1e-6
    log_floor: float = 1e-16
    max_inner_iters: int = 500
    bcd_rounds: int = 20
    bcd_prox_steps: int = 1
    element_budget: float = 5e7
    workers: int = 1
    use_attributes: bool = False
    barycenter_features: str = "embed"
    k_list: tuple = DEFAULT_K_LIST
    emit_threshold: float = 1e-9
    rank_scope: str = "global"

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ConfigurationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.lam > 0:
            raise ConfigurationError(f"lambda must be positive, got {self.lam}")
        if not 0 < self.beta <= 1:
            raise ConfigurationError(f"beta must lie in (0, 1], got {self.beta}")
        if self.clusters != "auto" and (not isinstance(self.clusters, int) or self.clusters < 1):
            raise ConfigurationError(f"clusters must be 'auto' or a positive integer, got {self.clusters!r}")
        if self.barycenter_features not in ("attr", "embed"):
            raise ConfigurationError("barycenter_features must be 'attr' or 'embed'")
        if self.rank_scope not in ("global", "cluster"):
            raise ConfigurationError("rank_scope must be 'global' or 'cluster'")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        object.__setattr__(self, "k_list", tuple(int(k) for k in self.k_list))

    def cluster_count(self, node_counts) -> int:
        """``auto`` is ``ceil(max_i n_i / 50)``."""
        if self.clusters == "auto":
            return max(1, math.ceil(max(node_counts) / 50))
        return int(self.clusters)

    def solver(self) -> SolverConfig:
        return SolverConfig(lam=self.lam, alpha=self.alpha, outer_iters=self.outer_iters,
                            inner_iters=self.inner_iters, outer_tol=self.tol,
                            log_floor=self.log_floor, max_inner_iters=self.max_inner_iters)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k_list"] = list(self.k_list)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "k_list" in d:
            d["k_list"] = tuple(d["k_list"])
        return cls(**d)
