"""Run configuration shared by the CLI and the fitting/evaluation pipeline."""

from dataclasses import dataclass, field, replace

from .copulas import DEFAULT_CANDIDATES
from .errors import DomainError

MODEL_KINDS = ("vine", "gaussian-vine", "stcv", "kriging")
MARGINAL_FAMILIES = ("gumbel", "gev")
COVARIATE_CHOICES = ("both", "pm25", "co", "none")


@dataclass(frozen=True)
class RunConfig:
    """All knobs of one model run; every random draw flows from ``seed``
    through numpy's default generator (PCG64)."""

    marginal: str = "gumbel"
    n_bins: int = 10
    poly_degree: int = 3
    d_spatial: int = 3
    dc_spatial: int = 1
    covariates: str = "both"
    cv_folds: int = 10
    seed: int = 0
    quad_nodes: int = 64
    model_kind: str = "vine"
    candidates: tuple = DEFAULT_CANDIDATES
    min_pairs: int = 30
    threads: int = 0  # 0 = leave the numba default alone

    def __post_init__(self):
        if self.marginal not in MARGINAL_FAMILIES:
            raise DomainError(f"marginal must be one of {MARGINAL_FAMILIES}")
        if self.model_kind not in MODEL_KINDS:
            raise DomainError(f"model_kind must be one of {MODEL_KINDS}")
        if self.covariates not in COVARIATE_CHOICES:
            raise DomainError(f"covariates must be one of {COVARIATE_CHOICES}")
        for name in ("n_bins", "poly_degree", "d_spatial", "dc_spatial",
                     "cv_folds", "quad_nodes"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be positive")
        if self.model_kind == "stcv" and self.covariates != "none":
            # the covariate-free model ignores covariate neighbors by definition
            object.__setattr__(self, "covariates", "none")

    def resolved(self):
        """Apply model-kind implications (candidate restriction, covariates)."""
        cfg = self
        if cfg.model_kind == "gaussian-vine":
            cfg = replace(cfg, candidates=("gaussian",))
        return cfg

    @property
    def n_neighbors(self):
        """d' = d + 2*d_c given the covariate subset."""
        n_groups = {"both": 2, "pm25": 1, "co": 1, "none": 0}[self.covariates]
        return 2 * self.d_spatial + n_groups * 2 * self.dc_spatial

    @property
    def n_upper_edges(self):
        d = self.n_neighbors
        return d * (d - 1) // 2
