"""Grid search scored by how decorrelated the learned filters are.

A bank scores well when the eigenvalues of its filter correlation matrix sit
near 1, i.e. the filters are mutually uncorrelated. The winner is the grid
point minimizing sum |eigenvalue - 1|.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import kernels
from .autoencoder import AEHyper, DivergenceError, FilterBank, train
from .dataset import ConfigError, WindowSet


class DegenerateFilterError(ValueError):
    """A filter has zero variance, so its correlations are undefined."""


@dataclass(frozen=True)
class HyperGrid:
    k_values: tuple[int, ...]
    rho_values: tuple[float, ...]
    beta_values: tuple[float, ...]
    lambda_value: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "k_values", tuple(self.k_values))
        object.__setattr__(self, "rho_values", tuple(self.rho_values))
        object.__setattr__(self, "beta_values", tuple(self.beta_values))
        for name in ("k_values", "rho_values", "beta_values"):
            vals = getattr(self, name)
            if not vals:
                raise ConfigError(f"{name} must be non-empty")
            if len(set(vals)) != len(vals):
                raise ConfigError(f"{name} contains duplicates")
        if self.lambda_value < 0:
            raise ConfigError("lambda_value must be non-negative")

    @classmethod
    def default_first_block(cls) -> "HyperGrid":
        return cls(tuple(range(9, 26)), (0.01, 0.03, 0.09, 0.27), (1.0, 3.0, 5.0))

    @classmethod
    def default_second_block(cls) -> "HyperGrid":
        return cls(tuple(range(4, 10)), (0.01, 0.03, 0.09, 0.27), (1.0, 3.0, 5.0))

    def __len__(self) -> int:
        return len(self.k_values) * len(self.rho_values) * len(self.beta_values)


@dataclass
class GridEntry:
    hyper: AEHyper
    distance: float
    bank: FilterBank | None


@dataclass
class GridResult:
    entries: list[GridEntry]
    best: int

    def __post_init__(self):
        if not self.entries:
            raise ConfigError("grid result is empty")
        if not 0 <= self.best < len(self.entries):
            raise ConfigError("best index out of range")

    @property
    def best_entry(self) -> GridEntry:
        return self.entries[self.best]


def filter_correlation(bank: FilterBank) -> np.ndarray:
    """Pearson correlation matrix of the filters, one row per filter."""
    if bank.k < 2:
        raise ConfigError("correlation needs at least two filters")
    variances = bank.filters.var(axis=1)
    for i, v in enumerate(variances):
        if v == 0.0:
            raise DegenerateFilterError(f"filter {i} has zero variance")
    corr = np.corrcoef(bank.filters)
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def decorrelation_distance(bank: FilterBank, normalized: bool = False) -> float:
    """Sum of |eigenvalue - 1| over the filter correlation spectrum.

    Zero means perfectly uncorrelated filters. The normalized variant divides
    by the filter count; it is never the default.
    """
    corr = filter_correlation(bank)
    assert abs(float(np.trace(corr)) - bank.k) <= 1e-9
    eigs = np.sort(kernels.jacobi_eigvals(corr))
    dist = float(np.abs(eigs - 1.0).sum())
    return dist / bank.k if normalized else dist


def grid_search(windows: WindowSet, grid: HyperGrid, base_hyper: AEHyper,
                train_fn=train, normalized: bool = False) -> GridResult:
    """Train one bank per grid point and pick the least-correlated one.

    Seeds derive deterministically as base seed + grid index. A diverged or
    degenerate point is recorded with infinite distance rather than aborting
    the search. Ties break toward smaller k, then rho, then beta.
    """
    entries = []
    for idx, (k, rho, beta) in enumerate(product(grid.k_values, grid.rho_values, grid.beta_values)):
        hyper = dataclasses.replace(base_hyper, k=k, rho=rho, beta=beta,
                                    lam=grid.lambda_value, seed=base_hyper.seed + idx)
        bank = None
        distance = np.inf
        try:
            bank = train_fn(windows, hyper)
            distance = decorrelation_distance(bank, normalized=normalized)
        except (DivergenceError, DegenerateFilterError):
            pass
        entries.append(GridEntry(hyper, distance, bank))

    best = min(range(len(entries)),
               key=lambda i: (entries[i].distance, entries[i].hyper.k,
                              entries[i].hyper.rho, entries[i].hyper.beta))
    return GridResult(entries, best)
