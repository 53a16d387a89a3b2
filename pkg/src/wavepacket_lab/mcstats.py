"""Monte Carlo checks of sub-gaussian moments, Khintchine bounds and suprema.

Trials are drawn in fixed-size chunks, each from its own stream keyed by
(seed, chunk index), so results do not depend on how the work is split.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .randomize import SubGaussianLaw

__all__ = [
    "MomentReport",
    "SupremaReport",
    "khintchine_moment",
    "subgaussian_norm_estimate",
    "suprema_bound_check",
    "exact_rademacher_moment",
    "gaussian_subgaussian_norm",
    "bootstrap_ci",
    "write_moment_csv",
]

CHUNK = 8192
_DOMAIN_MC = 0x4D43


def _law(law) -> SubGaussianLaw:
    return law if isinstance(law, SubGaussianLaw) else SubGaussianLaw(law)


def _chunks(trials: int):
    start = 0
    i = 0
    while start < trials:
        m = min(CHUNK, trials - start)
        yield i, m
        start += m
        i += 1


def _stream(seed: int, tag: int, chunk: int) -> np.random.Generator:
    seed = int(seed) & (2**64 - 1)
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, _DOMAIN_MC, tag, chunk])
    return np.random.Generator(np.random.Philox(ss))


def bootstrap_ci(samples: np.ndarray, p: float, level: float = 0.95, reps: int = 200,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for (mean of samples)^{1/p}."""
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n == 0:
        return (math.nan, math.nan)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, _DOMAIN_MC, 0xB007])))
    stats = np.empty(reps)
    for r in range(reps):
        stats[r] = x[rng.integers(0, n, n)].mean() ** (1.0 / p)
    a = (1 - level) / 2
    return float(np.quantile(stats, a)), float(np.quantile(stats, 1 - a))


@dataclass
class MomentReport:
    law: str
    p: np.ndarray
    trials: int
    estimate: np.ndarray
    ratio: np.ndarray
    stderr: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray

    def rows(self) -> list[dict]:
        return [
            {"law": self.law, "p": float(p), "trials": self.trials, "estimate": float(e), "ratio": float(r),
             "ci_lo": float(lo), "ci_hi": float(hi)}
            for p, e, r, lo, hi in zip(self.p, self.estimate, self.ratio, self.ci_lo, self.ci_hi)
        ]

    def at(self, p: float) -> int:
        j = np.nonzero(np.isclose(self.p, p))[0]
        if not len(j):
            raise KeyError(p)
        return int(j[0])


def _moment_report(law: str, ps: np.ndarray, absS: np.ndarray, norm: np.ndarray, seed: int,
                   boot: int) -> MomentReport:
    n = len(absS)
    est, se, lo, hi = [], [], [], []
    for p in ps:
        y = absS**p
        m = float(y.mean())
        e = m ** (1.0 / p)
        sd = float(y.std(ddof=1)) if n > 1 else 0.0
        # delta method for the p-th root of a mean
        se.append(e / (p * m) * sd / math.sqrt(n) if m > 0 else 0.0)
        est.append(e)
        if boot:
            a, b = bootstrap_ci(y, p, reps=boot, seed=seed)
        else:
            a = b = math.nan
        lo.append(a)
        hi.append(b)
    est = np.array(est)
    return MomentReport(law, ps, n, est, est / norm, np.array(se), np.array(lo), np.array(hi))


def khintchine_moment(a: Sequence[float], law="rademacher", p: float | Sequence[float] = 2.0,
                      trials: int = 100_000, seed: int = 0, bootstrap: int = 0) -> MomentReport:
    """Estimate (E|sum a_j X_j|^p)^{1/p} and its ratio to sqrt(p) |a|_2."""
    lw = _law(law)
    a = np.asarray(a, dtype=float)
    ps = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(ps < 1):
        raise ValueError("moments need p >= 1")
    parts = []
    for i, m in _chunks(trials):
        X = lw.sample(_stream(seed, 1, i), (m, len(a)))
        parts.append(np.abs(X @ a))
    absS = np.concatenate(parts) if parts else np.zeros(0)
    norm = np.sqrt(ps) * float(np.linalg.norm(a))
    return _moment_report(lw.name, ps, absS, norm, seed, bootstrap)


def exact_rademacher_moment(a: Sequence[float], p: float) -> float:
    """(E|sum a_j eps_j|^p)^{1/p} by enumerating all sign patterns (len(a) <= 20)."""
    a = np.asarray(a, dtype=float)
    if len(a) > 20:
        raise ValueError("exhaustive enumeration limited to 20 coefficients")
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=len(a))))
    return float(np.mean(np.abs(signs @ a) ** p) ** (1.0 / p))


def subgaussian_norm_estimate(law="gaussian", ps: Sequence[float] = (1, 2, 4, 8, 16), trials: int = 100_000,
                              seed: int = 0, scale: float = 1.0) -> float:
    """max over the grid of (E|cX|^p)^{1/p} / sqrt(p) from shared samples."""
    lw = _law(law)
    ps = np.asarray(ps, dtype=float)
    x = np.concatenate([np.abs(scale * lw.sample(_stream(seed, 2, i), m)) for i, m in _chunks(trials)])
    vals = [float(np.mean(x**p) ** (1.0 / p)) / math.sqrt(p) for p in ps]
    return max(vals)


def gaussian_subgaussian_norm(ps: Sequence[float]) -> float:
    """Analytic max over the grid of (E|G|^p)^{1/p} / sqrt(p) for a standard Gaussian."""
    lw = SubGaussianLaw("gaussian")
    return max(lw.moment(p) ** (1.0 / p) / math.sqrt(p) for p in ps)


@dataclass
class SupremaReport:
    law: str
    J: np.ndarray
    mean_max: np.ndarray
    ratio: np.ndarray
    mode: str

    @property
    def max_ratio(self) -> float:
        return float(self.ratio.max())


def suprema_bound_check(J: int | Sequence[int] = (10, 100, 1000), law="gaussian", trials: int = 20_000,
                        seed: int = 0, mode: str = "shared") -> SupremaReport:
    """E max_{j <= J} |X_j| / sqrt(log(2 + J)).

    ``mode="shared"`` draws ceil(J/2) sources and lets X_j = Z_{j mod ceil(J/2)},
    so every X_j has the law exactly but pairs are fully dependent;
    ``mode="iid"`` uses independent copies.
    """
    if mode not in ("shared", "iid"):
        raise ValueError("mode must be 'shared' or 'iid'")
    lw = _law(law)
    Js = np.atleast_1d(np.asarray(J, dtype=int))
    if np.any(Js < 1):
        raise ValueError("J must be >= 1")
    means = []
    for Jv in Js:
        src = Jv if mode == "iid" else int(math.ceil(Jv / 2))
        acc = 0.0
        for i, m in _chunks(trials):
            Z = lw.sample(_stream(seed, 3 + int(Jv), i), (m, src))
            acc += float(np.abs(Z).max(axis=1).sum())
        means.append(acc / trials)
    means = np.array(means)
    return SupremaReport(lw.name, Js, means, means / np.sqrt(np.log(2 + Js)), mode)


def write_moment_csv(path: str | Path, reports: Sequence[MomentReport]) -> None:
    cols = ["law", "p", "trials", "estimate", "ratio", "ci_lo", "ci_hi"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in reports:
            for row in r.rows():
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
