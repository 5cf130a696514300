"""Statistical comparisons of sampled laws against exact ones."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class GoodnessOfFit:
    statistic: float
    dof: int
    pvalue: float
    n_bins: int
    total_variation: float


def chi_square_gof(counts, probs, min_expected: float = 5.0) -> GoodnessOfFit:
    """Pearson chi-square of observed counts against exact probabilities.

    Bins with expected count below ``min_expected`` are pooled into one bin;
    if that pool is itself too small it joins the smallest retained bin.
    When a single bin remains the pooled rare count is tested against its
    Poisson expectation instead.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = counts.sum()
    expected = probs * n
    tv = 0.5 * float(np.abs(counts / n - probs).sum())
    big = expected >= min_expected
    obs = list(counts[big])
    exp = list(expected[big])
    rare_o, rare_e = counts[~big].sum(), expected[~big].sum()
    if rare_e >= min_expected:
        obs.append(rare_o)
        exp.append(rare_e)
    elif rare_e > 0 or rare_o > 0:
        if len(exp) >= 2:
            k = int(np.argmin(exp))
            obs[k] += rare_o
            exp[k] += rare_e
        else:
            p = float(stats.poisson.sf(rare_o - 1, rare_e)) if rare_o > rare_e else float(stats.poisson.cdf(rare_o, rare_e))
            return GoodnessOfFit(float("nan"), 0, min(1.0, 2 * p), 1, tv)
    if len(exp) < 2:
        return GoodnessOfFit(0.0, 0, 1.0, len(exp), tv)
    obs = np.array(obs)
    exp = np.array(exp)
    stat = float(((obs - exp) ** 2 / exp).sum())
    dof = len(exp) - 1
    return GoodnessOfFit(stat, dof, float(stats.chi2.sf(stat, dof)), len(exp), tv)


def integrated_autocorrelation(x, window: int | None = None) -> float:
    """Integrated autocorrelation time with the self-consistent window c * tau (c = 5)."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    n = x.size
    var = x @ x / n
    if var == 0:
        return 0.5
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = 0.5
    for t in range(1, n if window is None else min(window, n)):
        tau += acf[t]
        if window is None and t >= 5 * tau:
            break
    return float(tau)
