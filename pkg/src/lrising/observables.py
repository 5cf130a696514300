"""Magnetization profiles, anti-symmetry residuals, interface heights and the
comparison of interface magnetization with a one-dimensional chain."""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .enumeration import MAX_SITES, ExactGibbs, build_exact
from .exactsum import CertifiedValue, _entropy_sum, _profile_weights, relative_entropy_bound
from .kernel import (
    AnisoLRNN,
    BiAxialLR,
    BoxGeometry,
    Dobrushin,
    IsotropicLR,
    Plus,
    RowChain,
    SpinConfiguration,
)

N_BOOTSTRAP = 1000
BOOTSTRAP_SEED = 20240611


# --------------------------------------------------------------------------
# magnetization profiles
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MagnetizationProfile:
    """Per-site mean and standard error as (rows, columns) grids; row 0 is j_min."""

    geometry: BoxGeometry
    mean: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)
    n_samples: int

    def __post_init__(self):
        if np.any(np.abs(self.mean) > 1 + 1e-12):
            raise ValueError("magnetization outside [-1, 1]")

    def at(self, site) -> float:
        i, j = site
        return float(self.mean[j - self.geometry.j_min, i + self.geometry.L])

    @classmethod
    def from_exact(cls, g: ExactGibbs) -> "MagnetizationProfile":
        m = g.magnetization().reshape(g.geometry.shape)
        return cls(g.geometry, m, np.zeros_like(m), 0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "mean", "stderr"])
        g = self.geometry
        for r in range(g.height):
            for c in range(g.width):
                w.writerow([c - g.L, r + g.j_min, repr(float(self.mean[r, c])), repr(float(self.stderr[r, c]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, geometry: BoxGeometry, n_samples: int = 0) -> "MagnetizationProfile":
        mean = np.full(geometry.shape, np.nan)
        se = np.full(geometry.shape, np.nan)
        for row in csv.DictReader(io.StringIO(text)):
            r = int(row["j"]) - geometry.j_min
            c = int(row["i"]) + geometry.L
            mean[r, c] = float(row["mean"])
            se[r, c] = float(row["stderr"])
        if np.isnan(mean).any():
            raise ValueError("profile CSV does not cover the box")
        return cls(geometry, mean, se, n_samples)


class ProfileAccumulator:
    """Running per-site sums; feed raw spin arrays one sample at a time."""

    def __init__(self, geometry: BoxGeometry):
        self.geometry = geometry
        self.n = 0
        self.s1 = np.zeros(geometry.n_sites)
        self.s2 = np.zeros(geometry.n_sites)

    def __call__(self, spins):
        s = np.asarray(spins, dtype=float)
        self.n += 1
        self.s1 += s
        self.s2 += s * s

    def profile(self) -> MagnetizationProfile:
        if self.n < 2:
            raise ValueError("a profile needs at least 2 samples")
        mean = self.s1 / self.n
        var = np.maximum(self.s2 / self.n - mean * mean, 0.0) * self.n / (self.n - 1)
        shape = self.geometry.shape
        return MagnetizationProfile(self.geometry, mean.reshape(shape),
                                    np.sqrt(var / self.n).reshape(shape), self.n)


def magnetization_profile(samples, geometry: BoxGeometry | None = None) -> MagnetizationProfile:
    """Sample mean and naive standard error per site.

    ``samples`` is an (n, |box|) array of spins (with ``geometry``) or a
    sequence of :class:`SpinConfiguration`.
    """
    if isinstance(samples, np.ndarray):
        if geometry is None:
            raise ValueError("geometry is required with a raw sample array")
        arr = samples.astype(float)
    else:
        samples = list(samples)
        if not samples:
            raise ValueError("empty sample stream")
        geometry = samples[0].geometry
        arr = np.array([s.spins for s in samples], dtype=float)
    if arr.shape[0] < 2:
        raise ValueError("a profile needs at least 2 samples")
    n = arr.shape[0]
    mean = arr.mean(axis=0).reshape(geometry.shape)
    se = (arr.std(axis=0, ddof=1) / np.sqrt(n)).reshape(geometry.shape)
    return MagnetizationProfile(geometry, mean, se, n)


@dataclass(frozen=True)
class AntisymmetryReport:
    residual: np.ndarray = field(repr=False)
    ratio: np.ndarray = field(repr=False)
    max_abs: float
    max_ratio: float


def antisymmetry_residual(p: MagnetizationProfile, h: int = 1) -> AntisymmetryReport:
    """residual(i, j) = mean(i, j) + mean(i, 2h - 1 - j); zero for the exact measure.

    ``ratio`` divides by the combined standard error and is NaN where that is 0.
    """
    g = p.geometry
    if not g.is_symmetric_about(h):
        raise ValueError(f"box rows {g.j_min}..{g.j_max} are not symmetric about {h} - 1/2")
    mirror = p.mean[::-1]
    res = p.mean + mirror
    comb = np.sqrt(p.stderr ** 2 + p.stderr[::-1] ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(comb > 0, np.abs(res) / comb, np.nan)
    max_ratio = float(np.nanmax(ratio)) if np.any(comb > 0) else 0.0
    return AntisymmetryReport(res, ratio, float(np.abs(res).max()), max_ratio)


# --------------------------------------------------------------------------
# interfaces
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InterfaceTrace:
    heights: np.ndarray
    reference_height: int
    columns: np.ndarray

    def at(self, i: int) -> float:
        return float(self.heights[int(np.searchsorted(self.columns, i))])


def interface_heights(spins, geometry: BoxGeometry, reference: int) -> np.ndarray:
    """Vectorised interface heights for an (n, |box|) spin array; shape (n, columns).

    h_i = #{j >= ref: sigma = -1} - #{j < ref: sigma = +1}: a rigid shift of the
    interface up by k gives +k.
    """
    arr = np.asarray(spins).reshape(-1, geometry.height, geometry.width)
    j = np.arange(geometry.j_min, geometry.j_max + 1)
    above = (j >= reference)[None, :, None]
    minus = arr < 0
    return (np.sum(minus & above, axis=1) - np.sum(~minus & ~above, axis=1)).astype(float)


def interface_height(config: SpinConfiguration, reference: int) -> InterfaceTrace:
    g = config.geometry
    h = interface_heights(config.spins[None, :], g, reference)[0]
    return InterfaceTrace(h, reference, np.arange(-g.L, g.L + 1))


@dataclass(frozen=True)
class FluctuationReport:
    sizes: np.ndarray
    n_samples: np.ndarray
    variance: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    bootstrap_se: np.ndarray
    exponent: float
    exponent_se: float
    degenerate: bool

    def separated(self) -> bool:
        """Strictly increasing variance with non-overlapping confidence intervals."""
        return bool(np.all(self.ci_high[:-1] < self.ci_low[1:]))

    def table(self) -> list[dict]:
        return [
            {"L": int(L), "n": int(n), "variance": float(v), "ci_low": float(lo),
             "ci_high": float(hi), "bootstrap_se": float(se)}
            for L, n, v, lo, hi, se in zip(self.sizes, self.n_samples, self.variance,
                                           self.ci_low, self.ci_high, self.bootstrap_se)
        ]


def bootstrap_variance(x, n_boot: int = N_BOOTSTRAP, seed: int = BOOTSTRAP_SEED,
                       block: int = 1, level: float = 0.95):
    """Variance of ``x`` with a (block) bootstrap percentile interval and standard error."""
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    n = x.size
    nb = max(1, n // block)
    starts = rng.integers(0, n - block + 1, size=(n_boot, nb))
    idx = (starts[:, :, None] + np.arange(block)[None, None, :]).reshape(n_boot, -1)
    boots = x[idx].var(axis=1, ddof=1)
    a = 0.5 * (1 - level)
    lo, hi = np.quantile(boots, [a, 1 - a])
    return float(x.var(ddof=1)), float(lo), float(hi), float(boots.std(ddof=1))


def interface_fluctuations(runs, block: int = 1, level: float = 0.95) -> FluctuationReport:
    """Variance of the mid-column height per size and the log-log growth exponent.

    ``runs`` maps each width parameter L to a 1D array of sampled heights
    (already restricted to the chosen column).  The exponent is reported,
    never judged.
    """
    if len(runs) < 3:
        raise ValueError("interface_fluctuations needs at least 3 sizes")
    sizes = np.array(sorted(runs))
    stats_ = [bootstrap_variance(runs[L], block=block, level=level) for L in sizes]
    var = np.array([s[0] for s in stats_])
    degenerate = bool(np.any(var <= 0))
    if degenerate:
        slope, slope_se = float("nan"), float("nan")
    else:
        x, y = np.log(sizes), np.log(var)
        coef, cov = np.polyfit(x, y, 1, cov=True) if len(sizes) > 3 else (np.polyfit(x, y, 1), None)
        slope = float(coef[0])
        slope_se = float(np.sqrt(cov[0, 0])) if cov is not None else float("nan")
    return FluctuationReport(
        sizes, np.array([len(runs[L]) for L in sizes]), var,
        np.array([s[1] for s in stats_]), np.array([s[2] for s in stats_]),
        np.array([s[3] for s in stats_]), slope, slope_se, degenerate,
    )


# --------------------------------------------------------------------------
# van Beijeren comparison
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VanBeijerenReport:
    columns: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    lhs_stderr: np.ndarray
    rhs_stderr: np.ndarray
    exact: bool
    exploratory: bool

    @property
    def margin(self) -> np.ndarray:
        return self.lhs - self.rhs

    @property
    def margin_stderr(self) -> np.ndarray:
        return np.sqrt(self.lhs_stderr ** 2 + self.rhs_stderr ** 2)

    def holds(self, n_sigma: float = 4.0, atol: float = 1e-10) -> bool:
        return bool(np.all(self.margin >= -(n_sigma * self.margin_stderr + atol)))


def _site_means(model, box, bc, beta, field_epsilon, mc_plan):
    """Exact means when the box is enumerable, Metropolis otherwise; (mean, stderr) grids."""
    if box.n_sites <= MAX_SITES and mc_plan is None:
        g = build_exact(model, box, bc, beta, min(field_epsilon, 1e-10))
        prof = MagnetizationProfile.from_exact(g)
        return prof.mean, prof.stderr, True
    from .mc import ChainState, sample_configurations

    plan = dict(burn_in_sweeps=200, n_samples=2000, thinning_sweeps=2, seed=1)
    plan.update(mc_plan or {})
    st = ChainState.start(model, box, bc, beta, plan["seed"], field_epsilon)
    if plan["burn_in_sweeps"]:
        sample_configurations(st, 1, plan["burn_in_sweeps"])
    conf = sample_configurations(st, plan["n_samples"], plan["thinning_sweeps"])
    prof = magnetization_profile(conf, box)
    return prof.mean, prof.stderr, False


def van_beijeren_check(model2d, box: BoxGeometry, beta: float, field_epsilon: float = 1e-9,
                       mc_plan: dict | None = None, chain_L: int | None = None,
                       exploratory: bool = False) -> VanBeijerenReport:
    """Row-1 magnetization under Dobrushin(1) against a Dyson chain under plus b.c.

    The 2D box must be symmetric about height 1/2.  The chain has 2 * chain_L
    + 1 sites (default: the box width) and coupling |di|^(-alpha1).  Boxes up
    to 20 sites and chains up to 20 sites are enumerated exactly unless an
    ``mc_plan`` (keys seed, burn_in_sweeps, n_samples, thinning_sweeps) is
    given.
    """
    if not isinstance(model2d, (AnisoLRNN, BiAxialLR)):
        raise TypeError("van_beijeren_check needs an AnisoLRNN or BiAxialLR model")
    if not 1 < model2d.alpha1 < 2:
        if not exploratory:
            raise ValueError("alpha1 must lie in (1, 2) for the claim test; pass exploratory=True")
        warnings.warn("alpha1 outside (1, 2): the inequality is not claimed here", stacklevel=2)
    if not box.is_symmetric_about(1):
        raise ValueError("the 2D box must be symmetric about height 1/2 (use BoxGeometry.about_interface)")
    chain_L = box.L if chain_L is None else chain_L
    if chain_L < box.L:
        raise ValueError("the chain must be at least as long as the box row")

    mean2d, se2d, exact2d = _site_means(model2d, box, Dobrushin(1), beta, field_epsilon, mc_plan)
    row = 1 - box.j_min
    lhs, lhs_se = mean2d[row], se2d[row]

    chain_box = BoxGeometry(chain_L, 0)
    chain = RowChain(model2d.alpha1)
    mean1d, se1d, exact1d = _site_means(chain, chain_box, Plus(), beta, field_epsilon,
                                         None if chain_box.n_sites <= MAX_SITES else mc_plan)
    off = chain_L - box.L
    rhs = mean1d[0, off : off + box.width]
    rhs_se = se1d[0, off : off + box.width]
    return VanBeijerenReport(np.arange(-box.L, box.L + 1), lhs, rhs, lhs_se, rhs_se,
                             exact2d and exact1d, not 1 < model2d.alpha1 < 2)


# --------------------------------------------------------------------------
# relative entropy estimator
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EntropyEstimate:
    estimate: CertifiedValue
    bound: CertifiedValue

    @property
    def within_bound(self) -> bool:
        return self.estimate.value <= self.bound.value + self.estimate.tail_bound + self.bound.tail_bound


def relative_entropy_estimator(p: MagnetizationProfile, model: IsotropicLR, L: int, ell: int,
                               tol: float = 1e-10) -> EntropyEstimate:
    """Split sum of the deterministic bound with measured <sigma_(i,j)>, j >= 1, as weights.

    The profile must come from a Dobrushin(1) run on a box of half-width L
    whose rows include 1; heights above the box reuse the top row.
    """
    if not isinstance(model, IsotropicLR):
        raise TypeError("relative_entropy_estimator is defined for the isotropic model")
    g = p.geometry
    if g.L != L:
        raise ValueError(f"profile half-width {g.L} does not match L = {L}")
    if g.j_max < 1 or np.isnan(p.mean).any():
        raise ValueError("profile is missing entries at heights j >= 1")
    upper = p.mean[1 - g.j_min :].T  # (columns, heights 1..j_max)
    est = _entropy_sum(model.alpha, L, ell, _profile_weights(upper, L), tol)
    bound = relative_entropy_bound(model, L, ell, 1.0, tol)
    return EntropyEstimate(est, bound)
