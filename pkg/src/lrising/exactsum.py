"""Deterministic lattice sums with certified truncation error.

Every infinite series here is rearranged into sums of nonnegative, eventually
convex and decreasing terms.  A convex decreasing ``f`` obeys

    int_{K}^{inf} f + f(K)/2  <=  sum_{n >= K} f(n)  <=  int_{K-1/2}^{inf} f

(trapezoid from below, midpoint from above), so the omitted tail is
bracketed by closed-form integrals and the bracket half-width is carried as
``tail_bound``.  Floating-point rounding is folded into the same bound.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np
from scipy import special

from .kernel import (
    AnisoLRNN,
    BiAxialLR,
    BoxGeometry,
    Dobrushin,
    IsotropicLR,
    Minus,
    Plus,
    RowChain,
    interaction_field,
)

EPS = np.finfo(float).eps

#: The energy chain for the half-line flip starts with a factor 2 that the
#: final lattice sum drops; ``step_energy`` returns the undoubled series.
STEP_ENERGY_PREFACTOR = 2


class DivergenceError(ValueError):
    """Raised when the requested series does not converge."""


@dataclass(frozen=True)
class CertifiedValue:
    value: float
    tail_bound: float
    truncation_radius: int

    @property
    def interval(self) -> tuple[float, float]:
        return self.value - self.tail_bound, self.value + self.tail_bound

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return abs(x - self.value) <= self.tail_bound + slack

    def to_record(self, quantity: str, **parameters) -> dict:
        return {
            "quantity": quantity,
            "parameters": parameters,
            "value": self.value,
            "tail_bound": self.tail_bound,
            "truncation_radius": self.truncation_radius,
        }


# --------------------------------------------------------------------------
# one-dimensional tails
# --------------------------------------------------------------------------

def _halfline_integral(a: float, o, t):
    """int_t^inf (s^2 + o^2)^(-a/2) ds, vectorised over o and t (t > 0)."""
    o = np.abs(np.asarray(o, dtype=float))
    t = np.asarray(t, dtype=float)
    o, t = np.broadcast_arrays(o, t)
    out = np.empty(o.shape)
    zero = o == 0
    out[zero] = t[zero] ** (1.0 - a) / (a - 1.0)
    if np.any(~zero):
        oo, tt = o[~zero], t[~zero]
        p, q = 0.5 * (a - 1.0), 0.5
        x = oo * oo / (oo * oo + tt * tt)
        out[~zero] = oo ** (1.0 - a) * 0.5 * special.beta(p, q) * special.betainc(p, q, x)
    return out


def power_tail(a: float, start: int) -> tuple[float, float]:
    """Midpoint and half-width of the bracket for sum_{n >= start} n^(-a)."""
    if a <= 1:
        raise DivergenceError(f"sum n^(-{a}) diverges")
    lo = start ** (1.0 - a) / (a - 1.0) + 0.5 * start ** (-a)
    hi = (start - 0.5) ** (1.0 - a) / (a - 1.0)
    return 0.5 * (lo + hi), 0.5 * (hi - lo)


class HalfLineTable:
    """Suffix sums S[o, s] = sum_{n >= s} (n^2 + o^2)^(-a/2) for 0 <= o <= o_max, 1 <= s.

    Terms n = 1..K are summed explicitly; the tail n > K uses the convex
    bracket.  K is doubled until every offset's half-width is below ``tol``.
    """

    def __init__(self, a: float, o_max: int, s_max: int, tol: float = 1e-12, k_min: int = 64):
        if a <= 1:
            raise DivergenceError(f"half-line sums with exponent {a} <= 1 diverge")
        self.a = a
        self.o_max = int(o_max)
        offsets = np.arange(self.o_max + 1, dtype=float)
        # f(n) = (n^2 + o^2)^(-a/2) is convex in n once n >= o / sqrt(a + 1)
        K = max(int(s_max) + 1, int(math.ceil(self.o_max / math.sqrt(a + 1.0))) + 2, k_min)
        while True:
            lo = _halfline_integral(a, offsets, K + 1.0) + 0.5 * self._terms(offsets, K + 1.0)
            hi = _halfline_integral(a, offsets, K + 0.5)
            half = 0.5 * (hi - lo)
            if half.max() <= tol or K > 1 << 22:
                break
            K *= 2
        self.K = K
        n = np.arange(1, K + 1, dtype=float)
        terms = self._terms(offsets[:, None], n[None, :])
        # suffix sums accumulate the small terms first
        suffix = np.cumsum(terms[:, ::-1], axis=1)[:, ::-1] + (0.5 * (lo + hi))[:, None]
        self.terms = terms
        self.prefix = np.concatenate([np.zeros((self.o_max + 1, 1)), np.cumsum(terms, axis=1)], axis=1)
        self.suffix = np.concatenate([suffix, (0.5 * (lo + hi))[:, None]], axis=1)
        # rounding of K sequential positive additions
        self.halfwidth = half + (K + 4) * EPS * self.suffix[:, 0]

    def _terms(self, o, n):
        return (n * n + o * o) ** (-0.5 * self.a)

    def S(self, o, s):
        """sum_{n >= s}, s >= 1."""
        s = np.asarray(s)
        if np.any(s < 1) or np.any(s > self.K + 1):
            raise IndexError("suffix start outside the table")
        return self.suffix[o, s - 1]

    def finite(self, o, first, last):
        """sum_{n=first}^{last} (0 when last < first); 1 <= first, last <= K."""
        first = np.asarray(first)
        last = np.asarray(last)
        ok = last >= first
        lo_idx = np.clip(first - 1, 0, self.K)
        hi_idx = np.clip(last, 0, self.K)
        if np.any(ok & ((first < 1) | (last > self.K))):
            raise IndexError("finite sum outside the table")
        return np.where(ok, self.prefix[o, hi_idx] - self.prefix[o, lo_idx], 0.0)


# --------------------------------------------------------------------------
# tail bounds
# --------------------------------------------------------------------------

def tail_bound(model, R: int) -> float:
    """Upper bound on the coupling mass beyond distance R.

    IsotropicLR: bound on sum_{|y - x| > R} |x - y|^(-alpha) of the form
    C(alpha) R^(2 - alpha).  Each lattice point is charged to its unit cell,
    whose points are within sqrt(2)/2 of it; the ring correction is absorbed
    into C(alpha) using R >= 2.

    Row/column models: the one-sided 1D bound sum_{n > R} n^(-alpha1) <=
    R^(1 - alpha1) / (alpha1 - 1).  Use :func:`site_tail_bound` for the full
    per-site mass.
    """
    if R < 2:
        raise ValueError("tail_bound needs R >= 2")
    if isinstance(model, IsotropicLR):
        a = model.alpha
        c = math.sqrt(2.0) / 2.0
        C = 2.0 * math.pi * ((1.0 - c) ** (2.0 - a) / (a - 2.0) + c * (1.0 - c) ** (1.0 - a) / (2.0 * (a - 1.0)))
        return C * R ** (2.0 - a)
    if isinstance(model, (AnisoLRNN, BiAxialLR, RowChain)):
        a = model.alpha1
        return R ** (1.0 - a) / (a - 1.0)
    raise TypeError(f"unknown coupling model {model!r}")


def site_tail_bound(model, R: int) -> float:
    """Bound on sum_{y: |y - x|_inf > R} J_xy for a fixed site x (all directions)."""
    if isinstance(model, IsotropicLR):
        return tail_bound(model, R)
    row = 2.0 * R ** (1.0 - model.alpha1) / (model.alpha1 - 1.0)
    if isinstance(model, BiAxialLR):
        return row + 2.0 * R ** (1.0 - model.alpha2) / (model.alpha2 - 1.0)
    return row


@functools.lru_cache(maxsize=16)
def lattice_total(alpha: float) -> CertifiedValue:
    """sum_{v in Z^2, v != 0} |v|^(-alpha) = 4 zeta(alpha/2) beta(alpha/2).

    The identity counts representations as sums of two squares; both factors
    come from mpmath at 30 digits.
    """
    if alpha <= 2:
        raise DivergenceError("the full lattice sum diverges for alpha <= 2")
    with mpmath.workdps(30):
        s = mpmath.mpf(alpha) / 2
        total = 4 * mpmath.zeta(s) * mpmath.dirichlet(s, [0, 1, 0, -1])
        value = float(total)
    return CertifiedValue(value, 4 * EPS * value, 0)


# --------------------------------------------------------------------------
# boundary fields
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryFieldTable:
    """field(x) = sum_{y outside the box} J_xy omega_y for every box site x."""

    geometry: BoxGeometry
    bc: object
    model: object
    values: np.ndarray = field(repr=False)
    tail_bounds: np.ndarray = field(repr=False)
    truncation_radius: int = 0
    epsilon: float = 0.0

    def __call__(self, site) -> CertifiedValue:
        k = self.geometry.index(site)
        return CertifiedValue(float(self.values[k]), float(self.tail_bounds[k]), self.truncation_radius)

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.geometry.shape)


def _bc_parts(bc):
    """(upper sign, interface height or None for uniform b.c.)."""
    if isinstance(bc, Plus):
        return 1, None
    if isinstance(bc, Minus):
        return -1, None
    if isinstance(bc, Dobrushin):
        return bc.upper, bc.h
    raise TypeError(f"unknown boundary condition {bc!r}")


def _signed_halfline(table: HalfLineTable, o, k0, jx, direction, upper, h):
    """sum_{k >= k0} omega(jx + direction*k) f_o(k) and its certification half-width.

    Vectorised over broadcastable ``o``, ``k0``, ``jx``.
    """
    base = table.S(o, k0)
    hw = table.halfwidth[o] * np.ones_like(base)
    if h is None:
        return upper * base, hw
    if direction > 0:
        # rows jx + k < h carry -upper
        last = h - 1 - jx
        return upper * (base - 2.0 * table.finite(o, k0, last)), hw
    # rows jx - k >= h carry +upper
    last = jx - h
    return -upper * (base - 2.0 * table.finite(o, k0, last)), hw


def _field_isotropic(model, box, bc, epsilon):
    a = model.alpha
    W, H, L = box.width, box.height, box.L
    ii, jj = box.coordinates()
    upper, h = _bc_parts(bc)
    if h is None:
        total = lattice_total(a)
        interior = interaction_field(model, box, np.ones(box.n_sites))
        values = upper * (total.value - interior)
        bounds = total.tail_bound + (box.n_sites + 4) * EPS * total.value * np.ones(box.n_sites)
        return values, bounds, 0

    m_rows = np.where(jj >= h, jj - h, h - 1 - jj)
    m_max = int(m_rows.max())
    reach = max(abs(h - box.j_min), abs(box.j_max - h)) + 1
    tol = 0.25 * epsilon / max(1, 2 * m_max + 1 + 2 * W)
    table = HalfLineTable(a, max(2 * L, m_max), max(2 * L + 1, H + reach + 1), tol=tol)

    # full exterior columns: cumulative over offsets of S(|k|, start)
    starts = np.arange(1, 2 * L + 2)
    col = table.S(np.arange(m_max + 1)[:, None], starts[None, :])
    col_hw = table.halfwidth[: m_max + 1]
    cum = np.cumsum(np.vstack([col[:1], 2.0 * col[1:]]), axis=0)
    cum_hw = np.cumsum(np.concatenate([col_hw[:1], 2.0 * col_hw[1:]]))
    sgn = np.where(jj >= h, 1.0, -1.0)
    right = L + 1 - ii
    left = L + 1 + ii
    part_a = upper * sgn * (cum[m_rows, right - 1] + cum[m_rows, left - 1])
    hw_a = 2.0 * cum_hw[m_rows]

    # half-lines above and below the box inside its own columns
    cols = np.arange(-L, L + 1)
    o = np.abs(cols[None, :] - ii[:, None])
    up, hw_up = _signed_halfline(table, o, (box.j_max + 1 - jj)[:, None], jj[:, None], +1, upper, h)
    dn, hw_dn = _signed_halfline(table, o, (jj - box.j_min + 1)[:, None], jj[:, None], -1, upper, h)
    part_b = up.sum(axis=1) + dn.sum(axis=1)
    hw_b = hw_up.sum(axis=1) + hw_dn.sum(axis=1)

    values = part_a + part_b
    bounds = hw_a + hw_b + (4 * W + 4 * m_max + 8) * EPS * np.abs(values)
    return values, bounds, table.K


def _field_axial(model, box, bc, epsilon):
    W, L = box.width, box.L
    ii, jj = box.coordinates()
    upper, h = _bc_parts(bc)
    row_sign = bc.values(jj).astype(float)
    reach = 0 if h is None else max(abs(h - box.j_min), abs(box.j_max - h)) + 1
    s_max = max(2 * L + 1, box.height + reach + 1)
    tol = 0.1 * epsilon
    rows = HalfLineTable(model.alpha1, 0, s_max, tol=tol)
    values = row_sign * (rows.S(0, L + 1 - ii) + rows.S(0, L + 1 + ii))
    bounds = 2.0 * rows.halfwidth[0] * np.ones(box.n_sites)
    K = rows.K
    if isinstance(model, AnisoLRNN):
        above = bc.values(box.j_max + 1)
        below = bc.values(box.j_min - 1)
        values = values + np.where(jj == box.j_max, above, 0) + np.where(jj == box.j_min, below, 0)
    elif isinstance(model, BiAxialLR):
        cols = HalfLineTable(model.alpha2, 0, s_max, tol=tol)
        up, hw_up = _signed_halfline(cols, 0, box.j_max + 1 - jj, jj, +1, upper, h)
        dn, hw_dn = _signed_halfline(cols, 0, jj - box.j_min + 1, jj, -1, upper, h)
        values = values + up + dn
        bounds = bounds + hw_up + hw_dn
        K = max(K, cols.K)
    bounds = bounds + 16 * EPS * np.abs(values)
    return values, bounds, K


@functools.lru_cache(maxsize=64)
def boundary_field(model, box: BoxGeometry, bc, epsilon: float = 1e-9) -> BoundaryFieldTable:
    """Exterior field of every box site, each certified to within ``epsilon``.

    Dobrushin conditions pair every exterior spin in a full column with its
    mirror about the interface, so a column contributes the finite sum
    sum_{|k| <= m} f(k) instead of two divergent-looking halves.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if isinstance(model, IsotropicLR):
        values, bounds, K = _field_isotropic(model, box, bc, epsilon)
    elif isinstance(model, (AnisoLRNN, BiAxialLR, RowChain)):
        values, bounds, K = _field_axial(model, box, bc, epsilon)
    else:
        raise TypeError(f"unknown coupling model {model!r}")
    if bounds.max() > epsilon:
        raise ValueError(
            f"cannot certify the boundary field to {epsilon:g}; best bound {bounds.max():.3g}"
        )
    values = np.asarray(values, dtype=float)
    values.setflags(write=False)
    bounds.setflags(write=False)
    return BoundaryFieldTable(box, bc, model, values, bounds, int(K), float(epsilon))


# --------------------------------------------------------------------------
# quantities from the proofs
# --------------------------------------------------------------------------

def _require_isotropic(model):
    if not isinstance(model, IsotropicLR):
        raise TypeError("this lattice sum is defined for the isotropic model only")


def shift_energy_bound(model: IsotropicLR, L: int, tol: float = 1e-10) -> CertifiedValue:
    """D(L) = 2 sum_{x in Lambda_L} sum_{y outside, j_y = 0} J_xy.

    This is the largest possible change of the box Hamiltonian when the
    Dobrushin interface moves from height 0 to height 1.
    """
    _require_isotropic(model)
    if L < 1:
        raise ValueError("L must be positive")
    table = HalfLineTable(model.alpha, L, 2 * L + 1, tol=tol / (4 * (2 * L + 1) ** 2))
    i = np.arange(-L, L + 1)
    o = np.abs(i)[:, None]
    both = table.S(o, (L + 1 - i)[None, :]) + table.S(o, (L + 1 + i)[None, :])
    value = 2.0 * both.sum()
    bound = 4.0 * (2 * L + 1) * table.halfwidth[np.abs(i)].sum() + 4 * (2 * L + 1) ** 2 * EPS * value
    return CertifiedValue(float(value), float(bound), table.K)


def step_energy(alpha: float, tolerance: float = 1e-8) -> CertifiedValue:
    """sum_{i_y >= 0} sum_{i_x >= 1} (i_x + i_y)^(-alpha) as a lattice sum.

    Lattice pairs with i_x + i_y <= R are summed explicitly.  Beyond R the
    diagonal i_x + i_y = s holds exactly s pairs, which turns the remainder
    into a convex one-dimensional tail in s.
    """
    if not alpha > 2:
        raise DivergenceError(f"step energy diverges for alpha = {alpha} <= 2")
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    R = 16
    while True:
        mid, half = power_tail(alpha - 1.0, R + 1)
        if half <= 0.5 * tolerance:
            break
        R *= 2
    value = _pair_sum(alpha, R) + mid
    bound = half + (R * R) * EPS * value
    return CertifiedValue(float(value), float(bound), R)


def _pair_sum(alpha: float, R: int) -> float:
    """sum over lattice pairs (i_x >= 1, i_y >= 0, i_x + i_y <= R) of (i_x + i_y)^(-alpha)."""
    i_x = np.arange(1, R + 1)[:, None]
    i_y = np.arange(0, R)[None, :]
    s = (i_x + i_y).astype(float)
    mask = s <= R
    terms = np.sort(s[mask] ** (-alpha))
    return math.fsum(terms)


def relative_entropy_bound(model: IsotropicLR, L: int, ell: int, profile_bound=1.0,
                           tol: float = 1e-10) -> CertifiedValue:
    """Split bound on the expected energy cost of moving the interface from 1 to 0.

    Near part (L <= i_y <= L + ell) uses J itself; far part (i_y > L + ell)
    uses the reflected difference J(j) - J(1 - j), which telescopes in j.
    ``profile_bound`` weights the summands: a scalar, an array over heights
    j = 1..n, or an array of shape (2L + 1, n) over (i, j); heights beyond n
    take the last supplied row.
    """
    _require_isotropic(model)
    if ell < 1:
        raise ValueError("ell must be >= 1")
    weights = _profile_weights(profile_bound, L)
    if np.any(weights < 0) or np.any(weights > 1):
        raise ValueError("profile bound values must lie in [0, 1]")
    return _entropy_sum(model.alpha, L, ell, weights, tol)


def _profile_weights(profile, L: int) -> np.ndarray:
    W = 2 * L + 1
    p = np.asarray(profile, dtype=float)
    if p.ndim == 0:
        return np.full((W, 1), float(p))
    if p.ndim == 1:
        if p.size == 0:
            raise ValueError("empty profile")
        return np.broadcast_to(p[None, :], (W, p.size)).copy()
    if p.ndim == 2 and p.shape[0] == W and p.shape[1] > 0:
        return p.copy()
    raise ValueError(f"profile must be scalar, 1D over heights, or shape ({W}, n)")


def _entropy_sum(alpha: float, L: int, ell: int, weights: np.ndarray, tol: float) -> CertifiedValue:
    """Weighted split sum; ``weights[:, -1]`` extends to every height above the array."""
    W = 2 * L + 1
    n = weights.shape[1]
    d_near = 2 * L + ell
    table = HalfLineTable(alpha, max(d_near, n), max(n + 1, d_near + 2),
                          tol=tol / (8.0 * W * (ell + 2 + n)))
    i_x = np.arange(-L, L + 1)
    j = np.arange(1, n + 1)
    last = weights[:, -1]

    # near: i_y = L .. L + ell, d = i_y - i_x, heights j >= 1
    d = (np.arange(L, L + ell + 1)[None, :] - i_x[:, None])  # (W, ell+1)
    explicit = table.terms[d[:, :, None], j[None, None, :] - 1] if n > 1 else None
    near = np.zeros(W)
    near_hw = np.zeros(W)
    if n > 1:
        near += np.einsum("xdj,xj->x", explicit[:, :, : n - 1], weights[:, : n - 1])
    near += last * table.S(d, n).sum(axis=1)
    near_hw += np.abs(last) * table.halfwidth[d].sum(axis=1)

    # far: i_y > L + ell, reflected difference telescopes above height n
    d0 = L + ell + 1 - i_x
    far = np.zeros(W)
    far_hw = np.zeros(W)
    for k in range(1, n):
        diff = table.S(k - 1, d0) - table.S(k, d0)
        far += weights[:, k - 1] * diff
        far_hw += np.abs(weights[:, k - 1]) * (table.halfwidth[k - 1] + table.halfwidth[k])
    far += last * table.S(n - 1, d0)
    far_hw += np.abs(last) * table.halfwidth[n - 1]

    value = 2.0 * float(np.sum(near + far))
    bound = 2.0 * float(np.sum(near_hw + far_hw)) + (W * (ell + n + 4)) * EPS * abs(value)
    return CertifiedValue(value, bound, table.K)


# --------------------------------------------------------------------------
# zeta oracle
# --------------------------------------------------------------------------

# B_2, B_4, ..., B_20
_BERNOULLI = [Fraction(1, 6), Fraction(-1, 30), Fraction(1, 42), Fraction(-1, 30), Fraction(5, 66),
              Fraction(-691, 2730), Fraction(7, 6), Fraction(-3617, 510), Fraction(43867, 798),
              Fraction(-174611, 330)]


def zeta_oracle(s: float, tolerance: float = 1e-12) -> float:
    """Riemann zeta(s), s > 1, by Euler-Maclaurin summation.

    Partial sum to N - 1, the integral N^(1-s)/(s-1), the half term, and
    Bernoulli corrections; N grows until the first omitted correction is
    below ``tolerance``.
    """
    if not s > 1:
        raise ValueError("zeta_oracle needs s > 1")
    N = 10
    while True:
        head = math.fsum(n ** (-s) for n in range(1, N))
        total = head + N ** (1.0 - s) / (s - 1.0) + 0.5 * N ** (-s)
        rising = s  # s (s+1) ... (s + 2k - 2)
        fact = 2.0  # (2k)!
        last = 0.0
        for k, B in enumerate(_BERNOULLI, start=1):
            term = float(B) / fact * rising * N ** (-s - 2 * k + 1)
            if k == len(_BERNOULLI):
                last = abs(term)
                break
            total += term
            rising *= (s + 2 * k - 1) * (s + 2 * k)
            fact *= (2 * k + 1) * (2 * k + 2)
        if last <= tolerance:
            return total
        N *= 2
