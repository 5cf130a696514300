"""Lattice geometry, coupling models, boundary conditions and spin configurations.

Sites are integer pairs ``(i, j)``: ``i`` is the horizontal coordinate and
``j`` the vertical one.  Every other module obtains couplings through
:func:`coupling` or :func:`coupling_table`.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Union

import numpy as np
from numba import njit


class Site(NamedTuple):
    i: int
    j: int


# --------------------------------------------------------------------------
# coupling models
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IsotropicLR:
    """J_xy = |x - y|^(-alpha) with the Euclidean norm."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 2:
            raise ValueError(f"IsotropicLR needs alpha > 2, got {self.alpha}")

    def couplings(self, di, dj):
        di = np.abs(np.asarray(di, dtype=float))
        dj = np.abs(np.asarray(dj, dtype=float))
        r2 = di * di + dj * dj
        with np.errstate(divide="ignore"):
            out = np.where(r2 > 0, r2 ** (-0.5 * self.alpha), 0.0)
        return out


@dataclass(frozen=True)
class AnisoLRNN:
    """Nearest-neighbour vertically, |di|^(-alpha1) along rows."""

    alpha1: float

    def __post_init__(self):
        if not self.alpha1 > 1:
            raise ValueError(f"AnisoLRNN needs alpha1 > 1, got {self.alpha1}")

    def couplings(self, di, dj):
        di = np.abs(np.asarray(di, dtype=float))
        dj = np.abs(np.asarray(dj, dtype=float))
        with np.errstate(divide="ignore"):
            row = np.where((dj == 0) & (di > 0), di ** (-self.alpha1), 0.0)
        col = np.where((di == 0) & (dj == 1), 1.0, 0.0)
        return row + col


@dataclass(frozen=True)
class BiAxialLR:
    """|di|^(-alpha1) along rows, |dj|^(-alpha2) along columns, 0 otherwise."""

    alpha1: float
    alpha2: float

    def __post_init__(self):
        if not (self.alpha1 > 1 and self.alpha2 > 1):
            raise ValueError(
                f"BiAxialLR needs alpha1 > 1 and alpha2 > 1, got {self.alpha1}, {self.alpha2}"
            )

    def couplings(self, di, dj):
        di = np.abs(np.asarray(di, dtype=float))
        dj = np.abs(np.asarray(dj, dtype=float))
        with np.errstate(divide="ignore"):
            row = np.where((dj == 0) & (di > 0), di ** (-self.alpha1), 0.0)
            col = np.where((di == 0) & (dj > 0), dj ** (-self.alpha2), 0.0)
        return row + col


@dataclass(frozen=True)
class RowChain:
    """One-dimensional Dyson chain embedded as a single row: |di|^(-alpha1) within rows only.

    Used as the lower-dimensional comparison system; a box with one row is
    exactly the finite chain with its own exterior along the row.
    """

    alpha1: float

    def __post_init__(self):
        if not self.alpha1 > 1:
            raise ValueError(f"RowChain needs alpha1 > 1, got {self.alpha1}")

    def couplings(self, di, dj):
        di = np.abs(np.asarray(di, dtype=float))
        dj = np.abs(np.asarray(dj, dtype=float))
        with np.errstate(divide="ignore"):
            return np.where((dj == 0) & (di > 0), di ** (-self.alpha1), 0.0)


CouplingModel = Union[IsotropicLR, AnisoLRNN, BiAxialLR, RowChain]
MODEL_TYPES = (IsotropicLR, AnisoLRNN, BiAxialLR, RowChain)


def coupling(model: CouplingModel, x, y) -> float:
    x, y = Site(*x), Site(*y)
    if x == y:
        raise ValueError("self-coupling J_xx is undefined")
    if not isinstance(model, MODEL_TYPES):
        raise TypeError(f"unknown coupling model {model!r}")
    return float(model.couplings(x.i - y.i, x.j - y.j))


# --------------------------------------------------------------------------
# boundary conditions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Plus:
    def values(self, j):
        return np.ones_like(np.asarray(j), dtype=np.int8)

    def flipped(self):
        return Minus()


@dataclass(frozen=True)
class Minus:
    def values(self, j):
        return -np.ones_like(np.asarray(j), dtype=np.int8)

    def flipped(self):
        return Plus()


@dataclass(frozen=True)
class Dobrushin:
    """``upper`` on rows j >= h and ``-upper`` on rows j < h.

    ``upper=+1`` is the usual (+/-, h) condition; ``upper=-1`` is its global flip.
    """

    h: int
    upper: int = 1

    def __post_init__(self):
        if self.upper not in (1, -1):
            raise ValueError("Dobrushin.upper must be +1 or -1")
        if int(self.h) != self.h:
            raise ValueError("Dobrushin height must be an integer")

    def values(self, j):
        j = np.asarray(j)
        return np.where(j >= self.h, self.upper, -self.upper).astype(np.int8)

    def flipped(self):
        return Dobrushin(self.h, -self.upper)


BoundaryCondition = Union[Plus, Minus, Dobrushin]


def bc_value(bc: BoundaryCondition, y) -> int:
    return int(bc.values(Site(*y).j))


# --------------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxGeometry:
    """Box {-L <= i <= L, j_min <= j <= j_max}; default rows are -M..M.

    Sites are ordered row-major starting from (-L, j_min): index
    ``(j - j_min) * width + (i + L)``.
    """

    L: int
    M: int
    j_min: int = None
    j_max: int = None

    def __post_init__(self):
        if self.L < 0 or self.M < 0:
            raise ValueError("box half-width and half-height must be >= 0")
        if self.j_min is None:
            object.__setattr__(self, "j_min", -self.M)
        if self.j_max is None:
            object.__setattr__(self, "j_max", self.M)
        if self.j_max < self.j_min:
            raise ValueError("empty box: j_max < j_min")

    @classmethod
    def square(cls, L: int) -> "BoxGeometry":
        return cls(L, L)

    @classmethod
    def about_interface(cls, L: int, M: int, h: int = 1) -> "BoxGeometry":
        """2M rows h-M .. h+M-1, mirror-symmetric about height h - 1/2."""
        if M < 1:
            raise ValueError("about_interface needs M >= 1")
        return cls(L, M, h - M, h + M - 1)

    @property
    def width(self) -> int:
        return 2 * self.L + 1

    @property
    def height(self) -> int:
        return self.j_max - self.j_min + 1

    @property
    def shape(self) -> tuple[int, int]:
        """(rows, columns) of the grid view."""
        return self.height, self.width

    @property
    def n_sites(self) -> int:
        return self.width * self.height

    def index(self, site) -> int:
        i, j = site
        if not self.contains(site):
            raise KeyError(f"site {tuple(site)} outside the box")
        return (j - self.j_min) * self.width + (i + self.L)

    def site(self, k: int) -> Site:
        r, c = divmod(k, self.width)
        return Site(c - self.L, r + self.j_min)

    def contains(self, site) -> bool:
        i, j = site
        return -self.L <= i <= self.L and self.j_min <= j <= self.j_max

    def sites(self) -> Iterator[Site]:
        for j in range(self.j_min, self.j_max + 1):
            for i in range(-self.L, self.L + 1):
                yield Site(i, j)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat arrays (i, j) in site order."""
        jj, ii = np.meshgrid(
            np.arange(self.j_min, self.j_max + 1), np.arange(-self.L, self.L + 1), indexing="ij"
        )
        return ii.ravel(), jj.ravel()

    def column(self, i: int) -> np.ndarray:
        """Site indices of column i, bottom to top."""
        return (np.arange(self.height) * self.width + (i + self.L)).astype(np.int64)

    def is_symmetric_about(self, h: int) -> bool:
        """True when rows are mirror-symmetric under j -> 2h - 1 - j."""
        return self.j_min + self.j_max == 2 * h - 1

    def label(self) -> str:
        if self.j_min == -self.M and self.j_max == self.M:
            return f"L{self.L}_M{self.M}"
        return f"L{self.L}_j{self.j_min}to{self.j_max}"


# --------------------------------------------------------------------------
# spin configurations
# --------------------------------------------------------------------------

@dataclass
class SpinConfiguration:
    geometry: BoxGeometry
    spins: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.spins, dtype=np.int8).ravel()
        if s.size != self.geometry.n_sites:
            raise ValueError(
                f"expected {self.geometry.n_sites} spins, got {s.size}"
            )
        if not np.all((s == 1) | (s == -1)):
            raise ValueError("spins must be +1 or -1")
        self.spins = s.copy()

    @classmethod
    def constant(cls, geometry: BoxGeometry, value: int = 1) -> "SpinConfiguration":
        return cls(geometry, np.full(geometry.n_sites, value, dtype=np.int8))

    @classmethod
    def from_boundary(cls, geometry: BoxGeometry, bc: BoundaryCondition) -> "SpinConfiguration":
        """Every box spin set to the value the boundary condition has at its row."""
        _, j = geometry.coordinates()
        return cls(geometry, bc.values(j))

    def __getitem__(self, site) -> int:
        return int(self.spins[self.geometry.index(site)])

    def __setitem__(self, site, value: int):
        if value not in (1, -1):
            raise ValueError("spins must be +1 or -1")
        self.spins[self.geometry.index(site)] = value

    def grid(self) -> np.ndarray:
        """View with shape (rows, columns); row 0 is j = j_min."""
        return self.spins.reshape(self.geometry.shape)

    def flipped(self) -> "SpinConfiguration":
        return SpinConfiguration(self.geometry, -self.spins)

    def copy(self) -> "SpinConfiguration":
        return SpinConfiguration(self.geometry, self.spins)


def ground_state_pair(box: BoxGeometry) -> tuple[SpinConfiguration, SpinConfiguration]:
    """Dobrushin (+/-, 0) ground state and the same state flipped on {(i, 0): i <= 0}."""
    i, j = box.coordinates()
    gs = np.where(j >= 0, 1, -1).astype(np.int8)
    step = gs.copy()
    step[(j == 0) & (i <= 0)] = -1
    return SpinConfiguration(box, gs), SpinConfiguration(box, step)


# --------------------------------------------------------------------------
# coupling tables and energies
# --------------------------------------------------------------------------

@functools.lru_cache(maxsize=32)
def coupling_table(model: CouplingModel, box: BoxGeometry) -> np.ndarray:
    """Couplings by displacement: ``T[di + 2L, dj + H - 1]`` with H the row count.

    Read-only; ``T`` at zero displacement is 0.
    """
    W, H = box.width, box.height
    di = np.arange(-(W - 1), W)[:, None]
    dj = np.arange(-(H - 1), H)[None, :]
    table = np.ascontiguousarray(model.couplings(di, dj), dtype=np.float64)
    table.setflags(write=False)
    return table


def coupling_matrix(model: CouplingModel, box: BoxGeometry) -> np.ndarray:
    """Dense |box| x |box| coupling matrix; for small boxes only."""
    i, j = box.coordinates()
    return model.couplings(i[:, None] - i[None, :], j[:, None] - j[None, :])


@njit(cache=True)
def _interaction_field(spins, table, W, H):
    N = W * H
    out = np.zeros(N)
    for x in range(N):
        rx, cx = divmod(x, W)
        acc = 0.0
        for y in range(N):
            if y == x:
                continue
            ry, cy = divmod(y, W)
            acc += table[cx - cy + W - 1, rx - ry + H - 1] * spins[y]
        out[x] = acc
    return out


def interaction_field(model: CouplingModel, box: BoxGeometry, spins: np.ndarray) -> np.ndarray:
    """sum_{y in box, y != x} J_xy sigma_y for every box site x."""
    table = coupling_table(model, box)
    return _interaction_field(np.asarray(spins, dtype=np.float64), table, box.width, box.height)


def total_energy(model, box, bc, sigma: SpinConfiguration, field) -> float:
    """-(1/2 sum_{x != y} J sigma sigma + sum_x sigma_x field(x)); lower means more probable.

    ``field`` is a :class:`lrising.exactsum.BoundaryFieldTable` (or a plain
    per-site array) built for the same model, box and boundary condition.
    """
    if sigma.geometry != box:
        raise ValueError("configuration geometry does not match the box")
    fvals = getattr(field, "values", field)
    if hasattr(field, "geometry"):
        if field.geometry != box or field.model != model or field.bc != bc:
            raise ValueError("boundary field was built for a different (model, box, bc)")
    fvals = np.asarray(fvals, dtype=float)
    s = sigma.spins.astype(float)
    pair = 0.5 * float(s @ interaction_field(model, box, s))
    return -(pair + float(s @ fvals))


def is_valid_beta(beta: float) -> bool:
    return math.isfinite(beta) and beta >= 0
