"""Monte Carlo samplers for boxes beyond enumeration scale.

Both samplers keep the local field h_x = sum_{y != x} J_xy sigma_y + field(x)
for every site, so a proposal costs O(1) and an accepted flip O(|box|).
Randomness comes from a Philox stream; a Metropolis sweep consumes exactly
one uniform per site, so runs are reproducible given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from numba import njit

from .exactsum import boundary_field
from .kernel import (
    BoxGeometry,
    Dobrushin,
    Minus,
    Plus,
    SpinConfiguration,
    coupling_table,
    interaction_field,
    total_energy,
)

GENERATOR = "numpy.random.Philox"


class UniformStream:
    """Uniforms in [0, 1) from a Philox generator, consumed strictly in order."""

    def __init__(self, seed: int, block: int = 1 << 16):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(self.seed))
        self._block = block
        self._buf = np.empty(0)
        self._pos = 0
        self.consumed = 0

    def ensure(self, n: int) -> tuple[np.ndarray, int]:
        """Buffer holding at least ``n`` unread uniforms, and the read offset into it."""
        left = self._buf.size - self._pos
        if left < n:
            fresh = self._gen.random(max(n - left, self._block))
            self._buf = np.concatenate([self._buf[self._pos :], fresh])
            self._pos = 0
        return self._buf, self._pos

    def advance(self, k: int):
        self._pos += k
        self.consumed += k

    def take(self, n: int) -> np.ndarray:
        buf, pos = self.ensure(n)
        out = buf[pos : pos + n]
        self.advance(n)
        return out


@njit(cache=True)
def _flip(x, spins, local, tj, W, H):
    """Flip site x and update every other local field; returns the energy change."""
    sx = spins[x]
    dE = 2.0 * sx * local[x]
    spins[x] = -sx
    delta = -2.0 * sx
    rx = x // W
    cx = x - rx * W
    y = 0
    for ry in range(H):
        row = tj[rx - ry + H - 1]
        for cy in range(W):
            if y != x:
                local[y] += delta * row[cx - cy + W - 1]
            y += 1
    return dE


@njit(cache=True)
def _metropolis(spins, local, tj, W, H, beta, u, n_sweeps):
    N = W * H
    dE_total = 0.0
    k = 0
    for _ in range(n_sweeps):
        for x in range(N):
            dE = 2.0 * spins[x] * local[x]
            # propose the opposite spin with probability 1/2, accept with min(1, e^{-beta dE})
            p = 0.5 if dE <= 0.0 else 0.5 * math.exp(-beta * dE)
            if u[k] < p:
                dE_total += _flip(x, spins, local, tj, W, H)
            k += 1
    return dE_total


@njit(cache=True)
def _cluster(spins, local, tj, W, H, beta, fieldv, ddi, ddj, cum, u, pos, n_steps, mark, members):
    N = W * H
    n_disp = cum.size
    dE_total = 0.0
    for step in range(n_steps):
        start = pos
        if pos >= u.size:
            return step, start, dE_total
        x0 = int(u[pos] * N)
        pos += 1
        if x0 >= N:
            x0 = N - 1
        s = spins[x0]
        mark[x0] = 1
        members[0] = x0
        size = 1
        p = 0
        ghost = False
        short = False
        while p < size and not ghost:
            x = members[p]
            p += 1
            if beta > 0.0 and s * fieldv[x] > 0.0:
                if pos >= u.size:
                    short = True
                    break
                if u[pos] < 1.0 - math.exp(-2.0 * beta * abs(fieldv[x])):
                    ghost = True
                pos += 1
                if ghost:
                    break
            if beta <= 0.0:
                continue
            rx = x // W
            cx = x - rx * W
            c = 0.0
            while True:
                if pos >= u.size:
                    short = True
                    break
                c += -math.log(1.0 - u[pos]) / (2.0 * beta)
                pos += 1
                k = np.searchsorted(cum, c)
                if k >= n_disp:
                    break
                cy = cx + ddi[k]
                ry = rx + ddj[k]
                if 0 <= cy < W and 0 <= ry < H:
                    y = ry * W + cy
                    if mark[y] == 0 and spins[y] == s:
                        mark[y] = 1
                        members[size] = y
                        size += 1
                c = cum[k]
            if short:
                break
        if short:
            for q in range(size):
                mark[members[q]] = 0
            return step, start, dE_total
        if not ghost:
            for q in range(size):
                dE_total += _flip(members[q], spins, local, tj, W, H)
        for q in range(size):
            mark[members[q]] = 0
    return n_steps, pos, dE_total


@njit(cache=True)
def _metropolis_record(spins, local, tj, W, H, beta, u, thinning, out):
    dE_total = 0.0
    N = W * H
    for t in range(out.shape[0]):
        dE_total += _metropolis(spins, local, tj, W, H, beta, u[t * thinning * N:], thinning)
        out[t] = spins
    return dE_total


@njit(cache=True)
def _cluster_record(spins, local, tj, W, H, beta, fieldv, ddi, ddj, cum, u, pos,
                    steps_per_sample, partial, out, first, mark, members):
    """Fill out[first:] with a sample every ``steps_per_sample`` cluster steps.

    Returns (next row, steps already taken toward that row, read position,
    energy change); stops early when the uniform buffer runs short.
    """
    dE_total = 0.0
    t = first
    while t < out.shape[0]:
        want = steps_per_sample - partial
        k, pos, dE = _cluster(spins, local, tj, W, H, beta, fieldv, ddi, ddj, cum, u, pos,
                              want, mark, members)
        dE_total += dE
        partial += k
        if k < want:
            return t, partial, pos, dE_total
        out[t] = spins
        partial = 0
        t += 1
    return t, 0, pos, dE_total


@dataclass
class ChainState:
    """One Markov chain: configuration, running energy, uniform stream and tables."""

    sigma: SpinConfiguration
    energy: float
    rng: UniformStream = field(repr=False)
    sweep_count: int
    beta: float
    model: object
    bc: object
    field_table: object = field(repr=False)
    local: np.ndarray = field(repr=False)
    tj: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.tj is None:
            self.tj = np.ascontiguousarray(coupling_table(self.model, self.geometry).T)

    @classmethod
    def start(cls, model, box: BoxGeometry, bc, beta: float, seed: int,
              field_epsilon: float = 1e-9, sigma: SpinConfiguration | None = None) -> "ChainState":
        if not beta >= 0:
            raise ValueError("beta must be nonnegative")
        ft = boundary_field(model, box, bc, field_epsilon)
        if sigma is None:
            sigma = initial_configuration(box, bc)
        sigma = sigma.copy()
        s = sigma.spins.astype(float)
        local = interaction_field(model, box, s) + ft.values
        energy = total_energy(model, box, bc, sigma, ft)
        return cls(sigma, energy, UniformStream(seed), 0, float(beta), model, bc, ft, local)

    @property
    def geometry(self) -> BoxGeometry:
        return self.sigma.geometry

    def recomputed_energy(self) -> float:
        return total_energy(self.model, self.geometry, self.bc, self.sigma, self.field_table)


def initial_configuration(box: BoxGeometry, bc) -> SpinConfiguration:
    """All plus / all minus for uniform b.c.; the Dobrushin ground state otherwise."""
    return SpinConfiguration.from_boundary(box, bc)


def metropolis_sweep(state: ChainState, n_sweeps: int = 1) -> ChainState:
    """Row-major sweeps; each site proposes the opposite spin with probability 1/2.

    The flip is accepted with probability min(1, exp(-beta dE)) where
    dE = 2 sigma_x h_x.  At beta = 0 every site is redrawn uniformly.
    """
    box = state.geometry
    u = state.rng.take(n_sweeps * box.n_sites)
    dE = _metropolis(state.sigma.spins, state.local, state.tj, box.width, box.height,
                     state.beta, u, n_sweeps)
    state.energy += dE
    state.sweep_count += n_sweeps
    return state


@dataclass(frozen=True)
class _BondList:
    ddi: np.ndarray
    ddj: np.ndarray
    cum: np.ndarray


_BOND_CACHE: dict = {}


def _bond_list(model, box: BoxGeometry) -> _BondList:
    key = (model, box)
    if key not in _BOND_CACHE:
        table = coupling_table(model, box)
        W, H = box.width, box.height
        di, dj = np.nonzero(table > 0)
        J = table[di, dj]
        order = np.argsort(-J, kind="stable")
        _BOND_CACHE[key] = _BondList(
            (di[order] - (W - 1)).astype(np.int64),
            (dj[order] - (H - 1)).astype(np.int64),
            np.cumsum(J[order]),
        )
    return _BOND_CACHE[key]


def cluster_update(state: ChainState, n_steps: int = 1) -> ChainState:
    """Single-cluster moves for uniform boundary conditions.

    Aligned pairs bond with probability 1 - exp(-2 beta J_xy); the next
    activated bond along the coupling list ordered by strength is found by
    inverting the cumulative coupling, so the cost per cluster site is the
    number of bonds actually tested.  The exterior acts as a frozen ghost
    spin bonded to site x with probability 1 - exp(-2 beta |field(x)|); a
    cluster that reaches it is left unflipped.
    """
    if not isinstance(state.bc, (Plus, Minus)):
        raise ValueError("cluster_update supports only uniform (Plus/Minus) boundary conditions")
    box = state.geometry
    bonds = _bond_list(state.model, box)
    tj = state.tj
    N = box.n_sites
    mark = np.zeros(N, dtype=np.uint8)
    members = np.zeros(N, dtype=np.int64)
    need = 4 * N + 64
    done = 0
    while done < n_steps:
        buf, pos = state.rng.ensure(need)
        k, new_pos, dE = _cluster(state.sigma.spins, state.local, tj, box.width, box.height,
                                  state.beta, state.field_table.values, bonds.ddi, bonds.ddj,
                                  bonds.cum, buf, pos, n_steps - done, mark, members)
        state.rng.advance(new_pos - pos)
        state.energy += dE
        done += k
        if done < n_steps:
            need = 2 * need if k == 0 else need
    return state


def cluster_sweep(state: ChainState, n_sweeps: int = 1) -> ChainState:
    """``|box|`` cluster steps per sweep."""
    cluster_update(state, n_sweeps * state.geometry.n_sites)
    state.sweep_count += n_sweeps
    return state


SAMPLERS = {"metropolis": metropolis_sweep, "cluster": cluster_sweep}


def sample_configurations(state: ChainState, n_samples: int, thinning: int = 1,
                          sampler: str = "metropolis") -> np.ndarray:
    """(n_samples, |box|) int8 array, one row after every ``thinning`` sweeps."""
    if sampler not in SAMPLERS:
        raise ValueError(f"unknown sampler {sampler!r}")
    box = state.geometry
    N = box.n_sites
    out = np.empty((n_samples, N), dtype=np.int8)
    if sampler == "metropolis":
        per = thinning * N
        chunk = max(1, (1 << 22) // per)
        for a in range(0, n_samples, chunk):
            b = min(n_samples, a + chunk)
            u = state.rng.take((b - a) * per)
            state.energy += _metropolis_record(state.sigma.spins, state.local, state.tj, box.width,
                                               box.height, state.beta, u, thinning, out[a:b])
    else:
        if not isinstance(state.bc, (Plus, Minus)):
            raise ValueError("cluster sampling supports only uniform boundary conditions")
        bonds = _bond_list(state.model, box)
        mark = np.zeros(N, dtype=np.uint8)
        members = np.zeros(N, dtype=np.int64)
        t, partial = 0, 0
        need = 1 << 20
        while t < n_samples:
            buf, pos = state.rng.ensure(need)
            t_new, partial, new_pos, dE = _cluster_record(
                state.sigma.spins, state.local, state.tj, box.width, box.height, state.beta,
                state.field_table.values, bonds.ddi, bonds.ddj, bonds.cum, buf, pos,
                thinning * N, partial, out, t, mark, members)
            state.rng.advance(new_pos - pos)
            state.energy += dE
            if t_new == t and new_pos == pos:
                need *= 2
            t = t_new
    state.sweep_count += n_samples * thinning
    return out


@dataclass(frozen=True)
class RunPlan:
    model: object
    box: BoxGeometry
    bc: object
    beta: float
    seed: int
    burn_in_sweeps: int = 100
    n_samples: int = 1000
    thinning_sweeps: int = 1
    field_epsilon: float = 1e-9
    sampler: str = "metropolis"

    def __post_init__(self):
        if self.burn_in_sweeps < 0:
            raise ValueError("burn_in_sweeps must be >= 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.thinning_sweeps < 1:
            raise ValueError("thinning_sweeps must be >= 1")
        if not self.field_epsilon > 0:
            raise ValueError("field_epsilon must be positive")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}; choose from {sorted(SAMPLERS)}")
        if self.sampler == "cluster" and isinstance(self.bc, Dobrushin):
            raise ValueError("the cluster sampler does not support Dobrushin boundary conditions")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def run_chain(plan: RunPlan, observables: Mapping[str, Callable[[SpinConfiguration], float]] = None,
              on_sample: Callable[[np.ndarray], None] | None = None) -> list[dict]:
    """Burn in, then record ``n_samples`` observation records spaced by the thinning.

    Each record holds the sweep index, the running energy and one entry per
    observable.  ``on_sample`` receives the raw spin array of every retained
    sample (for accumulators such as magnetization profiles).
    """
    observables = observables or {}
    state = ChainState.start(plan.model, plan.box, plan.bc, plan.beta, plan.seed, plan.field_epsilon)
    step = SAMPLERS[plan.sampler]
    if plan.burn_in_sweeps:
        step(state, plan.burn_in_sweeps)
    records = []
    for _ in range(plan.n_samples):
        step(state, plan.thinning_sweeps)
        rec = {"sweep": state.sweep_count, "energy": state.energy}
        for name, fn in observables.items():
            rec[name] = float(fn(state.sigma))
        if on_sample is not None:
            on_sample(state.sigma.spins)
        records.append(rec)
    return records
