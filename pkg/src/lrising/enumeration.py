"""Exact finite-volume Gibbs measures by exhaustive enumeration (at most 20 sites).

State ``s`` encodes site ``k`` (row-major order of the box) in bit ``k``:
bit 0 means spin +1, bit 1 means spin -1, so state 0 is the all-plus
configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exactsum import boundary_field
from .kernel import BoxGeometry, coupling_matrix

MAX_SITES = 20


@dataclass(frozen=True)
class ExactGibbs:
    geometry: BoxGeometry
    beta: float
    model: object
    bc: object
    weights: np.ndarray = field(repr=False)
    energies: np.ndarray = field(repr=False)

    @property
    def n_states(self) -> int:
        return self.weights.size

    def configurations(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        return decode_states(np.arange(start, self.n_states if stop is None else stop), self.geometry.n_sites)

    def magnetization(self) -> np.ndarray:
        """Exact <sigma_x> for every site, in site order."""
        n = self.geometry.n_sites
        idx = np.arange(self.n_states)
        out = np.empty(n)
        for k in range(n):
            minus = (idx >> k) & 1
            out[k] = self.weights @ (1.0 - 2.0 * minus)
        return out


def decode_states(states, n_sites: int) -> np.ndarray:
    """Integer state codes to an (n, n_sites) int8 array of spins."""
    states = np.asarray(states, dtype=np.int64)
    bits = (states[:, None] >> np.arange(n_sites)[None, :]) & 1
    return (1 - 2 * bits).astype(np.int8)


def encode_states(spins) -> np.ndarray:
    """Inverse of :func:`decode_states`."""
    spins = np.asarray(spins)
    bits = (spins < 0).astype(np.int64)
    return bits @ (np.int64(1) << np.arange(spins.shape[-1], dtype=np.int64))


def build_exact(model, box: BoxGeometry, bc, beta: float, epsilon: float = 1e-10) -> ExactGibbs:
    n = box.n_sites
    if n > MAX_SITES:
        raise ValueError(f"box has {n} sites; enumeration is limited to {MAX_SITES}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not beta >= 0:
        raise ValueError("beta must be nonnegative")
    J = coupling_matrix(model, box)
    h = boundary_field(model, box, bc, epsilon).values
    energies = np.empty(1 << n)
    chunk = 1 << 16
    for start in range(0, 1 << n, chunk):
        s = decode_states(np.arange(start, min(start + chunk, 1 << n)), n).astype(float)
        energies[start : start + len(s)] = -(0.5 * np.einsum("ki,ij,kj->k", s, J, s) + s @ h)
    logw = -beta * (energies - energies.min())
    w = np.exp(logw)
    w /= w.sum()
    w.setflags(write=False)
    energies.setflags(write=False)
    return ExactGibbs(box, float(beta), model, bc, w, energies)


def exact_expectation(g: ExactGibbs, f) -> float:
    """sum_sigma f(sigma) mu(sigma).

    ``f`` takes an (n, |box|) int8 array of configurations and returns one
    value per row.
    """
    total = 0.0
    chunk = 1 << 16
    for start in range(0, g.n_states, chunk):
        stop = min(start + chunk, g.n_states)
        vals = np.asarray(f(g.configurations(start, stop)), dtype=float)
        total += float(g.weights[start:stop] @ vals)
    return total


def spin_product(box: BoxGeometry, sites):
    """Observable sigma_A = prod_{x in A} sigma_x."""
    idx = [box.index(s) for s in sites]
    return lambda conf: np.prod(conf[:, idx].astype(float), axis=1)


def resample_site(g: ExactGibbs, site, epsilon: float = 1e-10) -> np.ndarray:
    """Law obtained from ``g`` after redrawing one spin from its conditional.

    The conditional comes from the local field of the site, not from the
    stored weights: P(sigma_k = v | rest) = 1 / (1 + exp(-2 beta v h_k)).
    """
    box = g.geometry
    k = box.index(site)
    J = coupling_matrix(g.model, box)
    f = boundary_field(g.model, box, g.bc, epsilon).values
    out = np.zeros(g.n_states)
    chunk = 1 << 16
    for start in range(0, g.n_states, chunk):
        idx = np.arange(start, min(start + chunk, g.n_states))
        conf = decode_states(idx, box.n_sites).astype(float)
        h = conf @ J[k] + f[k]
        cond = 1.0 / (1.0 + np.exp(-2.0 * g.beta * conf[:, k] * h))
        partner = idx ^ (1 << k)
        out[idx] = (g.weights[idx] + g.weights[partner]) * cond
    return out
