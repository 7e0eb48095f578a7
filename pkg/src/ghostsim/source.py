"""Pseudo-thermal speckle-field ensemble with counter-based deterministic seeding.

Each realization is one snapshot of a delta-correlated circular complex
Gaussian field on the source aperture (the standard fully-developed-speckle
idealization of a rotating ground glass): one independent complex normal per
grid sample inside the aperture, zero outside.

Randomness is counter-based (Philox): the values of realization k are a pure
function of (seed, k, sample index), so realizations can be generated in any
order, by any number of workers, with bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from .core import ComplexField, Grid1D, SetupGeometry, interval_indices
from .optics import ArmPath, apply_path_block

__all__ = ["EnsembleConfig", "ModeSet", "sample_source_field", "mode_decomposition"]


@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble parameters: identical (seed, config) => bit-identical streams."""

    n_realizations: int
    seed: int
    geometry: SetupGeometry
    grid: Grid1D

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")


def aperture_indices(config: EnsembleConfig) -> np.ndarray:
    """Grid samples inside the source aperture [-D/2, D/2)."""
    i0, i1 = interval_indices(config.grid, 0.0, config.geometry.source_diameter)
    i0 = max(i0, 0)
    i1 = min(i1, config.grid.n)
    if i1 <= i0:
        raise ValueError("source aperture narrower than one grid sample")
    return np.arange(i0, i1)


def _philox_key(seed: int) -> np.ndarray:
    return SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)


def sample_source_block(config: EnsembleConfig, k0: int, k1: int) -> np.ndarray:
    """Source amplitudes for realizations k0..k1-1 as a (k1-k0, n) array."""
    if not 0 <= k0 <= k1 <= config.n_realizations:
        raise ValueError(
            f"realization range [{k0}, {k1}) outside [0, {config.n_realizations})"
        )
    idx = aperture_indices(config)
    m = len(idx)
    key = _philox_key(config.seed)
    out = np.zeros((k1 - k0, config.grid.n), dtype=np.complex128)
    for row, k in enumerate(range(k0, k1)):
        # realization index in the high counter word: disjoint counter blocks
        rng = Generator(Philox(key=key, counter=[0, 0, 0, k]))
        z = rng.standard_normal(2 * m)
        out[row, idx] = (z[:m] + 1j * z[m:]) / np.sqrt(2.0)
    return out


def sample_source_field(config: EnsembleConfig, k: int) -> ComplexField:
    """Speckle realization k; pure function of (config, k)."""
    if not 0 <= k < config.n_realizations:
        raise ValueError(f"realization index {k} outside [0, {config.n_realizations})")
    amp = sample_source_block(config, k, k + 1)[0]
    return ComplexField(config.grid, amp, config.geometry.wavelength)


@dataclass(frozen=True)
class ModeSet:
    """Green's functions of every source mode through the two arms.

    g1[j] is the field at the arm-1 detection plane produced by a unit
    amplitude at source sample positions[j]; g2[j] likewise for arm 2.
    """

    grid: Grid1D
    wavelength: float
    positions: np.ndarray  # (m,) source-sample coordinates
    indices: np.ndarray    # (m,) source-sample grid indices
    g1: np.ndarray         # (m, n) complex
    g2: np.ndarray         # (m, n) complex

    def __len__(self) -> int:
        return len(self.positions)

    def items(self):
        """Iterate (position, g1 field, g2 field) per mode."""
        for j in range(len(self)):
            yield (
                float(self.positions[j]),
                ComplexField(self.grid, self.g1[j], self.wavelength),
                ComplexField(self.grid, self.g2[j], self.wavelength),
            )


def mode_decomposition(
    config: EnsembleConfig,
    arm1: ArmPath,
    arm2: ArmPath,
    block_size: int = 512,
    strict: bool = True,
) -> ModeSet:
    """Propagate a unit basis field from every transparent source sample
    through both arms.  One entry per sample inside the source aperture."""
    idx = aperture_indices(config)
    m = len(idx)
    n = config.grid.n
    wl = config.geometry.wavelength
    g1 = np.empty((m, n), dtype=np.complex128)
    g2 = np.empty((m, n), dtype=np.complex128)
    for b0 in range(0, m, block_size):
        b1 = min(b0 + block_size, m)
        basis = np.zeros((b1 - b0, n), dtype=np.complex128)
        basis[np.arange(b1 - b0), idx[b0:b1]] = 1.0
        g1[b0:b1] = apply_path_block(basis, config.grid, wl, arm1, strict)
        g2[b0:b1] = apply_path_block(basis, config.grid, wl, arm2, strict)
    coords = config.grid.coords()[idx]
    return ModeSet(
        grid=config.grid,
        wavelength=wl,
        positions=coords,
        indices=idx,
        g1=g1,
        g2=g2,
    )
