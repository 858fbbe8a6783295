"""Discretized phase space: periodic grids, probe packets, frames and observables.

The position box is [-L, L)^n sampled at N points per axis; the paired
momentum grid is the FFT band [-pi/dx, pi/dx)^n.  A :class:`State` stores the
wavefunction in a comoving frame: the physical wavefunction represented by
``State(values=psi, boost=v, frame_center=c)`` is

    Psi(x) = exp(i v.(x - c)) psi(x - c).

Boosts and frame centers are metadata, never oscillatory factors sampled on
the grid, so arbitrarily large velocities and drifts stay alias-free.  All
operations are pure; states are immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import DimensionTooLow, FrameMismatch, NonPowerOfTwo, NyquistViolation

__all__ = [
    "Grid",
    "State",
    "PacketProfile",
    "make_grid",
    "make_packet",
    "boost",
    "inner",
    "apply_momentum",
    "apply_multiplier",
    "apply_spectral_function",
    "position_expectation",
    "momentum_expectation",
    "boundary_band_mass",
    "spectral_mass_outside",
]

_FRAME_ATOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Periodic Cartesian grid with its spectral companion.

    Attributes
    ----------
    n_dims : number of axes (2 or 3).
    points_per_axis : points per axis, a power of two >= 16.
    box_half_width : half-width L of the position box [-L, L)^n.
    """

    n_dims: int
    points_per_axis: int
    box_half_width: float

    @property
    def dx(self) -> float:
        return 2.0 * self.box_half_width / self.points_per_axis

    @property
    def dk(self) -> float:
        return np.pi / self.box_half_width

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.n_dims

    @property
    def cell_volume(self) -> float:
        return self.dx**self.n_dims

    @cached_property
    def x_axis(self) -> np.ndarray:
        """Position samples along one axis, [-L, L)."""
        n = self.points_per_axis
        return -self.box_half_width + self.dx * np.arange(n)

    @cached_property
    def xi_axis(self) -> np.ndarray:
        """Momentum samples along one axis in FFT ordering."""
        return 2.0 * np.pi * sfft.fftfreq(self.points_per_axis, d=self.dx)

    @cached_property
    def x_mesh(self) -> np.ndarray:
        """Position mesh, shape grid.shape + (n_dims,)."""
        axes = np.meshgrid(*([self.x_axis] * self.n_dims), indexing="ij")
        return np.stack(axes, axis=-1)

    @cached_property
    def xi_mesh(self) -> np.ndarray:
        """Momentum mesh in FFT ordering, shape grid.shape + (n_dims,)."""
        axes = np.meshgrid(*([self.xi_axis] * self.n_dims), indexing="ij")
        return np.stack(axes, axis=-1)

    @cached_property
    def xi_sq(self) -> np.ndarray:
        return np.sum(self.xi_mesh**2, axis=-1)

    def fft(self, values: np.ndarray) -> np.ndarray:
        return sfft.fftn(values)

    def ifft(self, values_hat: np.ndarray) -> np.ndarray:
        return sfft.ifftn(values_hat)

    def norm(self, values: np.ndarray) -> float:
        return float(np.sqrt(np.sum(np.abs(values) ** 2) * self.cell_volume))

    def spectral_norm(self, values_hat: np.ndarray) -> float:
        scale = self.cell_volume / self.points_per_axis**self.n_dims
        return float(np.sqrt(np.sum(np.abs(values_hat) ** 2) * scale))


@dataclass(frozen=True)
class State:
    """Complex wavefunction on a grid plus comoving-frame metadata."""

    grid: Grid
    values: np.ndarray
    boost: np.ndarray = None
    frame_center: np.ndarray = None
    norm_cache: float = field(default=None, compare=False)

    def __post_init__(self):
        n = self.grid.n_dims
        b = np.zeros(n) if self.boost is None else np.asarray(self.boost, dtype=float)
        c = np.zeros(n) if self.frame_center is None else np.asarray(self.frame_center, dtype=float)
        object.__setattr__(self, "boost", b)
        object.__setattr__(self, "frame_center", c)
        if self.norm_cache is None:
            object.__setattr__(self, "norm_cache", self.grid.norm(self.values))
        self.values.setflags(write=False)

    @property
    def norm(self) -> float:
        return self.norm_cache

    def with_values(self, values: np.ndarray, norm: float = None) -> "State":
        return replace(self, values=values, norm_cache=norm)

    def scaled(self, factor: complex) -> "State":
        return self.with_values(self.values * factor, norm=abs(factor) * self.norm_cache)


@dataclass(frozen=True)
class PacketProfile:
    """Radial bump profile in momentum space.

    ``ghat(xi) = exp(-sharpness / (1 - |xi/eta|^2))`` inside ``|xi| < eta``,
    zero outside: a compactly supported smooth profile, not a Gaussian.
    """

    eta: float
    center: Sequence[float] = (0.0, 0.0)
    sharpness: float = 3.0


def make_grid(n_dims: int, points_per_axis: int, box_half_width: float) -> Grid:
    """Build a periodic grid; rejects n_dims < 2 and non-power-of-two sizes."""
    if n_dims < 2:
        raise DimensionTooLow(f"n_dims={n_dims}: the lab needs n >= 2")
    if n_dims > 3:
        raise ValueError(f"n_dims={n_dims}: only n = 2 or 3 supported")
    n = points_per_axis
    if n < 16 or (n & (n - 1)) != 0:
        raise NonPowerOfTwo(f"points_per_axis={n} must be a power of two >= 16")
    if box_half_width <= 0:
        raise ValueError("box_half_width must be positive")
    return Grid(n_dims, n, float(box_half_width))


def make_packet(grid: Grid, profile: PacketProfile) -> State:
    """Unit-norm probe packet with compactly supported momentum profile.

    The spectral profile is a radial bump supported in |xi| < eta; the packet
    is centered in position at ``profile.center`` (stored as frame metadata,
    so the sampled field stays centered on the grid).
    """
    eta = float(profile.eta)
    if eta <= 0:
        raise ValueError("eta must be positive")
    nyquist = np.pi / grid.dx
    if eta > nyquist - 4.0 * grid.dk:
        raise NyquistViolation(
            f"eta={eta} too large: band edge {nyquist:.4g} leaves a margin "
            f"below 4*dk={4 * grid.dk:.4g}"
        )
    center = np.asarray(profile.center, dtype=float)
    if center.shape != (grid.n_dims,):
        raise ValueError(f"center must have {grid.n_dims} components")
    if np.max(np.abs(center)) > 0.5 * grid.box_half_width:
        raise ValueError("packet center too close to the box boundary")

    r2 = grid.xi_sq / eta**2
    ghat = np.zeros(grid.shape, dtype=complex)
    inside = r2 < 1.0
    ghat[inside] = np.exp(-profile.sharpness / (1.0 - r2[inside]))
    # shift the (index-0 anchored) profile to the requested center; a spectral
    # phase is an exact band-limited translation on the periodic grid
    shift = center + grid.box_half_width
    ghat *= np.exp(-1j * np.tensordot(grid.xi_mesh, shift, axes=(-1, 0)))
    psi = grid.ifft(ghat)
    psi = np.ascontiguousarray(psi / grid.norm(psi))
    return State(grid, psi, boost=np.zeros(grid.n_dims), frame_center=np.zeros(grid.n_dims), norm_cache=1.0)


def boost(state: State, v: Sequence[float]) -> State:
    """Multiply by exp(i v.x): pure metadata plus a constant anchor phase."""
    v = np.asarray(v, dtype=float)
    if v.shape != (state.grid.n_dims,):
        raise ValueError("boost velocity has wrong dimension")
    if not np.any(v):
        return state
    phase = np.exp(1j * float(v @ state.frame_center))
    return replace(
        state,
        values=state.values * phase,
        boost=state.boost + v,
        norm_cache=state.norm_cache,
    )


def _check_same_frame(a: State, b: State) -> None:
    if a.grid != b.grid:
        raise FrameMismatch("states live on different grids")
    if np.max(np.abs(a.boost - b.boost)) > _FRAME_ATOL:
        raise FrameMismatch(f"boost mismatch: {a.boost} vs {b.boost}")
    if np.max(np.abs(a.frame_center - b.frame_center)) > _FRAME_ATOL:
        raise FrameMismatch(f"frame_center mismatch: {a.frame_center} vs {b.frame_center}")


def inner(a: State, b: State) -> complex:
    """L2 inner product, linear in the first slot, conjugate-linear in the second."""
    _check_same_frame(a, b)
    return complex(np.sum(a.values * np.conj(b.values)) * a.grid.cell_volume)


def apply_momentum(state: State, axis: int) -> State:
    """Apply p_j to the physical state: spectral multiplier xi_j + v_j."""
    g = state.grid
    if not 1 <= axis <= g.n_dims:
        raise ValueError(f"axis must be in 1..{g.n_dims}")
    mult = g.xi_mesh[..., axis - 1] + state.boost[axis - 1]
    out = g.ifft(mult * g.fft(state.values))
    return state.with_values(out)


def apply_multiplier(state: State, f) -> State:
    """Apply a position multiplier f evaluated at physical coordinates.

    ``f`` is a callable mapping points of shape (..., n) to values (...,),
    or a constant.  Physical coordinates are grid coordinates shifted by the
    frame center.
    """
    g = state.grid
    if np.isscalar(f):
        return state.scaled(f)
    x_phys = g.x_mesh + state.frame_center
    return state.with_values(state.values * f(x_phys))


def apply_spectral_function(state: State, f) -> State:
    """Apply a momentum multiplier f evaluated at physical momenta xi + v."""
    g = state.grid
    kappa = g.xi_mesh + state.boost
    out = g.ifft(f(kappa) * g.fft(state.values))
    return state.with_values(out)


def position_expectation(state: State) -> np.ndarray:
    g = state.grid
    w = np.abs(state.values) ** 2
    total = w.sum()
    mean = np.tensordot(w, g.x_mesh, axes=(tuple(range(g.n_dims)), tuple(range(g.n_dims))))
    return state.frame_center + mean / total


def momentum_expectation(state: State) -> np.ndarray:
    g = state.grid
    w = np.abs(g.fft(state.values)) ** 2
    total = w.sum()
    mean = np.tensordot(w, g.xi_mesh, axes=(tuple(range(g.n_dims)), tuple(range(g.n_dims))))
    return state.boost + mean / total


def boundary_band_mass(state: State, band_cells: int = 4) -> float:
    """Mass fraction in the outermost `band_cells` cells of every axis."""
    w = np.abs(state.values) ** 2
    total = w.sum()
    if total == 0.0:
        return 0.0
    core = w[(slice(band_cells, -band_cells),) * state.grid.n_dims]
    return float((total - core.sum()) / total)


def spectral_mass_outside(state: State, radius: float) -> float:
    """Spectral mass fraction outside the physical-momentum ball |xi| < radius.

    The ball is taken around the state's boost, i.e. this measures the profile
    support irrespective of metadata.
    """
    g = state.grid
    w = np.abs(g.fft(state.values)) ** 2
    outside = g.xi_sq >= radius**2
    return float(w[outside].sum() / w.sum())
