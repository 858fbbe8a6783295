"""Propagation kernels for the Stark lab.

Everything is phrased in the comoving frame of :mod:`starklab.grids`: the
uniform-field trajectory (boost kick, quadratic drift, the cubic global
phase) is carried analytically by the frame metadata, so the sampled field
only ever sees the gentle free spreading of the packet profile plus a
position multiplier for the potential.  Concretely, the free-field
propagator over time t maps a state ``(psi, v, c)`` to

    values:  exp(i phase) * exp(-i t |xi|^2 / 2) psi-hat,
    boost:   v + t e1,
    center:  c + v t + e1 t^2 / 2,
    phase =  -t^3/6 + t * (c + v t + e1 t^2/2)_1 + |v|^2 t / 2,

which is the exact factorization of the free Stark kernel into a global
phase, a position phase, a momentum-side translation and the free
Schroedinger kernel, rewritten for the comoving representation.

The interacting propagator is a Strang splitting around that exact free
kernel; the potential enters as position multiplier half-steps evaluated at
the physical window ``grid + frame_center``.

Modifier phases (the scalar velocity-trajectory phase and the
momentum-diagonal phases) are built by adaptive quadrature and applied as
unimodular multipliers.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.integrate as sint

from .errors import (
    DivergentTail,
    FrameMismatch,
    NormDrift,
    QuadratureFailure,
    WindowOverflow,
)
from .grids import Grid, State, apply_spectral_function, boundary_band_mass
from .potentials import PotentialSpec

__all__ = [
    "ModifierPhase",
    "PropagationReport",
    "free_schrodinger",
    "free_stark",
    "full_propagate",
    "dt_max",
    "graf_phase",
    "dollard_phase",
    "combine_phases",
    "apply_modifier",
    "apply_counterterm",
    "support_mask",
]


def _e1(n: int) -> np.ndarray:
    e = np.zeros(n)
    e[0] = 1.0
    return e


def free_schrodinger(state: State, t: float) -> State:
    """Exact free kernel exp(-i t p^2/2) on the physical state."""
    if t == 0.0:
        return state
    g = state.grid
    v = state.boost
    kernel = np.exp(-0.5j * t * g.xi_sq)
    psi = g.ifft(kernel * g.fft(state.values))
    psi *= np.exp(0.5j * float(v @ v) * t)
    return replace(
        state,
        values=psi,
        frame_center=state.frame_center + v * t,
        norm_cache=state.norm_cache,
    )


def free_stark(state: State, t: float) -> State:
    """Exact free-field kernel exp(-i t (p^2/2 - x_1))."""
    if t == 0.0:
        return state
    g = state.grid
    v = state.boost
    e1 = _e1(g.n_dims)
    center = state.frame_center + v * t + 0.5 * e1 * t**2
    phase = -(t**3) / 6.0 + t * center[0] + 0.5 * float(v @ v) * t
    kernel = np.exp(-0.5j * t * g.xi_sq)
    psi = g.ifft(kernel * g.fft(state.values))
    psi *= np.exp(1j * phase)
    return replace(
        state,
        values=psi,
        boost=v + t * e1,
        frame_center=center,
        norm_cache=state.norm_cache,
    )


def dt_max(V: Optional[PotentialSpec]) -> float:
    """Largest allowed split step: keeps potential phases well below pi."""
    sup = 0.0 if V is None else V.sup_abs()
    return 0.01 / (1.0 + sup)


@dataclass
class PropagationReport:
    steps: int
    norm_drift: float
    boundary_mass_max: float
    wall_time: float
    flagged: bool = False


def full_propagate(
    state: State,
    V: Optional[PotentialSpec],
    t_from: float,
    t_to: float,
    dt: Optional[float] = None,
    boundary_tol: float = 1e-8,
    band_cells: int = 4,
    monitor_every: int = 16,
):
    """Strang split-step for the interacting evolution from t_from to t_to.

    The field and any boost are removed analytically by the exact free-field
    kernel; the static potential is applied as position multiplier
    half-steps at the moving physical window.  Second order in dt; backward
    propagation is dt < 0.

    Returns ``(state, PropagationReport)``.
    """
    span = t_to - t_from
    if span == 0.0:
        return state, PropagationReport(0, 0.0, boundary_band_mass(state, band_cells), 0.0)
    cap = dt_max(V)
    if dt is None:
        dt = cap
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > cap * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds dt_max(V)={cap}")
    n_steps = max(1, int(np.ceil(abs(span) / dt)))
    h = span / n_steps

    has_potential = V is not None and V.parts()
    t0 = time.perf_counter()
    norm0 = state.norm
    boundary_max = 0.0
    cur = state

    def half_kick(s: State, tau: float) -> State:
        x_phys = s.grid.x_mesh + s.frame_center
        return s.with_values(
            s.values * np.exp(-1j * tau * V.total_value(x_phys)), norm=s.norm_cache
        )

    if has_potential:
        cur = half_kick(cur, 0.5 * h)
    for k in range(n_steps):
        cur = free_stark(cur, h)
        if has_potential:
            cur = half_kick(cur, h if k < n_steps - 1 else 0.5 * h)
        if (k + 1) % monitor_every == 0 or k == n_steps - 1:
            bm = boundary_band_mass(cur, band_cells)
            boundary_max = max(boundary_max, bm)
            if bm > boundary_tol:
                raise WindowOverflow(
                    f"boundary mass {bm:.3e} > {boundary_tol:.1e} at step {k + 1}"
                )

    norm1 = cur.grid.norm(cur.values)
    drift = abs(norm1 - norm0)
    budget = 1e-8 * max(1.0, abs(span))
    report = PropagationReport(
        steps=n_steps,
        norm_drift=drift,
        boundary_mass_max=boundary_max,
        wall_time=time.perf_counter() - t0,
        flagged=drift > budget,
    )
    if drift > 100 * budget:
        raise NormDrift(f"norm drift {drift:.3e} over span {span}")
    cur = cur.with_values(cur.values, norm=norm1)
    return cur, report


@dataclass(frozen=True)
class ModifierPhase:
    """Real phase data for a unimodular modifier  exp(-i * phase).

    ``scalar`` holds velocity-trajectory (commuting) contributions; ``diag``
    holds momentum-diagonal per-node phases built at physical momenta
    ``xi + boost``.  Zero time means zero phase by construction.
    """

    kind: str
    t: float
    boost: np.ndarray
    scalar: float = 0.0
    diag: Optional[np.ndarray] = None
    grid: Optional[Grid] = None


def graf_phase(
    s_form,
    v: Sequence[float],
    t: float,
    tol: float = 1e-10,
) -> ModifierPhase:
    """Scalar phase of the velocity-trajectory modifier: int_0^t V(vs + e1 s^2/2) ds.

    ``v`` is the full physical velocity of the packet (boost included);
    infinite t is allowed when the trajectory escapes (|v_hat . e1| < 1).
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    e1 = _e1(n)
    if not np.isfinite(t):
        vmag = np.linalg.norm(v)
        if vmag > 0 and abs(v[0]) / vmag >= 1.0 - 1e-12:
            raise DivergentTail("infinite-horizon scalar phase needs |v_hat . e1| < 1")

    def f(s):
        return float(s_form.value(v * s + 0.5 * e1 * s**2))

    lo, hi = (0.0, t) if (np.isnan(t) or t >= 0) else (t, 0.0)
    sign = 1.0 if (t >= 0 or np.isnan(t)) else -1.0
    val, err = sint.quad(f, lo, hi, epsabs=tol, epsrel=0.0, limit=400)
    if not np.isfinite(val) or err > max(100 * tol, 1e-8 * abs(val)):
        raise QuadratureFailure(f"scalar phase quadrature error {err:.2e}")
    return ModifierPhase(kind="graf_s", t=t, boost=v * 0.0, scalar=sign * val)


def support_mask(state: State, rel: float = 1e-14) -> np.ndarray:
    """Nodes carrying a relative spectral mass above `rel`."""
    w = np.abs(state.grid.fft(state.values)) ** 2
    return w > rel * w.sum()


def dollard_phase(
    part_form,
    t: float,
    grid: Grid,
    v: Sequence[float],
    mask: Optional[np.ndarray] = None,
    tol: float = 1e-10,
    long_range: bool = False,
    t_ref: float = 0.0,
) -> ModifierPhase:
    """Momentum-diagonal phase: per node, int_{t_ref}^t V(kappa s + e1 s^2/2) ds.

    ``kappa = xi + v`` is the physical momentum of each active node.  For a
    long-range part the infinite-horizon integral diverges node-wise, so
    infinite t is rejected; short-range parts integrate to infinity.
    """
    v = np.asarray(v, dtype=float)
    if not np.isfinite(t) and long_range:
        raise DivergentTail(
            "infinite-horizon momentum phase of a long-range part diverges; "
            "use finite horizons inside differences"
        )
    if mask is None:
        mask = np.ones(grid.shape, dtype=bool)
    kappa = grid.xi_mesh[mask] + v  # (M, n)
    e1 = _e1(grid.n_dims)

    def f(s):
        return part_form.value(kappa * s + 0.5 * e1 * s**2)

    lo, hi = (t_ref, t) if t >= t_ref else (t, t_ref)
    sign = 1.0 if t >= t_ref else -1.0
    try:
        val, err = sint.quad_vec(f, lo, hi, epsabs=tol, epsrel=0.0, norm="max")
    except Exception as exc:  # pragma: no cover
        raise QuadratureFailure(str(exc)) from exc
    if not np.all(np.isfinite(val)):
        raise QuadratureFailure("momentum phase quadrature returned non-finite values")
    diag = np.zeros(grid.shape)
    diag[mask] = sign * val
    return ModifierPhase(kind="dollard", t=t, boost=v, diag=diag, grid=grid)


def combine_phases(*phases: ModifierPhase) -> ModifierPhase:
    """Sum commuting phases (all our modifiers are mutually diagonal)."""
    base = phases[0]
    scalar = sum(p.scalar for p in phases)
    diags = [p.diag for p in phases if p.diag is not None]
    diag = None
    grid = None
    for p in phases:
        if p.diag is not None:
            if grid is None:
                grid = p.grid
            elif p.grid != grid:
                raise FrameMismatch("cannot combine phases from different grids")
    if diags:
        diag = sum(diags)
    return ModifierPhase(
        kind="product", t=base.t, boost=base.boost, scalar=scalar, diag=diag, grid=grid
    )


def apply_modifier(state: State, phase: ModifierPhase, sign: int = 1) -> State:
    """Multiply exp(-i * sign * phase) in the phase's natural representation."""
    out = state
    if phase.diag is not None:
        if phase.grid != state.grid:
            raise FrameMismatch("phase built on a different grid")
        if np.max(np.abs(phase.boost - state.boost)) > 1e-9:
            raise FrameMismatch(
                f"phase built at boost {phase.boost}, state has {state.boost}"
            )
        mult = np.exp(-1j * sign * phase.diag)
        out = out.with_values(
            state.grid.ifft(mult * state.grid.fft(out.values)), norm=out.norm_cache
        )
    if phase.scalar != 0.0:
        out = out.with_values(
            out.values * np.exp(-1j * sign * phase.scalar), norm=out.norm_cache
        )
    return out


def apply_counterterm(state: State, forms, t: float) -> State:
    """Apply the momentum-diagonal counterterm sum_f f(p t - e1 t^2/2).

    ``p`` is the physical momentum operator of the state at time t (its
    boost metadata already contains the field kick accumulated so far), so
    for a packet launched at boost v the argument per node is
    ``(xi + v) t + e1 t^2 / 2``: the classical position at time t.
    """
    g = state.grid
    e1 = _e1(g.n_dims)

    def mult(kappa):
        arg = kappa * t - 0.5 * e1 * t**2
        total = forms[0].value(arg)
        for f in forms[1:]:
            total = total + f.value(arg)
        return total

    return apply_spectral_function(state, mult)
