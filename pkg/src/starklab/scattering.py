"""Finite-horizon wave and scattering operators with Cook-criterion control.

The scattering map is never materialized; only its action on a handful of
probe packets is computed, as

    S psi  ~=  M(T+)^* exp(i T+ H0) . exp(-i (T+ - T-) H) . exp(-i T- H0) M(T-) psi,

where M is the selected modifier family (identity, the scalar
velocity-trajectory phase, or momentum-diagonal phases for the long-range
and smooth short-range parts).  Horizons T+- are chosen adaptively: the free
(or free+modifier) leg is extended until the tail integrand

    || (V - counterterm(t)) U(t) psi ||

drops below the policy tolerance, which is exactly the quantity whose time
integrability drives the wave-operator limits.  Momentum-diagonal modifiers
make the composition return the physically meaningful operator: for the
scalar and smooth-short-range routes the pipeline restores the accumulated
phases so that every route approximates the same plain scattering operator;
for a long-range part the modified operator itself is the object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ModifierMismatch, NoConvergence
from .grids import State, apply_momentum, apply_multiplier, boost, inner
from .potentials import PotentialSpec
from .propagators import (
    ModifierPhase,
    apply_counterterm,
    apply_modifier,
    combine_phases,
    dollard_phase,
    free_stark,
    full_propagate,
    graf_phase,
    support_mask,
)

__all__ = [
    "HorizonPolicy",
    "SMatrixSample",
    "wave_operator_apply",
    "smatrix_apply",
    "smatrix_apply_batch",
    "commutator_functional",
    "long_range_correction",
    "MODIFIER_KINDS",
]

MODIFIER_KINDS = ("none", "graf_v", "dollard_l", "dollard_s", "dollard_both")


@dataclass(frozen=True)
class HorizonPolicy:
    """Horizon and step control for scattering runs.

    T_plus / T_minus are minimum horizons (the Cook search only stops past
    them); max_T caps the search; dt is the split step (None defers to
    dt_max of the potential); cook_dt is the tail-monitoring mesh.
    """

    T_plus: float = 0.5
    T_minus: float = -0.5
    cook_tolerance: float = 1e-5
    max_T: float = 24.0
    dt: Optional[float] = None
    cook_dt: float = 0.25

    def __post_init__(self):
        if not (self.T_minus < 0.0 < self.T_plus):
            raise ValueError("need T_minus < 0 < T_plus")
        if self.cook_tolerance <= 0:
            raise ValueError("cook_tolerance must be positive")


@dataclass
class SMatrixSample:
    input_tag: str
    output: State
    T_plus: float
    T_minus: float
    residual_minus: float
    residual_plus: float
    modifier: str


@dataclass(frozen=True)
class _Recipe:
    graf_form: object = None
    diag_forms: tuple = ()
    restore_scalar: bool = False
    restore_s_diag: bool = False
    s_form: object = None


def _recipe(V: PotentialSpec, kind: str) -> _Recipe:
    if kind not in MODIFIER_KINDS:
        raise ModifierMismatch(f"unknown modifier kind {kind!r}")
    has_l = V.l_part is not None
    has_s = V.s_part is not None
    if kind in ("dollard_l", "dollard_both") and not has_l:
        raise ModifierMismatch(f"{kind} needs a long-range part")
    if has_l and kind not in ("dollard_l", "dollard_both"):
        raise ModifierMismatch(
            "a long-range part is present: plain wave operators do not exist, "
            "use dollard_l or dollard_both"
        )
    if kind == "graf_v" and not has_s:
        raise ModifierMismatch("graf_v needs a short-range part")
    if kind in ("dollard_s", "dollard_both"):
        if not has_s or V.s_part.gamma2 is None:
            raise ModifierMismatch(f"{kind} needs a C^2 short-range part")
    graf_form = V.s_part.form if kind == "graf_v" else None
    diag = []
    if kind in ("dollard_l", "dollard_both"):
        diag.append(V.l_part.form)
    if kind in ("dollard_s", "dollard_both"):
        diag.append(V.s_part.form)
    return _Recipe(
        graf_form=graf_form,
        diag_forms=tuple(diag),
        restore_scalar=kind == "graf_v",
        restore_s_diag=kind in ("dollard_s", "dollard_both"),
        s_form=V.s_part.form if has_s else None,
    )


def _e1(n):
    e = np.zeros(n)
    e[0] = 1.0
    return e


class _FreeLeg:
    """Steps U(t) = exp(-i t H0) M(t) applied to a batch of states.

    Modifier increments are evaluated once per step at the launch-frame
    momenta (xi + v0) and shared by every state in the batch (all probe
    states share the packet's spectral support).
    """

    def __init__(self, states: List[State], V: PotentialSpec, recipe: _Recipe, tol=1e-11):
        self.states = list(states)
        self.V = V
        self.recipe = recipe
        self.tol = tol
        self.t = 0.0
        base = states[0]
        self.grid = base.grid
        self.v0 = base.boost.copy()
        self.mask = support_mask(base)
        self.e1 = _e1(self.grid.n_dims)

    def advance(self, t_new: float) -> None:
        dt = t_new - self.t
        if dt == 0.0:
            return
        if self.recipe.diag_forms:
            inc = dollard_phase(
                _FormSum(self.recipe.diag_forms),
                t_new,
                self.grid,
                self.v0,
                mask=self.mask,
                tol=self.tol,
                t_ref=self.t,
            )
            self.states = [apply_modifier(s, inc) for s in self.states]
        if self.recipe.graf_form is not None:
            seg = _graf_segment(self.recipe.graf_form, self.v0, self.t, t_new, self.tol)
            phase = ModifierPhase("graf_s", t_new, self.v0 * 0, scalar=seg)
            self.states = [apply_modifier(s, phase) for s in self.states]
        self.states = [free_stark(s, dt) for s in self.states]
        self.t = t_new

    def residual(self) -> float:
        return max(
            _cook_residual(s, self.V, self.recipe, self.t, self.v0) for s in self.states
        )


class _FormSum:
    def __init__(self, forms):
        self.forms = forms

    def value(self, x):
        total = self.forms[0].value(x)
        for f in self.forms[1:]:
            total = total + f.value(x)
        return total


def _graf_segment(form, v0, t_a: float, t_b: float, tol: float) -> float:
    """int_{t_a}^{t_b} V(v0 s + e1 s^2/2) ds with orientation."""
    import scipy.integrate as sint

    e1 = _e1(len(v0))

    def f(s):
        return float(form.value(v0 * s + 0.5 * e1 * s**2))

    lo, hi = sorted((t_a, t_b))
    val, _ = sint.quad(f, lo, hi, epsabs=tol, epsrel=0.0, limit=200)
    return val if t_b >= t_a else -val


def _cook_residual(state: State, V: PotentialSpec, recipe: _Recipe, t: float, v0) -> float:
    """|| (V(x) - modifier counterterm at time t) state ||."""
    g = state.grid
    out = apply_multiplier(state, V.total_value).values.copy()
    if recipe.graf_form is not None:
        e1 = _e1(g.n_dims)
        point = v0 * t + 0.5 * e1 * t**2
        out -= float(recipe.graf_form.value(point)) * state.values
    if recipe.diag_forms:
        out -= apply_counterterm(state, recipe.diag_forms, t).values
    return g.norm(out) / max(state.norm, 1e-300)


def _find_horizon(leg: _FreeLeg, policy: HorizonPolicy, direction: int):
    """Advance the free leg until the tail integrand drops below tolerance."""
    floor = policy.T_plus if direction > 0 else -policy.T_minus
    r0 = leg.residual()
    if r0 < 1e-3 * policy.cook_tolerance:
        return 0.0, r0  # free case: wave operator is the identity
    k = 0
    while True:
        k += 1
        t = direction * k * policy.cook_dt
        leg.advance(t)
        r = leg.residual()
        if abs(t) >= floor and r < policy.cook_tolerance:
            return t, r
        if abs(t) >= policy.max_T:
            raise NoConvergence(
                f"tail integrand {r:.3e} above {policy.cook_tolerance:.1e} "
                f"at |t| = {policy.max_T}"
            )


def wave_operator_apply(
    state: State,
    V: PotentialSpec,
    direction: int,
    modifier: str = "none",
    policy: Optional[HorizonPolicy] = None,
) -> State:
    """Finite-horizon wave operator: exp(i T H) U(T) state for the given sign."""
    policy = policy or HorizonPolicy()
    if direction not in (+1, -1):
        raise ValueError("direction must be +1 or -1")
    recipe = _recipe(V, modifier)
    norm0 = state.norm
    work = state.scaled(1.0 / norm0)
    leg = _FreeLeg([work], V, recipe)
    T, _ = _find_horizon(leg, policy, direction)
    out, _ = full_propagate(leg.states[0], V, T, 0.0, dt=policy.dt)
    return out.scaled(norm0)


def smatrix_apply_batch(
    states: Sequence[State],
    V: PotentialSpec,
    modifier: str = "none",
    policy: Optional[HorizonPolicy] = None,
    tags: Optional[Sequence[str]] = None,
) -> List[SMatrixSample]:
    """Apply the scattering map to a batch of states sharing one packet support.

    Horizons, modifier phases and the interacting sweep are computed once and
    shared; the first state drives the Cook criterion together with the rest
    (the reported residual is the batch maximum).
    """
    policy = policy or HorizonPolicy()
    recipe = _recipe(V, modifier)
    tags = tags or [f"state{i}" for i in range(len(states))]
    norms = [s.norm for s in states]
    work = [s.scaled(1.0 / n) for s, n in zip(states, norms)]
    grid = work[0].grid
    v0 = work[0].boost.copy()
    mask = support_mask(work[0])

    phi_minus_inf = phi_plus_inf = None
    if recipe.restore_s_diag:
        phi_minus_inf = dollard_phase(
            recipe.s_form, -math.inf, grid, v0, mask=mask, tol=1e-12
        )
        phi_plus_inf = dollard_phase(
            recipe.s_form, math.inf, grid, v0, mask=mask, tol=1e-12
        )
        # incoming phase restoration: start from (I^-)^* psi
        work = [apply_modifier(s, phi_minus_inf, sign=-1) for s in work]

    # backward free+modifier leg to T-
    leg = _FreeLeg(work, V, recipe)
    T_minus, res_minus = _find_horizon(leg, policy, -1)
    cur = leg.states

    # interacting sweep T- -> T+, monitoring the forward tail integrand
    t = T_minus
    res_plus = math.inf
    T_plus = None
    while True:
        t_next = t + policy.cook_dt
        cur = [full_propagate(s, V, t, t_next, dt=policy.dt)[0] for s in cur]
        t = t_next
        if t >= policy.T_plus - 1e-12:
            res_plus = max(
                _cook_residual(s, V, recipe, t, v0) for s in cur
            )
            if res_plus < policy.cook_tolerance:
                T_plus = t
                break
        if t >= policy.max_T:
            raise NoConvergence(
                f"forward tail integrand {res_plus:.3e} above "
                f"{policy.cook_tolerance:.1e} at t = {policy.max_T}"
            )

    # unwind the forward free+modifier factors
    out = [free_stark(s, -T_plus) for s in cur]
    phases = []
    if recipe.diag_forms:
        phases.append(
            dollard_phase(
                _FormSum(recipe.diag_forms), T_plus, grid, v0, mask=mask, tol=1e-12
            )
        )
    if recipe.graf_form is not None:
        phases.append(graf_phase(recipe.graf_form, v0, T_plus, tol=1e-12))
    if phases:
        phase_plus = combine_phases(*phases)
        out = [apply_modifier(s, phase_plus, sign=-1) for s in out]

    # phase restoration so every short-range route returns the same operator
    if recipe.restore_scalar:
        seg = _graf_segment(recipe.graf_form, v0, T_minus, T_plus, 1e-12)
        restore = ModifierPhase("graf_s", T_plus, v0 * 0, scalar=seg)
        out = [apply_modifier(s, restore, sign=+1) for s in out]
    if recipe.restore_s_diag:
        out = [apply_modifier(s, phi_plus_inf, sign=+1) for s in out]

    return [
        SMatrixSample(
            input_tag=tag,
            output=s.scaled(n),
            T_plus=T_plus,
            T_minus=T_minus,
            residual_minus=res_minus,
            residual_plus=res_plus,
            modifier=modifier,
        )
        for tag, s, n in zip(tags, out, norms)
    ]


def smatrix_apply(
    state: State,
    V: PotentialSpec,
    modifier: str = "none",
    policy: Optional[HorizonPolicy] = None,
) -> SMatrixSample:
    return smatrix_apply_batch([state], V, modifier, policy)[0]


def commutator_functional(
    V: PotentialSpec,
    v: Sequence[float],
    phi0: State,
    psi0: State,
    axis: int,
    modifier: str = "none",
    policy: Optional[HorizonPolicy] = None,
) -> complex:
    """|v| (i [S, p_j] Phi_v, Psi_v) on boosted probe packets.

    The commutator acts as S(p_j Phi) - p_j(S Phi); both scattering
    applications share one pipeline.  Requires |v_hat . e1| < 1.
    """
    v = np.asarray(v, dtype=float)
    vmag = float(np.linalg.norm(v))
    if vmag == 0.0:
        raise ValueError("need a nonzero velocity")
    if abs(v[0]) / vmag >= 1.0 - 1e-12:
        raise ValueError("need |v_hat . e1| < 1")
    phi_v = boost(phi0, v)
    psi_v = boost(psi0, v)
    pj_phi_v = apply_momentum(phi_v, axis)
    sa, sb = smatrix_apply_batch(
        [pj_phi_v, phi_v], V, modifier, policy, tags=["p_phi", "phi"]
    )
    val = inner(sa.output, psi_v) - inner(apply_momentum(sb.output, axis), psi_v)
    return vmag * 1j * val


def long_range_correction(
    V: PotentialSpec,
    v: Sequence[float],
    phi0: State,
    psi0: State,
    axis: int,
    policy: Optional[HorizonPolicy] = None,
) -> complex:
    """Known long-range contribution: int i((d_j V_l)(x) U_D(t) Phi_v, U_D(t) Psi_v) dt.

    Quadrature horizon matches the scattering policy: the modified free leg
    is stepped on the Cook mesh in both directions until the tail integrand
    of the long-range route is below tolerance, and the integrand is
    Simpson-integrated on that mesh.
    """
    import scipy.integrate as sint

    policy = policy or HorizonPolicy()
    recipe = _recipe(V, "dollard_l")
    v = np.asarray(v, dtype=float)
    phi_v = boost(phi0, v)
    psi_v = boost(psi0, v)
    same = phi0 is psi0 or np.array_equal(phi0.values, psi0.values)
    batch = [phi_v] if same else [phi_v, psi_v]

    def grad_form(x):
        return V.l_part.form.gradient(x)[..., axis - 1]

    def integrand(states):
        a = states[0]
        b = states[0] if same else states[1]
        return 1j * inner(apply_multiplier(a, grad_form), b)

    total = 0.0 + 0.0j
    for direction in (+1, -1):
        leg = _FreeLeg([s for s in batch], V, recipe)
        ts = [0.0]
        vals = [integrand(leg.states)]
        floor = policy.T_plus if direction > 0 else -policy.T_minus
        k = 0
        while True:
            k += 1
            t = direction * k * policy.cook_dt
            leg.advance(t)
            ts.append(t)
            vals.append(integrand(leg.states))
            if abs(t) >= floor and leg.residual() < policy.cook_tolerance:
                break
            if abs(t) >= policy.max_T:
                raise NoConvergence("long-range correction horizon exceeded max_T")
        ts = np.asarray(ts)
        vals = np.asarray(vals)
        order = np.argsort(ts)
        total += sint.simpson(vals[order], x=ts[order])

    return complex(total)
