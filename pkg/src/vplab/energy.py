"""Hypocoercive energy and dissipation functionals at a fixed mode.

The quadratic forms pair the mode field with its velocity gradient through a
nu^{1/3}-weighted cross term; a large constant in front of the plain L2 part
keeps the assembled form positive definite.  The monitor extracts the largest
dissipation coefficient compatible with a stored trajectory, and the decay
checkers verify a Gronwall-type lemma (exponential and polynomial variants)
on supplied scalar series.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .grids import (ModeField, TailWarning, VelocityGrid, WeightSpec,
                    dissipation_norm, grad, mode_field, quadrature,
                    weight_values, weighted_norm)
from .collision import CollisionFields

POLY_DECAY_CONSTANT = 3.0 ** 5 * math.pi / 2.0 + 1.0


@dataclass(frozen=True)
class EnergyParams:
    """Configuration of the hypocoercive forms.

    ``ell`` is the weight index of the plain L2 part; gradient terms use
    ell - 2.  ``q`` is the (already halved) Gaussian rate, active only for
    theta = 2.  ``cf`` carries the diffusion fields needed by dissipation
    norms; energies alone never touch it.  ``n_max`` only enters through
    the combined-norm weight ladder M = n_max + 30.
    """

    nu: float
    ell: float
    theta: int = 0
    q: float = 0.0
    a0: float = 16.0
    n_max: int = 9
    dv_budget: int = 3
    cf: Optional[CollisionFields] = field(default=None, repr=False)

    def __post_init__(self):
        if self.a0 <= 0.0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if self.nu < 0.0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        WeightSpec(self.ell, self.theta, self.q)  # validates the triple

    @property
    def m_index(self) -> int:
        return self.n_max + 30

    def weight(self, shift: int = 0) -> WeightSpec:
        return WeightSpec(self.ell - shift, self.theta, self.q)


def probe_definiteness(params: EnergyParams, grid: VelocityGrid, k, *,
                       n_probes: int = 100, seed: int = 0) -> float:
    """Smallest normalized energy over a probe set of complex fields.

    White noise alone cannot expose a sign failure: rough fields make the
    gradient term dominate the cross pairing.  The probes therefore mix
    random fields with modulated Gaussians exp(i c v_j) whose phase speed
    sweeps the minimizer c ~ -k_j nu^{-1/3}/2, capped at the resolvable
    pi/(2h).  Negative return beyond round-off means a0 fails to dominate
    on this grid.
    """
    rng = np.random.default_rng(seed)
    worst = math.inf
    shape = (grid.n,) * 3
    kk = np.asarray(k, dtype=float)
    coords = grid.coords()
    r2 = grid.radius2()

    def score(vals):
        h = mode_field(grid, vals, k=k)
        e = mode_energy(h, k, params, _guard=False)
        scale = _energy_scale(h, k, params)
        return e / scale if scale > 0.0 else 0.0

    with warnings.catch_warnings():
        # wide envelopes and white noise reach the faces; expected here
        warnings.simplefilter("ignore", TailWarning)
        c_res = math.pi / (2.0 * grid.spacing)
        c_opt = (0.5 * params.nu ** (-1.0 / 3.0) if params.nu > 0.0
                 else c_res)
        for j in range(3):
            if kk[j] == 0.0:
                continue
            for fac in (0.25, 0.5, 1.0, 2.0):
                c = -math.copysign(min(fac * c_opt, c_res), kk[j])
                for width2 in (grid.half_width ** 2 / 2.0,
                               2.0 * grid.half_width ** 2):
                    env = np.exp(-r2 / (2.0 * width2))
                    worst = min(worst, score(env * np.exp(1j * c * coords[j])))
        for _ in range(n_probes):
            vals = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            worst = min(worst, score(vals))
    return worst


def energy_params(grid: VelocityGrid, k, nu, ell, **kw) -> EnergyParams:
    """EnergyParams with the construction-time definiteness probe.

    A small probe set (16 fields) guards the configured a0; the full
    1000-probe sweep lives in the test suite.
    """
    params = EnergyParams(nu=nu, ell=ell, **kw)
    worst = probe_definiteness(params, grid, k, n_probes=16)
    if worst < -1e-8:
        raise ValueError(
            f"energy form indefinite (min normalized value {worst:.2e}); "
            f"a0 = {params.a0} is too small for this configuration")
    return params


def _energy_scale(h: ModeField, k, params: EnergyParams) -> float:
    k2 = float(sum(float(c) ** 2 for c in k))
    n0 = weighted_norm(h, params.weight(0)) ** 2
    n2 = weighted_norm(h, params.weight(2)) ** 2
    g = grad(h)
    w2 = weight_values(h.grid, params.weight(2)) ** 2
    dv = quadrature(h.grid, w2 * np.sum(np.abs(g) ** 2, axis=0)).real
    return params.a0 * (n0 + k2 * n2) + params.nu ** (2.0 / 3.0) * dv


def mode_energy(h: ModeField, k, params: EnergyParams, *, _guard: bool = True) -> float:
    """The hypocoercive quadratic form at mode k (squared norm).

    a0 (|H|_ell^2 + |k|^2 |H|_{ell-2}^2)
      + nu^{1/3} Re<ik H, grad_v H>_{ell-2} + nu^{2/3} |grad_v H|_{ell-2}^2.
    """
    kk = np.asarray(k, dtype=float)
    k2 = float(kk @ kk)
    n0 = weighted_norm(h, params.weight(0)) ** 2
    n2 = weighted_norm(h, params.weight(2)) ** 2
    g = grad(h)
    w2 = weight_values(h.grid, params.weight(2)) ** 2
    dv = quadrature(h.grid, w2 * np.sum(np.abs(g) ** 2, axis=0)).real
    cross = 0.0
    for j in range(3):
        if kk[j] == 0.0:
            continue
        pair = quadrature(h.grid, w2 * (1j * kk[j] * h.values) * np.conj(g[j]))
        cross += pair.real
    e = (params.a0 * (n0 + k2 * n2)
         + params.nu ** (1.0 / 3.0) * cross
         + params.nu ** (2.0 / 3.0) * dv)
    if _guard:
        scale = params.a0 * (n0 + k2 * n2) + params.nu ** (2.0 / 3.0) * dv
        if e < -1e-8 * scale:
            raise RuntimeError(
                f"energy form came out negative ({e:.3e} vs scale {scale:.3e}); "
                f"a0 = {params.a0} does not dominate the cross term here")
        if e < 0.0:
            e = 0.0
    return float(e)


def mode_dissipation(h: ModeField, k, params: EnergyParams) -> float:
    """Dissipation counterpart (squared): sigma-weighted flux norms.

    nu^{2/3} a0 (D(H)_ell^2 + |k|^2 D(H)_{ell-2}^2) + |k|^2 |H|_{ell-2}^2
      + nu^{4/3} sum_j D(d_j H)_{ell-2}^2,
    with D the diffusion seminorm of the collision fields.  The middle term
    carries no nu factor, so the value is positive for k != 0 even at nu = 0.
    """
    kk = np.asarray(k, dtype=float)
    k2 = float(kk @ kk)
    n2 = weighted_norm(h, params.weight(2)) ** 2
    out = k2 * n2
    if params.nu > 0.0:
        if params.cf is None:
            raise ValueError("dissipation norms need collision fields in params")
        d0 = dissipation_norm(h, params.weight(0), params.cf) ** 2
        d2 = dissipation_norm(h, params.weight(2), params.cf) ** 2
        g = grad(h)
        dgrad = 0.0
        for j in range(3):
            gj = h.with_values(g[j])
            dgrad += dissipation_norm(gj, params.weight(2), params.cf) ** 2
        out += (params.nu ** (2.0 / 3.0) * params.a0 * (d0 + k2 * d2)
                + params.nu ** (4.0 / 3.0) * dgrad)
    return float(out)


# --- trajectory monitor ---


@dataclass(frozen=True)
class MonitorReport:
    """Largest admissible dissipation coefficient and where it binds."""

    theta_hat: Optional[float]
    binding_time: Optional[float]
    a0: float
    nu: float
    k: tuple
    status: str = "ok"

    def as_dict(self) -> dict:
        return {"theta_hat": self.theta_hat, "binding_time": self.binding_time,
                "A0": self.a0, "nu": self.nu, "k": list(self.k),
                "status": self.status}


def hypocoercivity_monitor(traj, params: EnergyParams) -> MonitorReport:
    """Largest theta with dE/dt + theta nu^{1/3} D <= slack on the snapshots.

    Centered differences need interior points, so at least three snapshots
    are required.  At nu = 0 the energy is an exact invariant of the split
    scheme and no dissipation is demanded; that case returns a sentinel
    instead of a number.
    """
    times = np.asarray(traj.snapshot_times, dtype=float)
    snaps = traj.snapshots
    kk = tuple(traj.config.k)
    if len(snaps) < 3:
        raise ValueError("monitor needs at least three stored snapshots")
    energies = np.array([mode_energy(s, kk, params) for s in snaps])

    if params.nu == 0.0:
        return MonitorReport(theta_hat=None, binding_time=None, a0=params.a0,
                             nu=0.0, k=kk, status="no dissipation demanded")

    span = times[-1] - times[0]
    tol = 1e-6 * float(np.max(energies)) / span
    nu13 = params.nu ** (1.0 / 3.0)
    theta = math.inf
    binding = times[1]
    for i in range(1, len(snaps) - 1):
        dedt = (energies[i + 1] - energies[i - 1]) / (times[i + 1] - times[i - 1])
        diss = mode_dissipation(snaps[i], kk, params)
        if diss <= 0.0:
            continue
        cap = (tol - dedt) / (nu13 * diss)
        if cap < theta:
            theta = cap
            binding = times[i]
    if theta is math.inf:
        return MonitorReport(theta_hat=None, binding_time=None, a0=params.a0,
                             nu=params.nu, k=kk, status="no dissipation demanded")
    return MonitorReport(theta_hat=max(0.0, float(theta)),
                         binding_time=float(binding), a0=params.a0,
                         nu=params.nu, k=kk, status="ok")


# --- derivative families and combined norms ---


def derivative_family(f: ModeField, k, t: float, *, n_beta: int, n_omega: int,
                      budget: int = 3) -> dict:
    """Mixed v-derivatives and Y-commutations of f, keyed by (beta, omega).

    beta and omega are 3-tuples of exponent counts.  Y at a fixed mode is
    d_j + i k_j t, so both kinds commute exactly and the construction order
    is immaterial.  Total stencil depth |beta| + |omega| is capped.
    """
    if n_beta + n_omega > budget:
        raise ValueError(
            f"derivative budget exceeded: {n_beta} + {n_omega} > {budget}")
    kk = np.asarray(k, dtype=float)
    fam = {((0, 0, 0), (0, 0, 0)): f}
    frontier = [((0, 0, 0), (0, 0, 0))]
    while frontier:
        key = frontier.pop()
        beta, omega = key
        h = fam[key]
        b, w = sum(beta), sum(omega)
        if b < n_beta:
            g = grad(h)
            for j in range(3):
                nb = tuple(beta[a] + (a == j) for a in range(3))
                if (nb, omega) not in fam:
                    fam[(nb, omega)] = h.with_values(g[j])
                    frontier.append((nb, omega))
        if w < n_omega:
            g = grad(h)
            for j in range(3):
                nw = tuple(omega[a] + (a == j) for a in range(3))
                if (beta, nw) not in fam:
                    vals = g[j] + 1j * kk[j] * t * h.values
                    fam[(beta, nw)] = h.with_values(vals)
                    frontier.append((beta, nw))
    return fam


def _alpha_weight(k, degree: int) -> float:
    """sum over |alpha| = degree of |k^alpha|^2 (one term per multi-index)."""
    k2 = [float(c) ** 2 for c in k]
    total = 0.0
    for a1 in range(degree + 1):
        for a2 in range(degree + 1 - a1):
            a3 = degree - a1 - a2
            total += k2[0] ** a1 * k2[1] ** a2 * k2[2] ** a3
    return total


def beta_prefactor(nu: float, beta_abs: int) -> float:
    """Scaling carried by each v-derivative inside the combined norm."""
    return nu ** (2.0 * beta_abs / 3.0)


def combined_energy_norm(family: dict, k, params: EnergyParams,
                         selector) -> float:
    """Sum of mode energies over the selector box (squared norm).

    selector = (n_alpha_low, n_alpha_beta, n_beta, n_omega); the weight index
    of each term is 2M - 2(|alpha|+|beta|+|omega|), and exponential weights
    are dropped whenever a Y-commutation is present.
    """
    n_low, n_ab, n_b, n_w = (int(s) for s in selector)
    if n_low > n_ab or n_b > n_ab:
        raise ValueError(f"selector bounds inconsistent: {selector}")
    if n_b + n_w > params.dv_budget:
        raise ValueError(
            f"derivative budget exceeded: {n_b} + {n_w} > {params.dv_budget}")
    two_m = 2 * params.m_index
    total = 0.0
    for (beta, omega), h in family.items():
        b, w = sum(beta), sum(omega)
        if b > n_b or w > n_w:
            continue
        for a in range(n_low, n_ab - b + 1):
            coef = _alpha_weight(k, a)
            if coef == 0.0:
                continue
            ell = two_m - 2.0 * (a + b + w)
            if w == 0:
                tp = replace(params, ell=ell)
            else:
                tp = replace(params, ell=ell, theta=0, q=0.0)
            total += coef * beta_prefactor(params.nu, b) * mode_energy(h, k, tp)
    return float(total)


def g_norm(family: dict, k, nu: float, n: int, *, budget: int = 3) -> float:
    """Sum of <v>^10-weighted derivative norms (first power, not squared).

    Includes every family entry with 1 <= |beta| <= 2 and |omega| <= n,
    scaled by nu^{(|beta|-1)/3}; the x-derivative sum at a fixed mode
    contracts to scalar |k^alpha| factors.
    """
    spec = WeightSpec(10.0)
    total = 0.0
    for (beta, omega), h in family.items():
        b, w = sum(beta), sum(omega)
        if not 1 <= b <= 2 or w > n:
            continue
        if b + w > budget:
            raise ValueError(f"derivative budget exceeded at {(beta, omega)}")
        base = weighted_norm(h, spec)
        for a in range(n - w + 1):
            total += math.sqrt(_alpha_weight(k, a)) * nu ** ((b - 1) / 3.0) * base
    return float(total)


# --- Strain-Guo decay checkers ---


@dataclass(frozen=True)
class StrainGuoInput:
    """Scalar series and constants feeding the decay lemma.

    ig carries the integral of g^2, img its <v>^{-m}-weighted variant, ih
    the absorbed h^2 integral, forcing the right-hand side.  cbound is the
    moment constant (Gaussian moments for the exponential variant, 4m-th
    moments for the polynomial one); it is trusted, not recomputed.
    """

    c: float
    b: float
    m: float
    q: float
    p: float
    times: np.ndarray
    ig: np.ndarray
    img: np.ndarray
    ih: np.ndarray
    forcing: np.ndarray
    cbound: float

    def __post_init__(self):
        if not 0.0 < self.q < 2.0:
            raise ValueError(f"q must lie in (0, 2), got {self.q}")
        if not 0.0 < self.p < self.q / 2.0:
            raise ValueError(f"p must lie in (0, q/2), got {self.p}")
        if self.c <= 0.0 or self.b < 0.0 or self.m < 0.0:
            raise ValueError("rates must be positive (b, m nonnegative)")
        n = len(self.times)
        for name in ("ig", "img", "ih", "forcing"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length disagrees with times")
        if n < 3:
            raise ValueError("need at least three samples for differencing")


@dataclass(frozen=True)
class StrainGuoReport:
    constant: float
    hypothesis_residual: float
    sup_term: float
    integral_term: float

    def as_dict(self) -> dict:
        return {"C": self.constant,
                "hypothesis_residual": self.hypothesis_residual,
                "sup_term": self.sup_term,
                "integral_term": self.integral_term}


def _sg_envelope(inp: StrainGuoInput) -> np.ndarray:
    power = 2.0 / (2.0 + inp.m)
    return np.exp(inp.p * (inp.c * inp.times) ** power)


def strain_guo_check(inp: StrainGuoInput, *, rtol: float = 1e-5) -> StrainGuoReport:
    """Verify the differential hypothesis, then bound the decay conclusion.

    The hypothesis d/dt ig + c img + b ih <= forcing is checked at interior
    samples by centered differences; violation beyond rtol times the local
    term scale refuses the conclusion outright.  On success the report
    carries the smallest admissible constant
    (sup_t env*ig + b int env*ih) / cbound with env the stretched weight.
    """
    t, ig = inp.times, inp.ig
    dedt = (ig[2:] - ig[:-2]) / (t[2:] - t[:-2])
    lhs = dedt + inp.c * inp.img[1:-1] + inp.b * inp.ih[1:-1]
    scale = np.maximum(np.abs(dedt), inp.c * np.abs(inp.img[1:-1]))
    scale = np.maximum(scale, np.max(np.abs(ig)) * inp.c)
    residual = float(np.max((lhs - inp.forcing[1:-1]) / scale))
    if residual > rtol:
        raise ValueError(
            f"hypothesis inequality fails (residual {residual:.2e} > {rtol:.0e}); "
            "refusing to evaluate the conclusion")

    env = _sg_envelope(inp)
    fint = float(np.trapezoid(env * inp.forcing, t))
    if fint > inp.cbound * (1.0 + rtol):
        raise ValueError(
            f"weighted forcing integral {fint:.3e} exceeds the moment bound "
            f"{inp.cbound:.3e}; refusing to evaluate the conclusion")

    sup_term = float(np.max(env * ig))
    integral_term = inp.b * float(np.trapezoid(env * inp.ih, t))
    c_small = (sup_term + integral_term) / inp.cbound
    return StrainGuoReport(constant=c_small, hypothesis_residual=residual,
                           sup_term=sup_term, integral_term=integral_term)


def strain_guo_poly_check(inp: StrainGuoInput, *, rtol: float = 1e-5) -> StrainGuoReport:
    """Polynomial variant: ig <= (3^5 pi/2 + 1) cbound <ct>^{-3} at every sample.

    Here cbound must bound the 4m-th moments and the hypothesis carries no
    h or forcing terms.
    """
    t, ig = inp.times, inp.ig
    dedt = (ig[2:] - ig[:-2]) / (t[2:] - t[:-2])
    lhs = dedt + inp.c * inp.img[1:-1]
    scale = np.maximum(np.abs(dedt), inp.c * np.abs(inp.img[1:-1]))
    scale = np.maximum(scale, np.max(np.abs(ig)) * inp.c)
    residual = float(np.max(lhs / scale))
    if residual > rtol:
        raise ValueError(
            f"hypothesis inequality fails (residual {residual:.2e} > {rtol:.0e}); "
            "refusing to evaluate the conclusion")

    bound = POLY_DECAY_CONSTANT * inp.cbound * (1.0 + (inp.c * t) ** 2) ** (-1.5)
    worst = float(np.max(ig / bound))
    if worst > 1.0:
        raise ValueError(
            f"polynomial decay bound violated (ratio {worst:.3f} at "
            f"t = {t[int(np.argmax(ig / bound))]:.2f})")
    sup_term = float(np.max(ig * (1.0 + (inp.c * t) ** 2) ** 1.5))
    return StrainGuoReport(constant=sup_term / inp.cbound,
                           hypothesis_residual=residual,
                           sup_term=sup_term, integral_term=0.0)
