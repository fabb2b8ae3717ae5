"""Time evolution of a single spatial mode, and decay-rate measurement.

The mode equation  d/dt h + i k.v h + nu L h = 0  is integrated by Strang
splitting.  Free streaming multiplies by exp(-i k dt . v), which the
co-moving representation absorbs into the twist label, so the transport
half-steps are exact relabelings and every unit of time-stepping error
lives in the implicit collision step.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .collision import CollisionFields, apply_L, apply_fokker_planck
from .grids import (
    ModeField,
    WeightSpec,
    grad,
    inner,
    mode_field,
    quadrature,
    twist_phase,
    velocity_average,
    weighted_norm,
)

_SCHEMES = ("strang", "strang-be")
_OPERATORS = ("landau", "fokker-planck")


class StepAccuracyWarning(UserWarning):
    """The state moved by more than 20% of its norm in one step."""


@dataclass(frozen=True)
class EvolutionConfig:
    """Parameters of one mode evolution run.

    ``k`` is the integer spatial mode, ``nu`` the collision strength.
    The horizon T must be an integer multiple of dt.  ``scheme`` selects
    the order of the split step: "strang" (default) symmetrizes the
    implicit collision solve and is second order in dt; "strang-be"
    takes one backward-Euler step (I + nu dt L) h = g instead, which is
    first order (its nu^2 dt defect rides the twist-amplified operator,
    see the trajectory tests).  ``solver_rtol`` is the relative residual
    target of the implicit solve.
    """

    k: tuple
    nu: float
    T: float
    dt: float
    scheme: str = "strang"
    operator: str = "landau"
    snapshot_stride: int = 10
    solver_rtol: float = 1e-10
    solver_maxiter: int = 200

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(c) for c in self.k))
        if len(self.k) != 3:
            raise ValueError("k must have three components")
        if self.nu < 0.0:
            raise ValueError(f"nu must be nonnegative, got {self.nu}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.T <= 0.0:
            raise ValueError(f"T must be positive, got {self.T}")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-8 * max(1.0, steps):
            raise ValueError(f"T/dt = {steps} is not an integer")
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.operator not in _OPERATORS:
            raise ValueError(f"unknown operator {self.operator!r}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be at least 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class Trajectory:
    """Sampled evolution output: scalar series every step, snapshots strided.

    ``rho`` holds the velocity average of h(t); ``energy`` the squared L2
    norm; ``dissipation`` its exact decay rate 2 nu Re<Lh, h>.
    """

    config: EvolutionConfig
    times: np.ndarray
    norm_l2: np.ndarray
    rho: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    snapshot_times: np.ndarray
    snapshots: tuple
    solver_iterations: np.ndarray

    def __post_init__(self):
        if not np.all(np.diff(self.times) > 0.0):
            raise ValueError("sample times must increase strictly")
        n = len(self.times)
        if not (len(self.norm_l2) == len(self.rho) == len(self.energy)
                == len(self.dissipation) == n):
            raise ValueError("scalar series lengths disagree")
        if len(self.snapshot_times) != len(self.snapshots):
            raise ValueError("snapshot times and fields disagree")

    def write_csv(self, path) -> None:
        """Scalar series as CSV, full double precision."""
        cols = (self.times, self.norm_l2, self.rho.real, self.rho.imag,
                self.energy, self.dissipation)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("t,norm_l2,re_rho,im_rho,energy,dissipation\n")
            for row in zip(*cols):
                f.write(",".join("%.17g" % x for x in row))
                f.write("\n")


def _l2(grid, values: np.ndarray) -> float:
    return float(np.sqrt(quadrature(grid, values.real**2 + values.imag**2).real))


def exact_free_semigroup(h0: ModeField, k, t: float) -> ModeField:
    """Free streaming of the mode: multiply by exp(-i k t . v).

    Realized as a twist relabel of the co-moving representation, so the
    node values are untouched and the map is an isometry to the last bit.
    """
    kk = np.asarray(k, dtype=float)
    twist = tuple(np.asarray(h0.twist, dtype=float) + kk * t)
    return mode_field(h0.grid, h0.values, k=h0.k, twist=twist)


def _solve_collision_step(g: ModeField, nu_dt: float, collide, cfg: EvolutionConfig):
    """The implicit collision solve over one step, matrix-free CG.

    "strang":     (I + nu dt/2 L) h = (I - nu dt/2 L) g   (time-symmetric)
    "strang-be":  (I + nu dt L) h = g                     (backward Euler)

    Both matrices are Hermitian positive definite, so CG applies; the
    solve is warm-started at its right-hand side, where the residual is
    already O(nu dt ||L g||).  Returns the solution and the iteration
    count.
    """
    grid = g.grid
    shape = g.values.shape
    count = [0]

    if cfg.scheme == "strang":
        shift = 0.5 * nu_dt
        b = g.values.ravel() - shift * collide(g).values.ravel()
    else:
        shift = nu_dt
        b = g.values.ravel()

    def matvec(x):
        f = mode_field(grid, x.reshape(shape), k=g.k, twist=g.twist)
        return x + shift * collide(f).values.ravel()

    def tick(_xk):
        count[0] += 1

    op = LinearOperator((b.size, b.size), matvec=matvec, dtype=np.complex128)
    x, info = cg(op, b, x0=b.copy(), rtol=cfg.solver_rtol, atol=0.0,
                 maxiter=cfg.solver_maxiter, callback=tick)
    if info != 0:
        raise RuntimeError(
            f"implicit collision solve failed to reach relative residual "
            f"{cfg.solver_rtol:g} after {count[0]} iterations (info={info})")
    return g.with_values(x.reshape(shape)), count[0]


def evolve_mode(h0: ModeField, cfg: EvolutionConfig, cf: CollisionFields = None) -> Trajectory:
    """March the mode equation over [0, T] and sample the trajectory.

    Each step is exact transport over dt/2, one implicit collision solve
    over dt at the midpoint twist, exact transport over dt/2.  Warns if
    the state moves by more than 20% of its norm within a single step
    (the scheme stays stable, the warning flags accuracy loss).
    """
    grid = h0.grid
    collide = None
    if cfg.nu > 0.0:
        if cfg.operator == "landau":
            if cf is None:
                raise ValueError("landau evolution needs collision fields")
            if cf.grid.n != grid.n or cf.grid.half_width != grid.half_width:
                raise ValueError("collision fields built on a different grid")

            def collide(f: ModeField) -> ModeField:
                return apply_L(f, cf)
        else:
            collide = apply_fokker_planck

    n_steps = cfg.n_steps
    kk = np.asarray(cfg.k, dtype=float)
    tau0 = np.asarray(h0.twist, dtype=float)
    nu_dt = cfg.nu * cfg.dt

    times = cfg.dt * np.arange(n_steps + 1)
    norm_l2 = np.empty(n_steps + 1)
    rho = np.empty(n_steps + 1, dtype=np.complex128)
    energy = np.empty(n_steps + 1)
    dissipation = np.zeros(n_steps + 1)
    iterations = np.zeros(n_steps, dtype=int)
    snap_times = []
    snaps = []

    # physical change across one step compares values against the phase-shifted
    # previous values; the shift phase is the same every step
    step_phase = twist_phase(grid, kk * cfg.dt) if any(kk) else None
    warned = False

    state = mode_field(grid, h0.values, k=cfg.k, twist=tuple(tau0))
    for m in range(n_steps + 1):
        norm_l2[m] = _l2(grid, state.values)
        rho[m] = velocity_average(state)
        energy[m] = norm_l2[m] ** 2
        if cfg.nu > 0.0:
            dissipation[m] = 2.0 * cfg.nu * inner(collide(state), state).real
        if m % cfg.snapshot_stride == 0 or m == n_steps:
            snap_times.append(times[m])
            snaps.append(state)
        if m == n_steps:
            break

        prev_values = state.values
        mid = mode_field(grid, prev_values, k=cfg.k,
                         twist=tuple(tau0 + kk * (times[m] + 0.5 * cfg.dt)))
        if nu_dt > 0.0:
            mid, iterations[m] = _solve_collision_step(mid, nu_dt, collide, cfg)
        state = mode_field(grid, mid.values, k=cfg.k,
                           twist=tuple(tau0 + kk * (times[m] + cfg.dt)))

        if not warned and norm_l2[m] > 0.0:
            prev = prev_values if step_phase is None else step_phase * prev_values
            change = _l2(grid, state.values - prev) / norm_l2[m]
            if change > 0.2:
                warnings.warn(
                    f"state moved by {change:.2f} of its norm in one step; "
                    f"decrease dt", StepAccuracyWarning, stacklevel=2)
                warned = True

    return Trajectory(
        config=cfg,
        times=times,
        norm_l2=norm_l2,
        rho=rho,
        energy=energy,
        dissipation=dissipation,
        snapshot_times=np.asarray(snap_times),
        snapshots=tuple(snaps),
        solver_iterations=iterations,
    )


def apply_Y(h: ModeField, k, eta, t: float):
    """The twisted gradient: component j is d_j h + i (eta_j + k_j t) h.

    Commutes with free streaming by construction: on a twist-relabeled
    field the i k t part cancels the twist shift exactly.
    """
    coef = np.asarray(eta, dtype=float) + np.asarray(k, dtype=float) * t
    g = grad(h)
    return tuple(h.with_values(g[j] + 1j * coef[j] * h.values) for j in range(3))


@dataclass(frozen=True)
class DecayBoundReport:
    """Both sides of the moment decay bound and the implied constant."""

    lhs: float
    bracket: float
    order: int
    ell_prime: float
    rhs_sum: float
    constant: float


def y_decay_bound_check(h: ModeField, k, eta, t: float, order: int,
                        ell_prime: float) -> DecayBoundReport:
    """Implied constant in  |int h sqrt(mu)| <= C <kt+eta>^-N sum ||<v>^-l' Y^w h||.

    The sum runs over mixed applications Y^w of all orders |w| <= N.  The
    components of Y commute (constant coefficients), so each multi-index
    is evaluated once from any parent.
    """
    if not 0 <= order <= 3:
        raise ValueError(f"order must lie in [0, 3], got {order}")
    spec = WeightSpec(-float(ell_prime))
    coef = np.asarray(eta, dtype=float) + np.asarray(k, dtype=float) * t
    bracket = math.sqrt(1.0 + float(coef @ coef))
    lhs = abs(velocity_average(h))

    level = {(0, 0, 0): h}
    rhs_sum = weighted_norm(h, spec)
    for _ in range(order):
        nxt = {}
        for idx, f in level.items():
            ys = apply_Y(f, k, eta, t)
            for j in range(3):
                bumped = idx[:j] + (idx[j] + 1,) + idx[j + 1:]
                if bumped not in nxt:
                    nxt[bumped] = ys[j]
        level = nxt
        rhs_sum += sum(weighted_norm(f, spec) for f in level.values())

    if rhs_sum > 0.0:
        constant = lhs * bracket**order / rhs_sum
    else:
        constant = 0.0 if lhs == 0.0 else math.inf
    return DecayBoundReport(lhs=lhs, bracket=bracket, order=order,
                            ell_prime=float(ell_prime), rhs_sum=rhs_sum,
                            constant=constant)


_SERIES_FLOOR = 1e-14


@dataclass(frozen=True)
class DecayFit:
    amplitude: float
    rate: float
    residual: float
    model: str
    n_points: int


def decay_fit(times, values, model: str, *, a: float = None, nu: float = None,
              t_min: float = 0.0) -> DecayFit:
    """Least-squares decay-law fit on the log of a positive series.

    Models:
      power         A <t>^-p                      (rate is p)
      stretched     A exp(-delta (nu^(1/3) t)^a)  (rate is delta)
      mixed         A exp(-delta max((nu^(1/3) t)^(1/3), (nu t)^(2/3)))

    Samples before ``t_min`` (the initial transient; callers typically
    pass one phase-mixing period 2/|k|) and non-positive samples are
    excluded.  A series entirely below 1e-14 is rejected as degenerate.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("times and values must be matching 1-d arrays")
    sel = t >= t_min
    if not sel.any():
        raise ValueError(f"no samples at or after t_min = {t_min}")
    if np.max(y[sel]) < _SERIES_FLOOR:
        raise ValueError("degenerate series: all samples below 1e-14")
    mask = sel & (y > 0.0)
    if mask.sum() < 3:
        raise ValueError("need at least 3 positive samples past the transient")
    tt = t[mask]

    if model == "power":
        x = 0.5 * np.log1p(tt * tt)
    elif model == "stretched":
        if a is None or nu is None:
            raise ValueError("stretched model needs the exponent a and nu")
        x = (nu ** (1.0 / 3.0) * tt) ** a
    elif model == "mixed":
        if nu is None:
            raise ValueError("mixed model needs nu")
        x = np.maximum((nu ** (1.0 / 3.0) * tt) ** (1.0 / 3.0),
                       (nu * tt) ** (2.0 / 3.0))
    else:
        raise ValueError(f"unknown model {model!r}")

    logy = np.log(y[mask])
    design = np.column_stack([np.ones_like(x), -x])
    coef, *_ = np.linalg.lstsq(design, logy, rcond=None)
    resid = logy - design @ coef
    return DecayFit(amplitude=float(np.exp(coef[0])), rate=float(coef[1]),
                    residual=float(np.sqrt(np.mean(resid**2))), model=model,
                    n_points=int(mask.sum()))


def efolding_time(times, values, ratio: float = math.e):
    """First time the series falls to values[0]/ratio, linearly interpolated.

    Returns None if the series never reaches the target.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    target = y[0] / ratio
    below = np.nonzero(y <= target)[0]
    if below.size == 0:
        return None
    j = int(below[0])
    if j == 0:
        return float(t[0])
    frac = (y[j - 1] - target) / (y[j - 1] - y[j])
    return float(t[j - 1] + frac * (t[j] - t[j - 1]))
