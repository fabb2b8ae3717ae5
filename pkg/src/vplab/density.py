"""Density dynamics at a single spatial mode.

The density trace rho(t) = velocity_average(f(t)) of the self-consistent
mode equation satisfies a Volterra equation  rho + K * rho = N  whose
memory kernel K is the density response of the streamed datum v sqrt(mu).
This module computes the kernel, its Laplace side (transform, stability
margin, resolvent), and three independent routes to rho:

  volterra    product-trapezoidal marching of the memory equation,
  resolvent   rho = N + G * N with G inverted from -L[K]/(1 + L[K]),
  direct-pde  time-stepping the coupled field equation itself.

Routes share no numerics beyond the time grid, which is what makes their
pairwise agreement a meaningful check.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import sici

from .collision import CollisionFields, apply_L
from .evolution import EvolutionConfig, evolve_mode, _solve_collision_step
from .grids import (
    ModeField,
    VelocityGrid,
    mode_field,
    sqrt_maxwellian,
    twist_phase,
    velocity_average,
)

PI32 = math.pi ** 1.5

_PROVENANCES = ("volterra", "resolvent", "direct-pde")


class SpectralWindowWarning(UserWarning):
    """The frequency window truncates a still-visible resolvent tail."""


# --- containers ---


@dataclass(frozen=True)
class TimeSeries:
    """Samples on a uniform time grid."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values)
        if t.ndim != 1 or len(t) < 2 or len(t) != len(v):
            raise ValueError("need matching 1-d times and values, at least two samples")
        steps = np.diff(t)
        if steps[0] <= 0 or np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
            raise ValueError("times must increase with uniform spacing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class KernelSeries:
    """Memory kernel samples K(t_i) for one (k, nu).

    The kernel is real for the Gaussian background: the raw imaginary part
    is split off into im_values for audit and must stay below 1e-6 of the
    kernel's peak.  K(0) vanishes identically (odd first moment), so a
    nonzero value there means a broken grid symmetry.
    """

    k: tuple
    nu: float
    times: np.ndarray
    values: np.ndarray
    im_values: np.ndarray
    grid_n: int
    grid_half_width: float
    scheme: str

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        iv = np.asarray(self.im_values, dtype=float)
        if not (len(t) == len(v) == len(iv)) or len(t) < 2:
            raise ValueError("times, values, im_values must share a length of at least 2")
        steps = np.diff(t)
        if steps[0] <= 0 or np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
            raise ValueError("times must increase with uniform spacing")
        peak = float(np.max(np.abs(v)))
        if abs(v[0]) > 1e-10 * max(1.0, peak):
            raise ValueError(f"kernel must vanish at t=0, got {v[0]:.3e}")
        if peak > 0.0 and float(np.max(np.abs(iv))) > 1e-6 * peak:
            raise ValueError(
                f"imaginary residue {np.max(np.abs(iv)):.3e} exceeds 1e-6 of the "
                f"kernel peak {peak:.3e}; the velocity grid has lost its symmetry")
        object.__setattr__(self, "k", tuple(int(c) for c in self.k))
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "im_values", iv)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def im_residue(self) -> float:
        peak = float(np.max(np.abs(self.values)))
        if peak == 0.0:
            return 0.0
        return float(np.max(np.abs(self.im_values))) / peak

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,re_K,im_K\n")
            for i in range(len(self.times)):
                fh.write(f"{self.times[i]:.17g},{self.values[i]:.17g},"
                         f"{self.im_values[i]:.17g}\n")


@dataclass(frozen=True)
class TailEnvelope:
    """Fitted exponential envelope |K(t)| ~ amplitude * exp(-rate t) past T.

    error_bar bounds the modulus of the neglected/extrapolated tail
    integral for Re lambda >= 0; when the fit fails (ok False) the bar is
    widened to a no-decay estimate over one extra horizon.
    """

    amplitude: float
    rate: float
    ok: bool
    error_bar: float


@dataclass(frozen=True)
class LaplaceSamples:
    """Transform samples along a contour Re lambda = gamma0."""

    k: tuple
    nu: float
    gamma0: float
    tau: np.ndarray
    values: np.ndarray
    gtilde: np.ndarray
    tail: TailEnvelope

    def __post_init__(self):
        if self.gamma0 < 0:
            raise ValueError("contour offset must be >= 0")
        if not (len(self.tau) == len(self.values) == len(self.gtilde)):
            raise ValueError("tau, values, gtilde must share a length")


@dataclass(frozen=True)
class PenroseReport:
    """Stability margin min |1 + L[K](i tau)| and where it is attained."""

    kappa: float
    tau_argmin: float
    k: tuple
    nu: float
    tail_fraction: float

    def as_json_dict(self) -> dict:
        return {
            "k": list(self.k),
            "nu": self.nu,
            "kappa": self.kappa,
            "argmin_tau": self.tau_argmin,
            "tail_fraction": self.tail_fraction,
        }


@dataclass(frozen=True)
class DensitySolution:
    """One route's density trace, tagged with how it was obtained."""

    times: np.ndarray
    rho: np.ndarray
    provenance: str
    forcing: Optional[np.ndarray]
    snapshot_times: Optional[np.ndarray] = None
    snapshots: tuple = ()

    def __post_init__(self):
        if self.provenance not in _PROVENANCES:
            raise ValueError(f"provenance must be one of {_PROVENANCES}")
        if len(self.times) != len(self.rho):
            raise ValueError("times and rho must share a length")
        if self.snapshot_times is not None and len(self.snapshot_times) != len(self.snapshots):
            raise ValueError("snapshot times and fields disagree")

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,re_rho,im_rho\n")
            for i in range(len(self.times)):
                z = complex(self.rho[i])
                fh.write(f"{self.times[i]:.17g},{z.real:.17g},{z.imag:.17g}\n")


# --- kernel ---


def _grid_of(cf) -> VelocityGrid:
    # collision fields carry their grid; a bare grid is accepted for nu = 0
    return cf.grid if isinstance(cf, CollisionFields) else cf


def compute_kernel(k, nu, T, dt, cf, *, scheme: str = "strang") -> KernelSeries:
    """Kernel samples from three component runs of the streamed datum v sqrt(mu).

    K(t) = sum_j (2 i k_j / |k|^2) <S(t)[v_j sqrt(mu)], sqrt(mu)>; components
    with k_j = 0 contract to zero and are skipped.
    """
    kk = tuple(int(c) for c in k)
    k2 = float(sum(c * c for c in kk))
    if k2 == 0.0:
        raise ValueError("kernel needs a nonzero mode")
    grid = _grid_of(cf)
    root = sqrt_maxwellian(grid)
    v = grid.coords()

    cfg = EvolutionConfig(k=kk, nu=nu, T=T, dt=dt, scheme=scheme,
                          snapshot_stride=10 ** 9)
    total = None
    for j in range(3):
        if kk[j] == 0:
            continue
        datum = mode_field(grid, v[j] * root, k=kk)
        traj = evolve_mode(datum, cfg, cf if nu > 0 else None)
        part = (2j * kk[j] / k2) * traj.rho
        total = part if total is None else total + part

    return KernelSeries(k=kk, nu=float(nu), times=cfg.dt * np.arange(cfg.n_steps + 1),
                        values=total.real, im_values=total.imag,
                        grid_n=grid.n, grid_half_width=grid.half_width, scheme=scheme)


def analytic_kernel_vp(k, t):
    """Collisionless kernel at mode k: pi^{3/2} t exp(-|k|^2 t^2 / 4)."""
    k2 = float(sum(float(c) ** 2 for c in k))
    if k2 == 0.0:
        raise ValueError("kernel needs a nonzero mode")
    tt = np.asarray(t, dtype=float)
    out = PI32 * tt * np.exp(-k2 * tt * tt / 4.0)
    return float(out) if np.isscalar(t) else out


# --- Laplace side ---


def _filon_coeffs(theta):
    """Node weights for int f(x) e^{-lam x} dx, exact for piecewise-linear f.

    theta = lam*dx.  Left endpoint gets A, right endpoint B', interior
    nodes A + B'; at theta -> 0 both tend to 1/2 (plain trapezoid).
    """
    theta = np.asarray(theta, dtype=complex)
    small = np.abs(theta) < 1e-3
    th = np.where(small, 1.0, theta)
    a_closed = (th - 1.0 + np.exp(-th)) / th ** 2
    b_closed = (np.exp(th) - 1.0 - th) / th ** 2
    series = theta ** 2 / 24.0 + theta ** 4 / 720.0
    a_series = 0.5 - theta / 6.0 + series - theta ** 3 / 120.0
    b_series = 0.5 + theta / 6.0 + series + theta ** 3 / 120.0
    return (np.where(small, a_series, a_closed),
            np.where(small, b_series, b_closed))


def _filon_quad(x, f, lams):
    """Sum_j w_j(lam) f_j e^{-lam x_j} approximating int f e^{-lam x} dx."""
    lams = np.asarray(lams, dtype=complex)
    squeeze = lams.ndim == 0
    lams = np.atleast_1d(lams)
    dx = x[1] - x[0]
    out = np.empty(len(lams), dtype=complex)
    chunk = max(1, int(1.2e7) // len(x))  # cap the per-block phase matrix
    for s in range(0, len(lams), chunk):
        ls = lams[s:s + chunk]
        a, b = _filon_coeffs(ls * dx)
        eg = np.exp(-np.outer(ls, x))
        full = eg @ np.asarray(f, dtype=complex)
        out[s:s + chunk] = dx * ((a + b) * full
                                 - b * eg[:, 0] * f[0] - a * eg[:, -1] * f[-1])
    return out[0] if squeeze else out


def fit_kernel_tail(kernel: KernelSeries, *, window: float = 0.4) -> TailEnvelope:
    """Exponential envelope of |K| over the trailing window of the horizon."""
    t, K = kernel.times, kernel.values
    horizon = t[-1]
    sel = t >= (1.0 - window) * horizon
    tw, kw = t[sel], np.abs(K[sel])
    peak = float(np.max(np.abs(K)))
    usable = kw > 1e-13 * max(peak, 1e-300)
    fallback = float(np.max(kw)) * horizon if len(kw) else math.inf
    if np.count_nonzero(usable) < 3:
        return TailEnvelope(amplitude=0.0, rate=0.0, ok=False, error_bar=fallback)
    coef, *_ = np.linalg.lstsq(
        np.column_stack([np.ones(np.count_nonzero(usable)), -tw[usable]]),
        np.log(kw[usable]), rcond=None)
    amp, rate = math.exp(coef[0]), float(coef[1])
    if rate <= 0.0 or not math.isfinite(amp):
        return TailEnvelope(amplitude=0.0, rate=0.0, ok=False, error_bar=fallback)
    return TailEnvelope(amplitude=amp, rate=rate, ok=True,
                        error_bar=amp * math.exp(-rate * horizon) / rate)


def laplace_transform(kernel: KernelSeries, lam, tail: TailEnvelope = None):
    """L[K](lam) for Re lam >= 0: windowed quadrature plus the envelope tail.

    The quadrature integrates the piecewise-linear interpolant of K exactly
    (uniform accuracy in |lam|); beyond the horizon K is continued by
    K(T) e^{-rate (t-T)} from the fitted envelope, integrated in closed form.
    """
    lams = np.asarray(lam, dtype=complex)
    if np.any(lams.real < -1e-12):
        raise ValueError("transform is defined on Re lambda >= 0")
    if tail is None:
        tail = fit_kernel_tail(kernel)
    out = _filon_quad(kernel.times, kernel.values, lams)
    if tail.ok:
        horizon = kernel.times[-1]
        out = out + kernel.values[-1] * np.exp(-lams * horizon) / (lams + tail.rate)
    return out


def laplace_samples(kernel: KernelSeries, tau, gamma0: float = 0.0,
                    tail: TailEnvelope = None) -> LaplaceSamples:
    """Contour samples L[K](gamma0 + i tau) and the derived resolvent symbol."""
    tau = np.asarray(tau, dtype=float)
    if tail is None:
        tail = fit_kernel_tail(kernel)
    vals = laplace_transform(kernel, gamma0 + 1j * tau, tail)
    return LaplaceSamples(k=kernel.k, nu=kernel.nu, gamma0=float(gamma0),
                          tau=tau, values=vals, gtilde=-vals / (1.0 + vals),
                          tail=tail)


def penrose_margin(kernel: KernelSeries, tau_grid,
                   tail: TailEnvelope = None) -> PenroseReport:
    """Minimum of |1 + L[K](i tau)| over the grid, parabolically refined.

    The sign of the margin is what separates a damped density response from
    a near-singular one; tail_fraction records how much of the transform at
    the argmin came from the fitted envelope rather than the data window.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    if len(tau_grid) < 3:
        raise ValueError("need at least three tau samples")
    spacing = np.max(np.diff(tau_grid))
    if spacing > 0.05 + 1e-12:
        raise ValueError(f"tau grid spacing {spacing:.4g} too coarse; need <= 0.05")
    if tail is None:
        tail = fit_kernel_tail(kernel)
    vals = laplace_transform(kernel, 1j * tau_grid, tail)
    y = np.abs(1.0 + vals)
    j = int(np.argmin(y))
    kappa, tau_star = float(y[j]), float(tau_grid[j])
    if 0 < j < len(y) - 1:
        d2 = y[j - 1] - 2.0 * y[j] + y[j + 1]
        if d2 > 0:
            slope = 0.5 * (y[j - 1] - y[j + 1])
            tau_star = float(tau_grid[j] + slope / d2 * (tau_grid[j + 1] - tau_grid[j]))
            kappa = float(y[j] - 0.5 * slope ** 2 / d2)

    # the error bar bounds the off-window contribution for any Re lam >= 0
    frac = tail.error_bar / max(abs(vals[j]), 1e-300)
    return PenroseReport(kappa=kappa, tau_argmin=tau_star, k=kernel.k,
                         nu=kernel.nu, tail_fraction=float(frac))


def resolvent_kernel(kernel: KernelSeries, tau_max: float, dtau: float, *,
                     margin_floor: float = 0.05,
                     tail: TailEnvelope = None) -> TimeSeries:
    """Inverse transform of -L[K]/(1 + L[K]) along the imaginary axis.

    Refuses to divide when the stability margin sits at or below
    margin_floor; near the margin the symbol is resonant and narrow, so the
    result degrades before it breaks.  The symbol's |tau| > tau_max tail is
    continued as c/tau^2 and inverted in closed form.
    """
    if tail is None:
        tail = fit_kernel_tail(kernel)
    guard_grid = np.arange(0.0, tau_max + 0.025, min(dtau, 0.05))
    report = penrose_margin(kernel, guard_grid, tail)
    if report.kappa <= margin_floor:
        raise RuntimeError(
            f"stability margin {report.kappa:.4f} at tau={report.tau_argmin:.3f} "
            f"is at or below the floor {margin_floor:g}; the resolvent symbol "
            f"is too close to singular to invert reliably")

    half = int(round(tau_max / dtau))
    taus = np.linspace(-tau_max, tau_max, 2 * half + 1)
    samples = laplace_samples(kernel, taus, 0.0, tail)
    gt = samples.gtilde
    gt = 0.5 * (gt + np.conj(gt[::-1]))

    edge = abs(gt[-1])
    if edge > 1e-4:
        warnings.warn(
            f"resolvent symbol still {edge:.2e} at tau_max={tau_max:g}; "
            f"widen the frequency window", SpectralWindowWarning, stacklevel=2)

    t = kernel.times
    inv = _filon_quad(taus, gt, -1j * t) / (2.0 * math.pi)
    # the symbol decays like c/tau^2; add the closed-form transform of that
    # continuation so the window edge does not imprint on small t
    c2 = 0.5 * (gt[-1] + gt[0]).real * tau_max ** 2
    x = tau_max * t
    si, _ = sici(x)
    tail_term = (c2 / math.pi) * (np.cos(x) / tau_max + t * (si - 0.5 * math.pi))
    return TimeSeries(times=t, values=inv.real + tail_term)


# --- the three density routes ---


def _causal_conv(a, b, dt):
    """Trapezoid samples of the causal convolution (a * b)(t_m)."""
    n = len(a)
    full = np.convolve(np.asarray(a), np.asarray(b))[:n]
    return dt * (full - 0.5 * a[0] * np.asarray(b) - 0.5 * np.asarray(a) * b[0])


def solve_volterra(kernel: KernelSeries, forcing: TimeSeries) -> DensitySolution:
    """March rho + K * rho = N by the product-trapezoid rule."""
    if len(forcing) != len(kernel.times) or \
            np.max(np.abs(forcing.times - kernel.times)) > 1e-9:
        raise ValueError("kernel and forcing must share the time grid")
    t = kernel.times
    K = kernel.values
    N = np.asarray(forcing.values, dtype=complex)
    dt = kernel.dt
    diag = 1.0 + 0.5 * dt * K[0]
    if abs(diag) < 1e-8:
        raise RuntimeError("implicit Volterra weight vanished; kernel is not causal")
    n = len(t)
    rho = np.zeros(n, dtype=complex)
    rho[0] = N[0]
    for m in range(1, n):
        conv = 0.5 * K[m] * rho[0]
        if m > 1:
            conv += np.dot(K[1:m][::-1], rho[1:m])
        rho[m] = (N[m] - dt * conv) / diag
    return DensitySolution(times=t, rho=rho, provenance="volterra",
                           forcing=N.copy())


def solve_resolvent(kernel: KernelSeries, forcing: TimeSeries, *,
                    tau_max: float = 50.0, dtau: float = 0.01,
                    margin_floor: float = 0.05,
                    resolvent: TimeSeries = None) -> DensitySolution:
    """rho = N + G * N with G from the inverse-transformed symbol."""
    if resolvent is None:
        resolvent = resolvent_kernel(kernel, tau_max, dtau,
                                     margin_floor=margin_floor)
    if len(forcing) != len(resolvent) or \
            np.max(np.abs(forcing.times - resolvent.times)) > 1e-9:
        raise ValueError("resolvent and forcing must share the time grid")
    N = np.asarray(forcing.values, dtype=complex)
    rho = N + _causal_conv(resolvent.values, N, forcing.dt)
    return DensitySolution(times=forcing.times, rho=rho, provenance="resolvent",
                           forcing=N.copy())


def source_from_data(f0_k: Optional[ModeField], forcing, k, nu, cf, *,
                     T: float, dt: float, scheme: str = "strang",
                     max_forcing_runs: int = 64) -> TimeSeries:
    """Assemble N(t) = <S(t) f0> + int_0^t <S(t-s) forcing(s)> ds.

    forcing is a sequence of fields aligned with the time grid (None entries
    mean zero).  Every distinct nonzero forcing sample costs one evolution
    run over the remaining horizon; past max_forcing_runs the samples are
    strided with a warning, trading quadrature order for memory and time.
    """
    kk = tuple(int(c) for c in k)
    cfg = EvolutionConfig(k=kk, nu=nu, T=T, dt=dt, scheme=scheme,
                          snapshot_stride=10 ** 9)
    n = cfg.n_steps
    times = dt * np.arange(n + 1)
    total = np.zeros(n + 1, dtype=complex)

    if f0_k is not None and np.any(f0_k.values):
        traj = evolve_mode(f0_k, cfg, cf if nu > 0 else None)
        total += traj.rho

    if forcing is not None:
        if len(forcing) != n + 1:
            raise ValueError(f"forcing must carry {n + 1} samples, got {len(forcing)}")
        live = [j for j, g in enumerate(forcing)
                if g is not None and np.any(g.values)]
        stride = 1
        if len(live) > max_forcing_runs:
            stride = math.ceil(len(live) / max_forcing_runs)
            warnings.warn(
                f"{len(live)} forcing samples exceed the run budget "
                f"{max_forcing_runs}; striding by {stride}", stacklevel=2)
            live = live[::stride]
        for j in live:
            g = forcing[j]
            if j == n:
                moment = np.array([velocity_average(g)])
            else:
                sub = EvolutionConfig(k=kk, nu=nu, T=(n - j) * dt, dt=dt,
                                      scheme=scheme, snapshot_stride=10 ** 9)
                moment = evolve_mode(g, sub, cf if nu > 0 else None).rho
            weight = np.full(n + 1 - j, float(stride) * dt)
            weight[0] *= 0.5  # s = t endpoint of the i = j integral
            if j == 0:
                weight *= 0.5      # s = 0 endpoint of every integral
                weight[0] = 0.0    # the t = 0 integral is empty
            total[j:] += weight * moment
    return TimeSeries(times=times, values=total)


def linear_vpl_mode(f0_k: ModeField, k, nu, T, dt, cf, *,
                    coupling: bool = True, scheme: str = "strang",
                    solver_rtol: float = 1e-10,
                    solver_maxiter: int = 200,
                    snapshot_stride: int = 0) -> DensitySolution:
    """Direct route: step the mode equation with its self-consistent field.

    Per step the field source -2i (k.v)/|k|^2 rho sqrt(mu) is applied over
    half steps around the transport/collision core.  The source flow is
    solved exactly (its own density moment vanishes by parity), so the
    palindromic composition keeps the splitting second order.
    """
    kk = tuple(int(c) for c in k)
    k2 = float(sum(c * c for c in kk))
    if k2 == 0.0:
        raise ValueError("the coupled mode equation needs a nonzero mode")
    cfg = EvolutionConfig(k=kk, nu=nu, T=T, dt=dt, scheme=scheme,
                          snapshot_stride=10 ** 9, solver_rtol=solver_rtol,
                          solver_maxiter=solver_maxiter)
    if not coupling:
        traj = evolve_mode(f0_k, cfg, cf if nu > 0 else None)
        return DensitySolution(times=traj.times, rho=traj.rho.copy(),
                               provenance="direct-pde", forcing=None)

    grid = f0_k.grid
    collide = None
    if nu > 0.0:
        fields = cf if isinstance(cf, CollisionFields) else None
        if fields is None:
            raise ValueError("coupled evolution with nu > 0 needs collision fields")
        if fields.grid.n != grid.n or fields.grid.half_width != grid.half_width:
            raise ValueError("collision fields built on a different grid")

        def collide(f: ModeField) -> ModeField:
            return apply_L(f, fields)

    root = sqrt_maxwellian(grid)
    v = grid.coords()
    pump = sum(kk[j] * v[j] for j in range(3)) * root  # (k.v) sqrt(mu)
    weight = root * grid.cell_volume                   # velocity_average factor
    coef = -2j / k2
    nu_dt = nu * dt

    n = cfg.n_steps
    times = dt * np.arange(n + 1)
    rho = np.empty(n + 1, dtype=np.complex128)

    tau0 = np.asarray(f0_k.twist, dtype=float)
    kkf = np.asarray(kk, dtype=float)
    phase = twist_phase(grid, tau0) if np.any(tau0) else np.ones_like(root, dtype=complex)
    step_phase = twist_phase(grid, kkf * dt)

    snap_t, snaps = [], []

    u = f0_k.values.copy()
    for m in range(n + 1):
        rho[m] = np.sum(np.conj(phase) * u * weight)
        if snapshot_stride > 0 and (m % snapshot_stride == 0 or m == n):
            snap_t.append(times[m])
            snaps.append(mode_field(grid, u.copy(), k=kk,
                                    twist=tuple(tau0 + kkf * times[m])))
        if m == n:
            break
        # exact half-flow of the source (its moment is parity-zero)
        u = u + (0.5 * dt * coef * rho[m]) * (phase * pump)
        mid = mode_field(grid, u, k=kk, twist=tuple(tau0 + kkf * (times[m] + 0.5 * dt)))
        if nu_dt > 0.0:
            mid, _ = _solve_collision_step(mid, nu_dt, collide, cfg)
        u = mid.values
        phase = phase * step_phase
        rho_half = np.sum(np.conj(phase) * u * weight)
        u = u + (0.5 * dt * coef * rho_half) * (phase * pump)

    return DensitySolution(times=times, rho=rho, provenance="direct-pde",
                           forcing=None,
                           snapshot_times=np.asarray(snap_t) if snap_t else None,
                           snapshots=tuple(snaps))
