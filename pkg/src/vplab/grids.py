"""Velocity-space grids, weighted norms, and the macroscopic projection.

Everything downstream works on a truncated uniform tensor grid for
v in [-L_v, L_v]^3 with cell-centered nodes and uniform quadrature
weight h^3.  Fields may carry a co-moving phase twist: the physical
field is exp(-i phi . v) times the stored values, which keeps
free-streaming data smooth on the grid at late times.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

# e^{q|v|^2} amplifies boundary truncation noise; refuse past this exponent.
EXPONENT_BUDGET = 200.0

# Boundary values above this fraction of the field max mean the domain is
# too small for the data; derivative-taking ops warn.
TAIL_TOLERANCE = 1e-6


class TailWarning(UserWarning):
    """Field carries non-negligible mass at the velocity-domain boundary."""


# --- grid and field containers ---


@dataclass(frozen=True, eq=False)
class VelocityGrid:
    """Uniform cell-centered grid on [-L_v, L_v]^3.

    Attributes
    ----------
    half_width : float
        Domain half-width L_v.
    n : int
        Points per axis (even).
    axis : ndarray
        The n cell centers, -L_v + (i + 1/2) h.
    """

    half_width: float
    n: int
    axis: np.ndarray

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable node coordinates (v1, v2, v3)."""
        a = self.axis
        return a[:, None, None], a[None, :, None], a[None, None, :]

    def radius2(self) -> np.ndarray:
        v1, v2, v3 = self.coords()
        return v1**2 + v2**2 + v3**2


@dataclass(frozen=True, eq=False)
class ModeField:
    """Complex scalar field h(v) at one spatial Fourier mode k.

    ``values`` holds the co-moving representation; the physical field is
    exp(-i twist . v) * values.  Untwisted fields have twist = (0, 0, 0).
    """

    grid: VelocityGrid
    values: np.ndarray
    k: tuple[int, int, int] = (0, 0, 0)
    twist: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        n = self.grid.n
        if self.values.shape != (n, n, n):
            raise ValueError(f"field shape {self.values.shape} does not match grid n={n}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def physical(self) -> np.ndarray:
        """Node values with the twist phase applied."""
        if not any(self.twist):
            return self.values
        return twist_phase(self.grid, self.twist).conj() * self.values

    def with_values(self, values: np.ndarray) -> "ModeField":
        return replace(self, values=values)


def build_grid(half_width: float, n: int) -> VelocityGrid:
    """Construct the velocity grid.

    Parameters
    ----------
    half_width : float
        Domain half-width, 3 <= half_width <= 10.
    n : int
        Even number of points per axis, 8 <= n <= 128.
    """
    if n % 2 != 0 or not 8 <= n <= 128:
        raise ValueError(f"n must be even and in [8, 128], got {n}")
    if not 3.0 <= half_width <= 10.0:
        raise ValueError(f"half_width must be in [3, 10], got {half_width}")
    h = 2.0 * half_width / n
    axis = -half_width + (np.arange(n) + 0.5) * h
    return VelocityGrid(half_width=float(half_width), n=int(n), axis=axis)


def mode_field(grid: VelocityGrid, values: np.ndarray, k=(0, 0, 0), twist=(0.0, 0.0, 0.0)) -> ModeField:
    """Wrap node values as a ModeField, casting to complex128."""
    vals = np.ascontiguousarray(values, dtype=np.complex128)
    return ModeField(grid=grid, values=vals, k=tuple(int(c) for c in k),
                     twist=tuple(float(c) for c in twist))


def maxwellian(grid: VelocityGrid) -> np.ndarray:
    """mu(v) = exp(-|v|^2) on the grid nodes."""
    return np.exp(-grid.radius2())


def sqrt_maxwellian(grid: VelocityGrid) -> np.ndarray:
    return np.exp(-0.5 * grid.radius2())


def twist_phase(grid: VelocityGrid, twist) -> np.ndarray:
    """exp(+i twist . v) as a separable product (conjugate gives the physical phase)."""
    p1, p2, p3 = (np.exp(1j * t * grid.axis) for t in twist)
    return p1[:, None, None] * p2[None, :, None] * p3[None, None, :]


def echo_time(grid: VelocityGrid, k) -> float:
    """First lattice transport echo at mode k.

    The twist phases exp(-i k_j v_j t) are periodic on the velocity lattice
    with period 2 pi / (|k_j| h); past the shortest of those, free-streaming
    quantities recohere as an alias artifact.  Infinite at k = 0.
    """
    kmax = max(abs(int(c)) for c in k)
    if kmax == 0:
        return float("inf")
    return 2.0 * np.pi / (kmax * grid.spacing)


# --- quadrature and inner products ---


def quadrature(grid: VelocityGrid, values: np.ndarray) -> complex:
    """Integral of node values with uniform weight h^3."""
    return values.sum() * grid.cell_volume


def inner(a: ModeField, b: ModeField) -> complex:
    """L^2 inner product <a, b> of the physical fields."""
    if a.twist == b.twist:
        integrand = a.values * b.values.conj()
    else:
        integrand = a.physical() * b.physical().conj()
    return quadrature(a.grid, integrand)


def velocity_average(h: ModeField) -> complex:
    """The moment integral of h against sqrt(mu)."""
    g = h.physical() if any(h.twist) else h.values
    return quadrature(h.grid, g * sqrt_maxwellian(h.grid))


# --- derivatives ---


def diff_matrix(n: int, h: float) -> np.ndarray:
    """4th-order first-derivative matrix, one-sided rows at the faces."""
    d = np.zeros((n, n))
    c = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * h)
    for i in range(2, n - 2):
        d[i, i - 2 : i + 3] = c
    edge0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12.0 * h)
    edge1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / (12.0 * h)
    d[0, :5] = edge0
    d[1, :5] = edge1
    d[-1, -5:] = -edge0[::-1]
    d[-2, -5:] = -edge1[::-1]
    return d


def apply_matrix(mat: np.ndarray, values: np.ndarray, axis: int) -> np.ndarray:
    """Contract a (n, n) matrix against one axis of a field array."""
    return np.moveaxis(np.tensordot(mat, values, axes=(1, axis)), 0, axis)


def tail_fraction(values: np.ndarray) -> float:
    """Max |value| on the six boundary faces relative to the global max."""
    peak = np.abs(values).max()
    if peak == 0.0:
        return 0.0
    faces = max(
        np.abs(values[0]).max(), np.abs(values[-1]).max(),
        np.abs(values[:, 0]).max(), np.abs(values[:, -1]).max(),
        np.abs(values[:, :, 0]).max(), np.abs(values[:, :, -1]).max(),
    )
    return float(faces / peak)


def _check_tail(values: np.ndarray) -> None:
    frac = tail_fraction(values)
    if frac > TAIL_TOLERANCE:
        warnings.warn(
            f"boundary values at {frac:.2e} of the field max; derivatives near the "
            "faces are unreliable (enlarge half_width)", TailWarning, stacklevel=3)


def grad(h: ModeField) -> np.ndarray:
    """Physical velocity gradient, returned in the co-moving representation.

    d/dv_a of exp(-i phi . v) g equals exp(-i phi . v) (D_a - i phi_a) g,
    so the result shares the twist of the input.

    Returns
    -------
    ndarray of shape (3, n, n, n), complex.
    """
    _check_tail(h.values)
    d = diff_matrix(h.grid.n, h.grid.spacing)
    out = np.stack([apply_matrix(d, h.values, a) for a in range(3)])
    if any(h.twist):
        for a in range(3):
            out[a] -= 1j * h.twist[a] * h.values
    return out


# --- weights and norms ---


@dataclass(frozen=True)
class WeightSpec:
    """Velocity weight <v>^ell * exp(q |v|^theta / 2).

    theta is 0 or 2; q must vanish when theta = 0 and lie in (0, 1)
    when theta = 2.
    """

    ell: float
    theta: int = 0
    q: float = 0.0

    def __post_init__(self):
        if self.theta not in (0, 2):
            raise ValueError(f"theta must be 0 or 2, got {self.theta}")
        if self.theta == 0 and self.q != 0.0:
            raise ValueError("q must be 0 when theta is 0")
        if self.theta == 2 and not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1) when theta is 2, got {self.q}")

    def primed(self) -> "WeightSpec":
        """Variant with half the Gaussian rate (q = 0 stays 0)."""
        if self.theta == 0:
            return self
        return WeightSpec(self.ell, self.theta, self.q / 2.0)


def weight_values(grid: VelocityGrid, spec: WeightSpec) -> np.ndarray:
    """The weight evaluated at the nodes, with the overflow guard."""
    r2 = grid.radius2()
    w = (1.0 + r2) ** (spec.ell / 2.0)
    if spec.theta == 2:
        budget = spec.q * 3.0 * grid.half_width**2
        if budget > EXPONENT_BUDGET:
            raise ValueError(
                f"q * 3 L_v^2 = {budget:.1f} exceeds the exponent budget "
                f"{EXPONENT_BUDGET}; exponential weight would amplify tail noise")
        w = w * np.exp(0.5 * spec.q * r2)
    return w


def weighted_norm(h: ModeField, spec: WeightSpec) -> float:
    """L^2 norm of the weighted field (twist phases drop out)."""
    w = weight_values(h.grid, spec)
    val = quadrature(h.grid, (w * np.abs(h.values)) ** 2)
    return float(np.sqrt(val.real))


def dissipation_norm(h: ModeField, spec: WeightSpec, cf) -> float:
    """Anisotropic dissipation seminorm induced by the diffusion matrix.

    Squared value: integral of
        <v>^{2 ell} e^{q |v|^theta} [ d_i h  sigma_ij  d_j conj(h)
                                      + sigma_ij (v_i/2)(v_j/2) |h|^2 ].
    ``cf`` must be CollisionFields built on the same grid.
    """
    if cf.grid is not h.grid and (cf.grid.n != h.grid.n or cf.grid.half_width != h.grid.half_width):
        raise ValueError("collision fields built on a different grid")
    g = grad(h)
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite derivative values")
    w2 = weight_values(h.grid, spec) ** 2
    sig = cf.sigma
    flux = np.einsum("a...,ab...,b...->...", g, sig, g.conj()).real
    v = h.grid.coords()
    vsv = sum(sig[a, b] * v[a] * v[b] for a in range(3) for b in range(3))
    drift = 0.25 * vsv * (h.values.real**2 + h.values.imag**2)
    val = quadrature(h.grid, w2 * (flux + drift)).real
    return float(np.sqrt(max(val, 0.0)))


# --- macroscopic projection ---


def _null_basis(grid: VelocityGrid) -> list[np.ndarray]:
    smu = sqrt_maxwellian(grid)
    v1, v2, v3 = grid.coords()
    return [smu,
            v1 * smu, v2 * smu, v3 * smu,
            grid.radius2() * smu]


def _orthonormal_null_basis(grid: VelocityGrid) -> np.ndarray:
    """Modified Gram-Schmidt over the five collision invariants."""
    basis = _null_basis(grid)
    h3 = grid.cell_volume
    out = []
    for b in basis:
        b = b.copy()
        for e in out:
            b -= (b * e).sum() * h3 * e
        nrm = np.sqrt((b * b).sum() * h3)
        if nrm < 1e-8:
            raise ValueError("grid too coarse: collision-invariant basis is degenerate")
        out.append(b / nrm)
    return np.stack(out)


def project_null(h: ModeField) -> ModeField:
    """Orthogonal projection onto span{sqrt(mu), v_i sqrt(mu), |v|^2 sqrt(mu)}.

    Acts on the physical field; the result keeps the input twist.
    """
    basis = _orthonormal_null_basis(h.grid)
    phys = h.physical()
    h3 = h.grid.cell_volume
    coeffs = np.tensordot(basis, phys.conj(), axes=3).conj() * h3
    proj = np.tensordot(coeffs, basis, axes=(0, 0))
    if any(h.twist):
        proj = proj * twist_phase(h.grid, h.twist)
    return h.with_values(proj)
