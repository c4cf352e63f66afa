"""Wavefunctions on a uniform 1-D grid and the elementary propagators.

This module provides the discretized Hilbert space shared by the jump and
diffusion collapse models: Gaussian packets, the split-step spectral
Schrodinger propagator, the raw Gaussian hit multiplication, and the exact
Gaussian collapse flow exp(sqrt(lambda) x dxi - lambda x^2 dt).

Conventions: hbar = 1, mass = 1, H = -1/2 d^2/dx^2 + V(x) with V bounded.
Boundary conditions are periodic (spectral propagator); quadrature is the
plain rectangle rule sum |psi_j|^2 dx, which is consistent with the DFT
Parseval identity, so the split step preserves the discrete norm exactly.
All operations are pure: state in, new state out.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft

from .errors import (
    DegenerateStateError,
    GridMismatchError,
    GridTooSmallError,
    InvalidParameterError,
    StepTooLargeError,
)

RAW = "raw"
NORMALIZED = "normalized"

# Largest exponent handed to np.exp inside collapse_flow before raising.
_EXP_OVERFLOW_LIMIT = 700.0

# Default cap on the duration of a single split step when V != 0.
DEFAULT_UNITARY_SUBSTEP = 1.0 / 128.0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid x_j = x_min + j dx, j = 0 .. n_points-1.

    n_points must be a power of two (>= 8) for the spectral propagator.
    """

    n_points: int
    x_min: float
    x_max: float

    def __post_init__(self):
        n = self.n_points
        if n < 8 or (n & (n - 1)) != 0:
            raise InvalidParameterError("n_points must be a power of two >= 8")
        if not (self.x_max > self.x_min):
            raise InvalidParameterError("x_max must exceed x_min")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.n_points

    @cached_property
    def x(self):
        x = self.x_min + self.dx * np.arange(self.n_points)
        x.setflags(write=False)
        return x

    @cached_property
    def k(self):
        """Angular wavenumbers matching np.fft ordering."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)
        k.setflags(write=False)
        return k


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Complex amplitudes on a grid, units length^(-1/2).

    ``label`` records whether the state is known to be normalized; raw
    states carry physical weight information in their squared norm.
    """

    grid: Grid
    amplitudes: np.ndarray
    label: str = RAW

    def __post_init__(self):
        if self.amplitudes.shape != (self.grid.n_points,):
            raise InvalidParameterError("amplitude array does not match grid")


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """H = -1/2 Laplacian + V with V given at grid points; hbar = mass = 1.

    ``kinetic=False`` drops the Laplacian, so V = 0 and kinetic off gives
    the exact H = 0 evolution (identity).
    """

    grid: Grid
    potential: np.ndarray
    kinetic: bool = True

    def __post_init__(self):
        if self.potential.shape != (self.grid.n_points,):
            raise InvalidParameterError("potential array does not match grid")
        if not np.all(np.isfinite(self.potential)):
            raise InvalidParameterError("potential must be bounded (finite values)")

    @cached_property
    def potential_is_zero(self):
        return bool(np.all(self.potential == 0.0))

    @property
    def is_zero(self):
        return self.potential_is_zero and not self.kinetic

    @classmethod
    def free(cls, grid):
        """Kinetic term only (V = 0)."""
        return cls(grid, np.zeros(grid.n_points))

    @classmethod
    def zero(cls, grid):
        """H = 0: no kinetic term, no potential."""
        return cls(grid, np.zeros(grid.n_points), kinetic=False)

    @classmethod
    def with_potential(cls, grid, v, kinetic=True):
        """Potential from a callable or array of values at grid points."""
        values = v(grid.x) if callable(v) else np.asarray(v, dtype=float)
        return cls(grid, np.array(values, dtype=float), kinetic=kinetic)


def cosine_potential(grid, amplitude=0.5, wavenumber=1.0):
    """Bounded smooth test potential V(x) = amplitude * cos(wavenumber x)."""
    return amplitude * np.cos(wavenumber * grid.x)


@dataclass(frozen=True)
class CollapseSpec:
    """Collapse channel A = sqrt(lam) x (position coupling of strength lam)."""

    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise InvalidParameterError("lam must be positive")


def norm2(psi):
    """Squared L2 norm sum |psi_j|^2 dx (rectangle rule)."""
    a = psi.amplitudes
    return float(np.real(np.vdot(a, a))) * psi.grid.dx


def normalize(psi):
    """Return psi / ||psi|| with label 'normalized'."""
    n2 = norm2(psi)
    if not (n2 > 1e-300):
        raise DegenerateStateError("cannot normalize a numerically vanishing state")
    return WaveFunction(psi.grid, psi.amplitudes / math.sqrt(n2), NORMALIZED)


def inner(psi, chi):
    """<psi, chi> with the rectangle-rule measure; conjugate-linear in psi."""
    if psi.grid != chi.grid:
        raise GridMismatchError("states live on different grids")
    return complex(np.vdot(psi.amplitudes, chi.amplitudes)) * psi.grid.dx


def make_gaussian_packet(grid, center, sigma, momentum=0.0):
    """Normalized Gaussian packet |phi|^2 ~ exp(-(x-center)^2 / (2 sigma^2)).

    Parameters
    ----------
    grid : Grid
    center, sigma : float
        Center and position spread (sigma > 0).
    momentum : float
        Plane-wave boost exp(i momentum x).

    The caller is responsible for sizing the window; a Gaussian mass of
    more than 1e-8 outside [x_min, x_max] raises GridTooSmallError.
    """
    if sigma <= 0:
        raise InvalidParameterError("sigma must be positive")
    # analytic mass outside the window, two half-tails
    z_hi = (grid.x_max - center) / (math.sqrt(2.0) * sigma)
    z_lo = (center - grid.x_min) / (math.sqrt(2.0) * sigma)
    outside = 0.5 * (math.erfc(z_hi) + math.erfc(z_lo))
    if outside > 1e-8:
        raise GridTooSmallError(
            f"packet mass outside window is {outside:.3e} (> 1e-8)")
    x = grid.x
    envelope = (2.0 * np.pi * sigma**2) ** (-0.25) * np.exp(
        -((x - center) ** 2) / (4.0 * sigma**2))
    amps = envelope * np.exp(1j * momentum * x)
    return normalize(WaveFunction(grid, amps.astype(np.complex128)))


def _split_phases(h, dt):
    """Potential-half and kinetic phase factors for one symmetric split step."""
    exp_v_half = None
    if not h.potential_is_zero:
        exp_v_half = np.exp(-0.5j * dt * h.potential)
    exp_t = np.exp(-0.5j * dt * h.grid.k**2) if h.kinetic else None
    return exp_v_half, exp_t


def _apply_split_step(amps, exp_v_half, exp_t, workers=None):
    """One symmetric split step on (..., n) amplitudes. Returns a new array."""
    out = amps
    if exp_v_half is not None:
        out = out * exp_v_half
    if exp_t is not None:
        out = scipy.fft.fft(out, axis=-1, overwrite_x=out is not amps, workers=workers)
        out *= exp_t
        out = scipy.fft.ifft(out, axis=-1, overwrite_x=True, workers=workers)
    if exp_v_half is not None:
        out *= exp_v_half
    if out is amps:
        out = amps.copy()
    return out


def schrodinger_step(psi, h, dt):
    """One symmetric split step exp(-i dt V/2) exp(-i dt T) exp(-i dt V/2).

    Unitary up to roundoff: the potential phases are diagonal and the
    kinetic phase acts in the Fourier domain, where the DFT preserves the
    rectangle-rule norm.  dt = 0 returns the input unchanged; the local
    error of a single step is O(dt^3) for bounded V.
    """
    if dt < 0:
        raise InvalidParameterError("dt must be nonnegative")
    if psi.grid != h.grid:
        raise GridMismatchError("state and Hamiltonian grids differ")
    if dt == 0 or h.is_zero:
        return psi
    exp_v_half, exp_t = _split_phases(h, dt)
    if exp_t is None:
        # potential-only generator: single full phase is exact
        out = psi.amplitudes * np.exp(-1j * dt * h.potential)
    else:
        out = _apply_split_step(psi.amplitudes, exp_v_half, exp_t)
    return WaveFunction(psi.grid, out, psi.label)


def evolve_unitary(psi, h, duration, max_step=None):
    """exp(-i duration H) psi, composing split steps no longer than max_step.

    For V = 0 the kinetic phase is exact at any duration, so a single step
    is used; likewise a pure potential phase.  Only the mixed case is
    substepped (default cap DEFAULT_UNITARY_SUBSTEP).
    """
    if duration < 0:
        raise InvalidParameterError("duration must be nonnegative")
    if duration == 0 or h.is_zero:
        return psi
    if h.potential_is_zero or not h.kinetic:
        return schrodinger_step(psi, h, duration)
    cap = DEFAULT_UNITARY_SUBSTEP if max_step is None else float(max_step)
    n = max(1, math.ceil(duration / cap - 1e-12))
    dt = duration / n
    exp_v_half, exp_t = _split_phases(h, dt)
    out = psi.amplitudes
    for _ in range(n):
        out = _apply_split_step(out, exp_v_half, exp_t)
    return WaveFunction(psi.grid, out, psi.label)


def gaussian_hit(psi, center, alpha):
    """Raw GRW hit: multiply by (alpha/pi)^(1/4) exp(-(alpha/2)(x-center)^2).

    The output is unnormalized (label 'raw'); its squared norm equals the
    flash density at ``center`` when psi is normalized.
    """
    if alpha <= 0:
        raise InvalidParameterError("alpha must be positive")
    x = psi.grid.x
    factor = (alpha / np.pi) ** 0.25 * np.exp(-0.5 * alpha * (x - center) ** 2)
    return WaveFunction(psi.grid, psi.amplitudes * factor, RAW)


def collapse_flow(psi, c, dxi, dt):
    """Exact Gaussian collapse flow exp(sqrt(lam) x dxi - lam x^2 dt).

    This is the closed-form solution of the stochastic part of the
    diffusion collapse equation over an interval with Wiener increment
    ``dxi`` and duration ``dt``; there is no time-stepping error, and the
    flow composes additively in (dxi, dt).

    Raises StepTooLargeError when lam * max(x^2) * dt exceeds the
    floating-point overflow budget, or when the realized exponent would
    overflow for the given dxi.
    """
    if dt < 0:
        raise InvalidParameterError("dt must be nonnegative")
    x = psi.grid.x
    x2max = max(psi.grid.x_min**2, psi.grid.x_max**2)
    if c.lam * x2max * dt > _EXP_OVERFLOW_LIMIT:
        raise StepTooLargeError(
            "lam * x_max^2 * dt exceeds the overflow budget; shrink the step "
            "or the window")
    exponent = math.sqrt(c.lam) * dxi * x - c.lam * dt * x**2
    peak = float(np.max(exponent))
    if peak > _EXP_OVERFLOW_LIMIT:
        raise StepTooLargeError("collapse-flow exponent would overflow")
    return WaveFunction(psi.grid, psi.amplitudes * np.exp(exponent), RAW)


def position_mean(psi):
    """<x> of the normalized density of psi."""
    d = np.abs(psi.amplitudes) ** 2
    total = d.sum()
    if not (total > 0):
        raise DegenerateStateError("empty state has no mean position")
    return float((psi.grid.x * d).sum() / total)


def position_variance(psi):
    d = np.abs(psi.amplitudes) ** 2
    total = d.sum()
    if not (total > 0):
        raise DegenerateStateError("empty state has no position variance")
    m = float((psi.grid.x * d).sum() / total)
    return float(((psi.grid.x - m) ** 2 * d).sum() / total)


def boundary_mass(psi):
    """Fraction of |psi|^2 in the outer 10% of the window (5% per side).

    Used as a run diagnostic: periodic boundaries are only valid while
    this stays negligible.
    """
    length = psi.grid.x_max - psi.grid.x_min
    lo = psi.grid.x_min + 0.05 * length
    hi = psi.grid.x_max - 0.05 * length
    d = np.abs(psi.amplitudes) ** 2
    total = d.sum()
    if not (total > 0):
        return 0.0
    outer = d[(psi.grid.x < lo) | (psi.grid.x > hi)].sum()
    return float(outer / total)


def spectral_derivative(psi, order=1):
    """order-th spatial derivative via the Fourier multiplier (i k)^order."""
    mult = (1j * psi.grid.k) ** order
    out = scipy.fft.ifft(mult * scipy.fft.fft(psi.amplitudes))
    return WaveFunction(psi.grid, out, RAW)


def nyquist_mass_fraction(psi):
    """Spectral mass fraction in the top decile of |k| (aliasing diagnostic)."""
    spec = np.abs(scipy.fft.fft(psi.amplitudes)) ** 2
    total = spec.sum()
    if not (total > 0):
        return 0.0
    kabs = np.abs(psi.grid.k)
    cut = 0.9 * kabs.max()
    return float(spec[kabs >= cut].sum() / total)
