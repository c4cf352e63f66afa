"""The linear diffusion collapse equation and the jump-coupled hybrid process.

Under the reference measure the state solves the linear SDE

    d psi = -i H psi dt + sqrt(lam) x psi dxi - (lam/2) x^2 psi dt,

integrated by deterministic-step splitting: per mesh cell, one unitary
split step followed by the *exact* Gaussian collapse flow built from the
cell's Wiener increment.  The squared norm of the raw state is a
martingale (E ||psi_t||^2 = 1 at every resolution, since the exact flow
has unit mean-square gain pointwise), and reweighting an ensemble by the
raw squared norms produces the physical collapse statistics.

The hybrid process alternates unitary steps of random exponential duration
X_{k+1}/mu with collapse flows over the deterministic mesh cells
[k/mu, (k+1)/mu].  The flow increments always span the deterministic mesh
regardless of the realized waiting times; the mismatch between the random
jump times and the mesh is intrinsic to the construction and is kept
literal here.  As mu grows with mu * alpha / 2 = lam fixed, the hybrid
reproduces the jump process in law and converges to the diffusion process.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .errors import InvalidParameterError, StepTooLargeError
from .grid import (
    NORMALIZED,
    CollapseSpec,
    WaveFunction,
    _apply_split_step,
    _split_phases,
    boundary_mass,
    collapse_flow,
    evolve_unitary,
    norm2,
    normalize,
)
from .grw import BOUNDARY_MASS_LIMIT, _validate_sample_times
from .records import FlashEvent, TrajectoryRecord, WeightedEnsemble, reweight_ensemble

__all__ = [
    "DiosiParams",
    "HybridParams",
    "diosi_trajectory",
    "diosi_ensemble",
    "hybrid_trajectory",
    "hybrid_ensemble",
    "reweight_ensemble",
    "WeightedEnsemble",
]

# Keep one-shot Wiener increment matrices below ~240 MB.
_MAX_INCREMENT_ELEMENTS = 30_000_000


@dataclass(frozen=True)
class DiosiParams:
    """Diffusion-process parameters and integrator resolution.

    ``n_substeps_per_unit_time`` fixes the deterministic Trotter mesh;
    sample times are snapped to the nearest mesh point (within half a
    step).  The collapse factor per cell is exact, so the integrator's
    error is the second-order splitting error in the unitary part only.
    """

    lam: float
    n_substeps_per_unit_time: int
    t_max: float
    sample_times: tuple = ()

    def __post_init__(self):
        if self.lam <= 0 or self.t_max <= 0:
            raise InvalidParameterError("lam and t_max must be positive")
        if self.n_substeps_per_unit_time < 1:
            raise InvalidParameterError("n_substeps_per_unit_time must be >= 1")
        object.__setattr__(
            self, "sample_times", _validate_sample_times(self.sample_times, self.t_max))


@dataclass(frozen=True)
class HybridParams:
    """Hybrid-process parameters; alpha = 2 lam / mu is derived, never stored.

    ``wiener_resolution`` pins the fine mesh the Wiener path is drawn on
    (defaults to mu, one cell per mesh interval).  Choosing a common fine
    resolution across runs with different mu gives common random numbers:
    the coarse increments are sums of the same underlying cells.
    ``deterministic_times`` forces X_k = 1 (jumps exactly on the mesh).
    """

    lam: float
    mu: float
    t_max: float
    sample_times: tuple = ()
    deterministic_times: bool = False
    wiener_resolution: float = None
    unitary_substep: float = None

    def __post_init__(self):
        if self.lam <= 0 or self.mu <= 0 or self.t_max <= 0:
            raise InvalidParameterError("lam, mu and t_max must be positive")
        object.__setattr__(
            self, "sample_times", _validate_sample_times(self.sample_times, self.t_max))

    @property
    def alpha(self):
        return 2.0 * self.lam / self.mu


def _snap_steps(sample_times, resolution):
    steps = [int(round(t * resolution)) for t in sample_times]
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise InvalidParameterError(
            "sample_times collide after snapping to the integrator mesh; "
            "raise n_substeps_per_unit_time")
    return steps


def _check_flow_step(grid, lam, dt):
    x2max = max(grid.x_min**2, grid.x_max**2)
    if lam * x2max * dt > 700.0:
        raise StepTooLargeError(
            "lam * x_max^2 * dt exceeds the overflow budget; raise the "
            "resolution or shrink the window")


def _diosi_arrays(phi0, h, p, seed, indices, store_states=True, fft_workers=None):
    """Batched splitting integrator over the trajectories in ``indices``.

    Returns (actual_times, weights[N, T], states[N, T, n] or None) where
    the weights are raw squared norms and the states are normalized.  Row
    i uses exactly the Wiener cells of WienerPath(seed, indices[i], R), so
    single-trajectory and batched runs coincide bit for bit.
    """
    grid = phi0.grid
    res = p.n_substeps_per_unit_time
    dt = 1.0 / res
    _check_flow_step(grid, p.lam, dt)
    steps = _snap_steps(p.sample_times, res)
    n_snap = len(steps)
    total = steps[-1] if steps else 0
    n = grid.n_points
    big = len(indices)

    amps = np.tile(phi0.amplitudes, (big, 1))
    exp_v_half, exp_t = _split_phases(h, dt)
    x = grid.x
    sqrt_lam_x = math.sqrt(p.lam) * x
    damp = p.lam * dt * x * x
    weights = np.empty((big, n_snap))
    states = np.empty((big, n_snap, n), dtype=np.complex128) if store_states else None

    def record(si):
        w = (amps.real**2 + amps.imag**2).sum(axis=1) * grid.dx
        weights[:, si] = w
        if store_states:
            states[:, si] = amps / np.sqrt(w)[:, None]

    si = 0
    while si < n_snap and steps[si] == 0:
        record(si)
        si += 1

    exp_buf = np.empty((big, n))
    chunk = total if big * total <= _MAX_INCREMENT_ELEMENTS else max(
        1, _MAX_INCREMENT_ELEMENTS // max(big, 1))
    for s0 in range(0, total, chunk):
        s1 = min(total, s0 + chunk)
        dxi = np.empty((big, s1 - s0))
        for row, idx in enumerate(indices):
            path = rngmod.WienerPath(seed, idx, cells_per_unit=res)
            dxi[row] = path.cell_increments(s0, s1)
        for s in range(s0, s1):
            if not h.is_zero:
                amps = _apply_split_step(amps, exp_v_half, exp_t, workers=fft_workers)
            np.multiply(dxi[:, s - s0, None], sqrt_lam_x[None, :], out=exp_buf)
            exp_buf -= damp
            np.exp(exp_buf, out=exp_buf)
            amps *= exp_buf
            while si < n_snap and steps[si] == s + 1:
                record(si)
                si += 1
    actual = np.array(steps, dtype=float) / res
    return actual, weights, states


def diosi_trajectory(phi0, h, p, seed, index=0, store_states=True):
    """One diffusion trajectory; deterministic given (seed, index).

    The record stores, at each sample time, the raw squared norm (the
    importance weight under the reference measure) and the normalized
    state.
    """
    if phi0.label != NORMALIZED:
        raise InvalidParameterError("phi0 must be normalized")
    recs = diosi_ensemble(phi0, h, p, seed, 1, store_states=store_states,
                          first_index=index)
    return recs[0]


def diosi_ensemble(phi0, h, p, seed, n_trajectories, store_states=True,
                   first_index=0, fft_workers=None):
    """Batch-integrated ensemble of diffusion trajectories."""
    if phi0.label != NORMALIZED:
        raise InvalidParameterError("phi0 must be normalized")
    indices = range(first_index, first_index + n_trajectories)
    _, weights, states = _diosi_arrays(
        phi0, h, p, seed, list(indices), store_states=store_states,
        fft_workers=fft_workers)
    times = p.sample_times
    out = []
    for row, idx in enumerate(indices):
        if store_states:
            snaps = tuple(
                WaveFunction(phi0.grid, states[row, j].copy(), NORMALIZED)
                for j in range(len(times)))
            flagged = any(boundary_mass(s) > BOUNDARY_MASS_LIMIT for s in snaps)
        else:
            snaps = ()
            flagged = False
        out.append(TrajectoryRecord(
            seed=int(seed), index=int(idx), times=times, states=snaps,
            weights=weights[row].copy(), flashes=(), boundary_flag=flagged))
    return out


def hybrid_trajectory(phi0, h, p, seed, index=0, store_states=True,
                      record_flow_cells=False):
    """One hybrid trajectory: random-duration unitaries, mesh-cell flows.

    Per factor k the state evolves unitarily for X_{k+1}/mu, then the exact
    collapse flow over the deterministic cell [k/mu, (k+1)/mu] is applied;
    a snapshot at time t finishes with the residual unitary of duration
    t - T_kappa(t) applied to a copy.  The raw squared norm right after
    factor k is recorded on the flash event (center Z_k, the rescaled
    increment), and the weight at a sample time is the raw squared norm
    there.  Waiting times and Wiener increments come from independent
    streams.
    """
    if phi0.label != NORMALIZED:
        raise InvalidParameterError("phi0 must be normalized")
    base = p.wiener_resolution if p.wiener_resolution is not None else p.mu
    path = rngmod.WienerPath(seed, index, cells_per_unit=base)
    path.coarse_ratio(p.mu)  # validate divisibility up front
    waits = rngmod.ExponentialSequence(seed, index)
    c = CollapseSpec(p.lam)
    dt_cell = 1.0 / p.mu
    _check_flow_step(phi0.grid, p.lam, dt_cell)
    z_scale = p.mu / (2.0 * math.sqrt(p.lam))

    state = phi0  # evolves raw; never renormalized mid-run
    k = 0
    t_k = 0.0  # T_k, time of the k-th jump
    flashes = []
    cells = []
    snaps = []
    weights = []
    flagged = False
    for t in p.sample_times:
        tol = 1e-12 * max(1.0, abs(t))
        while True:
            x_next = 1.0 if p.deterministic_times else waits[k]
            t_next = (k + 1) * dt_cell if p.deterministic_times else t_k + x_next * dt_cell
            if t_next > t + tol:
                break
            state = evolve_unitary(state, h, x_next * dt_cell, p.unitary_substep)
            dxi = float(path.coarse_increments(p.mu, k, k + 1)[0])
            state = collapse_flow(state, c, dxi, dt_cell)
            flashes.append(FlashEvent(t_next, z_scale * dxi, norm2(state)))
            if record_flow_cells:
                cells.append(k)
            k += 1
            t_k = t_next
        w = norm2(state)
        weights.append(w)
        if store_states:
            snap = normalize(evolve_unitary(state, h, max(0.0, t - t_k),
                                            p.unitary_substep))
            flagged = flagged or boundary_mass(snap) > BOUNDARY_MASS_LIMIT
            snaps.append(snap)

    return TrajectoryRecord(
        seed=int(seed),
        index=int(index),
        times=p.sample_times,
        states=tuple(snaps),
        weights=np.array(weights),
        flashes=tuple(flashes),
        boundary_flag=flagged,
        flow_cells=tuple(cells),
    )


def hybrid_ensemble(phi0, h, p, seed, n_trajectories, store_states=True,
                    workers=None):
    """Independent hybrid trajectories with indices 0 .. n-1."""
    from .parallel import run_indexed

    if store_states:
        return run_indexed(hybrid_trajectory, (phi0, h, p, seed),
                           n_trajectories, workers)
    # weights-only runs are cheap; skip pool pickling overhead
    return [hybrid_trajectory(phi0, h, p, seed, index=i, store_states=False)
            for i in range(n_trajectories)]
