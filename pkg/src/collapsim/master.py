"""Density-matrix (Lindblad) evolution for both collapse models.

The kernels rho(x_i, x_j) evolve under

    d rho / dt = -i [H, rho] - D(x, y) rho(x, y)

with decoherence rate D = mu (1 - exp(-alpha (x-y)^2 / 4)) for the jump
model and D = (lam / 2)(x - y)^2 for the diffusion model.  With H = 0 both
equations are diagonal linear ODEs with the closed-form solutions used as
oracles in the tests.  The integrator is fixed-step RK4 with step-halving
validation (reproducible, no adaptive state).
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import GridMismatchError, InvalidParameterError, StepTooLargeError

MAX_MASTER_POINTS = 128


@dataclass(eq=False)
class DensityMatrix:
    """n x n kernel rho(x_i, x_j); trace is sum of the diagonal times dx."""

    grid: object
    entries: np.ndarray

    def __post_init__(self):
        n = self.grid.n_points
        if n > MAX_MASTER_POINTS:
            raise InvalidParameterError(
                f"master-equation grids are capped at {MAX_MASTER_POINTS} points")
        if self.entries.shape != (n, n):
            raise InvalidParameterError("entries do not match the grid")

    @classmethod
    def from_wavefunction(cls, psi):
        a = psi.amplitudes
        return cls(psi.grid, np.outer(a, a.conj()))

    def trace(self):
        return float(np.real(np.trace(self.entries))) * self.grid.dx

    def hermiticity_defect(self):
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def min_eigenvalue(self):
        sym = 0.5 * (self.entries + self.entries.conj().T)
        return float(np.linalg.eigvalsh(sym)[0]) * self.grid.dx


def hamiltonian_matrix(h):
    """Dense matrix of H = -1/2 Laplacian + V on the grid (spectral kinetic).

    Built from the same Fourier multiplier the split-step propagator uses,
    so trajectory and master evolutions share one discrete Hamiltonian.
    """
    n = h.grid.n_points
    mat = np.zeros((n, n), dtype=np.complex128)
    if h.kinetic:
        eye = np.eye(n, dtype=np.complex128)
        mat = scipy.fft.ifft(
            (0.5 * h.grid.k**2)[:, None] * scipy.fft.fft(eye, axis=0), axis=0)
        mat = 0.5 * (mat + mat.conj().T)  # symmetrize roundoff
    if not h.potential_is_zero:
        mat = mat + np.diag(h.potential.astype(np.complex128))
    return mat


def grw_decoherence_rates(grid, mu, alpha):
    """Rate matrix mu (1 - exp(-alpha (x_i - x_j)^2 / 4))."""
    if mu <= 0 or alpha <= 0:
        raise InvalidParameterError("mu and alpha must be positive")
    sep = grid.x[:, None] - grid.x[None, :]
    return mu * (1.0 - np.exp(-0.25 * alpha * sep**2))


def diosi_decoherence_rates(grid, lam):
    """Rate matrix (lam / 2)(x_i - x_j)^2."""
    if lam <= 0:
        raise InvalidParameterError("lam must be positive")
    sep = grid.x[:, None] - grid.x[None, :]
    return 0.5 * lam * sep**2


def _rk4(rho, h_mat, rates, t, n_steps):
    dt = t / n_steps
    if h_mat is None:
        def rhs(r):
            return -rates * r
    else:
        def rhs(r):
            return -1j * (h_mat @ r - r @ h_mat) - rates * r
    r = rho
    for _ in range(n_steps):
        k1 = rhs(r)
        k2 = rhs(r + 0.5 * dt * k1)
        k3 = rhs(r + 0.5 * dt * k2)
        k4 = rhs(r + dt * k3)
        r = r + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return r


def _evolve(rho0, h, rates, t, dt, validate):
    if t < 0:
        raise InvalidParameterError("t must be nonnegative")
    if dt <= 0:
        raise InvalidParameterError("dt must be positive")
    if t == 0:
        return DensityMatrix(rho0.grid, rho0.entries.copy())
    if rho0.grid != h.grid:
        raise GridMismatchError("density matrix and Hamiltonian grids differ")
    h_mat = None if h.is_zero else hamiltonian_matrix(h)
    n_steps = max(1, math.ceil(t / dt - 1e-12))
    out = _rk4(rho0.entries, h_mat, rates, t, n_steps)
    if validate:
        fine = _rk4(rho0.entries, h_mat, rates, t, 2 * n_steps)
        err = float(np.max(np.abs(out - fine)))
        if err > 1e-6:
            raise StepTooLargeError(
                f"step-halving disagreement {err:.3e} > 1e-6; reduce dt")
    return DensityMatrix(rho0.grid, out)


def evolve_grw_master(rho0, h, mu, alpha, t, dt, validate=True):
    """rho_t solving the jump-model master equation with fixed-step RK4.

    Trace is conserved to roundoff (the commutator is traceless and the
    decoherence factor vanishes on the diagonal).  ``validate`` reruns at
    half the step and raises StepTooLargeError on disagreement > 1e-6.
    """
    rates = grw_decoherence_rates(rho0.grid, mu, alpha)
    return _evolve(rho0, h, rates, t, dt, validate)


def evolve_diosi_master(rho0, h, lam, t, dt, validate=True):
    """rho_t solving the diffusion-model master equation (see evolve_grw_master)."""
    rates = diosi_decoherence_rates(rho0.grid, lam)
    return _evolve(rho0, h, rates, t, dt, validate)


def ensemble_density(ensemble):
    """Monte Carlo density matrix (1/N) sum_i w_i |phi_i><phi_i|.

    For diffusion/hybrid ensembles the raw squared norms enter as weights
    (the average of raw outer products under the reference measure); for
    jump ensembles all weights are 1.  Hermitian by construction.
    """
    if ensemble.n == 0:
        raise InvalidParameterError("empty ensemble")
    grid = ensemble.states[0].grid
    mat = np.zeros((grid.n_points, grid.n_points), dtype=np.complex128)
    for w, s in zip(ensemble.weights, ensemble.states):
        if s.grid != grid:
            raise GridMismatchError("ensemble states live on different grids")
        mat += w * np.outer(s.amplitudes, s.amplitudes.conj())
    return DensityMatrix(grid, mat / ensemble.n)


def density_max_gap(rho_hat, se, reference):
    """max-norm gap to the reference and the pooled SE at the maximizing entry.

    The comparison lives where the deviation is largest, which is always a
    well-sampled entry; far-tail entries have rare-event-dominated errors
    for which per-entry standard errors are meaningless at desk-scale N.
    """
    delta = np.abs(rho_hat.entries - reference.entries)
    i, j = np.unravel_index(int(np.argmax(delta)), delta.shape)
    return float(delta[i, j]), float(se[i, j])


def ensemble_density_se(ensemble):
    """Entrywise standard error of ensemble_density (complex parts pooled)."""
    grid = ensemble.states[0].grid
    n = grid.n_points
    mean = np.zeros((n, n), dtype=np.complex128)
    sq_re = np.zeros((n, n))
    sq_im = np.zeros((n, n))
    for w, s in zip(ensemble.weights, ensemble.states):
        term = w * np.outer(s.amplitudes, s.amplitudes.conj())
        mean += term
        sq_re += term.real**2
        sq_im += term.imag**2
    big = ensemble.n
    mean /= big
    var = (sq_re / big - mean.real**2) + (sq_im / big - mean.imag**2)
    var = np.maximum(var, 0.0) * big / max(big - 1, 1)
    return np.sqrt(var / big)
