"""State characterization: photon statistics, quadrature variances, Wigner
grids, and squeezed-lobe model fitting.

Wigner convention: quadrature axes x = <a + a^+>/sqrt(2), p = <i(a^+ - a)>/sqrt(2),

    W(x, p) = (1/pi) Tr[rho D(beta) P D(beta)^+],   beta = (x + i p)/sqrt(2),

with P the photon parity.  The vacuum peaks at 1/pi and the grid integrates
to Tr rho = 1.  A coherent state |alpha> peaks at (x, p) = sqrt(2) (Re alpha,
Im alpha).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import fock
from . import meanfield
from . import liouvillian as lv


def mean_photon(rho: np.ndarray) -> float:
    return float(np.real(np.diag(rho)) @ np.arange(rho.shape[0]))


def photon_distribution(rho: np.ndarray) -> np.ndarray:
    """Diagonal of rho; must sum to 1."""
    p = np.real(np.diag(rho))
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"state trace is {p.sum():.12f}, not 1")
    return p


def mandel_q(rho: np.ndarray) -> float:
    """Q = (<(dn)^2> - <n>) / <n>; negative means sub-Poissonian."""
    k = np.arange(rho.shape[0])
    p = np.real(np.diag(rho))
    nb = p @ k
    if nb <= 0:
        raise ValueError("Mandel Q is undefined for the vacuum")
    var = p @ k**2 - nb**2
    return float((var - nb) / nb)


def _field_moments(rho: np.ndarray):
    a = fock.annihilation(rho.shape[0])
    ea = complex(np.trace(a @ rho))
    ea2 = complex(np.trace(a @ a @ rho))
    en = mean_photon(rho)
    return ea, ea2, en


def quadrature_variance(rho: np.ndarray, phi: float) -> float:
    """Variance of X_phi = (a e^{-i phi} + a^+ e^{i phi})/2."""
    ea, ea2, en = _field_moments(rho)
    return float(
        0.25 + 0.5 * (en - abs(ea) ** 2)
        + 0.5 * np.real(np.exp(-2j * phi) * (ea2 - ea**2))
    )


def min_quadrature_variance(rho: np.ndarray) -> tuple[float, float]:
    """(smallest quadrature variance, its direction phi in [0, pi))."""
    ea, ea2, en = _field_moments(rho)
    M = ea2 - ea**2
    var = 0.25 + 0.5 * (en - abs(ea) ** 2) - 0.5 * abs(M)
    if abs(M) < 1e-14:
        return float(var), 0.0
    phi = ((np.angle(M) + np.pi) / 2.0) % np.pi
    return float(var), float(phi)


def variance_to_db(v: float) -> float:
    """Squeezing in dB relative to the coherent-state variance 1/4."""
    if v <= 0:
        raise ValueError("variance must be positive")
    return float(10.0 * np.log10(v / 0.25))


# ---------------------------------------------------------------------------
# Wigner function

@dataclass
class WignerGrid:
    xs: np.ndarray
    ps: np.ndarray
    values: np.ndarray  # shape (len(ps), len(xs))

    def integral(self) -> float:
        if len(self.xs) < 2 or len(self.ps) < 2:
            raise ValueError("integral needs a grid with at least 2x2 points")
        dx = self.xs[1] - self.xs[0]
        dp = self.ps[1] - self.ps[0]
        return float(self.values.sum() * dx * dp)

    def argmax_point(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.xs[j]), float(self.ps[i])


def wigner(rho: np.ndarray, xs: np.ndarray, ps: np.ndarray) -> WignerGrid:
    """Displaced-parity Wigner function W(x, p) = (1/pi) Tr[rho D P D^+]
    on a rectangular grid.

    Evaluated in closed form through the Laguerre-function recurrences over
    the density-matrix diagonals, with the Gaussian envelope prefactored so
    every intermediate stays bounded (stable at any dim/grid combination,
    unlike building displacement matrices pointwise).
    """
    dim = rho.shape[0]
    X, P = np.meshgrid(xs, ps)
    A = (X + 1j * P) / np.sqrt(2.0)
    Wlist = np.zeros((dim,) + A.shape, complex)
    Wlist[0] = np.exp(-2.0 * np.abs(A) ** 2)
    W = np.real(rho[0, 0]) * np.real(Wlist[0])
    for n in range(1, dim):
        Wlist[n] = (2.0 * A * Wlist[n - 1]) / np.sqrt(n)
        W += 2.0 * np.real(rho[0, n] * Wlist[n])
    for m in range(1, dim):
        temp = Wlist[m].copy()
        Wlist[m] = (2.0 * np.conj(A) * temp - np.sqrt(m) * Wlist[m - 1]) \
            / np.sqrt(m)
        W += np.real(rho[m, m] * Wlist[m])
        for n in range(m + 1, dim):
            temp2 = (2.0 * A * Wlist[n - 1] - np.sqrt(m) * temp) / np.sqrt(n)
            temp = Wlist[n].copy()
            Wlist[n] = temp2
            W += 2.0 * np.real(rho[m, n] * Wlist[n])
    grid = WignerGrid(np.asarray(xs, float), np.asarray(ps, float), W / np.pi)
    if len(xs) > 1 and len(ps) > 1 \
            and abs(grid.integral() - np.trace(rho).real) > 1e-3:
        warnings.warn(
            f"Wigner grid integrates to {grid.integral():.5f}; "
            "grid probably does not cover the state",
            stacklevel=2,
        )
    return grid


def auto_grid(rho: np.ndarray, points: int = 121, tail_mass: float = 1e-4):
    """Symmetric (xs, ps) ranges covering the state's support.

    Sized from the photon-distribution quantile (robust for rotationally
    spread and fat-tailed states) and clamped to the radius the truncation
    can represent faithfully.
    """
    p = np.clip(np.real(np.diag(rho)), 0.0, None)
    p = p / p.sum()
    k_hi = int(np.searchsorted(np.cumsum(p), 1.0 - tail_mass))
    reach = np.sqrt(2.0 * k_hi + 1.0) + 2.5
    # displaced parity corrupts once the grid CORNER displacement
    # |beta|^2 = reach^2 approaches the truncation
    dim_cap = np.sqrt(0.7 * rho.shape[0])
    if reach > dim_cap:
        warnings.warn(
            f"grid reach {reach:.1f} exceeds what dim={rho.shape[0]} "
            "renders faithfully; clamping",
            stacklevel=2,
        )
        reach = dim_cap
    xs = np.linspace(-reach, reach, points)
    return xs, xs.copy()


# ---------------------------------------------------------------------------
# squeezed-lobe model fit

@dataclass(frozen=True)
class LobeParams:
    """Shared lobe geometry: radius r, squeezing s, per-lobe phases."""

    r: float
    s: float
    thetas: tuple
    phi_xis: tuple

    @property
    def n(self) -> int:
        return len(self.thetas)


def lobe_param_set(params: lv.ModelParams, r: float, s: float) -> LobeParams:
    states = fock.lobe_params(params.n, params.m, r, s, params.theta0)
    return LobeParams(
        r=float(r),
        s=float(s),
        thetas=tuple(p.theta for p in states),
        phi_xis=tuple(p.phi_xi for p in states),
    )


def lobe_states(lp: LobeParams, dim: int) -> list[np.ndarray]:
    """The n lobe states; lobes j > 0 are exact Fock-space rotations of lobe
    0 (the squeezing phases track 2 theta_j), which saves n-1 matrix
    exponentials per evaluation."""
    th0, ph0 = lp.thetas[0], lp.phi_xis[0]
    sp0 = fock.SqueezedStateParams(lp.r * np.exp(1j * th0), lp.s * np.exp(1j * ph0))
    psi0 = fock.squeezed_coherent(sp0, dim)
    k = np.arange(dim)
    out = [psi0]
    for th in lp.thetas[1:]:
        out.append(np.exp(1j * (th - th0) * k) * psi0)
    return out


def lobe_mixture(lp: LobeParams, dim: int) -> np.ndarray:
    """Equal-weight mixture of the n squeezed-coherent lobes."""
    rho = np.zeros((dim, dim), complex)
    for psi in lobe_states(lp, dim):
        rho += np.outer(psi, psi.conj())
    return rho / lp.n


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """(1/2) ||rho - sigma||_1 for Hermitian arguments."""
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(rho - sigma))))


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    w, V = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    w = np.clip(w, 0.0, None)
    sq = (V * np.sqrt(w)) @ V.conj().T
    M = sq @ sigma @ sq
    ev = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    return float(np.sum(np.sqrt(np.clip(ev, 0.0, None))) ** 2)


def fit_lobe_params(rho_ss: np.ndarray, params: lv.ModelParams,
                    seed_r: float | None = None, seed_s: float = 0.1,
                    poor_fit: float = 0.8) -> tuple[LobeParams, float]:
    """Fit (r, s) of the symmetric squeezed-lobe mixture to a steady state.

    Maximizes Uhlmann fidelity by Nelder-Mead; lobe phases are fixed by the
    mean field, squeezing phases by the drive/dissipation asymmetry.
    """
    dim = rho_ss.shape[0]
    if seed_r is None:
        try:
            seed_r = meanfield.fixed_point_amplitude(params)
        except ValueError:
            seed_r = np.sqrt(max(mean_photon(rho_ss), 1.0))

    def cost(x):
        r, s = abs(x[0]), abs(x[1])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", fock.TruncationWarning)
            model = lobe_mixture(lobe_param_set(params, r, s), dim)
        return -fidelity(rho_ss, model)

    res = minimize(cost, x0=[seed_r, seed_s], method="Nelder-Mead",
                   options={"xatol": 2e-5, "fatol": 1e-9, "maxfev": 250})
    r, s = abs(res.x[0]), abs(res.x[1])
    fid = -res.fun
    if fid < poor_fit:
        warnings.warn(
            f"lobe model fidelity {fid:.3f} < {poor_fit}; the steady state is "
            "not well described by symmetric squeezed lobes",
            stacklevel=2,
        )
    return lobe_param_set(params, r, s), float(fid)
