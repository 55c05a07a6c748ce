"""Mean-field fixed points, stability, and the drive <-> photon-number map.

The classical amplitude obeys

    alpha' = -(gamma1/2) alpha - i Delta alpha
             - n eta (alpha*)^{n-1} e^{-i n theta0}
             - (m/2) gamma_m |alpha|^{2(m-1)} alpha,

exact in the large-excitation limit.  Its nonzero fixed points sit at n
symmetric angles theta_j = theta0 + (2j+1) pi / n.

The amplitude formulas implemented here (generic, n = 2, and m = n - 1
closed forms) all follow from the modulus of the fixed-point equation
    n eta R^{n-2} e^{-i n (psi + theta0)} = -(gamma1/2 + i Delta)
                                            - (m/2) gamma_m R^{2(m-1)}.
Note the n = 2 closed form carries sqrt(4 eta^2 - Delta^2): the sign under
the root follows from this modulus equation (and from the m = n - 1 formula,
which encodes the same algebra).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import liouvillian as lv


@dataclass(frozen=True)
class MeanFieldPoint:
    """One fixed point: amplitude, phase-space angle, linear stability."""

    amplitude: float
    phase: float
    jacobian_eigenvalues: tuple[float, float]
    stable: bool


def mf_rhs(alpha: complex, params: lv.ModelParams) -> complex:
    """Right-hand side of the amplitude equation."""
    n, m = params.n, params.m
    drive = -n * params.eta_n * np.conj(alpha) ** (n - 1) * np.exp(-1j * n * params.theta0)
    return (
        -(params.gamma1 / 2) * alpha
        - 1j * params.delta * alpha
        + drive
        - (m / 2) * params.gamma_m * abs(alpha) ** (2 * (m - 1)) * alpha
    )


def fixed_point_amplitude(params: lv.ModelParams) -> float:
    """Lobe amplitude R from the most specific applicable closed form."""
    n, m = params.n, params.m
    eta, gm, g1, delta = params.eta_n, params.gamma_m, params.gamma1, params.delta
    if 2 * m <= n:
        raise ValueError(f"amplitude formulas require 2m > n, got (n,m)=({n},{m})")
    if n == 2 and m > 1:
        disc = 4 * eta**2 - delta**2
        if disc < 0:
            raise ValueError("drive too weak: 4 eta^2 < Delta^2 has no lobe solution")
        bracket = np.sqrt(disc) - g1 / 2
        if bracket <= 0:
            raise ValueError("drive below threshold: no nonzero fixed point")
        return float((2.0 * bracket / (m * gm)) ** (1.0 / (2 * m - 2)))
    if m == n - 1:
        A = 2 * (n * eta) ** 2 - (n - 1) * gm * g1
        disc = A**2 - ((n - 1) * gm) ** 2 * (g1**2 + (2 * delta) ** 2)
        if disc < 0 or A <= 0:
            raise ValueError("drive below threshold for the m = n - 1 branch")
        val = (A + np.sqrt(disc)) / ((n - 1) * gm) ** 2
        return float(val ** (1.0 / (2 * n - 4)))
    return float((2 * n * eta / (m * gm)) ** (1.0 / (2 * m - n)))


def lobe_phases(params: lv.ModelParams) -> np.ndarray:
    """theta_j = theta0 + (2j+1) pi / n, canonicalized to [0, 2 pi)."""
    j = np.arange(params.n)
    return np.sort((params.theta0 + (2 * j + 1) * np.pi / params.n) % (2 * np.pi))


def jacobian_stability(point: MeanFieldPoint, params: lv.ModelParams,
                       numeric: bool = False):
    """Jacobian eigenvalues at a fixed point and the stability verdict.

    Analytic branch (valid at gamma1 = Delta = 0, kept with the -gamma1/2
    offset): radial -gamma1/2 + n eta R^{n-2} (n - 2m) and tangential
    -n^2 eta R^{n-2}.  (Linearizing the amplitude equation in a frame
    rotated onto the lobe gives the tangential rate -n * [n eta R^{n-2}];
    finite differences confirm the extra factor n.)  ``numeric=True``
    linearizes mf_rhs by central differences instead.
    """
    n, m, eta = params.n, params.m, params.eta_n
    R = point.amplitude
    if R == 0 and n < 2:
        raise ValueError("Jacobian is singular at the origin for n < 2")
    if numeric:
        h = 1e-6 * max(R, 1.0)
        a0 = R * np.exp(1j * point.phase)

        def f(x, y):
            z = mf_rhs(a0 + x + 1j * y, params)
            return np.array([z.real, z.imag])

        J = np.zeros((2, 2))
        J[:, 0] = (f(h, 0) - f(-h, 0)) / (2 * h)
        J[:, 1] = (f(0, h) - f(0, -h)) / (2 * h)
        eigs = np.linalg.eigvals(J)
        stable = bool(np.all(eigs.real < 0))
        return eigs, stable
    lam1 = -params.gamma1 / 2 + n * eta * R ** (n - 2) * (n - 2 * m)
    lam2 = -(n ** 2) * eta * R ** (n - 2)
    eigs = np.array([lam1, lam2])
    return eigs, bool(np.all(eigs < 0))


def fixed_points(params: lv.ModelParams) -> list[MeanFieldPoint]:
    """The n symmetric fixed points at the closed-form amplitude."""
    R = fixed_point_amplitude(params)
    out = []
    for th in lobe_phases(params):
        eigs, stable = jacobian_stability(
            MeanFieldPoint(R, th, (0.0, 0.0), False), params
        )
        out.append(MeanFieldPoint(R, float(th), (float(eigs[0]), float(eigs[1])), stable))
    return out


@dataclass(frozen=True)
class EtaResult:
    eta: float
    n_ss: float
    iterations: int
    converged: bool


def _seed_eta(n: int, m: int, gamma_m: float, target: float) -> float:
    """Invert the generic amplitude formula with R^2 = target."""
    return m * gamma_m * target ** ((2 * m - n) / 2.0) / (2 * n)


def mean_photon_ss(params: lv.ModelParams) -> float:
    rho = lv.steady_states(params, check=False)[0]
    return float(np.real(np.diag(rho)) @ np.arange(params.dim))


def eta_for_photon_number(target_n_ss: float, params: lv.ModelParams,
                          rel_tol: float = 0.01, max_iter: int = 30) -> EtaResult:
    """Drive strength eta such that Tr[n rho_ss] hits the target.

    Mean-field seed, then secant refinement on the exact steady state.  The
    eta_n field of ``params`` is ignored.
    """
    if target_n_ss <= 0:
        raise ValueError("target mean photon number must be positive")
    n, m = params.n, params.m

    def f(eta):
        return mean_photon_ss(params.with_(eta_n=eta)) - target_n_ss

    if 2 * m > n:
        e0 = _seed_eta(n, m, params.gamma_m, target_n_ss)
        e1 = 1.15 * e0
    elif n == 2 and m == 1:
        # squeezed-vacuum branch: finite photon number only below threshold
        g_tot = params.gamma1 + params.gamma_m
        eta_star = 0.5 * np.sqrt(params.delta**2 + (g_tot / 2) ** 2)
        e1 = eta_star * (1 - 1e-3)
        while f(e1) < 0 and eta_star - e1 > 1e-12 * eta_star:
            e1 = eta_star - 0.5 * (eta_star - e1)
        e0 = 0.8 * e1
    else:
        raise ValueError(f"no seed strategy for (n,m)=({n},{m}) with 2m <= n")

    f0, f1 = f(e0), f(e1)
    best = (e1, f1)
    it = 0
    for it in range(1, max_iter + 1):
        if f1 == f0:
            break
        e2 = e1 - f1 * (e1 - e0) / (f1 - f0)
        if e2 <= 0:
            e2 = 0.5 * min(e0, e1)
        e0, f0 = e1, f1
        e1 = e2
        f1 = f(e1)
        if abs(f1) < abs(best[1]):
            best = (e1, f1)
        if abs(f1) <= rel_tol * target_n_ss:
            return EtaResult(e1, f1 + target_n_ss, it, True)
    eta_b, fb = best
    warnings.warn(
        f"eta refinement did not reach {rel_tol:.0%} in {max_iter} iterations; "
        f"best eta = {eta_b:.6g} with <n> = {fb + target_n_ss:.4f}",
        stacklevel=2,
    )
    return EtaResult(eta_b, fb + target_n_ss, it, False)
