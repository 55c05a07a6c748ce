"""Truncated Fock-space operators and states.

Ladder operators, displacement/squeeze unitaries, squeezed-coherent and cat
states, the discrete rotation (symmetry) operator and its sector projectors.

Conventions
-----------
* ``D(alpha) = exp(alpha a^+ - alpha* a)``.
* ``S(xi) = exp[(xi* a^2 - xi (a^+)^2) / 2]`` with ``xi = s e^{i phi_xi}``.
  The factor 1/2 makes the squeezed-vacuum variance identity exact:
  ``Var X_phi = e^{-2s}/4`` along the direction ``phi = phi_xi / 2``.
* ``X_phi = (a e^{-i phi} + a^+ e^{i phi}) / 2`` (vacuum variance 1/4).
* Rotation operator ``Z_p = exp(-i 2 pi n / p)``; for p = 2 this is photon
  parity.  The 2*pi/p form (rather than pi/p) is what makes
  ``[Z_p, a^n] = 0`` equivalent to ``p | n``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import gcd, lgamma

import numpy as np
from scipy.linalg import expm

from .errors import TruncationWarning

#: fraction of top Fock levels used for the truncation-leakage diagnostic
LEAK_FRACTION = 0.1
#: total population allowed in the top levels before a state is flagged
LEAK_TOL = 1e-6


def annihilation(dim: int) -> np.ndarray:
    """Ladder operator a with entries (k, k+1) = sqrt(k+1)."""
    if dim < 2:
        raise ValueError(f"Fock dimension must be >= 2, got {dim}")
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def creation(dim: int) -> np.ndarray:
    return annihilation(dim).conj().T


def number_op(dim: int) -> np.ndarray:
    if dim < 2:
        raise ValueError(f"Fock dimension must be >= 2, got {dim}")
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def quadrature_op(phi: float, dim: int) -> np.ndarray:
    """X_phi = (a e^{-i phi} + a^+ e^{i phi}) / 2."""
    a = annihilation(dim)
    return 0.5 * (a * np.exp(-1j * phi) + a.conj().T * np.exp(1j * phi))


def displacement(alpha: complex, dim: int) -> np.ndarray:
    """D(alpha) = exp(alpha a^+ - alpha* a) via matrix exponential."""
    if not np.isfinite(alpha):
        raise ValueError("displacement amplitude must be finite")
    if abs(alpha) ** 2 > 0.5 * dim:
        warnings.warn(
            f"|alpha|^2 = {abs(alpha)**2:.1f} exceeds dim/2 = {dim/2}; "
            "displaced state is pushed into the Fock cutoff",
            TruncationWarning,
            stacklevel=2,
        )
    a = annihilation(dim)
    return expm(alpha * a.conj().T - np.conj(alpha) * a)


def squeeze(xi: complex, dim: int) -> np.ndarray:
    """S(xi) = exp[(xi* a^2 - xi (a^+)^2)/2]."""
    if not np.isfinite(xi):
        raise ValueError("squeezing parameter must be finite")
    s = abs(xi)
    if 8.0 * np.sinh(s) ** 2 + 4 > dim:
        warnings.warn(
            f"squeezing s = {s:.2f} is unsafe at dim = {dim}",
            TruncationWarning,
            stacklevel=2,
        )
    a = annihilation(dim)
    a2 = a @ a
    return expm(0.5 * (np.conj(xi) * a2 - xi * a2.conj().T))


def coherent(alpha: complex, dim: int) -> np.ndarray:
    """Coherent state |alpha> with analytic amplitudes, renormalized."""
    k = np.arange(dim)
    logfact = np.array([lgamma(x + 1.0) for x in k])
    if alpha == 0:
        psi = np.zeros(dim, complex)
        psi[0] = 1.0
        return psi
    psi = np.exp(-0.5 * abs(alpha) ** 2 + k * np.log(alpha + 0j) - 0.5 * logfact)
    return psi / np.linalg.norm(psi)


@dataclass(frozen=True)
class SqueezedStateParams:
    """Displacement alpha = r e^{i theta} and squeezing xi = s e^{i phi_xi}.

    The squeezed quadrature direction is phi_xi / 2 (mod pi).
    """

    alpha: complex
    xi: complex

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.xi)):
            raise ValueError("alpha and xi must be finite")

    @property
    def r(self) -> float:
        return abs(self.alpha)

    @property
    def theta(self) -> float:
        return float(np.angle(self.alpha)) % (2 * np.pi)

    @property
    def s(self) -> float:
        return abs(self.xi)

    @property
    def phi_xi(self) -> float:
        return float(np.angle(self.xi)) % (2 * np.pi)

    @property
    def squeeze_direction(self) -> float:
        """Direction of minimal quadrature variance, in [0, pi)."""
        return (self.phi_xi / 2.0) % np.pi


def state_leakage(psi: np.ndarray) -> float:
    """Population in the top LEAK_FRACTION of Fock levels."""
    dim = psi.shape[0]
    k0 = int(np.ceil((1.0 - LEAK_FRACTION) * dim))
    return float(np.sum(np.abs(psi[k0:]) ** 2))


def _check_leakage(psi: np.ndarray, what: str) -> None:
    leak = state_leakage(psi)
    if leak > LEAK_TOL:
        warnings.warn(
            f"{what}: population {leak:.2e} in the top {LEAK_FRACTION:.0%} "
            "of Fock levels; increase dim",
            TruncationWarning,
            stacklevel=3,
        )


def squeezed_coherent(params: SqueezedStateParams, dim: int) -> np.ndarray:
    """|alpha, xi> = D(alpha) S(xi) |0>, normalized."""
    vac = np.zeros(dim, complex)
    vac[0] = 1.0
    psi = displacement(params.alpha, dim) @ (squeeze(params.xi, dim) @ vac)
    psi = psi / np.linalg.norm(psi)
    _check_leakage(psi, "squeezed_coherent")
    return psi


def symmetry_operator(p: int, dim: int) -> np.ndarray:
    """Diagonal rotation Z_p = exp(-i 2 pi n / p); parity for p = 2."""
    if p < 1:
        raise ValueError(f"symmetry order must be >= 1, got {p}")
    k = np.arange(dim)
    return np.diag(np.exp(-2j * np.pi * k / p))


def sector_projector(mu: int, n: int, dim: int) -> np.ndarray:
    """Projector onto Fock levels congruent to mu (mod n)."""
    if not 0 <= mu < n:
        raise ValueError(f"sector index must satisfy 0 <= mu < {n}, got {mu}")
    k = np.arange(dim)
    return np.diag((k % n == mu).astype(complex))


def lobe_params(n: int, m: int, r: float, s: float, theta0: float = 0.0) -> list[SqueezedStateParams]:
    """Parameters of the n symmetric lobes at radius r with squeezing s.

    Lobe j sits at theta_j = theta0 + (2j+1) pi / n.  Its squeezing phase is
    2 theta_j, plus pi when the drive degree exceeds the dissipation degree:
    amplitude-squeezed lobes (n < m) are squeezed radially, phase-squeezed
    lobes (n > m) tangentially.
    """
    extra = np.pi if n > m else 0.0
    out = []
    for j in range(n):
        theta_j = theta0 + (2 * j + 1) * np.pi / n
        alpha = r * np.exp(1j * theta_j)
        xi = s * np.exp(1j * (2 * theta_j + extra))
        out.append(SqueezedStateParams(alpha, xi))
    out.sort(key=lambda p: p.theta)  # lobe 0 = smallest phase-space angle
    return out


def cat_states(lobes: list[SqueezedStateParams], dim: int) -> list[np.ndarray]:
    """Symmetry-sector superpositions of n lobes.

    Returns n states; state mu carries phase weights e^{-i 2 pi mu j / n} and
    is projected onto Fock levels congruent to mu (mod n), then normalized.
    """
    n = len(lobes)
    psis = [squeezed_coherent(p, dim) for p in lobes]
    for i in range(n):
        for j in range(i + 1, n):
            ov = abs(np.vdot(psis[i], psis[j]))
            if ov > 0.99:
                raise ValueError(
                    f"lobes {i} and {j} overlap at {ov:.4f}; "
                    "superposition is ill-conditioned"
                )
    k = np.arange(dim)
    out = []
    for mu in range(n):
        cat = np.zeros(dim, complex)
        for j in range(n):
            cat += np.exp(-2j * np.pi * mu * j / n) * psis[j]
        cat[k % n != mu] = 0.0  # exact sector support
        nrm = np.linalg.norm(cat)
        if nrm < 1e-12:
            raise ValueError(f"sector {mu} component vanishes")
        cat /= nrm
        _check_leakage(cat, f"cat_states[{mu}]")
        out.append(cat)
    return out


def is_hermitian(mat: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(mat - mat.conj().T)) < tol)


def is_unitary(mat: np.ndarray, tol: float = 1e-10) -> bool:
    d = mat.shape[0]
    return bool(np.max(np.abs(mat.conj().T @ mat - np.eye(d))) < tol)
