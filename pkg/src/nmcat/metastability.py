"""Spectral separation, extreme metastable states, and the (4,6) special case.

For weak symmetry with one slow mode per difference sector, the n extreme
metastable states are built as

    mu_j = rho_ss + sum_{d=1}^{n-1} chi_d e^{+i 2 pi d j / n} R_d,

which is exactly rotation-covariant: averaging over j cancels every d != 0
term, so (1/n) sum_j mu_j = rho_ss identically.  The + sign in the phase
winds mu_j through the lobes in order of increasing phase-space angle.  The coefficient magnitudes
chi_d come from the extreme eigenvalues of the left modes L_d; their phases
are anchored by a mean-field coherent state so that mu_0 sits on the lobe
with the smallest phase-space angle.  For a two-state manifold the classic
construction mu_± = rho_ss + c_± R_2 is used with c_± the extreme
eigenvalues of the Hermitized L_2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import fock
from . import meanfield
from . import observables
from . import liouvillian as lv
from .errors import NoMetastableManifold

#: gap ratio below which a manifold is declared (configurable per call)
GAP_RATIO_THRESHOLD = 0.2


def gap_ratio(spec: lv.Spectrum, l: int) -> float:
    """Re lambda_l / Re lambda_{l+1} in (0, 1]; small means long metastability.

    The plotted separation ratio: it tends to 0 as the manifold modes become
    infinitely slower than the fast bath of modes.
    """
    if l < 2:
        raise ValueError("manifold size must be >= 2")
    if len(spec.eigenvalues) < l + 1:
        raise ValueError(f"spectrum holds {len(spec.eigenvalues)} modes; need {l+1}")
    num = spec.eigenvalues[l - 1].real
    den = spec.eigenvalues[l].real
    if num >= -1e-300 or den >= -1e-300:
        raise ValueError(
            "gap ratio is ill-defined: eigenvalue beyond the steady-state "
            "cluster has vanishing real part"
        )
    return float(num / den)


def scale_factor_fit(points):
    """k = 10^b from fitting ratio = a 10^{b <n>}; least squares in log10.

    Returns a dynamics.FitResult with value = k.
    """
    from .dynamics import _log10_slope_fit  # local import avoids a cycle

    pts = np.asarray(points, float)
    if pts.shape[0] < 4:
        raise ValueError("need at least 4 (photon number, ratio) points")
    if np.any(pts[:, 1] <= 0):
        raise ValueError("ratios must be positive")
    return _log10_slope_fit(pts[:, 0], np.log10(pts[:, 1]))


@dataclass
class MetastableManifold:
    """Physical states spanning the slow manifold.

    ``window`` is the metastable time window (tau_{l+1}, tau_2); ``ratio``
    the spectral separation Re lambda_l / Re lambda_{l+1}.
    """

    states: list
    window: tuple
    ratio: float
    size: int

    def average(self) -> np.ndarray:
        return np.mean(self.states, axis=0)


def _hermitize_mode(M: np.ndarray) -> np.ndarray:
    """Rotate the global phase of an eigenmode of a real eigenvalue so it is
    Hermitian (M^+ = e^{i phi} M  ->  e^{i phi/2} M)."""
    overlap = np.vdot(lv.vec(M), lv.vec(M.conj().T))
    phi = np.angle(overlap)
    H = np.exp(1j * phi / 2.0) * M
    H = 0.5 * (H + H.conj().T)
    return H


def _anchor_state(params: lv.ModelParams) -> np.ndarray:
    """Coherent state at the mean-field lobe with the smallest angle."""
    try:
        R = meanfield.fixed_point_amplitude(params)
    except ValueError:
        R = 1.0
    theta0 = meanfield.lobe_phases(params)[0]
    psi = fock.coherent(R * np.exp(1j * theta0), params.dim)
    return np.outer(psi, psi.conj())


def _two_state_manifold(spec: lv.Spectrum, params: lv.ModelParams,
                        ratio: float) -> MetastableManifold:
    lam2 = spec.eigenvalues[1]
    if abs(lam2.imag) > 1e-6 * max(1.0, abs(lam2)):
        raise NoMetastableManifold(
            f"lambda_2 = {lam2:.4g} is complex; no two-state manifold"
        )
    R2 = _hermitize_mode(spec.right_modes[1])
    L2 = _hermitize_mode(spec.left_modes[1])
    t = np.real(np.trace(L2 @ R2))
    if abs(t) < 1e-12:
        raise NoMetastableManifold("L_2 and R_2 are orthogonal after Hermitization")
    L2 = L2 / t
    evals = np.linalg.eigvalsh(L2)
    c_lo, c_hi = float(evals[0]), float(evals[-1])
    rho_ss = spec.right_modes[0]
    mus = [rho_ss + c_hi * R2, rho_ss + c_lo * R2]
    # deterministic lobe ordering: anchor mu_0 on the smallest-angle lobe
    anchor = _anchor_state(params)
    ovl = [np.real(np.trace(anchor @ m)) for m in mus]
    if ovl[1] > ovl[0]:
        mus = mus[::-1]
    window = (float(spec.lifetimes[2]), float(spec.lifetimes[1]))
    return MetastableManifold(states=mus, window=window, ratio=ratio, size=2)


def _rotation_manifold(spec: lv.Spectrum, params: lv.ModelParams,
                       ratio: float) -> MetastableManifold:
    n, dim = params.n, params.dim
    by_sector = {}
    for j in range(1, n):
        sec = spec.sectors[j]
        if not isinstance(sec, (int, np.integer)):
            raise NoMetastableManifold("slow modes are not weak-symmetry labeled")
        by_sector.setdefault(int(sec), j)
    if sorted(by_sector) != list(range(1, n)):
        raise NoMetastableManifold(
            f"slow modes occupy sectors {sorted(by_sector)}; the n-lobe "
            "construction needs one per difference sector 1..n-1"
        )
    anchor = _anchor_state(params)
    Rd: dict[int, np.ndarray] = {}
    chi: dict[int, complex] = {}
    search_sector = None
    for d in range(1, n // 2 + 1):
        jd = by_sector[d]
        R = spec.right_modes[jd]
        L = spec.left_modes[jd]
        if 2 * d == n:
            RH = _hermitize_mode(R)
            LH = _hermitize_mode(L)
            t = np.real(np.trace(LH @ RH))
            LH = LH / t
            evals = np.linalg.eigvalsh(LH)
            Rd[d] = RH
            chi[d] = float(evals[-1])       # sign resolved by search below
            search_sector = d
        else:
            Rd[d] = R
            Rd[n - d] = R.conj().T
            evals = np.linalg.eigvals(L)
            ring = evals[np.abs(evals) >= 0.8 * np.abs(evals).max()]
            t_d = complex(np.vdot(lv.vec(L), lv.vec(anchor)))
            pick = ring[np.argmin(np.abs(np.angle(ring * t_d)))]
            # eigenvalues of L_d are ~ conj of the lobe coefficients
            chi[d] = np.conj(pick)
            chi[n - d] = np.conj(chi[d])

    rho_ss = spec.right_modes[0]

    def build(chi_map):
        out = []
        for j in range(n):
            mu = rho_ss.astype(complex).copy()
            for d in range(1, n):
                mu = mu + chi_map[d] * np.exp(2j * np.pi * d * j / n) * Rd[d]
            out.append(0.5 * (mu + mu.conj().T))
        return out

    if search_sector is None:
        mus = build(chi)
    else:
        # discrete sign search on the self-conjugate sector: keep the
        # assignment whose states are farthest apart and most positive
        candidates = []
        for sign in (+1.0, -1.0):
            cm = dict(chi)
            cm[search_sector] = sign * chi[search_sector]
            states = build(cm)
            dists = [
                observables.trace_distance(states[i], states[j])
                for i in range(n) for j in range(i + 1, n)
            ]
            neg = min(np.linalg.eigvalsh(s).min() for s in states)
            candidates.append(((round(min(dists), 9), round(neg, 9), sign), states))
        candidates.sort(key=lambda c: c[0], reverse=True)
        mus = candidates[0][1]

    window = (float(spec.lifetimes[n]), float(spec.lifetimes[1]))
    return MetastableManifold(states=mus, window=window, ratio=ratio, size=n)


def extreme_metastable_states(spec: lv.Spectrum, l: int,
                              params: lv.ModelParams,
                              threshold: float = GAP_RATIO_THRESHOLD,
                              ) -> MetastableManifold:
    """The l physical states spanning the metastable manifold.

    Requires the spectral separation at l to be below ``threshold``.
    """
    ratio = gap_ratio(spec, l)
    if ratio > threshold:
        raise NoMetastableManifold(
            f"gap ratio {ratio:.3f} exceeds threshold {threshold}; "
            "no metastable manifold at this size"
        )
    if l == 2:
        manifold = _two_state_manifold(spec, params, ratio)
    elif l == params.n:
        manifold = _rotation_manifold(spec, params, ratio)
    else:
        raise NoMetastableManifold(
            f"no construction for manifold size {l} with n = {params.n}"
        )
    for j, mu in enumerate(manifold.states):
        tr = np.trace(mu).real
        if abs(tr - 1.0) > 1e-9:
            raise RuntimeError(f"state {j} has trace {tr}")
        neg = np.linalg.eigvalsh(mu).min()
        if neg < -0.1:
            warnings.warn(
                f"extreme metastable state {j} has eigenvalue {neg:.3f}; "
                "manifold is far from classical states",
                stacklevel=2,
            )
    return manifold


def four_six_manifold(params: lv.ModelParams, lobes: observables.LobeParams,
                      spec: lv.Spectrum) -> MetastableManifold:
    """The two metastable states of the (4,6) oscillator below the
    exceptional point, built from even/odd 4-cat superpositions."""
    if (params.n, params.m) != (4, 6):
        raise ValueError(f"construction is specific to (4,6); got "
                         f"({params.n},{params.m})")
    lam2 = spec.eigenvalues[1]
    if abs(lam2.imag) > 1e-8 * max(1.0, abs(lam2)):
        warnings.warn(
            "lambda_2 is complex: beyond the exceptional point the two-state "
            "picture does not apply",
            stacklevel=2,
        )
    psis = observables.lobe_states(lobes, params.dim)

    def ket(i, sign, j):
        v = psis[i] + sign * psis[j]
        return v / np.linalg.norm(v)

    c_even = {s: ket(0, s, 2) for s in (+1, -1)}
    c_odd = {s: ket(1, s, 3) for s in (+1, -1)}
    mu0 = 0.5 * (np.outer(c_even[+1], c_even[+1].conj())
                 + np.outer(c_odd[+1], c_odd[+1].conj()))
    mu1 = 0.5 * (np.outer(c_even[-1], c_even[-1].conj())
                 + np.outer(c_odd[-1], c_odd[-1].conj()))
    parity = fock.symmetry_operator(2, params.dim)
    for mu, want in ((mu0, 1.0), (mu1, -1.0)):
        got = np.real(np.trace(parity @ mu))
        if abs(got - want) > 0.05:
            warnings.warn(
                f"(4,6) metastable state has parity {got:.3f}, expected {want}",
                stacklevel=2,
            )
    ratio = gap_ratio(spec, 2)
    window = (float(spec.lifetimes[2]), float(spec.lifetimes[1]))
    return MetastableManifold(states=[mu0, mu1], window=window,
                              ratio=ratio, size=2)


@dataclass(frozen=True)
class EpScanRow:
    n_ss: float
    eta: float
    lam2: complex
    lam3: complex
    lam4: complex
    conjugate_pair: bool


def exceptional_point_scan(params: lv.ModelParams, n_ss_values,
                           dim_rule=None) -> list[EpScanRow]:
    """Track lambda_2..lambda_4 of the (4,6) oscillator over a photon-number
    sweep; flags where lambda_2 and lambda_3 form a conjugate pair."""
    if (params.n, params.m) != (4, 6):
        raise ValueError("the exceptional-point scan is specific to (4,6)")
    if dim_rule is None:
        dim_rule = lambda nb: int(np.ceil(nb + 6 * np.sqrt(nb) + 14))
    rows = []
    for nb in n_ss_values:
        p = params.with_(dim=dim_rule(nb))
        eta = meanfield.eta_for_photon_number(nb, p).eta
        p = p.with_(eta_n=eta)
        spec = lv.spectrum(p, k=6)
        lam2, lam3, lam4 = spec.eigenvalues[1:4]
        pair = (abs(lam2.imag) > 1e-8
                and abs(lam2 - np.conj(lam3)) < 1e-6 * max(1.0, abs(lam2)))
        rows.append(EpScanRow(float(nb), float(eta), complex(lam2),
                              complex(lam3), complex(lam4), bool(pair)))
    return rows
