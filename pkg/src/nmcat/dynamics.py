"""Time evolution, decay-rate fitting pipelines, and quantum-jump trajectories.

Evolution strategies:

* ``evolve`` propagates a full density matrix, spectrally when a complete
  eigendecomposition is supplied, otherwise by adaptive Runge-Kutta
  (DOP853, rtol 1e-9 / atol 1e-11).
* Fitting pipelines evolve only the symmetry block that carries their
  observable: <a> lives in the difference-1 block, sector projectors in the
  difference-0 block.  Blocks are eigendecomposed densely and cached.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.optimize import curve_fit

from . import fock
from . import meanfield
from . import metastability
from . import observables
from . import liouvillian as lv
from .errors import SolverFailure, WindowError


@dataclass(frozen=True)
class FitResult:
    """A fitted rate or time with its uncertainty.

    ``value`` is a time for exponential decays (units 1/gamma1) and a rate
    for sector decays / linear fits (units gamma1).
    """

    value: float
    stderr: float
    r_squared: float
    model: str  # exponential | sector-decay | linear | spectral-gap
    window: tuple | None = None
    gap_time: float | None = None
    intercept: float | None = None


def validate_density(rho: np.ndarray, tol_trace: float = 1e-9,
                     tol_herm: float = 1e-10, tol_psd: float = -1e-8) -> None:
    if abs(np.trace(rho).real - 1.0) > tol_trace:
        raise ValueError(f"trace = {np.trace(rho):.12f}")
    if np.max(np.abs(rho - rho.conj().T)) > tol_herm:
        raise ValueError("state is not Hermitian")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < tol_psd:
        raise ValueError("state has a significant negative eigenvalue")


# ---------------------------------------------------------------------------
# full-state propagation

def evolve(rho0: np.ndarray, params: lv.ModelParams, times,
           spec: lv.Spectrum | None = None, method: str = "auto",
           rtol: float = 1e-9, atol: float = 1e-11) -> np.ndarray:
    """Density matrices at the requested times (sorted ascending).

    With a complete Spectrum, uses rho(t) = sum_j Tr[L_j^+ rho0] R_j
    e^{lambda_j t}; otherwise integrates the master equation.
    """
    times = np.asarray(times, float)
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted ascending")
    dim = params.dim
    full = spec is not None and len(spec.eigenvalues) == dim * dim
    if method == "spectral" and not full:
        raise ValueError("spectral propagation needs a complete spectrum")
    if full and method in ("auto", "spectral"):
        c = np.array([spec.coefficient(j, rho0) for j in range(dim * dim)])
        R = spec.right_modes.reshape(dim * dim, -1)
        recon = np.max(np.abs((c @ R).reshape(dim, dim, order="C") - rho0))
        if recon > 1e-8:
            raise SolverFailure(
                f"spectral representation misses rho0 by {recon:.2e}"
            )
        out = np.empty((len(times), dim, dim), complex)
        for i, t in enumerate(times):
            out[i] = ((c * np.exp(spec.eigenvalues * t)) @ R).reshape(dim, dim)
        return out
    if times[-1] == 0.0:
        return np.array([rho0.copy() for _ in times])
    L = lv.build_liouvillian(params)
    sol = solve_ivp(
        lambda t, v: L @ v,
        (0.0, times[-1]),
        lv.vec(rho0),
        t_eval=times,
        method="DOP853",
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise SolverFailure(f"ODE integration failed: {sol.message}; "
                            "consider the spectral path")
    return np.array([lv.unvec(sol.y[:, i], dim) for i in range(len(times))])


# ---------------------------------------------------------------------------
# block evolution for expectation series

@lru_cache(maxsize=3)
def _block_eig(params: lv.ModelParams, sector: int):
    """Dense eigendecomposition of one weak-symmetry difference block."""
    L = lv.build_liouvillian(params)
    d = lv.difference_sectors(params.dim, params.n)
    idx = np.where(d == sector)[0]
    B = lv.extract_block(L, idx).toarray()
    w, VL, VR = sla.eig(B, left=True, right=True)
    denom = np.einsum("ij,ij->j", VL.conj(), VR)
    return idx, w, VR, VL, denom


def expectation_series(params: lv.ModelParams, rho0: np.ndarray,
                       obs: np.ndarray, times: np.ndarray) -> np.ndarray:
    """<obs>(t) for an observable confined to one difference sector."""
    dim = params.dim
    o_vec = lv.vec(obs.conj().T)
    d = lv.difference_sectors(dim, params.n)
    live = np.unique(d[np.abs(o_vec) > 0])
    if len(live) != 1:
        raise ValueError("observable spans several symmetry sectors")
    sector = int(live[0])
    idx, w, VR, VL, denom = _block_eig(params, sector)
    v0 = lv.vec(rho0)[idx]
    c = (VL.conj().T @ v0) / denom
    proj = VR.T @ np.conj(o_vec[idx])
    cw = c * proj
    times = np.asarray(times, float)
    return np.real(np.exp(np.outer(times, w)) @ cw)


# ---------------------------------------------------------------------------
# bit flip

def _exp_fit(ts: np.ndarray, ys: np.ndarray):
    """Fit |y| = A exp(-t/T); returns (T, stderr_T, r2)."""
    ly = np.log(np.abs(ys))
    b, a = np.polyfit(ts, ly, 1)
    p0 = [np.exp(a), -1.0 / min(b, -1e-300)]

    def model(t, A, T):
        return A * np.exp(-t / T)

    popt, pcov = curve_fit(model, ts, ys, p0=p0, maxfev=20000)
    resid = ys - model(ts, *popt)
    ss_tot = np.sum((ys - ys.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 0.0
    return popt[1], float(np.sqrt(pcov[1, 1])), float(r2)


def bit_flip_time(params: lv.ModelParams, lobe_index: int = 0,
                  spec: lv.Spectrum | None = None,
                  manifold=None, gap_cutoff: float = 1e3,
                  n_points: int = 400) -> FitResult:
    """Decay time of a lobe's <a> toward the steady state.

    Beyond ``gap_cutoff`` (in 1/gamma1) the direct fit is replaced by the
    spectral-gap value 1/|Re lambda_2|, which the fit reproduces wherever
    both are feasible.
    """
    n = params.n
    if spec is None:
        spec = lv.spectrum(params, k=n + 2)
    tau = spec.lifetimes
    tau2 = tau[1]
    if not np.isfinite(tau2):
        raise SolverFailure("lambda_2 is in the zero cluster; no relaxation scale")
    if tau2 > gap_cutoff:
        return FitResult(value=float(tau2), stderr=0.0, r_squared=1.0,
                         model="spectral-gap", gap_time=float(tau2))
    if manifold is None:
        manifold = metastability.extreme_metastable_states(spec, n, params)
    rho0 = manifold.states[lobe_index]
    a = fock.annihilation(params.dim)
    t_end = 6.0 * tau2
    ts = np.linspace(0.0, t_end, n_points)
    series = expectation_series(params, rho0, a, ts)        # Re <a>(t)
    y = expectation_series(params, rho0, -1j * a, ts)        # Im <a>(t)
    if np.max(np.abs(y)) < 1e-9 * max(1.0, np.max(np.abs(series))):
        y = series  # documented fallback: use Re<a> when Im<a> vanishes
    t_start = tau[n] if len(tau) > n and np.isfinite(tau[n]) else 0.0
    y0 = np.interp(t_start, ts, y)
    mask = (ts >= t_start) & (np.abs(y) > 1e-3 * abs(y0))
    if mask.sum() < 8:
        raise WindowError("bit-flip fit window has too few samples")
    T, dT, r2 = _exp_fit(ts[mask], y[mask])
    return FitResult(value=float(T), stderr=dT, r_squared=r2,
                     model="exponential", gap_time=float(tau2),
                     window=(float(t_start), float(ts[mask][-1])))


def bit_flip_scale_factor(points) -> FitResult:
    """K from T_bf = x K^<n>: log10 least squares on (nbar, T) pairs."""
    pts = np.asarray(points, float)
    if pts.shape[0] < 4:
        raise ValueError("need at least 4 sweep points")
    if np.any(pts[:, 1] <= 0):
        raise ValueError("bit-flip times must be positive")
    return _log10_slope_fit(pts[:, 0], np.log10(pts[:, 1]))


def _log10_slope_fit(x: np.ndarray, ly: np.ndarray) -> FitResult:
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    b, a = coef
    dof = max(len(x) - 2, 1)
    resid = ly - A @ coef
    s2 = np.sum(resid**2) / dof
    cov_b = s2 / np.sum((x - x.mean()) ** 2)
    K = 10.0**b
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(value=float(K), stderr=float(np.log(10) * K * np.sqrt(cov_b)),
                     r_squared=float(r2), model="linear", intercept=float(a))


# ---------------------------------------------------------------------------
# phase flip

def phase_flip_rate(params: lv.ModelParams, mu_sector: int = 0,
                    lobes: observables.LobeParams | None = None,
                    t_start: float = 0.0, n_points: int = 400,
                    t_end: float | None = None) -> FitResult:
    """Dephasing rate from the sector-projector decay of an n-cat state.

    Fits <P_mu>(t) to [(n-1) exp(-Gamma t) + 1]/n.  The default initial
    state is the cat of coherent lobes whose photon number matches the
    steady state, exactly the protocol's "<n> = ..." cat.
    """
    n, dim = params.n, params.dim
    if lobes is None:
        rho_ss = lv.steady_states(params, check=False)[0]
        r0 = float(np.sqrt(observables.mean_photon(rho_ss)))
        lobes = observables.lobe_param_set(params, r0, 0.0)
    sp = [fock.SqueezedStateParams(lobes.r * np.exp(1j * th),
                                   lobes.s * np.exp(1j * ph))
          for th, ph in zip(lobes.thetas, lobes.phi_xis)]
    cat = fock.cat_states(sp, dim)[mu_sector]
    rho0 = np.outer(cat, cat.conj())
    P = fock.sector_projector(mu_sector, n, dim)

    if t_end is None:
        t_end = 2.5 / (2.0 * max(observables.mean_photon(rho0), 1.0)
                       * max(params.gamma1, params.gamma_m))
    floor = 1.0 / n
    for _ in range(6):
        ts = np.linspace(t_start, t_start + t_end, n_points)
        pmu = expectation_series(params, rho0, P, ts)
        drop = (pmu[-1] - floor) / max(pmu[0] - floor, 1e-300)
        if drop < 0.005:
            break
        t_end *= 4.0
    if pmu[0] < (1.0 + (n - 1) * np.exp(-1.0)) / n:
        raise WindowError(
            f"<P_mu> = {pmu[0]:.3f} at the window start; decay already happened"
        )
    # trim the tail where the model signal is below 1e-3 of its initial value
    keep = (pmu - floor) > 1e-3 * (pmu[0] - floor)
    last = np.argmin(keep) if not keep.all() else len(ts)
    ts_f, pmu_f = ts[:max(last, 16)], pmu[:max(last, 16)]

    def model(t, G):
        return ((n - 1) * np.exp(-G * t) + 1.0) / n

    popt, pcov = curve_fit(model, ts_f, pmu_f, p0=[1.0 / (0.3 * t_end)],
                           maxfev=20000)
    resid = pmu_f - model(ts_f, *popt)
    ss_tot = np.sum((pmu_f - pmu_f.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 0.0
    return FitResult(value=float(popt[0]), stderr=float(np.sqrt(pcov[0, 0])),
                     r_squared=float(r2), model="sector-decay",
                     window=(float(ts_f[0]), float(ts_f[-1])))


def phase_flip_slope(points) -> FitResult:
    """Slope y of Gamma_pf = x + y <n> from a linear fit."""
    pts = np.asarray(points, float)
    if pts.shape[0] < 3:
        raise ValueError("need at least 3 sweep points")
    x, y = pts[:, 0], pts[:, 1]
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(x) - 2, 1)
    cov_slope = np.sum(resid**2) / dof / np.sum((x - x.mean()) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(value=float(coef[0]), stderr=float(np.sqrt(cov_slope)),
                     r_squared=float(r2), model="linear",
                     intercept=float(coef[1]))


# ---------------------------------------------------------------------------
# quantum-jump trajectories

@dataclass
class TrajectoryRecord:
    """One quantum-jump unravelling: jumps plus sampled normalized states."""

    seed: int
    jump_times: np.ndarray
    jump_channels: np.ndarray    # photon order of the jump: 1 or m
    sample_times: np.ndarray
    states: np.ndarray           # (n_samples, dim), normalized


def _propagator_ladder(H_eff: np.ndarray, delta: float, depth: int):
    """[U(delta), U(delta/2), ..., U(delta/2^depth)] by repeated squaring."""
    ladder = [None] * (depth + 1)
    ladder[depth] = expm(-1j * H_eff * (delta / 2.0 ** depth))
    for j in range(depth - 1, -1, -1):
        ladder[j] = ladder[j + 1] @ ladder[j + 1]
    return ladder


def mc_trajectory(psi0: np.ndarray, params: lv.ModelParams, t_max: float,
                  seed: int, sample_times=None,
                  propagator_cache: dict | None = None) -> TrajectoryRecord:
    """Monte Carlo wave-function trajectory with jump operators
    sqrt(gamma1) a and sqrt(gamma_m) a^m.

    Propagation between jumps uses the exact matrix exponential of the
    non-Hermitian effective Hamiltonian on a dyadic ladder: the norm is
    monitored on a micro-grid whose step adapts to the instantaneous jump
    rate, and every crossing of the jump threshold is located by bisection
    through precomputed square-root powers of the propagator, to better
    than 1e-6 t_max.  Deterministic for a fixed seed; ``propagator_cache``
    lets an ensemble share the exponentials.
    """
    dim = params.dim
    psi = np.asarray(psi0, complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    if sample_times is None:
        sample_times = np.linspace(0.0, t_max, 201)
    sample_times = np.asarray(sample_times, float)

    a = fock.annihilation(dim)
    jumps = []
    if params.gamma1 > 0:
        jumps.append((params.gamma1, a, 1))
    if params.gamma_m > 0:
        jumps.append((params.gamma_m,
                      np.linalg.matrix_power(a, params.m), params.m))
    H_eff = lv.hamiltonian(params) - 0.5j * sum(
        g * (O.conj().T @ O) for g, O, _ in jumps
    )
    rate_ops = [(g, O) for g, O, _ in jumps]
    if propagator_cache is None:
        propagator_cache = {}

    rng = np.random.default_rng(seed)
    states = np.zeros((len(sample_times), dim), complex)
    jump_times, jump_channels = [], []
    dissipative = bool(jumps)
    r = rng.random() if dissipative else -1.0

    def do_jump(phi, t_jump):
        nonlocal r
        weights = np.array([g * np.linalg.norm(O @ phi) ** 2
                            for g, O, _ in jumps])
        if weights.sum() <= 0:
            raise SolverFailure(f"no jump channel available at t = {t_jump:.4g}")
        ch = int(rng.choice(len(jumps), p=weights / weights.sum()))
        out = jumps[ch][1] @ phi
        out = out / np.linalg.norm(out)
        jump_times.append(t_jump)
        jump_channels.append(jumps[ch][2])
        r = rng.random()
        return out

    n_grid = max(len(sample_times) - 1, 1)
    seg = t_max / n_grid

    def step_chunk(phi_in, ladder, delta, j, t_off, depth):
        """Advance across a chunk of width delta / 2^j starting at t_off,
        resolving any threshold crossings inside it."""
        phi = ladder[j] @ phi_in
        if not dissipative or np.real(np.vdot(phi, phi)) > r:
            return phi
        if j == depth:
            return do_jump(phi, t_off + delta / 2.0 ** depth)
        half = delta / 2.0 ** (j + 1)
        phi_mid = step_chunk(phi_in, ladder, delta, j + 1, t_off, depth)
        return step_chunk(phi_mid, ladder, delta, j + 1, t_off + half, depth)

    # samples sit on the segment grid exactly for uniform sample_times
    sample_map: dict[int, list[int]] = {}
    for i_s, t_s in enumerate(sample_times):
        sample_map.setdefault(int(round(t_s / seg)), []).append(i_s)

    states[sample_map.get(0, ())] = psi / np.linalg.norm(psi)
    for i_seg in range(n_grid):
        # pick the micro-step from the current decay rate; power-of-two
        # substep counts keep the propagator cache small
        rate = sum(g * np.linalg.norm(O @ psi) ** 2
                   for g, O in rate_ops) / max(np.vdot(psi, psi).real, 1e-300)
        need = seg * max(rate, 1e-12) / 0.15
        substeps = int(2 ** np.clip(np.ceil(np.log2(max(need, 1.0))), 0, 22))
        delta = seg / substeps
        depth = max(1, int(np.ceil(np.log2(max(delta / (1e-6 * t_max), 2.0)))))
        key = (substeps, depth)
        if key not in propagator_cache:
            propagator_cache[key] = _propagator_ladder(H_eff, delta, depth)
        ladder = propagator_cache[key]
        for k in range(substeps):
            psi = step_chunk(psi, ladder, delta, 0, i_seg * seg + k * delta,
                             depth)
        for i_s in sample_map.get(i_seg + 1, ()):
            states[i_s] = psi / np.linalg.norm(psi)

    return TrajectoryRecord(
        seed=seed,
        jump_times=np.array(jump_times),
        jump_channels=np.array(jump_channels, int),
        sample_times=sample_times,
        states=states,
    )


def trajectory_expectation(record: TrajectoryRecord, op: np.ndarray) -> np.ndarray:
    """<op>(t) along one trajectory."""
    return np.real(np.einsum("ti,ij,tj->t", record.states.conj(), op,
                             record.states))


def ensemble_mean_photon(records, dim: int) -> np.ndarray:
    nop = np.diag(np.arange(dim, dtype=float))
    return np.mean([trajectory_expectation(r, nop) for r in records], axis=0)
