import numpy as np
import pytest

from nmcat import dynamics
from nmcat import fock
from nmcat import observables as obs
from nmcat import liouvillian as lv
from nmcat.errors import WindowError


def coherent_rho(alpha, dim):
    psi = fock.coherent(alpha, dim)
    return np.outer(psi, psi.conj())


def test_evolve_identity_at_t0():
    p = lv.ModelParams(n=2, m=2, eta_n=0.5, dim=12)
    rho0 = coherent_rho(1.0, 12)
    out = dynamics.evolve(rho0, p, [0.0])
    assert np.max(np.abs(out[0] - rho0)) < 1e-12


def test_evolve_asymptotic_steady_state():
    p = lv.ModelParams(n=2, m=2, eta_n=0.8, dim=16)
    spec = lv.spectrum(p, k=16 * 16, use_blocks=False)
    rho0 = coherent_rho(0.5, 16)
    tau2 = spec.lifetimes[1]
    out = dynamics.evolve(rho0, p, [50.0 * tau2], spec=spec)
    rho_ss = lv.steady_states(p, check=False)[0]
    assert np.max(np.abs(out[0] - rho_ss)) < 1e-6


def test_evolve_unitary_limit_preserves_purity():
    p = lv.ModelParams(n=2, m=2, eta_n=0.4, dim=14,
                       gamma1=0.0, gamma_m=1e-14)
    rho0 = coherent_rho(0.8, 14)
    out = dynamics.evolve(rho0, p, [0.0, 1.0, 2.0])
    for rho in out:
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-8)
        assert np.trace(rho @ rho).real == pytest.approx(1.0, abs=1e-8)


def test_spectral_and_ode_paths_agree_random_draws():
    rng = np.random.default_rng(11)
    dim = 12
    for _ in range(5):
        p = lv.ModelParams(
            n=int(rng.integers(1, 4)), m=int(rng.integers(1, 4)),
            eta_n=float(rng.uniform(0.1, 1.5)), dim=dim,
            gamma1=float(rng.uniform(0.1, 1.5)),
            gamma_m=float(rng.uniform(0.05, 0.5)),
            delta=float(rng.uniform(-0.5, 0.5)),
        )
        spec = lv.spectrum(p, k=dim * dim, use_blocks=False)
        rho0 = coherent_rho(0.7 + 0.2j, dim)
        ts = [0.0, 0.4, 1.1]
        spectral = dynamics.evolve(rho0, p, ts, spec=spec, method="spectral")
        # the oracle must be tighter than the tolerance being asserted
        ode = dynamics.evolve(rho0, p, ts, method="ode", rtol=1e-11, atol=1e-13)
        assert np.max(np.abs(spectral - ode)) < 1e-8


def test_expectation_series_sector_guard():
    p = lv.ModelParams(n=2, m=3, eta_n=1.0, dim=10)
    rho0 = coherent_rho(0.5, 10)
    mixed_op = fock.annihilation(10) + fock.number_op(10)
    with pytest.raises(ValueError, match="sector"):
        dynamics.expectation_series(p, rho0, mixed_op, np.array([0.0, 0.1]))


def test_bit_flip_spectral_gap_path(cache):
    p = cache.params(2, 3, 9.0, 50)
    fr = dynamics.bit_flip_time(p, spec=cache.spectrum(2, 3, 9.0, 50, k=4))
    assert fr.model == "spectral-gap"
    assert fr.value > 1e3
    assert fr.value == pytest.approx(cache.spectrum(2, 3, 9.0, 50, k=4).lifetimes[1])


def test_bit_flip_fit_matches_gap(cache):
    for (n, m) in ((3, 4), (4, 5)):
        p = cache.params(n, m, 9.0, 50)
        spec = cache.spectrum(n, m, 9.0, 50, k=n + 2)
        fr = dynamics.bit_flip_time(p, spec=spec)
        assert fr.model == "exponential"
        assert fr.r_squared > 0.999
        assert fr.value == pytest.approx(fr.gap_time, rel=0.10)


def test_bit_flip_dim_robustness():
    # spectral-gap bit-flip time stable under a truncation bump (2% tolerance)
    vals = {}
    for dim in (50, 60):
        p = lv.ModelParams(n=2, m=3, eta_n=1.0, dim=dim)
        from nmcat import meanfield
        eta = meanfield.eta_for_photon_number(9.0, p, rel_tol=1e-4).eta
        spec = lv.spectrum(p.with_(eta_n=eta), k=3)
        vals[dim] = spec.lifetimes[1]
    assert vals[60] == pytest.approx(vals[50], rel=0.02)


def test_bit_flip_scale_factor_synthetic():
    x = np.array([4.0, 6.0, 8.0, 10.0])
    fit = dynamics.bit_flip_scale_factor(np.stack([x, 2.0 * 3.0**x], axis=1))
    assert fit.value == pytest.approx(3.0, abs=1e-10)
    with pytest.raises(ValueError):
        dynamics.bit_flip_scale_factor([(1.0, 2.0), (2.0, 3.0)])


def test_phase_flip_model_asymptotes():
    # the sector-decay model anchors at 1 for t = 0 and 1/n for t -> inf
    for n in (2, 3, 4):
        model0 = ((n - 1) * np.exp(-0.0) + 1) / n
        model_inf = ((n - 1) * np.exp(-50.0) + 1) / n
        assert model0 == pytest.approx(1.0)
        assert model_inf == pytest.approx(1.0 / n, abs=1e-12)


def test_phase_flip_rate_23(cache):
    p = cache.params(2, 3, 9.0, 50)
    fr = dynamics.phase_flip_rate(p)
    assert fr.model == "sector-decay"
    assert fr.r_squared > 0.99
    assert fr.value == pytest.approx(312.7, rel=0.02)


def test_phase_flip_window_too_late(cache):
    p = cache.params(2, 3, 9.0, 50)
    with pytest.raises(WindowError):
        dynamics.phase_flip_rate(p, t_start=1.0)


def test_phase_flip_mixed_initial_state_rejected(cache):
    # a fully sector-mixed state shows no decay; the fit has r^2 ~ 0
    p = cache.params(2, 2, 6.0, 40)
    rho_ss = cache.steady(2, 2, 6.0, 40)
    P0 = fock.sector_projector(0, 2, 40)
    ts = np.linspace(0, 1.0, 50)
    series = dynamics.expectation_series(p, rho_ss, P0, ts)
    assert np.max(np.abs(series - series[0])) < 1e-8


def test_phase_flip_slope_synthetic():
    pts = [(4.0, 9.0), (6.0, 13.0), (8.0, 17.0), (10.0, 21.0)]
    fit = dynamics.phase_flip_slope(pts)
    assert fit.value == pytest.approx(2.0, abs=1e-12)
    assert fit.intercept == pytest.approx(1.0, abs=1e-12)


def test_trajectory_unitary_limit_matches_schroedinger():
    from scipy.linalg import expm

    dim = 20
    p = lv.ModelParams(n=2, m=2, eta_n=0.5, dim=dim,
                       gamma1=0.0, gamma_m=1e-300)
    psi0 = fock.coherent(1.0, dim)
    ts = np.linspace(0.0, 2.0, 9)
    rec = dynamics.mc_trajectory(psi0, p, 2.0, seed=5, sample_times=ts)
    assert len(rec.jump_times) == 0
    H = lv.hamiltonian(p)
    for i, t in enumerate(ts):
        direct = expm(-1j * H * t) @ psi0
        overlap = abs(np.vdot(direct, rec.states[i]))
        assert overlap == pytest.approx(1.0, abs=1e-8)


def test_trajectory_decay_ensemble_matches_exponential():
    # pure single-photon loss: <n>(t) = n0 e^{-t} for coherent input
    dim = 16
    p = lv.ModelParams(n=1, m=1, eta_n=0.0, dim=dim,
                       gamma1=0.0, gamma_m=1.0, delta=0.0)
    psi0 = fock.coherent(1.5, dim)
    ts = np.linspace(0.0, 1.5, 16)
    recs = [dynamics.mc_trajectory(psi0, p, 1.5, seed=s, sample_times=ts)
            for s in range(300)]
    mean_n = dynamics.ensemble_mean_photon(recs, dim)
    expect = 2.25 * np.exp(-ts)
    stderr = 2.25 / np.sqrt(300)
    assert np.max(np.abs(mean_n - expect)) < 4 * stderr


def test_trajectory_determinism():
    dim = 14
    p = lv.ModelParams(n=2, m=2, eta_n=1.0, dim=dim)
    psi0 = fock.coherent(1.2, dim)
    r1 = dynamics.mc_trajectory(psi0, p, 1.0, seed=42)
    r2 = dynamics.mc_trajectory(psi0, p, 1.0, seed=42)
    assert np.array_equal(r1.jump_times, r2.jump_times)
    assert np.array_equal(r1.states, r2.states)


def test_trajectory_jump_channels_recorded():
    dim = 20
    p = lv.ModelParams(n=2, m=2, eta_n=1.5, dim=dim)
    psi0 = fock.coherent(2.0, dim)
    rec = dynamics.mc_trajectory(psi0, p, 4.0, seed=3)
    assert len(rec.jump_times) > 0
    assert np.all(np.diff(rec.jump_times) > 0)
    assert set(np.unique(rec.jump_channels)) <= {1, 2}


def test_trajectory_ensemble_convergence_slope():
    # |ensemble - master equation| ~ N^{-1/2}
    dim = 12
    p = lv.ModelParams(n=2, m=2, eta_n=0.8, dim=dim)
    psi0 = fock.coherent(1.3, dim)
    ts = np.linspace(0.0, 1.0, 9)
    rho0 = np.outer(psi0, psi0.conj())
    ref_states = dynamics.evolve(rho0, p, ts)
    nop = fock.number_op(dim)
    ref = np.array([np.trace(nop @ r).real for r in ref_states])
    total = 512
    recs = [dynamics.mc_trajectory(psi0, p, 1.0, seed=s, sample_times=ts)
            for s in range(total)]
    series = np.array([dynamics.trajectory_expectation(r, nop) for r in recs])
    # disjoint batches per size keep the error estimates independent enough
    # for a clean slope; the largest size still leaves 4 batches to average
    sizes = [8, 32, 128]
    errs = []
    for N in sizes:
        batch_errs = [
            np.sqrt(np.mean((series[i:i + N].mean(axis=0) - ref) ** 2))
            for i in range(0, total, N)
        ]
        errs.append(np.mean(batch_errs))
    slope = np.polyfit(np.log(sizes), np.log(errs), 1)[0]
    assert -0.6 <= slope <= -0.4


def test_validate_density():
    rho = coherent_rho(1.0, 10)
    dynamics.validate_density(rho)
    with pytest.raises(ValueError):
        dynamics.validate_density(2 * rho)
