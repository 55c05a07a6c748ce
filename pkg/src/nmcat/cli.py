"""Experiment orchestration: subcommands per figure-level experiment, seeded
sweeps, CSV/JSON emission, and run manifests.

Every run writes its artifacts plus ``manifest.json`` recording the resolved
parameters, the code version, and a SHA-256 per emitted file.  CSV files
carry ``#``-prefixed metadata lines before the header row.  Outputs are
deterministic for a fixed seed.

Configuration may come from a TOML file (``--config``); command-line flags
override file values, which override defaults.  Schema::

    [experiment]          # kind, seed, out, workers
    [model]               # n, m, gamma1, gamma_m, delta, theta0, dim, eta
    [sweep]               # nss = [ ... ]
    [spectrum]            # k
    [wigner]              # points, extent
    [qam]                 # realizations, window_cap
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import dynamics
from . import meanfield
from . import metastability
from . import observables
from . import qam as qam_mod
from . import serialize
from . import liouvillian as lv

KINDS = ("spectrum", "steady", "wigner", "mandel", "quadrature", "bitflip",
         "phaseflip", "qam", "meanfield", "ep-scan")


@dataclass
class ExperimentConfig:
    kind: str
    n: int = 2
    m: int = 3
    gamma1: float = 1.0
    gamma_m: float = 0.2
    delta: float = 0.4
    theta0: float = 0.0
    dim: int | None = None
    eta: float | None = None
    nss: list = field(default_factory=lambda: [9.0])
    seed: int = 0
    out: str = "runs/out"
    workers: int = 1
    k: int = 8
    realizations: int = 100
    window_cap: float = 20.0
    wigner_points: int = 121
    wigner_extent: float | None = None

    def validate(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")


def auto_dim(n_ss: float, wide: bool = False) -> int:
    """Fock truncation heuristic; ``wide`` doubles the reach for protocols
    whose initial states range up to 2 <n>."""
    base = 2.0 * n_ss if wide else n_ss
    return max(28, int(np.ceil(base + 6.0 * np.sqrt(base) + 10)))


def _load_toml(path: str) -> dict:
    try:
        import tomllib  # py >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


_SECTION_KEYS = {
    "experiment": {"kind", "seed", "out", "workers"},
    "model": {"n", "m", "gamma1", "gamma_m", "delta", "theta0", "dim", "eta"},
    "sweep": {"nss"},
    "spectrum": {"k"},
    "wigner": {"points", "extent"},
    "qam": {"realizations", "window_cap"},
}


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig(kind=args.kind)
    if getattr(args, "config", None):
        raw = _load_toml(args.config)
        for section, keys in _SECTION_KEYS.items():
            for key, val in raw.get(section, {}).items():
                if key not in keys:
                    raise ValueError(f"unknown config key [{section}] {key}")
                attr = {"points": "wigner_points", "extent": "wigner_extent"}.get(key, key)
                setattr(cfg, attr, val)
    for attr in ("seed", "out", "workers", "dim", "eta", "k",
                 "realizations", "window_cap", "wigner_points", "wigner_extent"):
        val = getattr(args, attr, None)
        if val is not None:
            setattr(cfg, attr, val)
    if getattr(args, "nm", None):
        n, m = (int(x) for x in args.nm.split(","))
        cfg.n, cfg.m = n, m
    if getattr(args, "gamma1", None) is not None:
        cfg.gamma1 = args.gamma1
    if getattr(args, "nss", None):
        cfg.nss = [float(x) for x in args.nss.split(",")]
    cfg.validate()
    return cfg


def resolve_point(cfg: ExperimentConfig, n_ss: float, wide: bool = False):
    """(params, achieved n_ss) at one sweep point: dim rule plus eta
    calibration against the exact steady state."""
    dim = cfg.dim or auto_dim(n_ss, wide=wide)
    base = lv.ModelParams(n=cfg.n, m=cfg.m, eta_n=1.0, dim=dim,
                          gamma1=cfg.gamma1, gamma_m=cfg.gamma_m,
                          delta=cfg.delta, theta0=cfg.theta0)
    if cfg.eta is not None:
        p = base.with_(eta_n=cfg.eta)
        return p, meanfield.mean_photon_ss(p)
    res = meanfield.eta_for_photon_number(n_ss, base, rel_tol=1e-3)
    return base.with_(eta_n=res.eta), res.n_ss


# ---------------------------------------------------------------------------
# emission helpers

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def write_csv(path: Path, meta: dict, header: list, rows) -> Path:
    with open(path, "w") as fh:
        for key in sorted(meta):
            fh.write(f"# {key} = {_fmt(meta[key])}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    return path


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_manifest(outdir: Path, cfg: ExperimentConfig, files: list[Path]) -> Path:
    manifest = {
        "experiment": cfg.kind,
        "version": __version__,
        "seed": cfg.seed,
        "params": {
            "n": cfg.n, "m": cfg.m, "gamma1": cfg.gamma1,
            "gamma_m": cfg.gamma_m, "delta": cfg.delta, "theta0": cfg.theta0,
            "dim": cfg.dim, "eta": cfg.eta, "nss": cfg.nss,
        },
        "files": [
            {"path": f.name, "sha256": _sha256(f)} for f in sorted(files)
        ],
    }
    path = outdir / "manifest.json"
    serialize.dump(manifest, path)
    return path


def _sweep(cfg: ExperimentConfig, fn):
    """Run fn(n_ss) over the sweep, preserving order regardless of workers."""
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(fn, cfg.nss))
    return [fn(nb) for nb in cfg.nss]


def _meta(cfg: ExperimentConfig) -> dict:
    return {"n": cfg.n, "m": cfg.m, "gamma1": cfg.gamma1,
            "gamma_m": cfg.gamma_m, "delta": cfg.delta,
            "theta0": cfg.theta0, "seed": cfg.seed, "version": __version__}


# ---------------------------------------------------------------------------
# experiment runners

def run_spectrum(cfg: ExperimentConfig, outdir: Path) -> list[Path]:
    eig_rows, ratio_rows = [], []

    def point(nb):
        p, got = resolve_point(cfg, nb)
        spec = lv.spectrum(p, k=cfg.k)
        return p, got, spec

    for (p, got, spec) in _sweep(cfg, point):
        for j, lam in enumerate(spec.eigenvalues):
            eig_rows.append((got, p.eta_n, p.dim, j + 1, lam.real, lam.imag,
                             str(spec.sectors[j])))
        try:
            ratio_rows.append((got, metastability.gap_ratio(spec, cfg.n)))
        except ValueError:
            pass
    files = [
        write_csv(outdir / "spectrum.csv", _meta(cfg),
                  ["n_ss", "eta", "dim", "j", "re_lambda", "im_lambda", "sector"],
                  eig_rows),
        write_csv(outdir / "gap_ratio.csv", _meta(cfg) | {"l": cfg.n},
                  ["n_ss", "ratio"], ratio_rows),
    ]
    if len(ratio_rows) >= 4:
        fit = metastability.scale_factor_fit(ratio_rows)
        path = outdir / "scale_factor.json"
        serialize.dump({"k": fit.value, "stderr": fit.stderr,
                        "r_squared": fit.r_squared}, path)
        files.append(path)
    return files


def run_steady(cfg: ExperimentConfig, outdir: Path) -> list[Path]:
    rows, files = [], []
    for i, nb in enumerate(cfg.nss):
        p, got = resolve_point(cfg, nb)
        for j, rho in enumerate(lv.steady_states(p)):
            path = outdir / f"steady_state_{i}_{j}.json"
            serialize.dump(serialize.matrix_to_json(rho), path)
            files.append(path)
            vmin, phimin = observables.min_quadrature_variance(rho)
            rows.append((got, p.eta_n, p.dim, j, observables.mean_photon(rho),
                         observables.mandel_q(rho), vmin, phimin))
    files.append(write_csv(outdir / "steady_observables.csv", _meta(cfg),
                           ["n_ss_target", "eta", "dim", "state", "n_ss",
                            "mandel_q", "var_min", "phi_min"], rows))
    return files


def wigner_dim(n_ss: float) -> int:
    """Truncation for faithful phase-space rendering: the grid corner
    displacement must stay well inside the cutoff."""
    k_hi = n_ss + 5.0 * np.sqrt(n_ss + 1.0)
    reach = np.sqrt(2.0 * k_hi + 1.0) + 2.5
    return int(np.ceil(reach**2 / 0.7))


def run_wigner(cfg: ExperimentConfig, outdir: Path) -> list[Path]:
    # phase-space rendering needs headroom beyond the state support
    cfg_w = cfg if cfg.dim else ExperimentConfig(**{**cfg.__dict__})
    if cfg_w.dim is None:
        cfg_w.dim = wigner_dim(cfg.nss[0])
    p, got = resolve_point(cfg_w, cfg.nss[0])
    rho = lv.steady_states(p)[0]
    if cfg.wigner_extent:
        xs = np.linspace(-cfg.wigner_extent, cfg.wigner_extent, cfg.wigner_points)
        ps = xs.copy()
    else:
        xs, ps = observables.auto_grid(rho, points=cfg.wigner_points)
    grid = observables.wigner(rho, xs, ps)
    rows = [
        (xs[j], ps[i], grid.values[i, j])
        for i in range(len(ps)) for j in range(len(xs))
    ]
    meta = _meta(cfg) | {"n_ss": got, "eta": p.eta_n, "dim": p.dim,
                         "nx": len(xs), "ny": len(ps),
                         "integral": grid.integral()}
    return [write_csv(outdir / "wigner.csv", meta, ["x", "p", "w"], rows)]


def run_mandel(cfg: ExperimentConfig, outdir: Path) -> list[Path]:
    def point(nb):
        p, got = resolve_point(cfg, nb)
        rho = lv.steady_states(p, check=False)[0]
        return (cfg.n, cfg.m, nb, got, p.eta_n, p.dim, observables.mandel_q(rho))

    rows = _sweep(cfg, point)
    return [write_csv(outdir / "mandel.csv", _meta(cfg),
                      ["n", "m", "n_ss_target", "n_ss", "eta", "dim", "mandel_q"],
                      rows)]


def run_quadrature(cfg: ExperimentConfig, outdir: Path) -> list[Path]:
    def point(nb):
        p, got = resolve_point(cfg, nb)
        spec = lv.spectrum(p, k=cfg.n + 2)
        man = metastability.extreme_metastable_states(spec, cfg.n, p,
                                                      threshold=1.0)
        vmins, phis = zip(*(observables.min_quadrature_variance(mu)
                            for mu in man.states))
        rho = spec.right_modes[0]
        lobes, fid = observables.fit_lobe_params(rho, p)
        var_fit = np.exp(-2.0 * lobes.s) / 4.0
        return (got, p.eta_n, p.dim, float(np.mean(vmins)), phis[0],
                observables.variance_to_db(float(np.mean(vmins))),
                lobes.r, lobes.s, var_fit, fid)

    rows = _sweep(cfg, point)
    return [write_csv(outdir / "quadrature.csv", _meta(cfg),
                      ["n_ss", "eta", "dim", "var_min", "phi_min_lobe0", "db",
                       "r_fit", "s_fit", "var_fit", "fidelity"], rows)]


def run_bitflip(cfg: ExperimentConfig, outdir: Path) -> list[Path]:
    def point(nb):
        p, got = resolve_point(cfg, nb)
        fr = dynamics.bit_flip_time(p)
        return (got, p.eta_n, p.dim, fr.value, fr.stderr, fr.r_squared,
                fr.model, fr.gap_time)

    rows = _sweep(cfg, point)
    files = [write_csv(outdir / "bitflip.csv", _meta(cfg),
                       ["n_ss", "eta", "dim", "t_bf", "stderr", "r_squared",
                        "model", "t_gap"], rows)]
    if len(rows) >= 4:
        fit = dynamics.bit_flip_scale_factor([(r[0], r[3]) for r in rows])
        path = outdir / "bitflip_scale.json"
        serialize.dump({"K": fit.value, "stderr": fit.stderr,
                        "r_squared": fit.r_squared}, path)
        files.append(path)
    return files


def run_phaseflip(cfg: ExperimentConfig, outdir: Path) -> list[Path]:
    def point(nb):
        p, got = resolve_point(cfg, nb)
        fr = dynamics.phase_flip_rate(p)
        return (got, p.eta_n, p.dim, fr.value, fr.stderr, fr.r_squared)

    rows = _sweep(cfg, point)
    files = [write_csv(outdir / "phaseflip.csv", _meta(cfg),
                       ["n_ss", "eta", "dim", "gamma_pf", "stderr",
                        "r_squared"], rows)]
    if len(rows) >= 3:
        fit = dynamics.phase_flip_slope([(r[0], r[3]) for r in rows])
        path = outdir / "phaseflip_slope.json"
        serialize.dump({"slope": fit.value, "stderr": fit.stderr,
                        "intercept": fit.intercept,
                        "r_squared": fit.r_squared}, path)
        files.append(path)
    return files


def run_qam(cfg: ExperimentConfig, outdir: Path) -> list[Path]:
    files, summaries = [], []
    for i, nb in enumerate(cfg.nss):
        p, got = resolve_point(cfg, nb, wide=True)
        outs, summ = qam_mod.run_experiment(
            p, n_realizations=cfg.realizations, seed=cfg.seed,
            window_cap=cfg.window_cap,
        )
        rows = [
            (j, o.seed, o.beta.real, o.beta.imag, o.zeta.real, o.zeta.imag,
             o.k_bar, o.p_success)
            for j, o in enumerate(outs)
        ]
        meta = _meta(cfg) | {"n_ss": got, "eta": p.eta_n, "dim": p.dim,
                             "window_lo": outs[0].window[0],
                             "window_hi": outs[0].window[1]}
        files.append(write_csv(outdir / f"qam_outcomes_{i}.csv", meta,
                               ["idx", "seed", "re_beta", "im_beta",
                                "re_zeta", "im_zeta", "k_bar", "p_success"],
                               rows))
        summaries.append({"n_ss": got, "n": cfg.n, "m": cfg.m} | summ)
    path = outdir / "qam_summary.json"
    serialize.dump({"points": summaries}, path)
    files.append(path)
    return files


def run_meanfield(cfg: ExperimentConfig, outdir: Path) -> list[Path]:
    def point(nb):
        p, got = resolve_point(cfg, nb)
        try:
            R = meanfield.fixed_point_amplitude(p)
            stable = all(pt.stable for pt in meanfield.fixed_points(p))
        except ValueError:
            R, stable = float("nan"), False
        return (nb, p.eta_n, got, R, stable)

    rows = _sweep(cfg, point)
    return [write_csv(outdir / "eta_map.csv", _meta(cfg),
                      ["n_ss_target", "eta", "n_ss", "mf_amplitude",
                       "stable"], rows)]


def run_ep_scan(cfg: ExperimentConfig, outdir: Path) -> list[Path]:
    base = lv.ModelParams(n=cfg.n, m=cfg.m, eta_n=1.0,
                          dim=cfg.dim or auto_dim(max(cfg.nss)),
                          gamma1=cfg.gamma1, gamma_m=cfg.gamma_m,
                          delta=cfg.delta, theta0=cfg.theta0)
    dim_rule = (lambda nb: cfg.dim) if cfg.dim else None
    rows = [
        (r.n_ss, r.eta, r.lam2.real, r.lam2.imag, r.lam3.real, r.lam3.imag,
         r.lam4.real, r.lam4.imag, r.conjugate_pair)
        for r in metastability.exceptional_point_scan(base, cfg.nss,
                                                      dim_rule=dim_rule)
    ]
    return [write_csv(outdir / "ep_scan.csv", _meta(cfg),
                      ["n_ss", "eta", "re_l2", "im_l2", "re_l3", "im_l3",
                       "re_l4", "im_l4", "conjugate_pair"], rows)]


RUNNERS = {
    "spectrum": run_spectrum,
    "steady": run_steady,
    "wigner": run_wigner,
    "mandel": run_mandel,
    "quadrature": run_quadrature,
    "bitflip": run_bitflip,
    "phaseflip": run_phaseflip,
    "qam": run_qam,
    "meanfield": run_meanfield,
    "ep-scan": run_ep_scan,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nmcat",
        description="Driven-dissipative nonlinear oscillator experiments",
    )
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run the {kind} experiment")
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("--nm", help="drive,dissipation degrees, e.g. 2,3")
        sp.add_argument("--nss", help="comma-separated target <n>_ss sweep")
        sp.add_argument("--gamma1", type=float)
        sp.add_argument("--eta", type=float, help="fix eta instead of calibrating")
        sp.add_argument("--dim", type=int, help="Fock truncation override")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--k", type=int, help="number of eigenmodes")
        sp.add_argument("--realizations", type=int)
        sp.add_argument("--window-cap", dest="window_cap", type=float)
        sp.add_argument("--points", dest="wigner_points", type=int)
        sp.add_argument("--extent", dest="wigner_extent", type=float)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        outdir = Path(cfg.out)
        outdir.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            files = RUNNERS[cfg.kind](cfg, outdir)
        write_manifest(outdir, cfg, files)
        return 0
    except Exception as exc:  # surfaced as machine-readable JSON + exit code
        payload = {"error": type(exc).__name__, "message": str(exc)}
        try:
            outdir = Path(getattr(cfg, "out", "."))
            outdir.mkdir(parents=True, exist_ok=True)
            serialize.dump(payload, outdir / "error.json")
        except Exception:
            pass
        print(json.dumps(payload), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
