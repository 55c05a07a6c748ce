import json
import hashlib
from pathlib import Path

import numpy as np
import pytest

from nmcat import cli
from nmcat import serialize
from nmcat import liouvillian as lv


def run(args):
    rc = cli.main(args)
    assert rc == 0, f"command failed: {args}"


def read_manifest(outdir):
    with open(Path(outdir) / "manifest.json") as fh:
        return json.load(fh)


def test_spectrum_run_and_manifest(tmp_path):
    out = tmp_path / "spec"
    run(["spectrum", "--nm", "2,3", "--nss", "3,4,5,6", "--dim", "26",
         "--k", "4", "--out", str(out)])
    man = read_manifest(out)
    assert man["experiment"] == "spectrum"
    names = {f["path"] for f in man["files"]}
    assert {"spectrum.csv", "gap_ratio.csv", "scale_factor.json"} <= names
    for f in man["files"]:
        digest = hashlib.sha256((out / f["path"]).read_bytes()).hexdigest()
        assert digest == f["sha256"]
    body = (out / "gap_ratio.csv").read_text().splitlines()
    assert any(line.startswith("# l = 2") for line in body)
    data = [l for l in body if not l.startswith("#")]
    assert data[0] == "n_ss,ratio"
    assert len(data) == 5


def test_spectrum_determinism(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        run(["spectrum", "--nm", "2,3", "--nss", "4", "--dim", "24",
             "--k", "3", "--seed", "5", "--out", str(out)])
        outs.append((out / "spectrum.csv").read_bytes())
    assert outs[0] == outs[1]


def test_steady_and_serialize_roundtrip(tmp_path):
    out = tmp_path / "steady"
    run(["steady", "--nm", "2,2", "--nss", "4", "--dim", "26", "--out", str(out)])
    payload = serialize.load(out / "steady_state_0_0.json")
    rho = serialize.matrix_from_json(payload)
    assert rho.shape == (26, 26)
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-9)


def test_wigner_run(tmp_path):
    # (2,3) steady states are sub-Poissonian and compact, so the auto grid
    # captures the full Wigner mass
    out = tmp_path / "wig"
    run(["wigner", "--nm", "2,3", "--nss", "6", "--points", "41",
         "--out", str(out)])
    lines = (out / "wigner.csv").read_text().splitlines()
    meta = {l.split("=")[0].strip("# "): l.split("=")[1].strip()
            for l in lines if l.startswith("#")}
    assert int(meta["nx"]) == 41
    assert abs(float(meta["integral"]) - 1.0) < 1e-3


def test_mandel_run(tmp_path):
    out = tmp_path / "mandel"
    run(["mandel", "--nm", "2,3", "--nss", "4,6", "--dim", "30", "--out", str(out)])
    rows = [l for l in (out / "mandel.csv").read_text().splitlines()
            if not l.startswith("#")][1:]
    assert len(rows) == 2
    assert all(float(r.split(",")[-1]) < 0 for r in rows)  # sub-Poissonian


def test_meanfield_run(tmp_path):
    out = tmp_path / "mf"
    run(["meanfield", "--nm", "2,2", "--nss", "4,6,8", "--dim", "30",
         "--out", str(out)])
    rows = [l for l in (out / "eta_map.csv").read_text().splitlines()
            if not l.startswith("#")][1:]
    etas = [float(r.split(",")[1]) for r in rows]
    assert etas == sorted(etas)


def test_qam_run(tmp_path):
    out = tmp_path / "qam"
    run(["qam", "--nm", "2,2", "--nss", "4", "--dim", "26",
         "--realizations", "4", "--seed", "9", "--out", str(out)])
    summ = serialize.load(out / "qam_summary.json")
    assert len(summ["points"]) == 1
    assert summ["points"][0]["n_realizations"] == 4
    rows = [l for l in (out / "qam_outcomes_0.csv").read_text().splitlines()
            if not l.startswith("#")][1:]
    assert len(rows) == 4


def test_bitflip_run(tmp_path):
    out = tmp_path / "bf"
    run(["bitflip", "--nm", "2,3", "--nss", "4,5,6,7", "--dim", "30",
         "--out", str(out)])
    scale = serialize.load(out / "bitflip_scale.json")
    assert scale["K"] > 1.0


def test_phaseflip_run(tmp_path):
    # plumbing smoke test; the physics (slope ~ 2 per photon) is asserted in
    # the acceptance suite at the paper's sweep range
    out = tmp_path / "pf"
    run(["phaseflip", "--nm", "2,2", "--nss", "4,6,8", "--dim", "34",
         "--out", str(out)])
    slope = serialize.load(out / "phaseflip_slope.json")
    assert slope["slope"] > 0
    rows = [l for l in (out / "phaseflip.csv").read_text().splitlines()
            if not l.startswith("#")][1:]
    assert len(rows) == 3
    assert all(float(r.split(",")[3]) > 0 for r in rows)


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        "[experiment]\nkind = 'mandel'\nseed = 2\n"
        f"out = '{tmp_path / 'cfgout'}'\n"
        "[model]\nn = 2\nm = 3\ndim = 28\n"
        "[sweep]\nnss = [4.0]\n"
    )
    run(["mandel", "--config", str(cfg), "--nss", "5"])
    rows = [l for l in (tmp_path / "cfgout" / "mandel.csv").read_text().splitlines()
            if not l.startswith("#")][1:]
    assert len(rows) == 1
    assert float(rows[0].split(",")[2]) == pytest.approx(5.0)  # override won


def test_unknown_config_key_fails(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[model]\nbogus = 1\n")
    rc = cli.main(["mandel", "--config", str(cfg), "--out", str(tmp_path / "x")])
    assert rc == 1


def test_error_emits_machine_readable_json(tmp_path):
    out = tmp_path / "err"
    rc = cli.main(["spectrum", "--nm", "0,3", "--out", str(out)])
    assert rc == 1
    payload = serialize.load(out / "error.json")
    assert payload["error"] == "ValueError"


def test_spectrum_serialization_roundtrip():
    p = lv.ModelParams(n=2, m=2, eta_n=0.6, dim=12)
    spec = lv.spectrum(p, k=4)
    back = serialize.spectrum_from_json(serialize.spectrum_to_json(spec))
    assert np.allclose(back.eigenvalues, spec.eigenvalues)
    assert np.allclose(back.right_modes, spec.right_modes)
    assert np.allclose(back.left_modes, spec.left_modes)
    assert back.sectors == spec.sectors
