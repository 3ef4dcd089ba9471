import json
import math

import numpy as np
import pytest
from scipy.linalg import expm

from aahbath import cli, io
from aahbath.bath import bath_snapshot
from aahbath.model import GOLDEN, ModelConfig, build_system_hamiltonian, parse_kv
from aahbath.propagator import propagate


def _data(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


def test_export_round_trip(tmp_path):
    rows = [(0.1, 1, "bound", 1 / 3), (math.pi, -2, "resonance", 1e-300)]
    path = io.export(rows, ("a", "b", "c", "d"), tmp_path / "t.tsv", "abc", {"note": 1.5})
    meta, cols, back = io.read_table(path)
    assert meta == {"cfg_hash": "abc", "note": "1.5"}
    assert cols == ["a", "b", "c", "d"]
    assert [tuple(r) for r in back] == rows
    assert [p.name for p in tmp_path.iterdir()] == ["t.tsv"]


def test_export_empty_and_bad_rows(tmp_path):
    path = io.export([], ("x", "y"), tmp_path / "e.tsv", "h")
    assert path.read_text() == "# cfg_hash = h\nx y\n"
    with pytest.raises(ValueError):
        io.export([(1,)], ("x", "y"), tmp_path / "bad.tsv", "h")


def test_table_shapes():
    cfg = ModelConfig(N_s=5, t_max=0.2, N_b=21, d=2)
    traj = propagate(cfg, n0=2)
    cols, rows = io.trajectory_rows(traj)
    assert len(cols) == 1 + 2 * 5 and len(rows) == cfg.n_steps + 1
    snap = bath_snapshot(0.1, [(-3, 3), (-2, 2)], traj)
    cols, rows = io.snapshot_rows(snap)
    assert cols == ["x", "y", "abs2"] and len(rows) == 35


def test_manifest(tmp_path):
    m = io.RunManifest(cfg=ModelConfig(), command="evolve", outputs=[tmp_path / "a"])
    body = json.loads(m.write(tmp_path / "m.json").read_text())
    assert body["cfg_hash"] == ModelConfig().hash()
    assert body["cfg"]["N_s"] == 21 and body["status"] == "ok"


def _cfg_file(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return path


def test_evolve_decoupled_matches_closed(tmp_path):
    cfg_path = _cfg_file(tmp_path, "g = 0\nDelta = 3\nt_max = 2\n")
    assert cli.main(["evolve", "--config", str(cfg_path), "--out", str(tmp_path / "o"), "--n0", "3"]) == 0
    (table,) = (tmp_path / "o").glob("trajectory_*.tsv")
    meta, cols, rows = io.read_table(table)
    data = np.array(rows)
    amps = data[:, 1::2] + 1j * data[:, 2::2]
    H = build_system_hamiltonian(ModelConfig(Delta=3.0))
    want = expm(-1j * H * 2.0)[:, 2]
    assert np.max(np.abs(amps[-1] - want)) < 1e-8
    assert meta["cfg_hash"] == ModelConfig(g=0.0, Delta=3.0, t_max=2.0).hash()
    manifest = json.loads((tmp_path / "o" / "manifest-evolve.json").read_text())
    assert manifest["status"] == "ok" and str(table) in manifest["outputs"]


def test_flag_overrides_win(tmp_path):
    cfg_path = _cfg_file(tmp_path, "t_max = 5\ndt = 0.05\n")
    cli.main(["evolve", "--config", str(cfg_path), "--out", str(tmp_path / "o"),
              "--tmax", "1", "--dt", "0.1"])
    (table,) = (tmp_path / "o").glob("trajectory_*.tsv")
    assert len(_data(table)) == 1 + 11


def test_exit_codes(tmp_path):
    bad = _cfg_file(tmp_path, "nonsense = 1\n")
    assert cli.main(["evolve", "--config", str(bad), "--out", str(tmp_path / "a")]) == 2
    assert (tmp_path / "a" / "error-evolve.json").exists()
    with pytest.raises(SystemExit) as info:
        cli.main(["evolve"])
    assert info.value.code == 2
    d3 = _cfg_file(tmp_path, "d = 3\nN_b = 11\nt_max = 2\n")
    assert cli.main(["oracle-check", "--config", str(d3), "--out", str(tmp_path / "b")]) == 2
    # a coarse step misses the oracle by far more than 1e-3
    coarse = _cfg_file(tmp_path, "N_b = 101\nt_max = 40\ndt = 0.5\ng = 0.5\n")
    assert cli.main(["oracle-check", "--config", str(coarse), "--out", str(tmp_path / "c")]) == 1
    manifest = json.loads((tmp_path / "c" / "manifest-oracle-check.json").read_text())
    assert manifest["status"] == "failed" and manifest["errors"]
    assert cli.main(["figure", "fig3", "--select", "phi=1", "--out", str(tmp_path / "d")]) == 2


def test_oracle_check_passes(tmp_path):
    cfg_path = _cfg_file(tmp_path, "N_b = 101\nt_max = 30\n")
    assert cli.main(["oracle-check", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 0
    (table,) = (tmp_path / "o").glob("oracle_check_*.tsv")
    meta, _, _ = io.read_table(table)
    assert float(meta["max_dev"]) < 1e-3


def test_bath_command(tmp_path):
    cfg_path = _cfg_file(tmp_path, "d = 2\nN_b = 61\nt_max = 3\n")
    assert cli.main(["bath", "--config", str(cfg_path), "--out", str(tmp_path / "o"),
                     "--at", "1, 2.5", "--region", "cone"]) == 0
    (table,) = (tmp_path / "o").glob("bath_*.tsv")
    _, cols, rows = io.read_table(table)
    assert cols == ["t", "x", "y", "abs2"]
    assert {r[0] for r in rows} == {1.0, 2.5}


def test_figure_deterministic_across_workers(tmp_path):
    args = ["figure", "fig3", "--tmax", "12", "--select", "d=1,2"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "c")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").glob("*.tsv"))
    assert len(names) == 4
    for name in names:
        ref = (tmp_path / "a" / name).read_bytes()
        assert (tmp_path / "b" / name).read_bytes() == ref
        assert (tmp_path / "c" / name).read_bytes() == ref


# frozen caption parameters: (kind, fixed model keys, swept keys)
FROZEN = {
    "fig1": ("spectrum", {}, {"Delta": [1, 3], "d": [1, 2, 3]}),
    "fig2": ("revival", {"t_max": 200}, {"Delta": [1, 3], "d": [1, 2, 3], "n0": [1, 11, 21]}),
    "fig3": ("first_peak", {"Delta": 1}, {"d": [1, 2, 3], "n0": [1, 11]}),
    "fig4": ("position_variance", {"t_max": 200}, {"Delta": [1, 3], "d": [1, 2, 3], "n0": [1, 11]}),
    "fig5": ("bath", {"d": 1, "N_b": 201, "t_max": 100}, {"Delta": [1, 3], "n0": [1, 11, 21]}),
    "fig6": ("bath", {"d": 2, "N_b": 201}, {"Delta": [1, 3], "n0": [1, 11]}),
    "fig7": ("bath", {"d": 3, "N_b": 51}, {"Delta": [1, 3], "n0": [1, 11]}),
    "fig8": ("bath_variance", {}, {"Delta": [1, 3], "d": [1, 2, 3], "n0": [1, 11]}),
    "figA1": ("spectrum", {}, {"Delta": [1, 3], "d": [1, 2, 3]}),
    "figA2": ("ipr", {"t_max": 200}, {"Delta": [1, 3], "d": [1, 2, 3], "n0": [1, 11, 21]}),
    "figA3": ("bath_diagonal", {"d": 3, "N_b": 51}, {"Delta": [1, 3], "n0": [1, 11]}),
}


@pytest.mark.parametrize("name", sorted(FROZEN))
def test_presets_match_captions(name):
    kind, fixed, swept = FROZEN[name]
    runs = cli.expand_preset(cli.preset_text(name))
    assert len(runs) == int(np.prod([len(v) for v in swept.values()]))
    for run_kind, cfg, opts in runs:
        assert run_kind == kind
        # shared caption values
        assert (cfg.N_s, cfg.lam, cfg.g, cfg.beta) == (21, 1.0, 0.1, GOLDEN)
        assert cfg.phi == pytest.approx(-0.6 * math.pi, abs=1e-15)
        for key, value in fixed.items():
            assert getattr(cfg, key) == value
    seen = {k: sorted({(o["n0"] if k == "n0" else getattr(c, k)) for _, c, o in runs})
            for k in swept}
    assert seen == swept


def test_preset_specifics():
    text = {name: parse_kv(cli.preset_text(name)) for name in cli.FIGURES}
    assert text["fig1"]["run.grid"] == "400, 200"
    assert text["fig1"]["run.im_range"] == "-0.5, 0"
    assert text["figA1"]["run.im_range"] == "-0.02, 0"
    assert text["fig8"]["run.N_b"] == "201, 201, 51"
    assert text["fig8"]["run.window"] == "5, 100"
    assert text["fig8"]["run.window_d3"] == "2, 30"
    runs = cli.expand_preset(cli.preset_text("fig8"), select={"d": "3"})
    assert cli._bath_cfg(runs[0][1], runs[0][2]).N_b == 51
    with pytest.raises(Exception):
        cli.preset_text("fig9")
