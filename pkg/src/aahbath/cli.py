"""Command-line runner.

    aahbath <command> [--config FILE] --out DIR [--threads N] [--dt X] [--tmax X]

Commands: ``spectrum``, ``evolve``, ``bath``, ``observe``, ``oracle-check``
and ``figure NAME``.  Exit status is 0 on success, 1 when a computation
fails and 2 for usage or configuration errors.  Every run leaves a
``manifest-<command>.json`` next to its tables.

Figure presets are flat config files shipped in ``aahbath/presets``.
Besides model keys they carry ``run.*`` keys: ``run.kind`` picks the
pipeline, comma-separated ``run.<field>`` values (``Delta``, ``d``,
``n0``) are swept as a Cartesian product, and the rest tune the pipeline
(snapshot ``run.times``, per-dimension ``run.N_b``, fit ``run.window``).
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import itertools
import json
import sys
import time
import traceback
from importlib import resources
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import bath, io, observables as obs, oracle, spectrum
from .errors import AAHBathError, ConfigError
from .model import ModelConfig, config_from_mapping, parse_kv, parse_value
from .propagator import propagate

SWEEP_KEYS = ("Delta", "d", "n0", "g", "lambda", "N_s")
FIGURES = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8",
           "figA1", "figA2", "figA3")


# ------------------------------------------------------------ pipelines


def _tag(cfg, **extra):
    parts = [f"d{cfg.d}", f"Delta{cfg.Delta:g}"]
    parts += [f"{k}{v}" for k, v in extra.items()]
    return "_".join(parts) + f"_{cfg.hash()[:8]}"


def run_spectrum(cfg, out: Path, opts: dict):
    grid = tuple(int(x) for x in opts.get("grid", (400, 200)))
    im = tuple(float(x) for x in opts.get("im_range", (-0.5, 0.0)))
    region = (-float(cfg.d), float(cfg.d), im[0], im[1])
    res = spectrum.scan_complex_roots(cfg, region, grid)
    res.bound_states = spectrum.find_bound_states(cfg)
    tag = _tag(cfg)
    paths = [io.export(res.table(), spectrum.SpectrumResult.TABLE_COLUMNS,
                       out / f"spectrum_{tag}.tsv", cfg.hash(),
                       {"sheet": res.grid["sheet"], "unresolved": len(res.unresolved)})]
    xs, ys, D = res.mesh
    rows = [(x, y, D[i, j].real, D[i, j].imag)
            for i, y in enumerate(ys) for j, x in enumerate(xs)]
    paths.append(io.export(rows, ("e_re", "e_im", "det_re", "det_im"),
                           out / f"detmesh_{tag}.tsv", cfg.hash()))
    return paths


def run_evolve(cfg, out: Path, opts: dict):
    n0 = int(opts.get("n0", 1))
    traj = propagate(cfg, n0=n0)
    cols, rows = io.trajectory_rows(traj)
    return [io.export(rows, cols, out / f"trajectory_{_tag(cfg, n0=n0)}.tsv",
                      cfg.hash(), {"n0": n0, "method": "kernel"})]


def _series_table(traj, values, name, out, cfg, n0, meta=None):
    rows = list(zip(traj.times.tolist(), np.asarray(values).tolist()))
    return io.export(rows, ("t", name), out / f"{name}_{_tag(cfg, n0=n0)}.tsv",
                     cfg.hash(), dict(meta or {}, n0=n0))


def _window(cfg, opts):
    key = f"window_d{cfg.d}"
    w = opts.get(key, opts.get("window", (5.0, 100.0)))
    return float(w[0]), float(w[1])


def run_revival(cfg, out, opts):
    n0 = int(opts.get("n0", 1))
    traj = propagate(cfg, n0=n0)
    p = obs.revival_probability(traj, n0)
    shape = obs.decay_shape(p, traj.times, _window(cfg, opts))
    meta = {"shape": shape.label, "r_squared": shape.fit.r_squared,
            "log_slope": shape.fit.exponent_or_slope, "drop": shape.drop,
            "window": f"{shape.fit.window[0]:g},{shape.fit.window[1]:g}"}
    return [_series_table(traj, p, "revival", out, cfg, n0, meta)]


def run_ipr(cfg, out, opts):
    n0 = int(opts.get("n0", 1))
    traj = propagate(cfg, n0=n0)
    return [_series_table(traj, obs.ipr(traj), "ipr", out, cfg, n0)]


def run_position_variance(cfg, out, opts):
    n0 = int(opts.get("n0", 1))
    traj = propagate(cfg, n0=n0)
    return [_series_table(traj, obs.position_variance(traj), "position_variance",
                          out, cfg, n0)]


def run_first_peak(cfg, out, opts):
    n0 = int(opts.get("n0", 1))
    traj = propagate(cfg, n0=n0)
    velocity, fit, table = obs.wavefront_velocity(traj, n0)
    meta = {"velocity": velocity, "r_squared": fit.r_squared}
    return [io.export(table, ("n", "distance", "p_f", "tau_f"),
                      out / f"first_peak_{_tag(cfg, n0=n0)}.tsv", cfg.hash(), meta)]


def _times(opts, d=None):
    if "times" in opts:
        return [float(t) for t in opts["times"]]
    start, stop, step = (float(x) for x in opts.get(f"time_range_d{d}", opts.get("time_range")))
    return list(np.arange(start, stop + 0.5 * step, step))


def _bath_cfg(cfg, opts):
    if "N_b" in opts:
        sizes = [int(float(x)) for x in opts["N_b"]]
        cfg = cfg.replace(N_b=sizes[min(cfg.d, len(sizes)) - 1])
    return cfg


def run_bath(cfg, out, opts):
    cfg = _bath_cfg(cfg, opts)
    n0 = int(opts.get("n0", 1))
    times = _times(opts, cfg.d)
    cfg = cfg.replace(t_max=max(times[-1], cfg.dt))
    traj = propagate(cfg, n0=n0)
    full = opts.get("region", "full") == "full"
    rows, cols = [], None
    for t in times:
        region = (bath.light_cone_region(t, cfg) if not full
                  else (oracle.bath_extent(cfg),) * cfg.d)
        snap = bath.bath_snapshot(t, region, traj)
        cols, part = io.snapshot_rows(snap, with_time=True)
        rows += part
    return [io.export(rows, cols, out / f"bath_{_tag(cfg, n0=n0)}.tsv", cfg.hash(),
                      {"n0": n0, "N_b": cfg.N_b})]


def run_bath_diagonal(cfg, out, opts):
    cfg = _bath_cfg(cfg, opts)
    n0 = int(opts.get("n0", 1))
    times = _times(opts, cfg.d)
    cfg = cfg.replace(t_max=max(times[-1], cfg.dt))
    traj = propagate(cfg, n0=n0)
    lo, hi = oracle.bath_extent(cfg)
    xs = np.arange(lo, hi + 1)
    rows = []
    for t in times:
        field = bath.diagonal_field(t, xs, traj)
        rows += [(t, int(x), abs(v) ** 2) for x, v in zip(xs, field)]
    return [io.export(rows, ("t", "x", "abs2"), out / f"diagonal_{_tag(cfg, n0=n0)}.tsv",
                      cfg.hash(), {"n0": n0, "N_b": cfg.N_b})]


def run_bath_variance(cfg, out, opts):
    cfg = _bath_cfg(cfg, opts)
    n0 = int(opts.get("n0", 1))
    window = _window(cfg, opts)
    times = _times(opts, cfg.d)
    cfg = cfg.replace(t_max=max(times[-1], cfg.dt))
    traj = propagate(cfg, n0=n0)
    snaps = [bath.bath_snapshot(t, bath.light_cone_region(t, cfg), traj) for t in times]
    ts, values, fit = obs.bath_variance(snaps, cfg, window)
    meta = {"n0": n0, "nu": fit.exponent_or_slope, "r_squared": fit.r_squared,
            "window": f"{fit.window[0]:g},{fit.window[1]:g}"}
    return [io.export(list(zip(ts.tolist(), values.tolist())), ("t", "bath_variance"),
                      out / f"bath_variance_{_tag(cfg, n0=n0)}.tsv", cfg.hash(), meta)]


def run_observe(cfg, out, opts):
    n0 = int(opts.get("n0", 1))
    traj = propagate(cfg, n0=n0)
    p = obs.revival_probability(traj, n0)
    cols = ("t", "revival", "ipr", "position_variance")
    rows = list(zip(traj.times.tolist(), p.tolist(), obs.ipr(traj).tolist(),
                    obs.position_variance(traj).tolist()))
    meta = {"n0": n0}
    try:
        shape = obs.decay_shape(p, traj.times, _window(cfg, opts))
        meta.update(shape=shape.label, r_squared=shape.fit.r_squared)
    except ValueError as exc:
        meta["shape"] = f"unavailable ({exc})"
    paths = [io.export(rows, cols, out / f"observables_{_tag(cfg, n0=n0)}.tsv",
                       cfg.hash(), meta)]
    if cfg.N_s > 2:
        velocity, fit, table = obs.wavefront_velocity(traj, n0)
        paths.append(io.export(table, ("n", "distance", "p_f", "tau_f"),
                               out / f"first_peak_{_tag(cfg, n0=n0)}.tsv", cfg.hash(),
                               {"velocity": velocity, "r_squared": fit.r_squared}))
    return paths


def oracle_compare(cfg, n0=1, n_samples=101):
    """Max deviation between kernel and exact chain amplitudes before recurrence."""
    horizon = min(cfg.t_max, 0.8 * oracle.recurrence_time(cfg))
    cfg = cfg.replace(t_max=horizon)
    traj = propagate(cfg, n0=n0)
    full = oracle.build_full(cfg)
    steps = np.unique(np.linspace(0, cfg.n_steps, n_samples).round().astype(int))
    times = steps * cfg.dt
    exact = oracle.exact_propagate(full, oracle.chain_initial(cfg, n0, full), times)
    dev = np.abs(traj.amps[steps] - exact[:, :cfg.N_s])
    return float(dev.max()), horizon, times, dev.max(axis=1)


def run_oracle_check(cfg, out, opts):
    n0 = int(opts.get("n0", 1))
    worst, horizon, times, dev = oracle_compare(cfg, n0)
    tol = float(opts.get("tol", 1e-3))
    path = io.export(list(zip(times.tolist(), dev.tolist())), ("t", "max_abs_dev"),
                     out / f"oracle_check_{_tag(cfg, n0=n0)}.tsv", cfg.hash(),
                     {"n0": n0, "horizon": horizon, "max_dev": worst, "tol": tol,
                      "method": "oracle"})
    if worst >= tol:
        raise OracleMismatch(f"kernel deviates from the exact oracle by {worst:.3g}", [path])
    return [path]


class OracleMismatch(AAHBathError):
    def __init__(self, message, outputs):
        super().__init__(message)
        self.outputs = outputs


PIPELINES = {
    "spectrum": run_spectrum,
    "evolve": run_evolve,
    "revival": run_revival,
    "ipr": run_ipr,
    "position_variance": run_position_variance,
    "first_peak": run_first_peak,
    "bath": run_bath,
    "bath_diagonal": run_bath_diagonal,
    "bath_variance": run_bath_variance,
    "observe": run_observe,
    "oracle-check": run_oracle_check,
}


# -------------------------------------------------------------- presets


def preset_text(name: str) -> str:
    if name not in FIGURES:
        raise ConfigError(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}")
    return resources.files("aahbath.presets").joinpath(f"{name}.cfg").read_text()


def _split_preset(values: dict):
    model, run = {}, {}
    for key, value in values.items():
        if key.startswith("run."):
            run[key[4:]] = value
        else:
            model[key] = value
    return model, run


def _listify(value):
    return [v.strip() for v in str(value).split(",") if v.strip()]


def expand_preset(text: str, base_overrides: dict | None = None, select: dict | None = None):
    """Sub-runs ``(kind, cfg, opts)`` of a preset, in deterministic order."""
    model, run = _split_preset(parse_kv(text))
    kind = run.pop("kind", None)
    if kind not in PIPELINES:
        raise ConfigError(f"preset has unknown run.kind {kind!r}")
    cfg0 = config_from_mapping(model)
    if base_overrides:
        cfg0 = config_from_mapping(base_overrides, cfg0)
    sweeps = {k: _listify(run.pop(k)) for k in SWEEP_KEYS if k in run}
    opts = {k: (_listify(v) if "," in v else v) for k, v in run.items()}
    listy = ("times", "N_b", "window", "window_d1", "window_d2", "window_d3",
             "time_range", "time_range_d1", "time_range_d2", "time_range_d3",
             "grid", "im_range")
    for key in listy:
        if key in opts and not isinstance(opts[key], list):
            opts[key] = [opts[key]]
    select = select or {}
    for key, value in select.items():
        if key not in sweeps:
            raise ConfigError(f"--select key {key!r} is not swept by this preset")
        wanted = _listify(value)
        sweeps[key] = [v for v in sweeps[key] if parse_value(v) in map(parse_value, wanted)]
    keys = list(sweeps)
    runs = []
    for combo in itertools.product(*(sweeps[k] for k in keys)):
        fields = {k: v for k, v in zip(keys, combo) if k != "n0"}
        cfg = config_from_mapping(fields, cfg0)
        sub_opts = dict(opts)
        if "n0" in keys:
            sub_opts["n0"] = int(parse_value(combo[keys.index("n0")]))
        runs.append((kind, cfg, sub_opts))
    return runs


def _execute(job):
    kind, cfg, opts, out = job
    t0 = time.perf_counter()
    try:
        with threadpool_limits(1):
            paths = PIPELINES[kind](cfg, Path(out), opts)
        return {"ok": True, "outputs": [str(p) for p in paths], "seconds": time.perf_counter() - t0}
    except Exception as exc:  # isolate failing sub-runs
        return {"ok": False, "outputs": [str(p) for p in getattr(exc, "outputs", [])],
                "error": f"{type(exc).__name__}: {exc}",
                "traceback": traceback.format_exc(), "seconds": time.perf_counter() - t0,
                "config": isinstance(exc, ConfigError)}


def run_jobs(jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [_execute(j) for j in jobs]
    with cf.ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_execute, jobs))


# ------------------------------------------------------------------ CLI


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aahbath", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="flat key = value config file")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.add_argument("--dt", type=float, help="override the time step")
        p.add_argument("--tmax", type=float, help="override the horizon")
        return p

    common(sub.add_parser("spectrum", help="bound states and resonances"))
    for name, text in (("evolve", "chain trajectory"), ("observe", "chain observables"),
                       ("oracle-check", "kernel vs exact dynamics")):
        common(sub.add_parser(name, help=text)).add_argument("--n0", type=int, default=1)
    b = common(sub.add_parser("bath", help="bath snapshots"))
    b.add_argument("--n0", type=int, default=1)
    b.add_argument("--at", required=True, help="comma-separated snapshot times")
    b.add_argument("--region", choices=("full", "cone"), default="cone")
    f = common(sub.add_parser("figure", help="data behind one figure"))
    f.add_argument("name", choices=FIGURES)
    f.add_argument("--select", action="append", default=[],
                   help="restrict a sweep, e.g. --select Delta=3 --select d=1")
    return parser


def _overrides(args):
    out = {}
    if args.dt is not None:
        out["dt"] = args.dt
    if args.tmax is not None:
        out["t_max"] = args.tmax
    return out


def _load(args):
    values = parse_kv(args.config.read_text()) if args.config else {}
    model, _ = _split_preset(values)
    cfg = config_from_mapping(model)
    over = _overrides(args)
    return config_from_mapping(over, cfg) if over else cfg


def _error_record(out: Path, command: str, message: str, code: int):
    out.mkdir(parents=True, exist_ok=True)
    io.atomic_write(out / f"error-{command}.json",
                    json.dumps({"command": command, "error": message, "exit_code": code},
                               indent=2, sort_keys=True) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out: Path = args.out
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.command == "figure":
            select = dict(s.split("=", 1) for s in args.select if "=" in s)
            if len(select) != len(args.select):
                raise ConfigError("--select expects key=value")
            base = {}
            if args.config:
                base, _ = _split_preset(parse_kv(args.config.read_text()))
            base.update(_overrides(args))
            runs = expand_preset(preset_text(args.name), base, select)
            cfg = runs[0][1] if runs else ModelConfig()
        else:
            cfg = _load(args)
            opts = {}
            if hasattr(args, "n0"):
                opts["n0"] = args.n0
            if args.command == "bath":
                opts["times"] = [float(t) for t in _listify(args.at)]
                opts["region"] = args.region
            runs = [(args.command, cfg, opts)]
    except (ConfigError, ValueError, OSError) as exc:
        _error_record(out, args.command, str(exc), 2)
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results = run_jobs([(k, c, o, str(out)) for k, c, o in runs], args.threads)
    manifest = io.RunManifest(cfg=cfg, command=args.command)
    manifest.timings["total_seconds"] = time.perf_counter() - t0
    code = 0
    for (kind, sub_cfg, opts), res in zip(runs, results):
        manifest.outputs += res["outputs"]
        manifest.timings[f"{kind}:{sub_cfg.hash()}:{opts.get('n0', '')}"] = res["seconds"]
        if not res["ok"]:
            manifest.status = "failed"
            manifest.errors.append({"kind": kind, "cfg_hash": sub_cfg.hash(),
                                    "n0": opts.get("n0"), "error": res["error"]})
            print(f"error in {kind} ({sub_cfg.hash()}): {res['error']}", file=sys.stderr)
            code = max(code, 2 if res.get("config") else 1)
    name = args.command if args.command != "figure" else f"figure-{args.name}"
    manifest.write(out / f"manifest-{name}.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
