"""Command-line interface: ``drivenlsd {fieldfree,point,sweep,tssil,selftest,replay}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, experiments, tssil
from .ensemble import ModelParams
from .errors import ConfigError, LsdError, OutputError
from .experiments import PARAM_FIELDS, fmt
from .spectral import field_free_reference

POINT_SCHEMA = {
    "type": "object",
    "required": ["params"],
    "properties": {
        "params": {**experiments.SWEEP_SCHEMA["properties"]["base"], "required": ["n_states"]},
        "target_gamma0": {"type": "number", "exclusiveMinimum": 0},
        "drive_ratio": {"type": "number", "minimum": 0},
        "histogram": experiments.SWEEP_SCHEMA["properties"]["histogram"],
        "outputs": experiments.SWEEP_SCHEMA["properties"]["outputs"],
    },
    "additionalProperties": False,
}

FIELDFREE_SCHEMA = {
    "type": "object",
    "required": ["base", "values"],
    "properties": {
        "base": experiments.SWEEP_SCHEMA["properties"]["base"],
        "values": experiments.SWEEP_SCHEMA["properties"]["values"],
        "histogram": experiments.SWEEP_SCHEMA["properties"]["histogram"],
    },
    "additionalProperties": False,
}


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", ["<root>"]) from exc
    except OSError as exc:
        raise OutputError(f"cannot read config {path}: {exc}") from exc


def _workers(args) -> int:
    return args.threads if args.threads is not None else experiments.default_workers()


def _apply_overrides(params: dict, args) -> dict:
    params = dict(params)
    if args.seed is not None:
        params["seed"] = args.seed
    if args.realizations is not None:
        params["realizations"] = args.realizations
    return params


def _histogram(config: dict, args) -> dict:
    hist = dict(config.get("histogram", {}))
    if args.bins is not None:
        hist["bins"] = args.bins
    if args.span is not None:
        hist["span"] = args.span
    return hist


def _table(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write(out: str | None, name: str, text: str) -> None:
    if out is None:
        return
    path = experiments.ensure_writable(out) / name
    try:
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    print(f"wrote {path}")


# --- subcommands --------------------------------------------------------------


def cmd_fieldfree(args) -> int:
    if args.config:
        config = _load_json(args.config)
        experiments.validate_config(config, FIELDFREE_SCHEMA)
    else:
        base = {"n_states": args.n_states, "delta": args.delta}
        if args.band is not None:
            base["band"] = args.band
        config = {"base": base, "values": args.v}
    base = _apply_overrides(config["base"], args)
    hist = _histogram(config, args)
    rows = []
    for v in config["values"]:
        ref = field_free_reference(
            ModelParams(**{**base, "v_rms": v}), bins=hist.get("bins"), span=hist.get("span"), workers=_workers(args)
        )
        rows.append([fmt(float(v)), fmt(ref.gamma0), fmt(ref.xi0), fmt(ref.fit_residual), fmt(ref.perturbative_bound)])
        print(f"v={v:<8g} gamma0={ref.gamma0:.6g} xi0={ref.xi0:.6g} residual={ref.fit_residual:.3g}"
              f"{' (upper bound)' if ref.perturbative_bound else ''}")
    _write(args.out, "fieldfree.csv", _table(["v", "gamma0", "xi0", "fit_residual", "gamma0_upper_bound"], rows))
    return 0


def _point_config(args) -> dict:
    if args.config:
        config = _load_json(args.config)
    else:
        params = {"n_states": args.n_states, "delta": args.delta, "v_rms": args.v_rms, "rabi": args.rabi}
        if args.band is not None:
            params["band"] = args.band
        config = {"params": params}
        if args.target_gamma0 is not None:
            config["target_gamma0"] = args.target_gamma0
        if args.drive_ratio is not None:
            config["drive_ratio"] = args.drive_ratio
    experiments.validate_config(config, POINT_SCHEMA)
    config["params"] = _apply_overrides(config["params"], args)
    config["histogram"] = _histogram(config, args)
    return config


def cmd_point(args) -> int:
    config = _point_config(args)
    workers = _workers(args)
    params = ModelParams(**config["params"])
    reference = None
    if "target_gamma0" in config:
        params, reference = experiments.tune_coupling(params, config["target_gamma0"], workers=workers)
    if "drive_ratio" in config:
        if reference is None:
            reference = field_free_reference(params, workers=workers)
        params = params.with_(rabi=config["drive_ratio"] * reference.gamma0 / 2)
    hist = config["histogram"]
    result = experiments.run_point(params, reference=reference, bins=hist.get("bins"), span=hist.get("span"),
                                   workers=workers)
    print(f"gamma0={result.gamma0:.6g} xi0={result.xi0:.6g} rabi={params.rabi:.6g} "
          f"drive_ratio={result.drive_ratio:.6g}")
    print(f"fit={result.fit_kind} params={[round(x, 6) for x in result.fit_params]} "
          f"residual={result.residual:.4g} converged={result.converged}")
    print(f"gamma={result.gamma:.6g} xi={result.xi:.6g} L={result.loc_length:.6g} "
          f"gamma_tssil={result.gamma_tssil:.6g}")
    if result.flags:
        print("flags: " + ", ".join(result.flags))
    out = args.out or config.get("outputs", {}).get("dir")
    if out:
        # the echo pins the resolved parameters so a replay needs no tuning
        echo = {"params": params.to_dict(), "histogram": hist}
        files = experiments.emit_outputs([result], out, config=echo, command="point", wall_time=result.wall_time)
        print(f"wrote {files['manifest']}")
    return 0


def cmd_sweep(args) -> int:
    if not args.config:
        raise ConfigError("sweep needs --config", ["--config"])
    config = _load_json(args.config)
    experiments.validate_config(config)
    config["base"] = _apply_overrides(config["base"], args)
    hist = _histogram(config, args)
    if hist:
        config["histogram"] = hist
    spec = experiments.SweepSpec.from_dict(config)

    def progress(p):
        print(f"[{p.series}] rabi={p.params.rabi:<10.5g} 2W/G0={p.drive_ratio:<8.4g} gamma={p.gamma:<10.5g} "
              f"G/G0={p.gamma / p.gamma0:<8.4g} xi={p.xi:<8.4g} L={p.loc_length:<8.4g} "
              f"res={p.residual:.3g} {','.join(p.flags)}", flush=True)

    result = experiments.run_sweep(spec, workers=_workers(args), progress=progress)
    for f in result.failures:
        print(f"failed [{f['series']}] value={f['value']}: {f['error']}", file=sys.stderr)
    print(json.dumps(experiments._jsonable(_summary(result.analysis)), indent=2))
    out = args.out or spec.out_dir
    if out:
        if not result.points:
            raise LsdError("sweep produced no points; nothing written")
        files = experiments.emit_outputs(result.points, out, config=config, analysis=result.analysis,
                                         failures=result.failures, command="sweep", wall_time=result.wall_time)
        print(f"wrote {files['manifest']}")
    return 0 if result.points else 1


def _summary(analysis: dict) -> dict:
    strong = analysis.get("strong_field", {})
    return {
        "perturbative_mean_gamma_over_2rabi": analysis.get("perturbative_linear", {}).get("mean_ratio_to_2rabi"),
        "A": analysis.get("nonperturbative_linear", {}).get("A"),
        "quadratic": analysis.get("quadratic"),
        "ipr_law": analysis.get("ipr_law", {}).get("power_law"),
        "strong_field": {k: strong.get(k) for k in ("plateau_mean", "perturbative_factor")},
        "strong_field_rows": strong.get("rows"),
    }


def cmd_tssil(args) -> int:
    p = tssil.TssilParams(args.gamma0, args.rabi)
    print(f"regime={p.regime} drive_ratio={p.drive_ratio:.6g}")
    if p.regime == tssil.WEAK:
        a1, a2 = tssil.weak_coefficients(p)
        print(f"a1={a1:.10g} a2={a2:.10g}")
    else:
        d1, d2 = tssil.strong_coefficients(p)
        print(f"d1={d1:.10g} d2={d2:.10g} peak={tssil.strong_peak_position(d1, d2):.10g}")
    print(f"predicted_width={tssil.predicted_width(p):.10g}")
    w_max = args.omega_max if args.omega_max is not None else 5 * (p.gamma0 + p.rabi)
    curves = tssil.tabulate(np.linspace(-w_max, w_max, args.points), p)
    names = list(curves)
    text = _table(names, [[fmt(float(curves[n][i])) for n in names] for i in range(args.points)])
    if args.out:
        _write(args.out, "tssil.csv", text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    checks = run_selftest()
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    return 0 if all(c.passed for c in checks) else 1


def cmd_replay(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = json.loads(manifest_path.read_text())
    out = args.out or str(manifest_path.parent / "replay")
    replayed = experiments.replay_manifest(manifest_path, workers=_workers(args))
    if isinstance(replayed, experiments.SweepResult):
        points, analysis, failures = replayed.points, replayed.analysis, replayed.failures
    else:
        points, analysis, failures = replayed, {}, []
    files = experiments.emit_outputs(points, out, config=manifest.get("config"), analysis=analysis,
                                     failures=failures, command=manifest.get("command", "point"))
    new = json.loads(files["manifest"].read_text())["sha256"]
    old = manifest.get("sha256", {})
    mismatched = sorted(k for k in set(old) | set(new) if old.get(k) != new.get(k))
    if mismatched:
        print("replay differs: " + ", ".join(mismatched))
        return 1
    print(f"replay identical: {len(new)} files in {out}")
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--realizations", type=int, help="disorder realizations per point")
    common.add_argument("--threads", type=int, help=f"worker threads (default ${experiments.THREADS_ENV} or 1)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--bins", type=int, help="histogram bin count")
    common.add_argument("--span", type=float, help="histogram half-span")

    parser = argparse.ArgumentParser(prog="drivenlsd", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    ff = sub.add_parser("fieldfree", parents=[common], help="field-free width and IPR of |0> versus coupling")
    ff.add_argument("--n-states", type=int, default=201)
    ff.add_argument("--delta", type=float, default=1.0)
    ff.add_argument("--band", type=int)
    ff.add_argument("--v", type=float, nargs="+", default=[1.8])
    ff.set_defaults(func=cmd_fieldfree)

    pt = sub.add_parser("point", parents=[common], help="one driven ensemble point")
    pt.add_argument("--n-states", type=int, default=201)
    pt.add_argument("--delta", type=float, default=1.0)
    pt.add_argument("--band", type=int)
    pt.add_argument("--v-rms", type=float, default=0.0)
    pt.add_argument("--rabi", type=float, default=0.0)
    pt.add_argument("--target-gamma0", type=float, help="tune v so the field-free width hits this value")
    pt.add_argument("--drive-ratio", type=float, help="set rabi = drive_ratio * gamma0 / 2")
    pt.set_defaults(func=cmd_point)

    sw = sub.add_parser("sweep", parents=[common], help="parameter sweep from a JSON config")
    sw.set_defaults(func=cmd_sweep)

    ts = sub.add_parser("tssil", parents=[common], help="two-state contours and predicted width")
    ts.add_argument("--gamma0", type=float, required=True)
    ts.add_argument("--rabi", type=float, required=True)
    ts.add_argument("--omega-max", type=float)
    ts.add_argument("--points", type=int, default=201)
    ts.set_defaults(func=cmd_tssil)

    st = sub.add_parser("selftest", parents=[common], help="run the built-in oracle checks")
    st.set_defaults(func=cmd_selftest)

    rp = sub.add_parser("replay", parents=[common], help="re-run a manifest and compare output hashes")
    rp.add_argument("manifest")
    rp.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error [parameter]: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except LsdError as exc:
        print(f"error [{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return OutputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
