"""Ensemble runs, parameter sweeps, scaling-law regressions and output files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__, fitting, tssil
from .ensemble import ModelParams, coupling_for_gamma0, sample_realization
from .errors import ConfigError, InsufficientDataError, OutputError, ParameterError
from .floquet import floquet_spectrum
from .spectral import (
    FieldFreeReference,
    LsdAccumulator,
    LsdSamples,
    driven_layout,
    field_free_reference,
    finalize_lsd,
    ipr,
    map_realizations,
)

THREADS_ENV = "DRIVENLSD_THREADS"
SMALL_L = 0.3
LARGE_L = 3.0
STRONG_PLATEAU = (4.0, 20.0)
VALIDITY_FRACTION = 0.1

AXES = ("rabi", "v_rms", "n_states", "drive_ratio")
PARAM_FIELDS = ("n_states", "delta", "v_rms", "band", "rabi", "pieces", "drive_factor", "seed", "realizations")


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class PointResult:
    params: ModelParams
    gamma0: float
    xi0: float
    delta_omega: float
    gamma: float
    xi: float
    loc_length: float
    fit_kind: str
    fit_params: tuple[float, ...]
    fit_amplitude: float
    residual: float
    converged: bool
    overflow_fraction: float
    gamma_tssil: float
    wall_time: float = 0.0
    series: str = ""
    flags: list[str] = field(default_factory=list)
    gamma0_residual: float = math.nan
    lsd: LsdSamples | None = field(default=None, repr=False)
    fit: fitting.ContourFit | None = field(default=None, repr=False)

    @property
    def drive_ratio(self) -> float:
        """``2 rabi / gamma0``."""
        return 2 * self.params.rabi / self.gamma0

    @property
    def weak_field(self) -> bool:
        return self.drive_ratio < 1

    @property
    def perturbative(self) -> bool:
        return self.gamma0 < self.delta_omega


def _driven_one(params: ModelParams, index: int):
    spec = floquet_spectrum(sample_realization(params, index), params)
    return spec.quasienergies, spec.weights_g


def run_point(
    params: ModelParams,
    reference: FieldFreeReference | None = None,
    bins: int | None = None,
    span: float | None = None,
    workers: int | None = None,
    series: str = "",
) -> PointResult:
    """Field-free reference, driven ensemble, LSD fit, width and IPR for one point."""
    start = time.perf_counter()
    if reference is None:
        reference = field_free_reference(params, workers=workers)
    gamma0 = reference.gamma0
    span_, bins_ = driven_layout(params, gamma0, bins=bins, span=span)
    acc = LsdAccumulator.empty(span_, bins_)
    for energies, weights in map_realizations(_driven_one, params, workers):
        acc.add(energies, weights)
    acc.check_overflow()

    samples = finalize_lsd(acc, reference.delta_omega)
    xi = ipr(acc)
    flags: list[str] = []
    if reference.perturbative_bound:
        flags.append("gamma0_upper_bound")

    if params.rabi == 0:
        flags.append("field_off")
        if np.count_nonzero(acc.numerator > 1e-9 * acc.count) != 1:
            flags.append("lsd_not_single_bin")
        fit = None
        kind, fparams, amp, residual, converged = "none", (), 0.0, 0.0, True
        gamma = 0.0
        gamma_tssil = 0.0
    else:
        p = tssil.TssilParams(gamma0, params.rabi)
        gamma_tssil = tssil.predicted_width(p)
        if p.regime == tssil.WEAK:
            kind = fitting.WEAK
            a1, a2 = tssil.weak_coefficients(p)
            guess = [a1, max(a2, acc.bin_width)]
        else:
            kind = fitting.STRONG
            guess = list(tssil.strong_coefficients(p))
            guess[0] = max(guess[0], 1e-3 * guess[1])
        fit = fitting.fit_contour(samples.as_fit_samples(), kind, guess)
        kind, fparams, amp, residual, converged = fit.kind, fit.params, fit.amplitude, fit.residual, fit.converged
        gamma = fit.width if converged else math.nan
        if not converged:
            flags.append("fit_not_converged")

    loc_length = gamma / reference.delta_omega
    if gamma > VALIDITY_FRACTION * params.n_states * reference.delta_omega:
        flags.append("outside_validity")
    return PointResult(
        params=params,
        gamma0=gamma0,
        xi0=reference.xi0,
        delta_omega=reference.delta_omega,
        gamma=gamma,
        xi=xi,
        loc_length=loc_length,
        fit_kind=kind,
        fit_params=tuple(fparams),
        fit_amplitude=amp,
        residual=residual,
        converged=converged,
        overflow_fraction=acc.overflow_fraction,
        gamma_tssil=gamma_tssil,
        wall_time=time.perf_counter() - start,
        series=series,
        flags=flags,
        gamma0_residual=reference.fit_residual,
        lsd=samples,
        fit=fit,
    )


def tune_coupling(
    params: ModelParams,
    target_gamma0: float,
    tolerance: float = 0.03,
    max_iter: int = 8,
    workers: int | None = None,
) -> tuple[ModelParams, FieldFreeReference]:
    """Adjust ``v_rms`` until the measured field-free width hits ``target_gamma0``.

    Starts from the golden-rule coupling whose apparent histogram width equals
    the target, then rescales ``v`` by ``sqrt(target / measured)``.
    """
    if not target_gamma0 > 0:
        raise ParameterError(f"target_gamma0 must be > 0, got {target_gamma0!r}")
    d = params.delta
    golden = -d / math.pi + math.sqrt(d**2 / math.pi**2 + target_gamma0**2)
    current = params.with_(v_rms=coupling_for_gamma0(params, golden))
    best = None
    for _ in range(max_iter):
        ref = field_free_reference(current, workers=workers)
        err = abs(ref.gamma0 / target_gamma0 - 1)
        if best is None or err < best[0]:
            best = (err, current, ref)
        if err <= tolerance:
            break
        current = current.with_(v_rms=current.v_rms * math.sqrt(target_gamma0 / ref.gamma0))
    return best[1], best[2]


# --- sweeps -----------------------------------------------------------------

_PARAMS_SCHEMA = {
    "type": "object",
    "properties": {
        "n_states": {"type": "integer", "minimum": 3},
        "delta": {"type": "number", "exclusiveMinimum": 0},
        "v_rms": {"type": "number", "minimum": 0},
        "band": {"type": "integer", "minimum": 1},
        "rabi": {"type": "number", "minimum": 0},
        "pieces": {"type": "integer", "minimum": 2},
        "drive_factor": {"type": "number", "exclusiveMinimum": 2},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "realizations": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

SWEEP_SCHEMA = {
    "type": "object",
    "required": ["base", "axis", "values"],
    "properties": {
        "name": {"type": "string"},
        "base": {**_PARAMS_SCHEMA, "required": ["n_states"]},
        "series": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    **_PARAMS_SCHEMA["properties"],
                    "label": {"type": "string"},
                    "target_gamma0": {"type": "number", "exclusiveMinimum": 0},
                    "values": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
                },
                "additionalProperties": False,
            },
        },
        "axis": {"enum": list(AXES)},
        "values": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "histogram": {
            "type": "object",
            "properties": {
                "bins": {"type": "integer", "minimum": 1},
                "span": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "cohorts": {
            "type": "object",
            "properties": {
                "small_L": {"type": "number", "exclusiveMinimum": 0},
                "large_L": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "tune": {
            "type": "object",
            "properties": {
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "outputs": {"type": "object", "properties": {"dir": {"type": "string"}}, "additionalProperties": False},
    },
    "additionalProperties": False,
}


def _field_path(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "required":
        missing = err.message.split("'")[1]
        path = f"{path}.{missing}" if path else missing
    elif err.validator == "additionalProperties":
        extra = ",".join(e.split("'")[1] for e in err.message.split("(")[1:2]) or err.message
        path = f"{path}.{extra}" if path else extra
    return path or "<root>"


def validate_config(config: dict, schema: dict = SWEEP_SCHEMA) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        fields = [_field_path(e) for e in errors]
        raise ConfigError("; ".join(e.message for e in errors), fields)


@dataclass
class SweepSpec:
    base: ModelParams
    axis: str
    values: list[float]
    series: list[dict] = field(default_factory=list)
    name: str = "sweep"
    bins: int | None = None
    span: float | None = None
    small_l: float = SMALL_L
    large_l: float = LARGE_L
    tune_tolerance: float = 0.03
    tune_max_iter: int = 8
    out_dir: str | None = None
    config: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, config: dict) -> SweepSpec:
        validate_config(config)
        values = list(config["values"])
        if values != sorted(values):
            raise ConfigError("axis values must be sorted ascending", ["values"])
        for i, s in enumerate(config.get("series", [])):
            if "values" in s and s["values"] != sorted(s["values"]):
                raise ConfigError("series values must be sorted ascending", [f"series.{i}.values"])
        try:
            base = ModelParams(**config["base"])
        except ParameterError as exc:
            raise ConfigError(str(exc), ["base"]) from exc
        hist = config.get("histogram", {})
        cohorts = config.get("cohorts", {})
        tune = config.get("tune", {})
        return cls(
            base=base,
            axis=config["axis"],
            values=values,
            series=list(config.get("series", [])) or [{}],
            name=config.get("name", "sweep"),
            bins=hist.get("bins"),
            span=hist.get("span"),
            small_l=cohorts.get("small_L", SMALL_L),
            large_l=cohorts.get("large_L", LARGE_L),
            tune_tolerance=tune.get("tolerance", 0.03),
            tune_max_iter=tune.get("max_iter", 8),
            out_dir=config.get("outputs", {}).get("dir"),
            config=config,
        )

    @classmethod
    def load(cls, path: str | os.PathLike) -> SweepSpec:
        try:
            with open(path) as fh:
                config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}", ["<root>"]) from exc
        return cls.from_dict(config)


@dataclass
class SweepResult:
    name: str
    points: list[PointResult]
    failures: list[dict]
    analysis: dict
    references: dict[str, FieldFreeReference]
    config: dict
    wall_time: float


def _default_band(spec: SweepSpec) -> bool:
    base = spec.base
    return "band" not in spec.config.get("base", {}) and base.band == (base.n_states - 1) // 2


def run_sweep(spec: SweepSpec, workers: int | None = None, progress=None) -> SweepResult:
    """Run every series over the axis values, then the scaling regressions."""
    start = time.perf_counter()
    points: list[PointResult] = []
    failures: list[dict] = []
    references: dict[str, FieldFreeReference] = {}
    for i, entry in enumerate(spec.series):
        entry = dict(entry)
        label = entry.pop("label", f"series{i}")
        target = entry.pop("target_gamma0", None)
        values = entry.pop("values", spec.values)
        if "n_states" in entry and "band" not in entry and _default_band(spec):
            entry["band"] = None  # keep the wide-band default when only N changes
        try:
            params = spec.base.with_(**entry)
            reference = None
            if target is not None:
                params, reference = tune_coupling(
                    params, target, spec.tune_tolerance, spec.tune_max_iter, workers=workers
                )
        except ParameterError as exc:
            failures.append({"series": label, "value": None, "error": f"{exc.__class__.__name__}: {exc}"})
            continue
        for value in values:
            try:
                point_params, point_ref = _resolve_point(spec.axis, value, params, reference, workers)
                if point_ref is not None:
                    reference = point_ref
                result = run_point(
                    point_params, reference=point_ref, bins=spec.bins, span=spec.span, workers=workers, series=label
                )
                if point_ref is not None:
                    references.setdefault(label, point_ref)
                points.append(result)
                if progress:
                    progress(result)
            except Exception as exc:  # noqa: BLE001 - per-point failures never abort a sweep
                failures.append({"series": label, "value": value, "error": f"{exc.__class__.__name__}: {exc}"})
    analysis = scaling_analysis(points, small_l=spec.small_l, large_l=spec.large_l)
    return SweepResult(
        name=spec.name,
        points=points,
        failures=failures,
        analysis=analysis,
        references=references,
        config=spec.config,
        wall_time=time.perf_counter() - start,
    )


def _resolve_point(axis, value, params, reference, workers):
    """Point parameters for one axis value; reuses the field-free reference when H0 is unchanged."""
    if axis in ("rabi", "drive_ratio"):
        if reference is None:
            reference = field_free_reference(params, workers=workers)
        rabi = value if axis == "rabi" else value * reference.gamma0 / 2
        return params.with_(rabi=float(rabi)), reference
    if axis == "n_states":
        return params.with_(n_states=int(value)), None
    return params.with_(v_rms=float(value)), None


# --- scaling laws -----------------------------------------------------------


def _power_law_or_none(points):
    try:
        fit = fitting.fit_power_law(points)
    except (InsufficientDataError, ParameterError):
        return None
    return {"coefficient": fit.coefficient, "exponent": fit.exponent, "r_squared": fit.r_squared, "n": fit.n_points}


def _usable(points):
    return [p for p in points if p.params.rabi > 0 and p.converged and np.isfinite(p.gamma) and p.gamma > 0]


def scaling_analysis(points: list[PointResult], small_l: float = SMALL_L, large_l: float = LARGE_L) -> dict:
    """Regime-classified regressions for the linear, quadratic, IPR and strong-field laws."""
    pts = _usable(points)
    out: dict = {}

    pert = [p for p in pts if p.perturbative and p.weak_field]
    out["perturbative_linear"] = {
        "n": len(pert),
        "ratio_to_2rabi": [p.gamma / (2 * p.params.rabi) for p in pert],
        "mean_ratio_to_2rabi": float(np.mean([p.gamma / (2 * p.params.rabi) for p in pert])) if pert else math.nan,
        "power_law": _power_law_or_none([(p.params.rabi, p.gamma) for p in pert]),
    }

    small = [p for p in pts if not p.perturbative and p.weak_field and p.loc_length < small_l]
    xs = [p.params.rabi * math.sqrt(p.delta_omega / p.gamma0) for p in small]
    out["nonperturbative_linear"] = {
        "n": len(small),
        "A": fitting.fit_proportional(xs, [p.gamma for p in small]) if small else math.nan,
        "A_values": [p.gamma / x for p, x in zip(small, xs)],
    }

    large = [p for p in pts if not p.perturbative and p.weak_field and p.loc_length > large_l]
    by_series: dict[str, list[PointResult]] = {}
    for p in large:
        by_series.setdefault(p.series, []).append(p)
    out["quadratic"] = {
        label: {
            "gamma0": float(np.mean([p.gamma0 for p in grp])),
            "power_law": _power_law_or_none([(p.params.rabi, p.gamma) for p in grp]),
        }
        for label, grp in by_series.items()
    }

    ipr_pts = [p for p in pts if not p.perturbative and p.weak_field]
    out["ipr_law"] = {
        "n": len(ipr_pts),
        "power_law": _power_law_or_none([(p.params.rabi / p.gamma0, p.xi / p.xi0) for p in ipr_pts]),
    }

    strong = [p for p in pts if not p.weak_field]
    rows = [
        {
            "series": p.series,
            "drive_ratio": p.drive_ratio,
            "gamma_over_gamma0": p.gamma / p.gamma0,
            "tssil_over_gamma0": p.gamma_tssil / p.gamma0,
            "gamma_over_tssil": p.gamma / p.gamma_tssil,
            "xi_over_xi0": p.xi / p.xi0,
            "perturbative": p.perturbative,
        }
        for p in strong
    ]
    lo, hi = STRONG_PLATEAU
    plateau = [r["gamma_over_gamma0"] for r in rows if not r["perturbative"] and lo <= r["drive_ratio"] <= hi]
    pert_factor = [r["gamma_over_tssil"] for r in rows if r["perturbative"]]
    out["strong_field"] = {
        "rows": rows,
        "plateau_mean": float(np.mean(plateau)) if plateau else math.nan,
        "perturbative_factor": float(np.mean(pert_factor)) if pert_factor else math.nan,
    }
    return out


# --- outputs ----------------------------------------------------------------

RESULT_COLUMNS = (
    "series", "N", "delta", "v", "b", "rabi", "M", "seed", "realizations",
    "gamma0", "xi0", "delta_omega", "gamma", "xi", "L",
    "fit_kind", "fit_params", "fit_amplitude", "residual", "converged", "overflow", "flags",
)


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def result_row(p: PointResult) -> list[str]:
    q = p.params
    return [
        p.series, fmt(q.n_states), fmt(q.delta), fmt(q.v_rms), fmt(q.band), fmt(q.rabi), fmt(q.pieces),
        fmt(q.seed), fmt(q.realizations),
        fmt(p.gamma0), fmt(p.xi0), fmt(p.delta_omega), fmt(p.gamma), fmt(p.xi), fmt(p.loc_length),
        p.fit_kind, ";".join(fmt(x) for x in p.fit_params), fmt(p.fit_amplitude), fmt(p.residual),
        fmt(p.converged), fmt(p.overflow_fraction), ";".join(p.flags),
    ]


def results_csv(points: list[PointResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for p in points:
        writer.writerow(result_row(p))
    return buf.getvalue()


def lsd_csv(p: PointResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("omega", "rho_data", "rho_fit", "count"))
    if p.lsd is not None:
        fitted = p.fit(p.lsd.omega) if p.fit is not None else np.full(len(p.lsd), np.nan)
        for w, r, f, c in zip(p.lsd.omega, p.lsd.rho, fitted, p.lsd.counts):
            writer.writerow((fmt(w), fmt(r), fmt(f), fmt(int(c))))
    return buf.getvalue()


def ensure_writable(out_dir: str | os.PathLike) -> Path:
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"output directory {path} is not writable: {exc}") from exc
    return path


def _versions() -> dict:
    return {
        "drivenlsd": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def emit_outputs(
    points: list[PointResult],
    out_dir: str | os.PathLike,
    config: dict | None = None,
    analysis: dict | None = None,
    failures: list[dict] | None = None,
    command: str = "sweep",
    wall_time: float | None = None,
) -> dict[str, Path]:
    """Write ``results.csv``, ``lsd/point_XXX.csv`` and ``manifest.json``."""
    if not points:
        raise InsufficientDataError("no point results to write")
    out = ensure_writable(out_dir)
    files: dict[str, Path] = {}
    try:
        results_path = out / "results.csv"
        results_path.write_text(results_csv(points))
        files["results"] = results_path
        lsd_dir = out / "lsd"
        lsd_dir.mkdir(exist_ok=True)
        for i, p in enumerate(points):
            path = lsd_dir / f"point_{i:03d}.csv"
            path.write_text(lsd_csv(p))
            files[f"lsd_{i:03d}"] = path
        manifest = {
            "command": command,
            "config": config or {},
            "points": [
                {"series": p.series, "params": p.params.to_dict(), "wall_time": p.wall_time, "flags": p.flags}
                for p in points
            ],
            "analysis": analysis or {},
            "failures": failures or [],
            "versions": _versions(),
            "wall_time": wall_time,
            "sha256": {name: hashlib.sha256(path.read_bytes()).hexdigest() for name, path in files.items()},
        }
        manifest_path = out / "manifest.json"
        manifest_path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
        files["manifest"] = manifest_path
    except OSError as exc:
        raise OutputError(f"failed writing outputs to {out}: {exc}") from exc
    return files


def replay_manifest(manifest_path: str | os.PathLike, workers: int | None = None) -> list[PointResult] | SweepResult:
    """Re-run the computation recorded in a manifest."""
    manifest = json.loads(Path(manifest_path).read_text())
    if manifest.get("command") == "sweep":
        return run_sweep(SweepSpec.from_dict(manifest["config"]), workers=workers)
    config = manifest.get("config", {})
    hist = config.get("histogram", {})
    return [
        run_point(
            ModelParams(**entry["params"]),
            bins=hist.get("bins"),
            span=hist.get("span"),
            workers=workers,
            series=entry.get("series", ""),
        )
        for entry in manifest["points"]
    ]
