"""Command line front end: metric sweeps, geodesics, simulations and figure data.

Every command resolves a JSON configuration (defaults, then ``--config``,
then flags), validates it against the packaged schema, and writes CSV
tables, a JSON summary and ``manifest.json`` into ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__, geodesic, metric, models, simulate
from .errors import ConfigError, ThermolenError

log = logging.getLogger("thermolen")

COMMANDS = ("metric", "christoffel", "geodesic", "simulate", "compare", "ising-fig2", "qubit-fig3")
ISING_BETAS = [0.5, 1.0, 2.0, 5.0, 10.0]

DEFAULTS = {
    "metric": {"model": {"name": "bosonic_qubit"}},
    "christoffel": {"model": {"name": "ising"}},
    "geodesic": {"model": {"name": "ising"}},
    "simulate": {"model": {"name": "gibbs_mixing_qubit"}, "simulation": {"T": [100.0], "protocol": "both"}},
    "compare": {"model": {"name": "gibbs_mixing_qubit"},
                "simulation": {"E_f": [2.0], "T": [50.0, 100.0, 200.0, 400.0]}},
    "ising-fig2": {"model": {"name": "ising", "beta": ISING_BETAS}, "grid": {"g": "0:5:201"},
                   "endpoints": {"start": [0.0], "end": [5.0]}},
    "qubit-fig3": {"model": {"name": "bosonic_qubit", "alpha": [0.5, 1.0, 2.0], "beta": 1.0},
                   "grid": {"r": "0.01:6:300"}, "simulation": {"E_f": [0.5, 1.0, 2.0, 5.0, 8.0]}},
}

MODEL_DEFAULTS = {
    "ising": {"model": {"beta": ISING_BETAS, "tau": 1.0}, "grid": {"g": "0:5:201"},
              "endpoints": {"start": [0.0], "end": [5.0]}},
    "bosonic_qubit": {"model": {"alpha": [1.0], "beta": 1.0, "chart": "xz", "r_min": models.R_MIN,
                                "metric": "full-lindblad"},
                      "grid": {"r": "0.05:5:100", "theta": [float(np.pi / 2)], "phi": [0.0]},
                      "endpoints": {"start": [0.5, 0.2], "end": [1.0, 1.4]}},
    "gibbs_mixing_qubit": {"model": {"beta": 1.0, "tau": 1.0, "metric": "full-lindblad"},
                           "grid": {"E": "-3:3:121"}, "endpoints": {"start": [0.0], "end": [2.0]},
                           "simulation": {"E_f": [2.0]}},
}

BASE = {"output": {"dir": "thermolen-out", "gnuplot": False}, "seed": 0, "jobs": 1,
        "tolerances": {"rtol": 1e-10, "atol": 1e-10, "bvp_tol": 1e-7, "n_knots": 201},
        "simulation": {"protocol": "both", "n_records": 201}}


# ------------------------------------------------------------------ config

def load_schema() -> dict:
    return json.loads(resources.files("thermolen").joinpath("config_schema.json").read_text())


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def validate_config(config: dict) -> None:
    try:
        jsonschema.validate(config, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"cli.config: {where}: {exc.message}") from None


def parse_axis(value) -> np.ndarray:
    """``"a:b:n"`` (inclusive linspace) or an explicit list."""
    if isinstance(value, str):
        try:
            a, b, n = value.split(":")
            a, b, n = float(a), float(b), int(n)
        except ValueError:
            raise ConfigError(f"cli.config: grid '{value}' is not of the form a:b:n") from None
        if n < 1:
            raise ConfigError(f"cli.config: grid '{value}' needs at least one point")
        return np.linspace(a, b, n)
    return np.asarray(value, dtype=float)


def as_list(value) -> list[float]:
    return [float(v) for v in (value if isinstance(value, list) else [value])]


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _axis(text: str):
    return text if ":" in text else _floats(text)


def overrides_from_args(args) -> dict:
    o: dict = {}

    def put(section, key, value):
        if value is not None:
            o.setdefault(section, {})[key] = value

    put("model", "name", args.model)
    put("model", "beta", args.beta)
    put("model", "alpha", args.alpha)
    put("model", "tau", args.tau)
    put("model", "chart", args.chart)
    put("model", "metric", args.metric)
    for axis in ("g", "r", "theta", "phi", "E"):
        put("grid", axis, getattr(args, f"grid_{axis}"))
    put("endpoints", "start", args.start)
    put("endpoints", "end", args.end)
    put("simulation", "T", args.T)
    put("simulation", "E_f", args.Ef)
    put("simulation", "protocol", args.protocol)
    put("tolerances", "rtol", args.rtol)
    put("tolerances", "atol", args.atol)
    put("tolerances", "n_knots", args.n_knots)
    put("output", "dir", args.out)
    if args.gnuplot:
        put("output", "gnuplot", True)
    if args.seed is not None:
        o["seed"] = args.seed
    if args.jobs is not None:
        o["jobs"] = args.jobs
    return o


def resolve_config(command: str, args) -> dict:
    user: dict = {}
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"cli.config: no such file {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cli.config: {args.config} is not valid JSON ({exc})") from None
        validate_config(user)
        if user.get("command", command) != command:
            raise ConfigError(f"cli.config: file is for '{user['command']}', not '{command}'")
    cli = overrides_from_args(args)
    layered = _merge(_merge(DEFAULTS[command], user), cli)
    name = layered.get("model", {}).get("name", "ising")
    config = _merge(_merge(_merge(BASE, MODEL_DEFAULTS[name]), DEFAULTS[command]), _merge(user, cli))
    config["command"] = command
    if "jobs" not in user and "jobs" not in cli:
        env = os.environ.get("THERMOLEN_JOBS")
        if env:
            try:
                config["jobs"] = int(env)
            except ValueError:
                raise ConfigError(f"cli.config: THERMOLEN_JOBS must be an integer, got {env!r}") from None
    validate_config(config)
    return config


# ----------------------------------------------------------------- outputs

class Collector:
    """Single writer for every artifact of a run."""

    def __init__(self, out_dir: Path, gnuplot: bool):
        self.dir = out_dir
        self.gnuplot = gnuplot
        self.files: list[str] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, rows: list[dict]):
        if not rows:
            return
        path = self.dir / f"{name}.csv"
        header = list(rows[0].keys())
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(row[h]) for h in header])
        self.files.append(path.name)
        if self.gnuplot:
            self._gnuplot(name, header)

    def _gnuplot(self, name: str, header: list[str]):
        path = self.dir / f"{name}.gp"
        lines = [
            "set datafile separator ','",
            "set key autotitle columnhead",
            f"set xlabel '{header[0]}'",
            f"plot for [i=2:{len(header)}] '{name}.csv' using 1:i with lines",
        ]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        self.files.append(path.name)

    def json(self, name: str, payload: dict):
        path = self.dir / f"{name}.json"
        path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self.files.append(path.name)


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def _pool_map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def _tag(x: float) -> str:
    return f"{x:g}"


# ------------------------------------------------------------ model wiring

def _qubit_chart_axes(config):
    chart = config["model"]["chart"]
    grid = config["grid"]
    r = parse_axis(grid["r"])
    theta = parse_axis(grid.get("theta", [np.pi / 2]))
    phi = parse_axis(grid.get("phi", [0.0]))
    if chart == "spherical":
        return [(a, b, c) for a in r for b in theta for c in phi]
    if chart == "xz":
        return [(a, b) for a in r for b in theta]
    return [(a,) for a in r]


def build_field(config, alpha=None, beta=None, closed_form: bool = False) -> metric.MetricField:
    """Metric field of the configured model at one (alpha, beta) setting.

    ``closed_form`` swaps the numerically assembled qubit metrics for their
    analytic expressions (used for geodesics and predictions).
    """
    m = config["model"]
    name = m["name"]
    beta = as_list(m["beta"])[0] if beta is None else beta
    tau = m.get("tau", 1.0)
    if name == "ising":
        return models.IsingMetric(beta, tau)
    if name == "bosonic_qubit":
        alpha = as_list(m["alpha"])[0] if alpha is None else alpha
        if closed_form and m.get("metric", "full-lindblad") == "full-lindblad":
            return models.QubitClosedForm(alpha, beta, chart=m["chart"], r_min=m["r_min"])
        model = models.qubit_model(alpha, beta, chart=m["chart"], r_min=m["r_min"])
        return metric.ModelMetricField(model, m.get("metric", "full-lindblad"))
    if closed_form:
        return models.gap_qubit_kmb_field(beta, tau)
    return metric.ModelMetricField(models.gap_qubit_model(beta, tau), m.get("metric", "full-lindblad"))


def build_model(config, alpha=None, beta=None) -> metric.ParamModel:
    m = config["model"]
    beta = as_list(m["beta"])[0] if beta is None else beta
    if m["name"] == "bosonic_qubit":
        alpha = as_list(m["alpha"])[0] if alpha is None else alpha
        return models.qubit_model(alpha, beta, chart=m["chart"], r_min=m["r_min"])
    if m["name"] == "gibbs_mixing_qubit":
        return models.gap_qubit_model(beta, m.get("tau", 1.0))
    raise ConfigError("cli.simulate: the Ising chain is a thermodynamic-limit model and cannot be propagated")


def _settings(config):
    """(alpha, beta) pairs the command sweeps over."""
    m = config["model"]
    alphas = as_list(m["alpha"]) if m["name"] == "bosonic_qubit" else [None]
    return [(a, b) for a in alphas for b in as_list(m["beta"])]


def _points(config) -> list[tuple]:
    name = config["model"]["name"]
    if name == "ising":
        return [(g,) for g in parse_axis(config["grid"]["g"])]
    if name == "bosonic_qubit":
        return _qubit_chart_axes(config)
    return [(e,) for e in parse_axis(config["grid"]["E"])]


def _param_units(config) -> list[str]:
    name = config["model"]["name"]
    if name == "ising":
        return ["g[-]"]
    if name == "gibbs_mixing_qubit":
        return ["E[1/beta]"]
    return {"spherical": ["r[1/beta]", "theta[rad]", "phi[rad]"], "xz": ["r[1/beta]", "theta[rad]"],
            "radial": ["r[1/beta]"]}[config["model"]["chart"]]


def _setting_columns(alpha, beta) -> dict:
    row = {"beta[1/E]": beta}
    if alpha is not None:
        row = {"alpha[-]": alpha, **row}
    return row


# ------------------------------------------------------------------ commands

def _metric_rows(config, setting):
    alpha, beta = setting
    field = build_field(config, alpha, beta)
    units = _param_units(config)
    rows = []
    for lam in _points(config):
        m = field(lam)
        row = {**_setting_columns(alpha, beta), **dict(zip(units, lam))}
        n = m.shape[0]
        for i in range(n):
            for j in range(i, n):
                row[f"m{i + 1}{j + 1}[E t]"] = m[i, j]
        for i, ev in enumerate(np.sort(np.linalg.eigvalsh(m))[::-1]):
            row[f"eig{i + 1}[E t]"] = ev
        row["asymmetry[-]"] = float(np.max(np.abs(m - m.T)))
        rows.append(row)
    return rows


def cmd_metric(config, out: Collector) -> dict:
    chunks = _pool_map(partial(_metric_rows, config), _settings(config), config["jobs"])
    rows = [r for chunk in chunks for r in chunk]
    out.table("metric", rows)
    eig_cols = [k for k in rows[0] if k.startswith("eig")]
    return {"points": len(rows), "min_eigenvalue": min(min(r[c] for c in eig_cols) for r in rows),
            "max_asymmetry": max(r["asymmetry[-]"] for r in rows)}


def _christoffel_rows(config, setting):
    alpha, beta = setting
    field = build_field(config, alpha, beta)
    gamma = field.christoffel_field() if isinstance(field, models.IsingMetric) else metric.ChristoffelField(field)
    units = _param_units(config)
    rows = []
    for lam in _points(config):
        G = gamma(lam)
        row = {**_setting_columns(alpha, beta), **dict(zip(units, lam))}
        n = G.shape[0]
        for i in range(n):
            for j in range(n):
                for k in range(j, n):
                    row[f"Gamma{i + 1}_{j + 1}{k + 1}[1/param]"] = G[i, j, k]
        rows.append(row)
    return rows


def cmd_christoffel(config, out: Collector) -> dict:
    chunks = _pool_map(partial(_christoffel_rows, config), _settings(config), config["jobs"])
    rows = [r for chunk in chunks for r in chunk]
    out.table("christoffel", rows)
    return {"points": len(rows)}


def _solve_geodesic(config, field, beta):
    start, end = config["endpoints"]["start"], config["endpoints"]["end"]
    tol = config["tolerances"]
    if field.n_params == 1:
        return geodesic.geodesic_1d(field, start[0], end[0], n_knots=tol["n_knots"], beta=beta)
    gamma = metric.ChristoffelField(field)
    return geodesic.geodesic_bvp(gamma, start, end, n_knots=tol["n_knots"], tol=tol["bvp_tol"], beta=beta)


def _geodesic_job(config, setting):
    alpha, beta = setting
    field = build_field(config, alpha, beta, closed_form=True)
    sol = _solve_geodesic(config, field, beta)
    units = _param_units(config)
    p = sol.protocol
    speed = geodesic.speed_squared(field, p, p.knots)
    rows = []
    for t, lam, v, s in zip(p.knots, p.values, p.velocities, speed):
        row = {**_setting_columns(alpha, beta), "t[T]": t, **dict(zip(units, lam))}
        row.update({f"d{u.split('[')[0]}/dt[1/T]": x for u, x in zip(units, v)})
        row["speed^2[E t/T^2]"] = s
        rows.append(row)
    summary = {**_setting_columns(alpha, beta), **sol.summary()}
    return rows, summary


def cmd_geodesic(config, out: Collector) -> dict:
    results = _pool_map(partial(_geodesic_job, config), _settings(config), config["jobs"])
    out.table("geodesic", [r for rows, _ in results for r in rows])
    return {"geodesics": [s for _, s in results]}


def _protocol(config, field, beta, name):
    start, end = config["endpoints"]["start"], config["endpoints"]["end"]
    if config["model"]["name"] == "gibbs_mixing_qubit":
        start, end = [0.0], [as_list(config["simulation"]["E_f"])[0]]
    if name == "linear":
        return geodesic.Protocol.linear(start, end)
    return _solve_geodesic({**config, "endpoints": {"start": start, "end": end}}, field, beta).protocol


def _simulate_job(config, item):
    name, T, alpha, beta = item
    model = build_model(config, alpha, beta)
    field = build_field(config, alpha, beta, closed_form=True)
    protocol = _protocol(config, field, beta, name)
    tol = config["tolerances"]
    run = simulate.propagate(model, protocol, T, n_records=config["simulation"]["n_records"],
                             rtol=tol["rtol"], atol=tol["atol"])
    record = simulate.work_accounting(run, field)
    return run.rows(), record.summary(), run.diagnostics


def cmd_simulate(config, out: Collector) -> dict:
    kind = config["simulation"]["protocol"]
    names = ["linear", "geodesic"] if kind == "both" else [kind]
    items = [(name, T, alpha, beta) for alpha, beta in _settings(config) for name in names
             for T in as_list(config["simulation"]["T"])]
    # protocols are rebuilt inside each job; dense geodesic evaluators do not cross process boundaries
    results = _pool_map(partial(_simulate_job, config), items, config["jobs"])
    summaries = []
    for (name, T, alpha, beta), (rows, rec, diag) in zip(items, results):
        suffix = f"{name}_T{_tag(T)}" + (f"_alpha{_tag(alpha)}" if alpha is not None else "") + f"_beta{_tag(beta)}"
        out.table(f"run_{suffix}", rows)
        summaries.append({"protocol": name, "T": T, **_setting_columns(alpha, beta), **rec, "diagnostics": diag})
    return {"runs": summaries}


def _compare_job(config, item):
    E_f, name, T = item
    beta = as_list(config["model"]["beta"])[0]
    model = models.gap_qubit_model(beta, config["model"].get("tau", 1.0))
    fast = models.gap_qubit_kmb_field(beta, config["model"].get("tau", 1.0))
    if name == "linear":
        proto = geodesic.Protocol.linear([0.0], [E_f])
    else:
        proto = geodesic.geodesic_1d(fast, 0.0, E_f, beta=beta).protocol
    tol = config["tolerances"]
    run = simulate.propagate(model, proto, T, n_records=11, rtol=tol["rtol"], atol=tol["atol"])
    return simulate.work_accounting(run, fast).W_diss


def cmd_compare(config, out: Collector) -> dict:
    if config["model"]["name"] != "gibbs_mixing_qubit":
        raise ConfigError("cli.compare: closed forms exist only for model gibbs_mixing_qubit")
    beta = as_list(config["model"]["beta"])[0]
    tau = config["model"].get("tau", 1.0)
    Ts = as_list(config["simulation"]["T"])
    items = [(E, name, T) for E in as_list(config["simulation"]["E_f"]) for name in ("linear", "geodesic")
             for T in Ts]
    values = dict(zip(items, _pool_map(partial(_compare_job, config), items, config["jobs"])))
    rows, fits = [], []
    for E in as_list(config["simulation"]["E_f"]):
        closed_lin = tau * models.w_linear_closed_form(beta * E) / beta
        closed_geo = tau * models.w_geodesic_closed_form(beta * E) / beta
        err_lin, err_geo = [], []
        for T in Ts:
            lin, geo = values[(E, "linear", T)], values[(E, "geodesic", T)]
            err_lin.append(T * lin - closed_lin)
            err_geo.append(T * geo - closed_geo)
            rows.append({"E_f[1/beta]": E, "T[tau]": T, "T*Wdiss_linear[tau/beta]": T * lin,
                         "closed_linear[tau/beta]": closed_lin, "T*Wdiss_geodesic[tau/beta]": T * geo,
                         "closed_geodesic[tau/beta]": closed_geo, "ratio[-]": lin / geo,
                         "closed_ratio[-]": closed_lin / closed_geo})
        fit = {"E_f": E}
        if len(Ts) >= 2:
            fit["slope_linear"] = simulate.convergence_fit(Ts, err_lin)[0]
            fit["slope_geodesic"] = simulate.convergence_fit(Ts, err_geo)[0]
        fit["relative_error_linear_at_max_T"] = abs(err_lin[-1]) / closed_lin
        fits.append(fit)
    out.table("compare", rows)
    return {"fits": fits}


def _ising_job(config, beta):
    g = parse_axis(config["grid"]["g"])
    field = models.IsingMetric(beta, config["model"].get("tau", 1.0))
    m = np.array([field([x])[0, 0] for x in g])
    gamma = np.array([models.ising_christoffel(x, beta) for x in g])
    start, end = config["endpoints"]["start"][0], config["endpoints"]["end"][0]
    sol = geodesic.geodesic_1d(field, start, end, n_knots=config["tolerances"]["n_knots"], beta=beta)
    speed = np.abs(sol.protocol.velocities[:, 0])
    i = int(np.argmin(speed))
    summary = {"beta": beta, "argmax_g": float(g[int(np.argmax(m))]), "action": sol.action, "length": sol.length,
               "min_speed_g": float(sol.protocol.values[i, 0]),
               "end_velocities": [float(sol.protocol.velocities[0, 0]), float(sol.protocol.velocities[-1, 0])]}
    return m, gamma, sol.tabulated().protocol, summary


def cmd_ising_fig2(config, out: Collector) -> dict:
    betas = as_list(config["model"]["beta"])
    g = parse_axis(config["grid"]["g"])
    results = _pool_map(partial(_ising_job, config), betas, config["jobs"])
    metric_rows = [{"g[-]": x, **{f"m_beta{_tag(b)}[J^2 tau]": r[0][k] for b, r in zip(betas, results)}}
                   for k, x in enumerate(g)]
    gamma_rows = [{"g[-]": x, **{f"Gamma_beta{_tag(b)}[-]": r[1][k] for b, r in zip(betas, results)}}
                  for k, x in enumerate(g)]
    knots = results[0][2].knots
    geo_rows = []
    for k, t in enumerate(knots):
        row = {"t[T]": t}
        for b, r in zip(betas, results):
            row[f"g_beta{_tag(b)}[-]"] = r[2].values[k, 0]
            row[f"dg/dt_beta{_tag(b)}[1/T]"] = r[2].velocities[k, 0]
        geo_rows.append(row)
    out.table("ising_metric", metric_rows)
    out.table("ising_christoffel", gamma_rows)
    out.table("ising_geodesic", geo_rows)
    return {"betas": [r[3] for r in results]}


def _qubit_radial_job(config, alpha, r_a=0.2, r_b=4.0):
    beta = as_list(config["model"]["beta"])[0]
    field = models.QubitClosedForm(alpha, beta, chart="radial", r_min=config["model"]["r_min"])
    return geodesic.geodesic_1d(field, r_a, r_b, n_knots=config["tolerances"]["n_knots"], beta=beta).tabulated()


def _qubit_xz_job(config, alpha):
    beta = as_list(config["model"]["beta"])[0]
    field = models.QubitClosedForm(alpha, beta, chart="xz", r_min=config["model"]["r_min"])
    start, end = MODEL_DEFAULTS["bosonic_qubit"]["endpoints"].values()
    sol = geodesic.geodesic_bvp(metric.ChristoffelField(field), start, end, n_knots=config["tolerances"]["n_knots"],
                                tol=config["tolerances"]["bvp_tol"], beta=beta)
    return sol.tabulated()


def _qubit_fig3_job(config, alpha):
    return _qubit_radial_job(config, alpha), _qubit_xz_job(config, alpha)


def _dissipation_row(beta, E):
    rep = models.linear_vs_geodesic_report(E, beta)
    return {"E_f[1/beta]": E, "W_lin[tau/beta]": rep.w_linear, "W_kmb[tau/beta]": rep.w_geodesic,
            "ratio[-]": rep.ratio, "W_lin_closed[tau/beta]": rep.w_linear_closed,
            "W_kmb_closed[tau/beta]": rep.w_geodesic_closed}


def cmd_qubit_fig3(config, out: Collector) -> dict:
    beta = as_list(config["model"]["beta"])[0]
    alphas = as_list(config["model"]["alpha"])
    r = parse_axis(config["grid"]["r"])
    x = beta * r
    out.table("qubit_eigenvalues", [
        {"r[1/beta]": ri, "lambda_d[-]": ld, "lambda_q[-]": lq, "lambda_q/lambda_d[-]": lq / ld}
        for ri, ld, lq in zip(r, models.lambda_d(x), models.lambda_q(x))
    ])
    results = _pool_map(partial(_qubit_fig3_job, config), alphas, config["jobs"])
    knots = results[0][0].protocol.knots
    radial, cart = [], []
    for k, t in enumerate(knots):
        rrow, crow = {"t[T]": t}, {"t[T]": t}
        for a, (rad, xz) in zip(alphas, results):
            rrow[f"r_alpha{_tag(a)}[1/beta]"] = rad.protocol.values[k, 0]
            rr, th = xz.protocol.values[k]
            crow[f"x_alpha{_tag(a)}[1/beta]"] = rr * np.sin(th)
            crow[f"z_alpha{_tag(a)}[1/beta]"] = rr * np.cos(th)
        radial.append(rrow)
        cart.append(crow)
    out.table("qubit_radial_geodesics", radial)
    out.table("qubit_xz_geodesics", cart)
    table = _pool_map(partial(_dissipation_row, beta), as_list(config["simulation"]["E_f"]), config["jobs"])
    out.table("qubit_dissipation", table)
    return {
        "radial": [{"alpha": a, **rad.summary()} for a, (rad, _) in zip(alphas, results)],
        "xz": [{"alpha": a, **xz.summary()} for a, (_, xz) in zip(alphas, results)],
    }


HANDLERS = {
    "metric": cmd_metric,
    "christoffel": cmd_christoffel,
    "geodesic": cmd_geodesic,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "ising-fig2": cmd_ising_fig2,
    "qubit-fig3": cmd_qubit_fig3,
}


def run(config: dict) -> dict:
    """Execute a validated configuration; returns the manifest."""
    validate_config(config)
    out = Collector(Path(config["output"]["dir"]), config["output"]["gnuplot"])
    t0 = time.perf_counter()
    summary = HANDLERS[config["command"]](config, out)
    out.json("summary", summary)
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    manifest = {
        "command": config["command"],
        "config": config,
        "config_sha256": hashlib.sha256(canonical.encode()).hexdigest(),
        "versions": {"thermolen": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "wall_time_s": time.perf_counter() - t0,
        "files": sorted(out.files),
    }
    out.json("manifest", manifest)
    return manifest


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermolen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"thermolen {__version__}")
    parser.add_argument("--print-schema", action="store_true", help="print the configuration JSON schema and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="worker processes (default: $THERMOLEN_JOBS or 1)")
    common.add_argument("--gnuplot", action="store_true", help="also write gnuplot scripts")
    common.add_argument("--seed", type=int)
    common.add_argument("--model", choices=["ising", "bosonic_qubit", "gibbs_mixing_qubit"])
    common.add_argument("--beta", type=_floats, help="inverse temperature(s), comma separated")
    common.add_argument("--alpha", type=_floats, help="bath ohmicity value(s)")
    common.add_argument("--tau", type=float)
    common.add_argument("--chart", choices=["spherical", "xz", "radial"])
    common.add_argument("--metric", choices=["full-lindblad", "kmb"])
    common.add_argument("--g", dest="grid_g", type=_axis, help="coupling grid a:b:n or list")
    common.add_argument("--r", dest="grid_r", type=_axis, help="radius grid a:b:n or list")
    common.add_argument("--theta", dest="grid_theta", type=_axis)
    common.add_argument("--phi", dest="grid_phi", type=_axis)
    common.add_argument("--E", dest="grid_E", type=_axis, help="gap grid a:b:n or list")
    common.add_argument("--start", type=_floats, help="geodesic start point")
    common.add_argument("--end", type=_floats, help="geodesic end point")
    common.add_argument("--T", type=_floats, help="protocol duration(s)")
    common.add_argument("--Ef", type=_floats, help="final gap(s) of the qubit ramp")
    common.add_argument("--protocol", choices=["linear", "geodesic", "both"])
    common.add_argument("--rtol", type=float)
    common.add_argument("--atol", type=float)
    common.add_argument("--n-knots", dest="n_knots", type=int)
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"{name} command")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.print_schema:
        print(json.dumps(load_schema(), indent=2))
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        config = resolve_config(args.command, args)
        manifest = run(config)
    except ThermolenError as exc:
        print(f"thermolen: error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"wrote {len(manifest['files'])} files to {config['output']['dir']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
