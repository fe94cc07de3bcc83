"""Monte Carlo orchestration: replica chunks, checks, verdicts and artifacts.

Replicas are processed in fixed-size chunks (``run.chunk``); within a chunk
the solver is vectorised over replicas.  Chunks are independent and can be
farmed out to a process pool (``run.workers``); their results are merged in
replica order, so the output never depends on the number of workers.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..grid import SpaceTimeField, field_from_csv, field_to_csv, gradient, l2_norm
from ..noise import ZeroNoise, check_growth, check_Har_surrogate, sample_paths
from ..regularity import (ExponentEstimate, SpectrumAccumulator, estimate_space_exponent,
                          estimate_time_exponent, parabolic_holder_norm, profile_from_spectrum, space_accumulator,
                          space_block, time_accumulator)
from ..spde import SpdeRun, a_priori_monitor, run
from ..spectral import sine_transform
from ..split import (compatibility_check, decompose, energy_estimate_check, linfty_bound_check,
                     maximum_principle_violation, residual_tolerance, y_problem)
from . import scenarios
from .config import ConfigError, ExperimentConfig, validate
from .io import atomic_write_json, atomic_write_text, code_version, summarize

log = logging.getLogger(__name__)

COMMANDS = ("simulate", "decompose", "regularity", "converge", "checks")


class MissingArtifactsError(FileNotFoundError):
    pass


@dataclass
class ScenarioOutcome:
    command: str
    config: ExperimentConfig
    records: list = field(default_factory=list)
    verdicts: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    series: list = field(default_factory=list, repr=False)
    series_header: tuple = ()
    fields: dict = field(default_factory=dict, repr=False)
    tables: dict = field(default_factory=dict, repr=False)

    @property
    def aggregates(self) -> dict:
        return summarize(self.records)

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts.values())

    def stamp(self) -> dict:
        return {"config_hash": self.config.hash, "seed": self.config.seed, "version": code_version()}

    def as_dict(self) -> dict:
        return {**self.stamp(), "command": self.command, "config": self.config.values,
                "verdicts": self.verdicts, "passed": self.passed, "aggregates": self.aggregates,
                "records": self.records, "details": self.details}


def _verdict(passed, **detail) -> dict:
    return {"passed": bool(passed), **detail}


# --- per-chunk work ----------------------------------------------------------

def _assemble_run(prob, values, path, replicas) -> SpdeRun:
    h = prob.grid.h
    meta = {"dt": prob.times.dt, "h": h, "n_steps": prob.times.n_steps, "n_interior": prob.grid.n_interior,
            "T": prob.times.horizon, "seed": None if path is None else path.seed, "replicas": list(replicas)}
    model = prob.model if path is not None else ZeroNoise()
    return SpdeRun(SpaceTimeField(prob.grid, prob.times, values), path, prob.coeffs, model, meta,
                   l2_norm(values, h), l2_norm(gradient(values, h), h), np.max(np.abs(values), axis=-1))


def _simulate_chunk(cfg: ExperimentConfig, replicas: list[int], u_given: np.ndarray | None = None) -> SpdeRun:
    prob = scenarios.problem(cfg)
    path = None
    if cfg["noise.variant"] != "none":
        path = sample_paths(cfg.seed, prob.times, prob.model.k_trunc, replicas)
    if u_given is not None:
        return _assemble_run(prob, u_given, path, replicas)
    if path is not None:
        return run(prob, path)
    single = run(prob, None).u.values
    return _assemble_run(prob, np.repeat(single[None], len(replicas), axis=0), None, replicas)


def _mode_probe(cfg, values, times, name, rec_list):
    k = cfg["report.mode_k"]
    if k > values.shape[-1]:
        raise ConfigError(f"report.mode_k = {k} exceeds spde.nx")
    for t in cfg["report.mode_times"]:
        idx = int(round(t / times.dt))
        c = sine_transform(values[:, idx, :]).coeffs[:, k - 1]
        for rec, ck in zip(rec_list, c):
            rec[f"{name}_mode{k}_t{t:g}"] = float(ck)


def _process_chunk(values: dict, command: str, replicas: list[int], n_fields: int, n_series: int,
                   u_given: np.ndarray | None = None) -> dict:
    cfg = ExperimentConfig(values)
    r = _simulate_chunk(cfg, replicas, u_given)
    grid, times = r.u.grid, r.u.times
    recs = [{"replica": rep} for rep in replicas]
    mon = a_priori_monitor(r, cfg["check.apriori_p"])
    ceiling = cfg["check.apriori_ceiling"]
    for i, rec in enumerate(recs):
        rec["u_sup"] = float(r.sup[i].max())
        rec["u_l2_final"] = float(r.l2[i, -1])
        rec["grad_energy_final"] = float(mon["grad_energy"][i, -1])
        rec["apriori_peak"] = float(max(mon["lp"][i].max(), mon["grad_energy"][i].max()))
        rec["apriori_flagged"] = bool(rec["apriori_peak"] > ceiling)
    _mode_probe(cfg, r.u.values, times, "u", recs)
    t = times.times
    series = []
    out = {"records": recs, "series": series, "fields": {}, "acc": {}}
    keep = [i for i, rep in enumerate(replicas) if n_fields < 0 or rep < n_fields]
    for i in keep:
        out["fields"][replicas[i]] = {"u": r.u.values[i]}

    if command == "simulate" or (command == "checks" and not _needs_decomposition(cfg)):
        for i, rep in enumerate(replicas):
            if rep < n_series:
                for n in range(t.size):
                    series.append((rep, t[n], r.l2[i, n], mon["grad_energy"][i, n], r.sup[i, n]))
        return out

    d = decompose(r, cfg["split.eigenvalues"] == "discrete")
    yp = y_problem(r.u, d.z, r.coeffs)
    en = energy_estimate_check(d.y.values, yp, cfg["check.c_max"])
    li = linfty_bound_check(d.y.values, yp, cfg["check.r0"], cfg["check.c_max"])
    pure = scenarios.is_pure_diffusion(cfg)
    for i, rec in enumerate(recs):
        rec["residual_sup"] = float(d.residual_sup[i])
        rec["residual_tol"] = residual_tolerance(times.dt, grid.h, rec["u_sup"], cfg["check.residual_factor"])
        rec["energy_ratio"] = float(en.ratio[i])
        rec["linfty_ratio"] = float(li.ratio[i])
        if pure:
            rec["maxprinciple_violation"] = maximum_principle_violation(r.u.values[i])
    _mode_probe(cfg, d.z.values, times, "z", recs)
    for i in keep:
        out["fields"][replicas[i]].update(y=d.y.values[i], z=d.z.values[i])
    for i, rep in enumerate(replicas):
        if rep < n_series:
            for n in range(t.size):
                series.append((rep, t[n], r.l2[i, n], mon["grad_energy"][i, n], r.sup[i, n],
                               d.residual_series[i, n]))

    if command == "regularity":
        flds = {"u": r.u.values, "y": d.y.values, "z": d.z.values}
        min_lags = cfg["reg.min_lags"]
        for name in cfg["reg.fields"]:
            v = flds[name]
            ta = time_accumulator(t.size, times.dt, min_lags=min_lags)
            sa = space_accumulator(grid.n_interior, grid.h, min_lags=min_lags)
            sp = SpectrumAccumulator()
            ta.add(v)
            sa.add(space_block(v))
            sp.add(v)
            out["acc"][name] = (ta, sa, sp)
            for i, rec in enumerate(recs):
                rec[f"{name}_time_exponent"] = estimate_time_exponent(v[i], times.dt, min_lags=min_lags).exponent
                rec[f"{name}_space_exponent"] = estimate_space_exponent(v[i], grid.h, min_lags=min_lags).exponent
        beta = cfg["reg.beta"]
        for i, rec in enumerate(recs):
            f = SpaceTimeField(grid, times, r.u.values[i])
            rec["u_holder_norm"] = parabolic_holder_norm(f.with_boundary(), t, grid.nodes_with_boundary, beta,
                                                         seed=replicas[i])
    return out


def _needs_decomposition(cfg) -> bool:
    return any(c in cfg["checks"] for c in ("decomposition", "energy", "linfty", "maxprinciple"))


def _needs_simulation(cfg, command) -> bool:
    if command != "checks":
        return True
    return _needs_decomposition(cfg) or "apriori" in cfg["checks"]


def _chunks(n: int, size: int) -> list[list[int]]:
    return [list(range(s, min(s + size, n))) for s in range(0, n, size)]


def _run_chunks(cfg: ExperimentConfig, command: str, u_given: np.ndarray | None = None) -> list[dict]:
    n = cfg["replicas"]
    chunks = _chunks(n, cfg["run.chunk"])
    args = [(cfg.values, command, c, cfg["output.fields"], cfg["output.series_replicas"],
             None if u_given is None else u_given[c[0]: c[-1] + 1]) for c in chunks]
    workers = min(cfg["run.workers"], len(chunks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_process_chunk, *zip(*args)))
    results = []
    for a in args:
        log.info("replicas %d..%d", a[2][0], a[2][-1])
        results.append(_process_chunk(*a))
    return results


# --- verdicts -----------------------------------------------------------------

def _max_of(records, key):
    vals = [r[key] for r in records if key in r]
    return max(vals) if vals else math.nan


def _band_verdict(value, band):
    lo, hi = band
    return _verdict(math.isfinite(value) and lo <= value <= hi, value=value, band=band)


def _static_checks(cfg, out: ScenarioOutcome, names):
    prob = scenarios.problem(cfg)
    if "compat" in names:
        rep = compatibility_check(scenarios.initial_profile(cfg), prob.coeffs, cfg["check.compat_order"],
                                  prob.grid, cfg["check.compat_tol_factor"])
        out.details["compatibility"] = rep.as_dict()
        out.verdicts["compat"] = _verdict(rep.passed, order=rep.order, tol=rep.tol, traces=rep.traces)
    if "growth" in names:
        g = check_growth(prob.model, grid=prob.grid, tol=cfg["check.growth_tol"])
        out.details["growth"] = g.as_dict()
        out.verdicts["growth"] = _verdict(g.passed, constant=g.constant)
    if "har" in names:
        probes = [scenarios.PROFILES["sine"], lambda x: 10.0 * scenarios.PROFILES["sine"](x),
                  scenarios.PROFILES["bump"], lambda x: np.sin(np.pi * x) * np.sin(3 * np.pi * x)]
        s = check_Har_surrogate(prob.model, cfg["check.har_a"], probes)
        out.details["har_surrogate"] = s.as_dict()
        out.verdicts["har"] = _verdict(s.passed, a=s.a, ratios=s.ratios)


def _replica_checks(cfg, out: ScenarioOutcome, names):
    recs = out.records
    c_max = cfg["check.c_max"]
    if "apriori" in names:
        flagged = [r["replica"] for r in recs if r["apriori_flagged"]]
        out.verdicts["apriori"] = _verdict(not flagged, ceiling=cfg["check.apriori_ceiling"], flagged=flagged)
    if "residual_sup" not in recs[0]:
        return
    if "decomposition" in names:
        bad = [r["replica"] for r in recs if not (r["residual_sup"] <= r["residual_tol"])]
        out.verdicts["decomposition"] = _verdict(not bad, worst=_max_of(recs, "residual_sup"), failing=bad)
    if "energy" in names:
        bad = [r["replica"] for r in recs if not (r["energy_ratio"] <= c_max)]
        out.verdicts["energy"] = _verdict(not bad, worst=_max_of(recs, "energy_ratio"), c_max=c_max, failing=bad)
    if "linfty" in names:
        bad = [r["replica"] for r in recs if not (r["linfty_ratio"] <= c_max)]
        out.verdicts["linfty"] = _verdict(not bad, worst=_max_of(recs, "linfty_ratio"), c_max=c_max, failing=bad)
    if "maxprinciple" in names and "maxprinciple_violation" in recs[0]:
        tol = cfg["check.maxprinciple_tol"]
        worst = _max_of(recs, "maxprinciple_violation")
        out.verdicts["maxprinciple"] = _verdict(worst <= tol, worst=worst, tol=tol)


def _regularity_summary(cfg, out: ScenarioOutcome, accs: dict):
    reports = {}
    for name, (ta, sa, sp) in accs.items():
        te: ExponentEstimate = ta.estimate()
        se: ExponentEstimate = sa.estimate()
        k_top = cfg["reg.k_top"] or None
        bp = profile_from_spectrum(sp.mean(), cfg["reg.a_list"], k_top)
        reports[name] = {"time_exponent": te.as_dict(), "space_exponent": se.as_dict(), "bessel": bp.as_dict()}
        out.tables[f"increments_{name}_time"] = te.table_csv()
        out.tables[f"increments_{name}_space"] = se.table_csv()
    out.details["regularity"] = reports
    if "bands" not in cfg["checks"]:
        return
    for key, band in (("u_time", cfg["reg.band.u_time"]), ("y_time", cfg["reg.band.y_time"]),
                      ("z_time", cfg["reg.band.z_time"]), ("u_space", cfg["reg.band.u_space"])):
        name, axis = key.split("_")
        if band is not None and name in reports:
            out.verdicts[f"band.{key}"] = _band_verdict(reports[name][f"{axis}_exponent"]["exponent"], band)
    band = cfg["reg.band.z_bessel"]
    if band is not None and "z" in reports:
        out.verdicts["band.z_bessel"] = _band_verdict(reports["z"]["bessel"]["cutoff"], band)
    if cfg["reg.y_above_z"] and "y" in reports and "z" in reports:
        ey = reports["y"]["time_exponent"]["exponent"]
        ez = reports["z"]["time_exponent"]["exponent"]
        out.verdicts["y_above_z"] = _verdict(ey > ez, y=ey, z=ez)


# --- commands -------------------------------------------------------------------

def execute(cfg: ExperimentConfig, command: str, u_given: np.ndarray | None = None) -> ScenarioOutcome:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    if command == "converge":
        return converge(cfg)
    out = ScenarioOutcome(command, cfg)
    names = set(cfg["checks"])
    if command in ("decompose", "checks"):
        _static_checks(cfg, out, names & ({"compat"} if command == "decompose" else {"compat", "growth", "har"}))
    if not _needs_simulation(cfg, command):
        return out
    results = _run_chunks(cfg, command, u_given)
    accs: dict = {}
    for res in results:
        out.records.extend(res["records"])
        out.series.extend(res["series"])
        out.fields.update(res["fields"])
        for name, triple in res["acc"].items():
            if name in accs:
                for a, b in zip(accs[name], triple):
                    a.merge(b)
            else:
                accs[name] = triple
    decomposed = "residual_sup" in out.records[0]
    out.series_header = ("replica", "t", "l2", "grad_energy", "sup") + (("residual",) if decomposed else ())
    if command == "simulate":
        _replica_checks(cfg, out, names & {"apriori"})
    elif command in ("decompose", "checks"):
        _replica_checks(cfg, out, names)
    if command == "regularity":
        _regularity_summary(cfg, out, accs)
    return out


def _restrict(fine: np.ndarray, nf: int, nc: int, sf: int, sc: int) -> np.ndarray:
    sx = (nf + 1) // (nc + 1)
    st = sf // sc
    return fine[..., ::st, :][..., sx - 1::sx]


def _ladder_check(cfg, levels):
    if len(levels) < 3:
        raise ConfigError("converge.ladder: need at least 3 levels")
    noisy = cfg["noise.variant"] != "none"
    steps = []
    for nx, dt in levels:
        _, times = scenarios.grids(cfg, nx, dt)
        steps.append(times.n_steps)
    for i in range(len(levels) - 1):
        (n0, _), (n1, _) = levels[i], levels[i + 1]
        s0, s1 = steps[i], steps[i + 1]
        ok = (n1 + 1) % (n0 + 1) == 0 and s1 % s0 == 0 and (n1 > n0 or s1 > s0)
        if ok and noisy:
            f = s1 // s0
            ok = f & (f - 1) == 0
        if not ok:
            raise ConfigError(f"converge.ladder: level {i + 1} ({n1}:{levels[i + 1][1]:g}) is not nested in "
                              f"level {i} ({n0}:{levels[i][1]:g}); node counts n+1 and step counts must divide"
                              + (" with power-of-two time refinement" if noisy else ""))
    return steps


def converge(cfg: ExperimentConfig) -> ScenarioOutcome:
    levels = cfg["converge.ladder"]
    steps = _ladder_check(cfg, levels)
    exact = scenarios.analytic_heat(cfg)
    ref = cfg["converge.reference"]
    if ref == "analytic" and exact is None:
        raise ConfigError("converge.reference: no analytic solution for this setup; use finest")
    use_exact = exact is not None and ref != "finest"
    noisy = cfg["noise.variant"] != "none"
    k = cfg["noise.k_trunc"] or min(nx for nx, _ in levels)
    lv = dict(cfg.values, **{"noise.k_trunc": k})
    out = ScenarioOutcome("converge", cfg)
    n_rep = cfg["replicas"] if noisy else 1
    errs = np.zeros((n_rep, len(levels)))
    for chunk in _chunks(n_rep, cfg["run.chunk"]):
        sols = []
        for nx, dt in levels:
            c = validate(dict(lv, **{"spde.nx": nx, "spde.dt": dt}))
            sols.append(_simulate_chunk(c, chunk).u)
        for i, u in enumerate(sols):
            if use_exact:
                diff = u.values - exact(u.times.times, u.grid.nodes)
            elif i < len(levels) - 1:
                fine = sols[-1]
                diff = u.values - _restrict(fine.values, fine.grid.n_interior, u.grid.n_interior,
                                            steps[-1], steps[i])
            else:
                continue
            errs[chunk[0]: chunk[-1] + 1, i] = np.max(np.abs(diff), axis=(-2, -1))
    mean_err = errs.mean(axis=0)
    n_err = len(levels) if use_exact else len(levels) - 1
    rows = []
    for i, (nx, dt) in enumerate(levels):
        row = {"level": i, "nx": nx, "dt": dt, "h": 1.0 / (nx + 1),
               "error": float(mean_err[i]) if i < n_err else math.nan,
               "time_order": math.nan, "space_order": math.nan}
        if 0 < i < n_err:
            e0, e1 = mean_err[i - 1], mean_err[i]
            if e0 > 0 and e1 > 0:
                r = math.log(e0 / e1)
                pdt, pnx = levels[i - 1][1], levels[i - 1][0]
                if dt != pdt:
                    row["time_order"] = r / math.log(pdt / dt)
                if nx != pnx:
                    row["space_order"] = r / math.log((nx + 1) / (pnx + 1))
        rows.append(row)
    out.details["convergence"] = {"reference": "analytic" if use_exact else "finest", "levels": rows,
                                  "k_trunc": k if noisy else 0}
    out.records = [{"replica": i, **{f"error_level{j}": float(errs[i, j]) for j in range(n_err)}}
                   for i in range(n_rep)]
    if "orders" in cfg["checks"]:
        for axis in ("time", "space"):
            need = cfg[f"converge.min_{axis}_order"]
            if need <= 0:
                continue
            orders = [r[f"{axis}_order"] for r in rows if not math.isnan(r[f"{axis}_order"])]
            exact_zero = all(r["error"] == 0 for r in rows[:n_err])
            ok = exact_zero or (bool(orders) and min(orders) >= need)
            out.verdicts[f"{axis}_order"] = _verdict(ok, orders=orders, required=need)
    out.series_header = ("level", "nx", "dt", "h", "error", "time_order", "space_order")
    out.series = [tuple(r[k] for k in out.series_header) for r in rows]
    return out


# --- artifacts ------------------------------------------------------------------

def _csv_text(header, rows, comment) -> str:
    lines = [f"# {comment}", ",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def write_artifacts(out: ScenarioOutcome, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    st = out.stamp()
    comment = f"{st['version']} config={st['config_hash']} seed={st['seed']} command={out.command}"
    if out.fields:
        grid, times = scenarios.grids(out.config)
        for rep, flds in sorted(out.fields.items()):
            for name, values in flds.items():
                f = SpaceTimeField(grid, times, values)
                field_to_csv(f, out_dir / "fields" / f"{name}_r{rep:04d}.csv", f"{comment} replica={rep} field={name}")
    atomic_write_text(out_dir / "report.csv", _csv_text(out.series_header or ("replica",), out.series, comment))
    for name, text in out.tables.items():
        atomic_write_text(out_dir / f"{name}.csv", f"# {comment}\n{text}")
    atomic_write_json(out_dir / "run.json", out.as_dict())
    return out_dir / "run.json"


def load_artifacts(run_dir: str | Path) -> tuple[ExperimentConfig, np.ndarray]:
    """Config and u fields of a previous ``simulate`` run (all replicas must have been written)."""
    run_dir = Path(run_dir)
    meta_path = run_dir / "run.json"
    if not meta_path.exists():
        raise MissingArtifactsError(f"missing artifacts: {meta_path} not found")
    meta = json.loads(meta_path.read_text())
    cfg = validate(meta["config"])
    if cfg.hash != meta.get("config_hash"):
        raise MissingArtifactsError(f"{meta_path}: config hash mismatch, artifacts were edited")
    grid, times = scenarios.grids(cfg)
    blocks = []
    for rep in range(cfg["replicas"]):
        p = run_dir / "fields" / f"u_r{rep:04d}.csv"
        if not p.exists():
            raise MissingArtifactsError(f"missing artifacts: {p} (rerun simulate with output.fields = -1)")
        f = field_from_csv(p)
        if f.grid != grid or f.values.shape != (times.n_steps + 1, grid.n_interior):
            raise MissingArtifactsError(f"{p}: grid does not match the stored config")
        blocks.append(f.values)
    return cfg, np.stack(blocks)
