"""End-to-end orchestration: data, tune, forecast, combine, evaluate, detect, report.

Each stage's result is pickled under ``<output>/checkpoints/<config hash>/``
and reused on a rerun with the same configuration. Output files are written
from the stage results every time, so they are complete even when all stages
come from checkpoints. Nothing that varies between runs (wall-clock time,
absolute paths) goes into an output file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import pickle
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .anomaly import run_experiment
from .backtest import (
    MEMBER_ORDER,
    DesignCache,
    EnsembleForecast,
    PointForecast,
    TuningGrid,
    WindowSpec,
    assemble_ensemble,
    grid_search_tune,
    member_name,
    rolling_day_ahead,
)
from .combiners import (
    CombinerWindow,
    fit_ea,
    fit_ea_ev,
    fit_gamlss,
    fit_gbqrt,
    fit_naive,
    fit_qra,
)
from .config import MODEL_LABELS, RunConfig
from .distributions import LEVELS
from .errors import DataError, HeatcastError, StageError
from .metrics import crps_sample, mae, pit, pit_histogram, rmse
from .seeding import generator, substream
from .synthetic import generate_synthetic
from .timeseries import HeatingPeriodSpec, LoadSeries, ingest_csv, write_csv

log = logging.getLogger(__name__)

STAGES = ("data", "tune", "forecast", "combine", "evaluate", "detect", "report")


def _ts(t) -> str:
    return str(np.datetime64(t, "s"))


def _num(x) -> str:
    return repr(float(x))


@dataclass
class Building:
    name: str
    series: LoadSeries
    validation_days: np.ndarray
    test_days: np.ndarray


@dataclass
class DayPrediction:
    day: np.datetime64
    rows: np.ndarray
    dist: object


@dataclass
class ModelForecast:
    """One probabilistic model's test-period predictions, one entry per day."""

    name: str
    days: list = field(default_factory=list)
    fits: list = field(default_factory=list)

    def rows(self) -> np.ndarray:
        return np.concatenate([d.rows for d in self.days]) if self.days else np.zeros(0, dtype=int)

    def restrict(self, keep: np.ndarray) -> "ModelForecast":
        out = ModelForecast(self.name, fits=self.fits)
        for d in self.days:
            mask = keep[d.rows]
            if mask.any():
                out.days.append(DayPrediction(d.day, d.rows[mask], d.dist[np.flatnonzero(mask)]))
        return out

    def cdf(self, y_full: np.ndarray) -> np.ndarray:
        return np.concatenate([d.dist.cdf(y_full[d.rows]) for d in self.days])


class Pipeline:
    def __init__(self, config: RunConfig, output_dir: str | Path | None = None):
        self.config = config
        self.out = Path(output_dir if output_dir is not None else config.output_dir)
        self.ckpt_dir = self.out / "checkpoints" / config.config_hash
        self.results: dict = {}
        self.artifacts: dict[str, str] = {}
        self.heating = HeatingPeriodSpec(config.heating_start, config.heating_end)
        self.holidays = tuple(date.fromisoformat(h) for h in config.holidays)
        self._caches: dict = {}

    # -- plumbing -------------------------------------------------------------

    def _header(self) -> str:
        return self.config.header()

    def _register(self, path: Path) -> None:
        rel = path.relative_to(self.out).as_posix()
        self.artifacts[rel] = hashlib.sha256(path.read_bytes()).hexdigest()

    def _table(self, rel: str, header: list, rows) -> None:
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            fh.write(f"# {self._header()}\n")
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        self._register(path)

    def _json(self, rel: str, payload: dict) -> None:
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = {"config_hash": self.config.config_hash, "master_seed": self.config.master_seed}
        doc.update(payload)
        path.write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n")
        self._register(path)

    def _write_manifest(self, status: str, failure: dict | None = None) -> None:
        path = self.out / "manifest.json"
        self.out.mkdir(parents=True, exist_ok=True)
        doc = {
            "config_hash": self.config.config_hash,
            "master_seed": self.config.master_seed,
            "version": __version__,
            "status": status,
            "stages_completed": [s for s in STAGES if s in self.results],
            "artifacts": [{"path": p, "sha256": h} for p, h in sorted(self.artifacts.items())],
        }
        if failure:
            doc["failure"] = failure
        path.write_text(json.dumps(doc, indent=1) + "\n")

    def cache(self, building: Building) -> DesignCache:
        if building.name not in self._caches:
            self._caches[building.name] = DesignCache(building.series, self.heating, self.holidays)
        return self._caches[building.name]

    def run(self, until: str = "report") -> dict:
        if until not in STAGES:
            raise ValueError(f"unknown stage {until!r}")
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "config.txt").write_text(f"# {self._header()}\n" + self.config.to_text())
        self._register(self.out / "config.txt")
        for stage in STAGES[: STAGES.index(until) + 1]:
            try:
                self._run_stage(stage)
            except Exception as exc:
                self._write_manifest("incomplete", {"stage": stage, "cause": f"{type(exc).__name__}: {exc}"})
                if isinstance(exc, StageError):
                    raise
                raise StageError(stage, exc) from exc
        self._write_manifest("complete" if until == "report" else f"complete through {until}")
        return self.results

    def _run_stage(self, stage: str) -> None:
        ckpt = self.ckpt_dir / f"{stage}.pkl"
        if ckpt.exists():
            log.info("stage %s: reusing checkpoint", stage)
            with ckpt.open("rb") as fh:
                result = pickle.load(fh)
        else:
            log.info("stage %s: computing", stage)
            result = getattr(self, f"_compute_{stage}")()
            self.ckpt_dir.mkdir(parents=True, exist_ok=True)
            tmp = ckpt.with_suffix(".tmp")
            with tmp.open("wb") as fh:
                pickle.dump(result, fh, protocol=4)
            tmp.replace(ckpt)
        self.results[stage] = result
        getattr(self, f"_emit_{stage}")(result)

    # -- data -----------------------------------------------------------------

    def _compute_data(self) -> list[Building]:
        cfg = self.config
        if cfg.input == "synthetic":
            series_list = generate_synthetic(cfg.synthetic)
        else:
            paths = [p.strip() for p in cfg.input.split(",") if p.strip()]
            series_list = [ingest_csv(p, meter_id=Path(p).stem) for p in paths]
        buildings = []
        for s in series_list:
            years = s.timestamps.astype("datetime64[Y]").astype(int) + 1970
            for y in (cfg.train_year, cfg.validation_year, cfg.test_year):
                if not np.any(years == y):
                    raise DataError(f"{s.meter_id}: no data in year {y}")
            cache = DesignCache(s, self.heating, self.holidays)
            ryears = cache.retained_days.astype("datetime64[Y]").astype(int) + 1970
            val = cache.retained_days[ryears == cfg.validation_year]
            test = cache.retained_days[ryears == cfg.test_year]
            if cfg.validation_days_limit:
                val = val[-cfg.validation_days_limit:]
            if cfg.test_days_limit:
                test = test[: cfg.test_days_limit]
            if val.size == 0 or test.size == 0:
                raise DataError(f"{s.meter_id}: empty validation or test span")
            self._caches[s.meter_id] = cache
            buildings.append(Building(s.meter_id, s, val, test))
        return buildings

    def _emit_data(self, buildings) -> None:
        if self.config.input != "synthetic":
            return
        for b in buildings:
            path = self.out / "data" / f"{b.name}.csv"
            path.parent.mkdir(parents=True, exist_ok=True)
            write_csv(b.series, path)
            text = path.read_text()
            path.write_text(f"# {self._header()}\n" + text)
            self._register(path)

    # -- tune -----------------------------------------------------------------

    def _grid(self, method: str) -> TuningGrid:
        cfg = self.config
        return TuningGrid(method, {"lasso": cfg.lasso_grid, "gam": cfg.gam_grid, "gbr": cfg.gbr_grid}[method])

    def _compute_tune(self) -> dict:
        out = {}
        for b in self.results["data"]:
            cache = self.cache(b)
            per = {}
            for method, days in MEMBER_ORDER:
                res = grid_search_tune(
                    cache, method, WindowSpec(days), self._grid(method), b.validation_days,
                    self.config.retrain_every(method),
                )
                log.info("%s %s: best %s", b.name, member_name(method, days), res.best)
                per[member_name(method, days)] = {
                    "method": method,
                    "days": days,
                    "best": res.best,
                    "scores": dict(res.scores),
                    "validation": res.forecasts[res.best],
                }
            out[b.name] = per
        return out

    def _emit_tune(self, tuned) -> None:
        rows = []
        for bname, per in tuned.items():
            for name, t in per.items():
                for cand, score in t["scores"].items():
                    rows.append([bname, t["method"], t["days"], _num(cand), _num(score), int(cand == t["best"])])
        self._table("tuning.csv", ["building", "method", "d_train", "candidate", "validation_mae", "selected"], rows)

    # -- forecast -------------------------------------------------------------

    def _compute_forecast(self) -> dict:
        out = {}
        tuned = self.results["tune"]
        for b in self.results["data"]:
            cache = self.cache(b)
            members = []
            for method, days in MEMBER_ORDER:
                t = tuned[b.name][member_name(method, days)]
                test = rolling_day_ahead(cache, method, WindowSpec(days), t["best"], b.test_days, self.config.retrain_every(method))
                val = t["validation"]
                members.append(PointForecast(
                    test.name,
                    np.concatenate([val.rows, test.rows]),
                    np.concatenate([val.timestamps, test.timestamps]),
                    np.concatenate([val.values, test.values]),
                ))
            out[b.name] = assemble_ensemble(members)
        return out

    def _test_mask(self, b: Building, ens: EnsembleForecast) -> np.ndarray:
        return np.isin(b.series.days[ens.rows], b.test_days)

    def _emit_forecast(self, ensembles) -> None:
        for b in self.results["data"]:
            ens = ensembles[b.name]
            test = ens.subset(self._test_mask(b, ens))
            m = test.members.shape[1]
            rows = [[_ts(t)] + [_num(v) for v in mem] + [_num(mu), _num(sd)]
                    for t, mem, mu, sd in zip(test.timestamps, test.members, test.mean, test.sd)]
            self._table(f"forecasts/{b.name}.csv", ["timestamp"] + [f"member_{i + 1}" for i in range(m)] + ["ens_mean", "ens_sd"], rows)

    # -- combine --------------------------------------------------------------

    def _compute_combine(self) -> dict:
        out = {}
        for b in self.results["data"]:
            out[b.name] = self._combine_building(b, self.results["forecast"][b.name])
        return out

    def _combine_building(self, b: Building, ens: EnsembleForecast) -> dict:
        cfg = self.config
        cache = self.cache(b)
        s = b.series
        y_all = s.load
        lag24 = s.lagged(s.load, 24)
        ens_days = s.days[ens.rows]
        gbr_names, gbr_full = cache.design("gbr")
        gbr_depth = self.results["tune"][b.name][member_name("gbr", 365)]["best"]
        cadence = {"gamlss": cfg.gamlss_refit_every_days, "qra": cfg.qra_refit_every_days, "gbqrt": cfg.gbqrt_refit_every_days}
        forecasts = {m: ModelForecast(m) for m in cfg.models}
        fitted: dict = {m: None for m in cfg.models}

        for i, day in enumerate(b.test_days):
            window_days = cache.training_days(day, WindowSpec(cfg.combiner_window_days))
            in_win = np.isin(ens_days, window_days) & np.isfinite(y_all[ens.rows])
            win_rows = ens.rows[in_win]
            today = ens_days == day
            rows = ens.rows[today]
            members = ens.members[today]
            window = None
            if win_rows.size >= 2:
                window = CombinerWindow(ens.members[in_win], y_all[win_rows], lag24[win_rows])
            for model in cfg.models:
                if i % cadence.get(model, 1) == 0:
                    fitted[model] = self._fit_combiner(model, window, cache, day, gbr_names, gbr_full, gbr_depth)
                    if fitted[model] is not None:
                        forecasts[model].fits.append((day, fitted[model]))
                mdl = fitted[model]
                if mdl is None or rows.size == 0:
                    continue
                if model == "naive":
                    ok = np.isfinite(lag24[rows])
                    if ok.any():
                        forecasts[model].days.append(DayPrediction(day, rows[ok], mdl.predict(lag24[rows][ok])))
                elif model == "gbqrt":
                    x = gbr_full[rows]
                    ok = np.isfinite(x).all(axis=1)
                    if ok.any():
                        forecasts[model].days.append(DayPrediction(day, rows[ok], mdl.predict(x[ok])))
                elif model == "ea":
                    forecasts[model].days.append(DayPrediction(day, rows, mdl.predict(members.mean(axis=1))))
                else:
                    forecasts[model].days.append(DayPrediction(day, rows, mdl.predict(members)))
        return forecasts

    def _fit_combiner(self, model, window, cache, day, gbr_names, gbr_full, gbr_depth):
        cfg = self.config
        try:
            if model == "gbqrt":
                train = cache.matrix(gbr_names, gbr_full, cache.rows_of(cache.training_days(day, WindowSpec(365))))
                if len(train) < 0.5 * WindowSpec(365).n_train:
                    log.warning("GBQRT: too few usable rows before %s", day)
                    return None
                return fit_gbqrt(train, int(gbr_depth))
            if window is None:
                return None
            if model == "ea":
                return fit_ea(window)
            if model == "ea_ev":
                return fit_ea_ev(window)
            if model == "naive":
                return fit_naive(window)
            if model == "gamlss":
                return fit_gamlss(window, penalty=cfg.gamlss_penalty, n_knots=cfg.gamlss_knots)
            if model == "qra":
                return fit_qra(window)
        except ValueError as exc:
            log.warning("%s fit before %s failed: %s", model, day, exc)
            return None
        raise ValueError(f"unknown model {model!r}")

    def _emit_combine(self, combined) -> None:
        level_cols = [f"q{round(100 * t):02d}" for t in LEVELS]
        for b in self.results["data"]:
            ts = b.series.timestamps
            for model, fc in combined[b.name].items():
                rows, days = [], []
                for d in fc.days:
                    tau = np.broadcast_to(LEVELS, d.rows.shape + LEVELS.shape)
                    q = d.dist.quantile(tau)
                    for r, qq in zip(d.rows, q):
                        rows.append([_ts(ts[r])] + [_num(v) for v in qq])
                    days.append({"day": str(d.day), "timestamps": [_ts(ts[r]) for r in d.rows], "distribution": d.dist.to_dict()})
                self._table(f"quantiles/{b.name}_{model}.csv", ["timestamp"] + level_cols, rows)
                self._json(f"distributions/{b.name}_{model}.json", {"building": b.name, "model": MODEL_LABELS[model], "days": days})

    # -- evaluate -------------------------------------------------------------

    def common_rows(self, b: Building) -> np.ndarray:
        """Test hours with an observation and a prediction from every model."""
        s = b.series
        keep = np.isfinite(s.load)
        ens = self.results["forecast"][b.name]
        mask = np.zeros(len(s), dtype=bool)
        mask[ens.rows[self._test_mask(b, ens)]] = True
        keep &= mask
        for fc in self.results["combine"][b.name].values():
            mask = np.zeros(len(s), dtype=bool)
            mask[fc.rows()] = True
            keep &= mask
        return keep

    def _compute_evaluate(self) -> dict:
        cfg = self.config
        out = {}
        for b in self.results["data"]:
            keep = self.common_rows(b)
            y_full = b.series.load
            ens = self.results["forecast"][b.name]
            sel = keep[ens.rows]
            y = y_full[ens.rows[sel]]
            point = {}
            for j, name in enumerate(ens.member_names):
                point[name] = {"mae": mae(y, ens.members[sel, j]), "rmse": rmse(y, ens.members[sel, j])}
            point["ensemble_mean"] = {"mae": mae(y, ens.mean[sel]), "rmse": rmse(y, ens.mean[sel])}
            crps, pits = {}, {}
            for model, fc in self.results["combine"][b.name].items():
                fc = fc.restrict(keep)
                rng_c = generator(cfg.master_seed, f"crps/{b.name}/{model}")
                rng_p = generator(cfg.master_seed, f"pit/{b.name}/{model}")
                scores, pv = [], []
                for d in fc.days:
                    yd = y_full[d.rows]
                    scores.append(crps_sample(d.dist, yd, rng_c, cfg.crps_samples))
                    pv.append(pit(d.dist, yd, rng_p))
                hist = pit_histogram(np.concatenate(pv))
                crps[model] = float(np.mean(np.concatenate(scores)))
                pits[model] = hist.bin_frequencies.tolist()
            out[b.name] = {"n_hours": int(keep.sum()), "point": point, "crps": crps, "pit": pits}
        return out

    def _emit_evaluate(self, ev) -> None:
        point_rows, crps_rows, pit_rows = [], [], []
        edges = np.round(np.linspace(0, 1, 11), 1)
        for bname, r in ev.items():
            for name, v in r["point"].items():
                point_rows.append([bname, name, _num(v["mae"]), _num(v["rmse"])])
            for model, v in r["crps"].items():
                crps_rows.append([bname, MODEL_LABELS[model], _num(v)])
            for model, freqs in r["pit"].items():
                for k, f in enumerate(freqs):
                    pit_rows.append([bname, MODEL_LABELS[model], _num(edges[k]), _num(edges[k + 1]), _num(f)])
        self._table("metrics/point_table.csv", ["building", "model", "MAE", "RMSE"], point_rows)
        self._table("metrics/crps_table.csv", ["building", "model", "CRPS"], crps_rows)
        self._table("metrics/pit_table.csv", ["building", "model", "bin_lo", "bin_hi", "frequency"], pit_rows)

    # -- detect ---------------------------------------------------------------

    def _compute_detect(self) -> dict:
        cfg = self.config
        out = {}
        for b in self.results["data"]:
            keep = self.common_rows(b)
            rows = np.flatnonzero(keep)
            cdf_of: dict[str, Callable] = {}
            for model, fc in self.results["combine"][b.name].items():
                fc = fc.restrict(keep)
                order = np.argsort(fc.rows(), kind="stable")
                cdf_of[MODEL_LABELS[model]] = self._cdf_fn(fc, rows, order)
            out[b.name] = run_experiment(
                cdf_of, b.series.load[rows], runs=cfg.anomaly_runs, sweep=cfg.threshold_sweep,
                seed=substream(cfg.master_seed, f"injection/{b.name}"), rate=cfg.anomaly_rate,
            )
        return out

    @staticmethod
    def _cdf_fn(fc: ModelForecast, rows: np.ndarray, order: np.ndarray):
        n_full = int(rows.max()) + 1 if rows.size else 0

        def fn(y_obs: np.ndarray) -> np.ndarray:
            full = np.full(n_full, np.nan)
            full[rows] = y_obs
            return fc.cdf(full)[order]

        return fn

    def _emit_detect(self, det) -> None:
        roc_rows = []
        for bname, res in det.items():
            rows = [[r.model, r.run, _num(r.tau_lower), r.tp, r.fp, r.fn, r.tn, _num(r.tpr), _num(r.fpr)] for r in res.records]
            self._table(f"anomaly/{bname}_runs.csv", ["model", "run", "tau_lower", "TP", "FP", "FN", "TN", "TPR", "FPR"], rows)
            for model, t, tpr, fpr in res.averaged_rows():
                roc_rows.append([bname, model, _num(t), _num(tpr), _num(fpr)])
        self._table("metrics/roc_table.csv", ["building", "model", "tau_lower", "mean_TPR", "mean_FPR"], roc_rows)

    # -- report ---------------------------------------------------------------

    def _compute_report(self) -> dict:
        report = {"buildings": {}}
        for b in self.results["data"]:
            ev = self.results["evaluate"][b.name]
            det = self.results["detect"][b.name]
            tuned = {k: v["best"] for k, v in self.results["tune"][b.name].items()}
            combine = self.results["combine"][b.name]
            gamlss_fits = []
            if "gamlss" in combine:
                for day, mdl in combine["gamlss"].fits:
                    gamlss_fits.append({"day": str(day), "nu": mdl.nu, "fallback": mdl.fallback, "n_iter": mdl.n_iter})
            floored = {
                m: sum(bool(getattr(mdl, "floored", False)) for _, mdl in combine[m].fits)
                for m in ("ea", "naive") if m in combine
            }
            report["buildings"][b.name] = {
                "validation_days": [str(b.validation_days[0]), str(b.validation_days[-1]), int(b.validation_days.size)],
                "test_days": [str(b.test_days[0]), str(b.test_days[-1]), int(b.test_days.size)],
                "evaluated_hours": ev["n_hours"],
                "tuned": tuned,
                "point": ev["point"],
                "crps": {MODEL_LABELS[m]: v for m, v in ev["crps"].items()},
                "pit": {MODEL_LABELS[m]: v for m, v in ev["pit"].items()},
                "roc": {
                    name: {"tau_lower": c.tau_lower.tolist(), "fpr": c.fpr.tolist(), "tpr": c.tpr.tolist(), "tpr_at_fpr_0.1": c.tpr_at(0.1)}
                    for name, c in det.curves.items()
                },
                "gamlss_fits": gamlss_fits,
                "sigma_floor_hits": floored,
            }
        return report

    def _emit_report(self, report) -> None:
        self._json("report.json", report)


def run_pipeline(config: RunConfig, until: str = "report", output_dir: str | Path | None = None) -> dict:
    """Run (or resume from checkpoints) every stage up to ``until``."""
    if not isinstance(config, RunConfig):
        raise HeatcastError("run_pipeline needs a RunConfig")
    return Pipeline(config, output_dir).run(until)
