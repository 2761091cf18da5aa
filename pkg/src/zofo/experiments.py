"""Multi-seed, multi-method comparisons with CSV and SVG output."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .controllers import (
    REFERENCE_DELTA,
    REFERENCE_STEPSIZES,
    ControllerConfig,
    Method,
    run_closed_loop,
)
from .errors import ConfigurationError, ExperimentError, InvalidParameterError
from .metrics import MetricSeries
from .objective import random_objective
from .plant import DEFAULT_A_NORM, DEFAULT_DIMS, DEFAULT_F_NORM, generate_random_plant, load_instance

log = logging.getLogger(__name__)

CSV_COLUMNS = ("method", "seed", "update_index", "plant_step", "grad_norm_sq", "optimality_gap")
DEFAULT_BUDGET = 10_000


def reference_methods(delta: float = REFERENCE_DELTA) -> list[ControllerConfig]:
    """The four controllers at their reference stepsizes."""
    return [ControllerConfig(m, eta, delta) for m, eta in REFERENCE_STEPSIZES.items()]


@dataclass
class ExperimentConfig:
    plant_seed: int = 0
    objective_seed: int = 0
    controller_seeds: list = field(default_factory=lambda: list(range(10)))
    methods: list = field(default_factory=reference_methods)
    plant_step_budget: int = DEFAULT_BUDGET
    dims: tuple = DEFAULT_DIMS
    record_stride: int = 1
    a_norm: float = DEFAULT_A_NORM
    f_norm: float = DEFAULT_F_NORM
    plant_file: str | None = None
    u0: list | None = None

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.controller_seeds = [int(s) for s in self.controller_seeds]
        self.methods = [m if isinstance(m, ControllerConfig) else ControllerConfig(**m)
                        for m in self.methods]
        if not self.controller_seeds:
            raise ConfigurationError("at least one controller seed is required")
        if not self.methods:
            raise ConfigurationError("at least one method is required")
        if self.plant_step_budget < 2:
            raise ConfigurationError(f"plant_step_budget must be at least 2, got {self.plant_step_budget}")
        if self.record_stride < 1:
            raise ConfigurationError(f"record_stride must be positive, got {self.record_stride}")

    def build_instance(self):
        if self.plant_file is not None:
            plant, objective = load_instance(self.plant_file)
            if objective is None:
                objective = random_objective(self.objective_seed, plant.dims[1])
            return plant, objective
        plant = generate_random_plant(self.plant_seed, self.dims, self.a_norm, self.f_norm)
        return plant, random_objective(self.objective_seed, self.dims[1])

    def to_dict(self) -> dict:
        return {
            "plant_seed": self.plant_seed,
            "objective_seed": self.objective_seed,
            "controller_seeds": list(self.controller_seeds),
            "methods": [{k: v for k, v in m.to_dict().items() if k != "seed"}
                        for m in self.methods],
            "plant_step_budget": self.plant_step_budget,
            "dims": list(self.dims),
            "record_stride": self.record_stride,
            "a_norm": self.a_norm,
            "f_norm": self.f_norm,
            "plant_file": self.plant_file,
            "u0": self.u0,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(**data)


def load_experiment_config(path) -> ExperimentConfig:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return ExperimentConfig.from_dict(data)


def save_experiment_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=1) + "\n", encoding="utf-8")


@dataclass(eq=False)
class AggregateResult:
    """Per-method mean series with min/max envelopes across seeds.

    ``series`` maps method name to its runs in seed order; the mean and
    envelope arrays share the index axis of those runs.
    """

    methods: list
    series: dict
    mean: dict
    lower: dict
    upper: dict
    final: dict
    record: dict = field(default_factory=dict)

    def all_series(self) -> list[MetricSeries]:
        return [s for m in self.methods for s in self.series[m]]

    def axis(self, method: str, kind: str = "updates") -> np.ndarray:
        first = self.series[method][0]
        return first.update_index if kind == "updates" else first.plant_step


def _run_one(args):
    ctrl, plant, objective, budget, stride, u0 = args
    try:
        return run_closed_loop(ctrl, plant, objective, u0=u0, total_plant_steps=budget,
                               record_stride=stride)
    except Exception as exc:
        raise ExperimentError(ctrl.method.value, ctrl.seed, exc) from exc


def _stack(values: list[np.ndarray]) -> np.ndarray:
    return np.vstack(values)


def aggregate(methods: list[str], series: dict, record: dict | None = None) -> AggregateResult:
    mean, lower, upper, final = {}, {}, {}, {}
    for m in methods:
        runs = series[m]
        stats = {}
        for metric in ("grad_norm_sq", "optimality_gap"):
            mat = _stack([getattr(s, metric) for s in runs])
            with np.errstate(invalid="ignore"):
                mu = mat.sum(axis=0) / mat.shape[0]
            mean.setdefault(m, {})[metric] = mu
            lower.setdefault(m, {})[metric] = mat.min(axis=0)
            upper.setdefault(m, {})[metric] = mat.max(axis=0)
            last = mat[:, -1]
            stats[metric] = {
                "mean": float(mu[-1]),
                "min": float(last.min()),
                "max": float(last.max()),
                "std": float(last.std()) if np.all(np.isfinite(last)) else float("nan"),
            }
        stats["diverged"] = sum(s.params.get("diverged_at") is not None for s in runs)
        final[m] = stats
    return AggregateResult(methods=list(methods), series=series, mean=mean, lower=lower,
                           upper=upper, final=final, record=record or {})


def run_comparison(cfg: ExperimentConfig, n_jobs: int = 1) -> AggregateResult:
    """Run every (method, seed) pair on one plant/objective instance and aggregate.

    Sub-runs are independent; with ``n_jobs > 1`` they execute in worker
    processes and are reduced in (method, seed) order, so the result does
    not depend on ``n_jobs``.
    """
    plant, objective = cfg.build_instance()
    u0 = None if cfg.u0 is None else np.asarray(cfg.u0, dtype=float)
    jobs = []
    names = []
    for m in cfg.methods:
        if m.method.value in names:
            raise ConfigurationError(f"method {m.method.value} listed twice")
        names.append(m.method.value)
        for seed in cfg.controller_seeds:
            jobs.append((replace(m, seed=seed), plant, objective, cfg.plant_step_budget,
                         cfg.record_stride, u0))
    log.info("running %d sub-runs (%d methods x %d seeds)", len(jobs), len(names),
             len(cfg.controller_seeds))
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    series = {name: [] for name in names}
    for res in results:
        series[res.method].append(res)
    record = {
        "config": cfg.to_dict(),
        "runs": [
            {"method": s.method, "seed": s.seed, "mu_hat": s.mu_hat, "m_phi": s.m_phi,
             "n_updates": s.n_updates, "plant_steps_used": s.plant_steps_used,
             "diverged_at": s.params.get("diverged_at"),
             "eta": s.params["eta"], "delta": s.params["delta"]}
            for s in results
        ],
    }
    return aggregate(names, series, record)


def sweep(parameter: str, values, base: ExperimentConfig, n_jobs: int = 1) -> dict:
    """Run the two-point feedback controller once per parameter value.

    Returns ``{value: AggregateResult}``. The base config's ``TwoPointRGF``
    entry supplies the other parameter; without one, the reference stepsize
    and smoothing parameter are used.
    """
    if parameter not in ("eta", "delta"):
        raise InvalidParameterError(f"can only sweep 'eta' or 'delta', got {parameter!r}")
    values = list(values)
    if not values:
        raise InvalidParameterError("sweep needs at least one value")
    template = next((m for m in base.methods if m.method is Method.TWO_POINT_RGF),
                    ControllerConfig(Method.TWO_POINT_RGF, REFERENCE_STEPSIZES[Method.TWO_POINT_RGF],
                                     REFERENCE_DELTA))
    out = {}
    for val in values:
        ctrl = replace(template, **{parameter: float(val)})
        out[val] = run_comparison(replace(base, methods=[ctrl]), n_jobs=n_jobs)
    return out


def _fmt(x) -> str:
    return repr(float(x))


def _rows(source):
    if isinstance(source, AggregateResult):
        return source.all_series()
    if isinstance(source, MetricSeries):
        return [source]
    return list(source)


def export_csv(source, path) -> Path:
    """Write series (a result, one series, or a list of them) as CSV.

    Floats use their shortest round-trip representation, so identical runs
    produce byte-identical files and :func:`import_csv` recovers them exactly.
    """
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for s in _rows(source):
                for i in range(len(s)):
                    writer.writerow((s.method, int(s.seed), int(s.update_index[i]),
                                     int(s.plant_step[i]), _fmt(s.grad_norm_sq[i]),
                                     _fmt(s.optimality_gap[i])))
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


def import_csv(path) -> list[MetricSeries]:
    path = Path(path)
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != CSV_COLUMNS:
                raise ConfigurationError(f"{path} does not have the expected CSV header")
            groups: dict = {}
            for row in reader:
                key = (row[0], int(row[1]))
                groups.setdefault(key, []).append(row)
    except OSError as exc:
        raise OSError(f"cannot read CSV from {path}: {exc}") from exc
    out = []
    for (method, seed), rows in groups.items():
        out.append(MetricSeries(
            method=method,
            seed=seed,
            update_index=np.array([int(r[2]) for r in rows], dtype=np.int64),
            plant_step=np.array([int(r[3]) for r in rows], dtype=np.int64),
            grad_norm_sq=np.array([float(r[4]) for r in rows]),
            optimality_gap=np.array([float(r[5]) for r in rows]),
        ))
    return out


def result_from_series(series_list: list[MetricSeries]) -> AggregateResult:
    """Regroup loose series (e.g. from :func:`import_csv`) into an aggregate."""
    methods, grouped = [], {}
    for s in series_list:
        if s.method not in grouped:
            methods.append(s.method)
            grouped[s.method] = []
        grouped[s.method].append(s)
    return aggregate(methods, grouped)


def emit_plot(result, path, log_y: bool = True, axis: str = "updates",
              metric: str = "grad_norm_sq", title: str | None = None) -> Path:
    """Write an SVG with one mean curve per method and min/max envelopes.

    Curves carry the SVG ids ``mean:<method>`` and envelopes
    ``envelope:<method>``; envelopes are drawn only for methods with more
    than one seed. With ``log_y``, non-positive values are clamped to the
    smallest positive value in the plotted data and the clamp is recorded in
    the file's description metadata.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if axis not in ("updates", "plant_steps"):
        raise InvalidParameterError(f"axis must be 'updates' or 'plant_steps', got {axis!r}")
    if isinstance(result, MetricSeries) or (isinstance(result, list) and result
                                           and isinstance(result[0], MetricSeries)):
        result = result_from_series(_rows(result))
    if not result.methods:
        raise ConfigurationError("nothing to plot")

    notes = []
    floor = None
    if log_y:
        vals = np.concatenate([np.concatenate([result.mean[m][metric], result.lower[m][metric]])
                               for m in result.methods])
        positive = vals[np.isfinite(vals) & (vals > 0)]
        floor = float(positive.min()) if positive.size else 1.0

    def clamp(arr, label):
        if not log_y:
            return arr
        bad = np.isfinite(arr) & (arr <= 0)
        if bad.any():
            notes.append(f"{label}: {int(bad.sum())} non-positive values clamped to {floor!r}")
            arr = np.where(bad, floor, arr)
        return arr

    with plt.rc_context({"svg.hashsalt": "zofo", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for m in result.methods:
            x = result.axis(m, axis)
            mean = clamp(result.mean[m][metric], f"{m} mean")
            (line,) = ax.plot(x, mean, label=m, linewidth=1.2)
            line.set_gid(f"mean:{m}")
            if len(result.series[m]) > 1:
                lo = clamp(result.lower[m][metric], f"{m} lower")
                hi = clamp(result.upper[m][metric], f"{m} upper")
                band = ax.fill_between(x, lo, hi, alpha=0.2, color=line.get_color(),
                                       linewidth=0)
                band.set_gid(f"envelope:{m}")
            if not np.all(np.isfinite(result.mean[m][metric])):
                notes.append(f"{m}: non-finite values (diverged runs) omitted")
        if log_y:
            ax.set_yscale("log")
        ax.set_xlabel("controller updates" if axis == "updates" else "plant steps")
        ax.set_ylabel({"grad_norm_sq": "squared gradient norm",
                       "optimality_gap": "optimality gap"}.get(metric, metric))
        if title:
            ax.set_title(title)
        ax.legend()
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        path = Path(path)
        try:
            fig.savefig(path, format="svg",
                        metadata={"Date": None, "Description": "; ".join(notes) or "none"})
        except OSError as exc:
            raise OSError(f"cannot write plot to {path}: {exc}") from exc
        finally:
            plt.close(fig)
    return path


def final_table(result: AggregateResult) -> str:
    lines = [f"{'method':<20} {'final grad_norm_sq':>20} {'final gap':>14} {'diverged':>9}"]
    for m in result.methods:
        f = result.final[m]
        lines.append(f"{m:<20} {f['grad_norm_sq']['mean']:>20.6g} "
                     f"{f['optimality_gap']['mean']:>14.6g} {f['diverged']:>9d}")
    return "\n".join(lines)
