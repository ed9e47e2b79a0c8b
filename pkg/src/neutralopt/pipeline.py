"""End-to-end runs: graphs, registers, pulses, sampling and Q-score, with a file manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import metadata
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embedding import ConstraintViolation, LayoutKind, LayoutParams, make_register
from .emulator import NOISE_PRESETS, noise_preset
from .graphcore import CostKind, Graph, exact_solve, gen_erdos_renyi, gen_unit_disk, random_baseline
from .pulsepredictor import ChainedModel, build_dataset, fit_chain, solve_with_model
from .pulseshaper import OptBudget, OptTrace, select_best, shape_pulse
from .qscore import (
    BetaPoint,
    QScoreError,
    QScoreFit,
    asymptotic_baselines,
    beta_curve,
    curve_to_csv,
    fit_qscore,
    score,
    threshold_qscore,
)
from .seeding import derive_int, substream

LOGGER = logging.getLogger(__name__)

SCHEDULE_HEAD = (6, 500)
SCHEDULE_TAIL = (16, 10)
MANIFEST_NAME = "manifest.json"
RESULT_FIELDS = ("n", "graph_id", "quant", "opt", "rand", "beta", "register", "bitstring")
FIT_SAMPLES = 100


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException, manifest: "RunManifest"):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.manifest = manifest


def instance_schedule(n: int, factor: float = 1.0) -> int:
    """Graphs per order: geometric decay from 500 at n=6 to 10 at n=16, times ``factor``."""
    (n_a, c_a), (n_b, c_b) = SCHEDULE_HEAD, SCHEDULE_TAIL
    count = c_a * (c_b / c_a) ** ((n - n_a) / (n_b - n_a))
    return max(1, int(round(factor * count)))


@dataclass
class PipelineConfig:
    kind: str = "maxcut"
    graph_class: str = "er"  # er | ud
    edge_prob: float = 0.5
    ud_radius: float = 1.0
    ud_box_scale: float = 0.8  # box side = scale * sqrt(n) * radius
    n_values: list[int] = field(default_factory=lambda: [6, 8, 10])
    instances: dict[int, int] | None = None
    budget_factor: float = 1.0
    mode: str = "evaluate"  # evaluate | tds
    layouts: list[str] = field(default_factory=lambda: [k.value for k in LayoutKind])
    starts_per_atom: int = 10
    calls_per_atom: int = 50
    shots_per_eval: int = 200
    n_registers: int = 10
    shots: int = 1000
    noise: str = "off"
    baselines: str = "empirical"  # empirical | asymptotic
    random_trials: int = 1000
    fit_tail: int = 10
    model: str | None = None
    train_n_values: list[int] = field(default_factory=lambda: [5, 6, 7, 8, 9])
    train_instances: int = 10
    train_starts_per_atom: int = 10
    train_calls_per_atom: int = 50
    seed: int = 0
    workers: int = 1
    out: str = "run"
    dt: float = 1e-3

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            CostKind.parse(self.kind)
            for k in self.layouts:
                LayoutKind.parse(k)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.noise not in NOISE_PRESETS:
            raise ConfigError(f"unknown noise preset {self.noise!r}; choose from {sorted(NOISE_PRESETS)}")
        if self.graph_class not in ("er", "ud"):
            raise ConfigError("graph_class must be 'er' or 'ud'")
        if self.mode not in ("evaluate", "tds"):
            raise ConfigError("mode must be 'evaluate' or 'tds'")
        if self.baselines not in ("empirical", "asymptotic"):
            raise ConfigError("baselines must be 'empirical' or 'asymptotic'")
        if any(int(n) < 1 for n in [*self.n_values, *self.train_n_values]):
            raise ConfigError("graph orders must be positive")
        if min(self.n_registers, self.shots, self.random_trials, self.workers, self.shots_per_eval) < 1:
            raise ConfigError("counts must be positive")
        if not self.layouts:
            raise ConfigError("need at least one layout kind")
        if self.calls_per_atom < self.starts_per_atom or self.train_calls_per_atom < self.train_starts_per_atom:
            raise ConfigError("calls per atom must be at least the random starts per atom")
        if self.instances is not None:
            self.instances = {int(k): int(v) for k, v in self.instances.items()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**dict(data))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["instances"] is not None:
            d["instances"] = {str(k): v for k, v in d["instances"].items()}
        return d

    def count_for(self, n: int) -> int:
        if self.instances is not None and n in self.instances:
            return self.instances[n]
        return instance_schedule(n, self.budget_factor)


@dataclass
class RunManifest:
    config: dict
    files: list[str] = field(default_factory=list)
    stages: list[dict] = field(default_factory=list)
    versions: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def add(self, path: Path, root: Path):
        rel = str(Path(path).relative_to(root))
        if rel not in self.files:
            self.files.append(rel)

    def to_dict(self) -> dict:
        return {"config": self.config, "files": sorted(self.files), "stages": self.stages, "versions": self.versions, "summary": self.summary}

    def write(self, root: Path) -> Path:
        path = Path(root) / MANIFEST_NAME
        self.add(path, root)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def _versions() -> dict:
    from . import __version__

    out = {"python": platform.python_version(), "neutralopt": __version__}
    for pkg in ("numpy", "scipy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def output_digest(root) -> str:
    """SHA-256 over every file under ``root`` except the manifest, which carries timings."""
    h = hashlib.sha256()
    root = Path(root)
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != MANIFEST_NAME:
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def generate_graphs(cfg: PipelineConfig, n_values: Sequence[int], count, stream: str) -> list[tuple[str, Graph]]:
    out = []
    for n in n_values:
        for i in range(count(n)):
            s = derive_int(cfg.seed, stream, n, i)
            if cfg.graph_class == "er":
                g = gen_erdos_renyi(n, cfg.edge_prob, s)
            else:
                g, _ = gen_unit_disk(n, cfg.ud_radius, cfg.ud_box_scale * math.sqrt(n) * cfg.ud_radius, s)
            out.append((f"{stream}-n{n}-{i}", g))
    return out


def _graphs_json(graphs) -> str:
    return json.dumps([{"id": gid, **g.to_dict()} for gid, g in graphs], indent=1) + "\n"


def _solve_task(task):
    cfg, gid, g, model = task
    kind = CostKind.parse(cfg.kind)
    noise = noise_preset(cfg.noise)
    seed = substream(cfg.seed, "solve", gid)
    traces = {}
    if cfg.mode == "evaluate":
        sel = solve_with_model(model, g, kind, cfg.n_registers, cfg.shots, noise, seed, dt=cfg.dt)
    else:
        cands = []
        for layout in cfg.layouts:
            lp = LayoutParams(seed=derive_int(seed, "layout", layout))
            try:
                reg = make_register(g, layout, lp)
            except ConstraintViolation as exc:
                LOGGER.warning("graph %s, layout %s: %s", gid, layout, exc)
                continue
            budget = OptBudget.scaled(
                g.n, cfg.starts_per_atom, cfg.calls_per_atom, shots_per_eval=cfg.shots_per_eval, seed=derive_int(seed, "optimizer", layout)
            )
            pulse, trace = shape_pulse(g, reg, kind, budget, noise, dt=cfg.dt)
            cands.append((reg, pulse))
            traces[f"{gid}/{layout}"] = trace
        if not cands:
            raise ConstraintViolation(f"no feasible register for graph {gid}")
        sel = select_best(g, kind, cands, cfg.shots, noise, substream(seed, "sampler"), dt=cfg.dt)
    _, opt_cost = exact_solve(g, kind)
    rand_cost = random_baseline(g, kind, cfg.random_trials, substream(seed, "baseline"))
    quant, opt, rand = score(sel.cost), score(opt_cost), score(rand_cost)
    beta = (quant - rand) / (opt - rand) if opt != rand else math.nan
    row = {"n": g.n, "graph_id": gid, "quant": quant, "opt": opt, "rand": rand, "beta": beta, "register": sel.index, "bitstring": sel.bitstring}
    solution = {"id": gid, "bitstring": sel.bitstring, "register": sel.register.to_dict(), "pulse": sel.pulse.to_dict()}
    return row, solution, traces


def results_to_csv(rows: Sequence[Mapping]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    for r in rows:
        w.writerow([r["n"], r["graph_id"], repr(float(r["quant"])), repr(float(r["opt"])), repr(float(r["rand"])), repr(float(r["beta"])), r["register"], r["bitstring"]])
    return buf.getvalue()


def results_from_csv(text: str) -> list[dict]:
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append(
            {
                "n": int(r["n"]),
                "graph_id": r["graph_id"],
                "quant": float(r["quant"]),
                "opt": float(r["opt"]),
                "rand": float(r["rand"]),
                "beta": float(r["beta"]),
                "register": int(r["register"]),
                "bitstring": r["bitstring"],
            }
        )
    return rows


def curve_from_results(rows: Sequence[Mapping], baselines: str = "empirical") -> tuple[list[BetaPoint], list[int]]:
    """Group per-instance scores by n and compare them with empirical or asymptotic baselines."""
    by_n: dict[int, list[dict]] = {}
    for r in rows:
        by_n.setdefault(int(r["n"]), []).append(r)
    quant = {n: [r["quant"] for r in rs] for n, rs in by_n.items()}
    if baselines == "asymptotic":
        base = {n: asymptotic_baselines(n) for n in by_n}
    else:
        base = {n: (float(np.mean([r["opt"] for r in rs])), float(np.mean([r["rand"] for r in rs]))) for n, rs in by_n.items()}
    return beta_curve(quant, base)


def emit_plot_data(results, kind: str, path) -> Path:
    """Write a tab-separated columnar file with a header row.

    ``beta_curve`` takes a list of BetaPoint; ``trace`` an OptTrace or a mapping
    label -> OptTrace; ``fit`` a ``(QScoreFit, curve)`` pair and samples the
    fitted exponential at 100 points.
    """
    path = Path(path)
    if results is None:
        raise ValueError(f"no results to emit for {kind}")
    lines = []
    if kind == "beta_curve":
        lines.append("n\tbeta\tstderr\tquant\topt\trand")
        for p in results:
            lines.append(f"{p.n}\t{p.beta!r}\t{p.stderr!r}\t{p.quant!r}\t{p.opt!r}\t{p.rand!r}")
    elif kind == "trace":
        traces = {"trace": results} if isinstance(results, OptTrace) else dict(results)
        lines.append("label\tstep\tobjective\tbest_cost")
        for label, tr in traces.items():
            for i, (o, b) in enumerate(zip(tr.objective, tr.best_cost)):
                lines.append(f"{label}\t{i}\t{o!r}\t{b!r}")
    elif kind == "fit":
        fit, curve = results
        if not curve:
            raise ValueError("fit overlay needs the measured curve")
        lo = min(p.n for p in curve)
        hi = max(p.n for p in curve)
        if math.isfinite(fit.qscore):
            hi = max(hi, math.ceil(fit.qscore))
        lines.append("n\tbeta_fit")
        for n in np.linspace(lo, hi, FIT_SAMPLES):
            lines.append(f"{n!r}\t{float(fit.beta_at(n))!r}")
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def run_pipeline(cfg: PipelineConfig) -> RunManifest:
    root = Path(cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(config=cfg.to_dict(), versions=_versions())
    kind = CostKind.parse(cfg.kind)

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as exc:
            manifest.stages.append({"name": name, "status": "failed", "seconds": time.perf_counter() - t0, "error": str(exc)})
            manifest.write(root)
            raise StageError(name, exc, manifest) from exc
        manifest.stages.append({"name": name, "status": "ok", "seconds": time.perf_counter() - t0})
        return out

    def write(name: str, text: str) -> Path:
        p = root / name
        p.write_text(text)
        manifest.add(p, root)
        return p

    if not cfg.n_values:
        manifest.write(root)
        return manifest

    graphs = stage("gen-graphs", lambda: generate_graphs(cfg, cfg.n_values, cfg.count_for, "eval"))
    write("graphs.json", _graphs_json(graphs))

    model = None
    if cfg.mode == "evaluate":
        if cfg.model:
            model = stage("load-model", lambda: ChainedModel.load(cfg.model))
        else:
            def train():
                tg = generate_graphs(cfg, cfg.train_n_values, lambda n: cfg.train_instances, "train")
                write("train_graphs.json", _graphs_json(tg))
                ds = build_dataset(
                    [g for _, g in tg],
                    cfg.layouts,
                    kind,
                    lambda n: OptBudget.scaled(n, cfg.train_starts_per_atom, cfg.train_calls_per_atom, shots_per_eval=cfg.shots_per_eval),
                    seed=substream(cfg.seed, "dataset"),
                    graph_ids=[gid for gid, _ in tg],
                    workers=cfg.workers,
                    dt=cfg.dt,
                )
                write("dataset.csv", ds.to_csv())
                m = fit_chain(ds)
                write("model.json", json.dumps(m.to_dict()) + "\n")
                return m

            model = stage("train", train)

    def solve():
        tasks = [(cfg, gid, g, model) for gid, g in graphs]
        if cfg.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                return list(pool.map(_solve_task, tasks))
        return [_solve_task(t) for t in tasks]

    solved = stage("predict" if cfg.mode == "evaluate" else "shape-pulse", solve)
    rows = [r for r, _, _ in solved]
    write("results.csv", results_to_csv(rows))
    write("solutions.json", json.dumps([s for _, s, _ in solved], indent=1) + "\n")
    traces = {k: v for _, _, tr in solved for k, v in tr.items()}
    if traces:
        p = emit_plot_data(traces, "trace", root / "plot_trace.tsv")
        manifest.add(p, root)

    def qscore_stage():
        curve, flagged = curve_from_results(rows, cfg.baselines)
        write("beta_curve.csv", curve_to_csv(curve))
        manifest.add(emit_plot_data(curve, "beta_curve", root / "plot_beta_curve.tsv"), root)
        manifest.summary["threshold_qscore"] = threshold_qscore(curve) if curve else 0
        manifest.summary["degenerate_n"] = flagged
        finite = [r["beta"] for r in rows if math.isfinite(r["beta"])]
        manifest.summary["mean_instance_beta"] = float(np.mean(finite)) if finite else None
        try:
            fit = fit_qscore(curve, cfg.fit_tail)
        except QScoreError as exc:
            LOGGER.warning("no Q-score fit: %s", exc)
            manifest.summary["fit_error"] = str(exc)
            return
        write("fit_report.json", fit.to_json() + "\n")
        manifest.add(emit_plot_data((fit, curve), "fit", root / "plot_fit.tsv"), root)
        manifest.summary["qscore"] = fit.qscore

    stage("qscore", qscore_stage)
    manifest.write(root)
    return manifest

