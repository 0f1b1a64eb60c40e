"""Experiment matrix: single runs, the 144-cell sweep and its aggregate tables."""

from __future__ import annotations

import ast
import csv
import dataclasses
import hashlib
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import Problem, relative_l2
from .network import derive_architecture, init_xavier, save_checkpoint
from .noise import PROCESSES, ForcingMap, process_class
from .training import TrainConfig, train

log = logging.getLogger(__name__)

DIMS = (2, 4, 6, 8)
MC_SAMPLES = (1, 2, 5, 10)
PROCESS_KINDS = tuple(PROCESSES)
FORCINGS = tuple(f.value for f in ForcingMap)

DESK_EPOCHS = 2000
FULL_EPOCHS = 10_000

# Modules whose code determines a run's numbers; see ``code_fingerprint``.
_NUMERIC_MODULES = ("network", "noise", "oracle", "sampling", "training", "metrics")

REPORT_FILE = "report.json"
CHECKPOINT_FILE = "checkpoint.bin"
LOSS_LOG_FILE = "loss_log.csv"
EPOCH_LOSS_FILE = "epoch_losses.csv"

TABLES = {
    "table_dims.csv": ("d",),
    "table_mc.csv": ("d", "m"),
    "table_forcing.csv": ("d", "forcing"),
    "table_noise.csv": ("d", "process"),
}


def _strip_docstrings(tree: ast.AST) -> ast.AST:
    for node in ast.walk(tree):
        if isinstance(node, (ast.Module, ast.ClassDef, ast.FunctionDef, ast.AsyncFunctionDef)):
            body = node.body
            if body and isinstance(body[0], ast.Expr) and isinstance(body[0].value, ast.Constant) \
                    and isinstance(body[0].value.value, str):
                node.body = body[1:] or [ast.Pass()]
    return tree


def code_fingerprint() -> str:
    """Hash of the numerical modules' syntax trees, blind to comments and docstrings."""
    h = hashlib.sha256()
    pkg = Path(__file__).parent
    for name in _NUMERIC_MODULES:
        tree = _strip_docstrings(ast.parse((pkg / f"{name}.py").read_text(encoding="utf-8")))
        h.update(ast.dump(tree).encode())
    return h.hexdigest()[:16]


def derive_seed(config_id: str, base_seed: int) -> int:
    digest = hashlib.sha256(f"{base_seed}:{config_id}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class ExperimentConfig:
    d: int
    m: int
    process: str
    forcing: str
    train: TrainConfig = field(default_factory=TrainConfig)
    xi0: float = 0.0
    id: str = ""

    def __post_init__(self):
        process_class(self.process)
        self.forcing = ForcingMap(self.forcing).value
        derive_architecture(self.d, process_class(self.process).n_params())
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.train.mc_samples != self.m:
            self.train = dataclasses.replace(self.train, mc_samples=self.m)
        if not self.id:
            self.id = make_id(self.d, self.m, self.process, self.forcing)

    @property
    def problem(self) -> Problem:
        return Problem(self.d, self.process, ForcingMap(self.forcing), self.xi0)

    def to_dict(self) -> dict:
        return {"id": self.id, "d": self.d, "m": self.m, "process": self.process,
                "forcing": self.forcing, "xi0": self.xi0, "train": self.train.to_dict()}


def make_id(d, m, process, forcing) -> str:
    return f"d{d}_m{m}_{process}_{forcing}"


@dataclass
class EvalReport:
    config_id: str
    relative_l2: float
    n_eval_points: int
    eval_seed: int
    seed: int
    epochs: int
    final_residual: float
    final_initial: float
    final_boundary: float
    final_total: float
    d: int = 0
    m: int = 0
    process: str = ""
    forcing: str = ""
    code: str = ""
    wall_time: float = 0.0
    error: str | None = None

    def deterministic_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("wall_time")
        return out


@dataclass
class ResultRow:
    group: dict
    mean: float
    std: float
    min: float
    max: float
    count: int


def full_matrix(train: TrainConfig | None = None) -> list[ExperimentConfig]:
    train = train or TrainConfig(epochs=DESK_EPOCHS)
    return [ExperimentConfig(d, m, p, f, train=train)
            for d, m, p, f in itertools.product(DIMS, MC_SAMPLES, PROCESS_KINDS, FORCINGS)]


def parse_filter(expr: str | None):
    """``"d=2,4 m=1,10 forcing=linear,square"`` -> predicate on ExperimentConfig.

    Terms are whitespace separated; values within a term are alternatives.
    An empty expression selects every configuration.
    """
    allowed = {"d": int, "m": int, "process": str, "forcing": str, "id": str}
    wanted = {}
    for term in (expr or "").split():
        key, sep, values = term.partition("=")
        if not sep or key not in allowed or not values:
            raise ValueError(f"bad filter term {term!r}; use key=v1,v2 with key in {sorted(allowed)}")
        wanted[key] = {allowed[key](v) for v in values.split(",")}

    def predicate(cfg: ExperimentConfig) -> bool:
        return all(getattr(cfg, k) in vs for k, vs in wanted.items())

    return predicate


def _write_epoch_losses(path: Path, totals) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("epoch", "total"))
        for i, v in enumerate(totals, start=1):
            writer.writerow((i, repr(float(v))))


def load_report(run_dir) -> EvalReport | None:
    path = Path(run_dir) / REPORT_FILE
    if not path.exists():
        return None
    data = json.loads(path.read_text())
    data.pop("config", None)
    return EvalReport(**data)


def run_config(config: ExperimentConfig, out_dir=None, *, resume: bool = False) -> EvalReport:
    """Initialise, train and evaluate one configuration.

    With ``out_dir`` the loss log, per-epoch losses, checkpoint and report are
    written to ``out_dir/<config id>/``.  ``resume`` returns the stored report
    instead of retraining when it was produced by the same configuration and
    the same numerical code.
    """
    run_dir = Path(out_dir) / config.id if out_dir is not None else None
    fingerprint = code_fingerprint()
    if resume and run_dir is not None and (run_dir / REPORT_FILE).exists():
        stored = json.loads((run_dir / REPORT_FILE).read_text())
        if stored.get("config") == config.to_dict() and stored.get("code") == fingerprint:
            log.info("%s: reusing stored run", config.id)
            return load_report(run_dir)

    start = time.perf_counter()
    tc = config.train
    spec = derive_architecture(config.d, process_class(config.process).n_params())
    params = init_xavier(spec, np.random.SeedSequence([tc.seed, 1]))

    on_checkpoint = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        on_checkpoint = lambda epoch, p: save_checkpoint(
            run_dir / f"checkpoint_epoch{epoch}.bin", p, {"config_id": config.id, "epoch": epoch})

    params, history = train(params, config.problem, tc, run_id=config.id,
                            on_checkpoint=on_checkpoint)
    err = relative_l2(params, config.problem, tc.eval_points, np.random.default_rng(tc.eval_seed))
    last = history.rows[-1] if history.rows else (tc.epochs, *([float("nan")] * 5))
    report = EvalReport(
        config_id=config.id, relative_l2=err, n_eval_points=tc.eval_points,
        eval_seed=tc.eval_seed, seed=tc.seed, epochs=tc.epochs,
        final_residual=last[1], final_initial=last[2], final_boundary=last[3],
        final_total=last[4], d=config.d, m=config.m, process=config.process,
        forcing=config.forcing, code=fingerprint,
        wall_time=time.perf_counter() - start,
    )
    if run_dir is not None:
        history.write_csv(run_dir / LOSS_LOG_FILE)
        _write_epoch_losses(run_dir / EPOCH_LOSS_FILE, history.total_history)
        save_checkpoint(run_dir / CHECKPOINT_FILE, params, {"config_id": config.id})
        payload = report.deterministic_dict()
        payload["config"] = config.to_dict()
        (run_dir / REPORT_FILE).write_text(json.dumps(payload, indent=2, sort_keys=True))
        (run_dir / "timing.json").write_text(json.dumps({"wall_time": report.wall_time}))
    return report


def _run_one(args) -> EvalReport:
    config, out_dir, resume = args
    try:
        return run_config(config, out_dir, resume=resume)
    except Exception as exc:  # recorded, the sweep carries on
        log.error("%s failed: %s", config.id, exc)
        return EvalReport(config.id, float("nan"), 0, config.train.eval_seed, config.train.seed,
                          config.train.epochs, *([float("nan")] * 4), d=config.d, m=config.m,
                          process=config.process, forcing=config.forcing,
                          error=f"{type(exc).__name__}: {exc}")


def aggregate(reports: list[EvalReport], keys: tuple[str, ...]) -> list[ResultRow]:
    """mean / population std / min / max of relative L2 per group."""
    groups: dict[tuple, list[float]] = {}
    for r in reports:
        if r.error is not None:
            continue
        groups.setdefault(tuple(getattr(r, k) for k in keys), []).append(r.relative_l2)
    rows = []
    for key in sorted(groups):
        v = np.asarray(groups[key])
        rows.append(ResultRow(dict(zip(keys, key)), float(v.mean()), float(v.std()),
                              float(v.min()), float(v.max()), len(v)))
    return rows


RAW_COLUMNS = ("config_id", "d", "m", "process", "forcing", "seed", "epochs", "relative_l2",
               "n_eval_points", "eval_seed", "final_residual", "final_initial",
               "final_boundary", "final_total", "wall_time", "error")


def write_raw(reports: list[EvalReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RAW_COLUMNS)
        for r in reports:
            writer.writerow([getattr(r, c) if getattr(r, c) is not None else "" for c in RAW_COLUMNS])


def write_table(rows: list[ResultRow], keys: tuple[str, ...], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow((*keys, "mean", "std", "min", "max", "count"))
        for row in rows:
            writer.writerow((*(row.group[k] for k in keys), repr(row.mean), repr(row.std),
                             repr(row.min), repr(row.max), row.count))


@dataclass
class MatrixResult:
    reports: list[EvalReport]
    tables: dict[str, list[ResultRow]]

    @property
    def failures(self) -> list[EvalReport]:
        return [r for r in self.reports if r.error is not None]


def select_configs(filter_expr: str | None = None, *, full_budget: bool = False,
                   base_seed: int = 0, train_overrides: dict | None = None) -> list[ExperimentConfig]:
    base = TrainConfig(epochs=FULL_EPOCHS if full_budget else DESK_EPOCHS)
    if train_overrides:
        base = dataclasses.replace(base, **train_overrides)
    pred = parse_filter(filter_expr)
    configs = [c for c in full_matrix(base) if pred(c)]
    if not configs:
        raise ValueError(f"filter {filter_expr!r} selects no configuration")
    for c in configs:
        c.train = dataclasses.replace(c.train, seed=derive_seed(c.id, base_seed))
    return configs


def run_matrix(filter_expr: str | None = None, jobs: int = 1, out_dir=None, *,
               full_budget: bool = False, base_seed: int = 0, resume: bool = False,
               train_overrides: dict | None = None,
               configs: list[ExperimentConfig] | None = None) -> MatrixResult:
    """Run the selected cells and write raw and aggregate CSVs to ``out_dir``.

    Per-config seeds come from hashing the config id with ``base_seed``, so the
    results do not depend on ``jobs`` or on scheduling order.
    """
    if configs is None:
        configs = select_configs(filter_expr, full_budget=full_budget, base_seed=base_seed,
                                 train_overrides=train_overrides)
    work = [(c, out_dir, resume) for c in configs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_one, work))
    else:
        reports = [_run_one(w) for w in work]

    tables = {name: aggregate(reports, keys) for name, keys in TABLES.items()}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_raw(reports, out / "raw_results.csv")
        for name, keys in TABLES.items():
            write_table(tables[name], keys, out / name)
    return MatrixResult(reports, tables)
