"""2-D toy benchmark: familiar/novel split datasets and the full method comparison.

Training and validation points are drawn only from a familiar half-plane; a
dense grid over the whole sampling box is the test set, tagged familiar or
novel by the same half-plane. Labels everywhere come from each generator's
analytic decision rule, so familiar and novel points share P(y|x).
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import calibration, ensemble, metrics
from .distillation import DistillConfig, train_distilled, train_g_distilled
from .mlp import MlpConfig, MlpModel, TrainConfig, init, train
from .predictions import PredictionSet, ProbabilitySet, softmax
from .uncertainty import (BayesConfig, bayes_samples, fit_bayes_temperature, new_bayes_model,
                          train_bayesian)

log = logging.getLogger(__name__)

GENERATORS = ("blobs", "moons", "xor", "rings")
METHODS = ("single", "tscaled", "ensemble", "ens_tscaled", "distill", "gdistill", "bayesian", "novelty")
GROUPS = ("familiar_test", "novel_test")
METRIC_NAMES = ("nll", "brier", "label_error", "ece", "e99")
MIN_ACCEPTANCE = 0.01

# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

BLOB_CENTERS = {0: ((-2.0, 0.5), (2.0, -0.5)), 1: ((-1.0, -1.5), (1.0, 1.5))}
BLOB_SIGMA = 0.7
XOR_CENTERS = {0: ((1.0, 1.0), (-1.0, -1.0)), 1: ((-1.0, 1.0), (1.0, -1.0))}
XOR_SIGMA = 0.35
MOON_NOISE = 0.15
MOON_SHIFT = np.array([-0.5, -0.25])
RING_RADII = (1.0, 2.0)
RING_NOISE = 0.15
RING_SPLIT = 1.5


def _mixture_rule(centers: dict, sigma: float) -> Callable[[np.ndarray], np.ndarray]:
    def rule(x):
        scores = []
        for c in sorted(centers):
            d2 = np.stack([((x - np.asarray(m)) ** 2).sum(axis=1) for m in centers[c]])
            scores.append(np.logaddexp.reduce(-d2 / (2 * sigma ** 2), axis=0))
        return np.argmax(np.stack(scores), axis=0)
    return rule


def _mixture_sampler(centers: dict, sigma: float):
    flat = [np.asarray(m) for c in sorted(centers) for m in centers[c]]

    def sample(rng, n):
        k = rng.integers(0, len(flat), n)
        return np.asarray(flat)[k] + sigma * rng.standard_normal((n, 2))
    return sample


def _arc_distance(x, center, radius, lo, hi):
    """Distance from points to the circular arc with angles in [lo, hi] (lo < hi, radians)."""
    d = x - center
    ang = np.arctan2(d[:, 1], d[:, 0])
    r = np.hypot(d[:, 0], d[:, 1])
    # shift angles into [lo, lo + 2pi)
    ang = lo + np.mod(ang - lo, 2 * np.pi)
    on_arc = ang <= hi
    ends = [center + radius * np.array([np.cos(t), np.sin(t)]) for t in (lo, hi)]
    end_d = np.min([np.hypot(*(x - e).T) for e in ends], axis=0)
    return np.where(on_arc, np.abs(r - radius), end_d)


MOON_ARCS = (
    (np.array([0.0, 0.0]) + MOON_SHIFT, 1.0, 0.0, np.pi),
    (np.array([1.0, 0.5]) + MOON_SHIFT, 1.0, np.pi, 2 * np.pi),
)


def _moons_rule(x):
    d0 = _arc_distance(x, *MOON_ARCS[0])
    d1 = _arc_distance(x, *MOON_ARCS[1])
    return (d1 < d0).astype(np.int64)


def _moons_sample(rng, n):
    cls = rng.integers(0, 2, n)
    t = rng.uniform(0, np.pi, n)
    upper = np.stack([np.cos(t), np.sin(t)], axis=1)
    lower = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
    pts = np.where(cls[:, None] == 0, upper, lower) + MOON_SHIFT
    return pts + MOON_NOISE * rng.standard_normal((n, 2))


def _rings_rule(x):
    return (np.hypot(x[:, 0], x[:, 1]) >= RING_SPLIT).astype(np.int64)


def _rings_sample(rng, n):
    cls = rng.integers(0, 2, n)
    r = np.asarray(RING_RADII)[cls] + RING_NOISE * rng.standard_normal(n)
    t = rng.uniform(0, 2 * np.pi, n)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)


def _box(points, pad):
    lo = np.min(points, axis=0) - pad
    hi = np.max(points, axis=0) + pad
    return (float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1]))


@dataclass(frozen=True)
class Generator:
    name: str
    sample: Callable
    rule: Callable
    centroid: tuple
    box: tuple  # ((x0_lo, x0_hi), (x1_lo, x1_hi)) covering the sampling support


def get_generator(name: str) -> Generator:
    if name == "blobs":
        pts = [m for c in BLOB_CENTERS.values() for m in c]
        return Generator(name, _mixture_sampler(BLOB_CENTERS, BLOB_SIGMA), _mixture_rule(BLOB_CENTERS, BLOB_SIGMA),
                         tuple(np.mean(pts, axis=0)), _box(pts, 3 * BLOB_SIGMA))
    if name == "xor":
        pts = [m for c in XOR_CENTERS.values() for m in c]
        return Generator(name, _mixture_sampler(XOR_CENTERS, XOR_SIGMA),
                         lambda x: (x[:, 0] * x[:, 1] < 0).astype(np.int64),
                         tuple(np.mean(pts, axis=0)), _box(pts, 3 * XOR_SIGMA))
    if name == "moons":
        corners = np.array([[-1.0, -0.5], [2.0, 1.0]]) + MOON_SHIFT
        return Generator(name, _moons_sample, _moons_rule, tuple(np.mean(corners, axis=0)),
                         _box(corners, 3 * MOON_NOISE))
    if name == "rings":
        r = RING_RADII[1] + 3 * RING_NOISE
        return Generator(name, _rings_sample, _rings_rule, (0.0, 0.0), ((-r, r), (-r, r)))
    raise ValueError(f"unknown generator {name!r}; choose from {GENERATORS}")


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToySpec:
    generator: str = "blobs"
    normal: tuple = (1.0, 0.0)
    # None: half-plane passes through the generator's centroid
    offset: float | None = None
    n_train: int = 1200
    n_val: int = 1200
    n_unsup: int = 1200
    grid_resolution: int = 100
    label_noise: float = 0.1
    grid_margin: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.n_train <= 0 or self.n_val <= 0 or self.grid_resolution < 2:
            raise ValueError("n_train, n_val must be positive and grid_resolution >= 2")
        if self.grid_margin < 0.1:
            raise ValueError("grid must extend at least 10% beyond the sampling box")
        if not 0 <= self.label_noise < 0.5:
            raise ValueError("label_noise must be in [0, 0.5)")
        object.__setattr__(self, "normal", tuple(float(v) for v in self.normal))

    def half_plane(self) -> tuple[np.ndarray, float]:
        n = np.asarray(self.normal, dtype=np.float64)
        norm = np.linalg.norm(n)
        if norm > 0:
            n = n / norm
        offset = float(n @ np.asarray(get_generator(self.generator).centroid)) if self.offset is None \
            else float(self.offset)
        return n, offset

    def is_familiar(self, x: np.ndarray) -> np.ndarray:
        n, offset = self.half_plane()
        return np.asarray(x) @ n <= offset


@dataclass
class InputSet:
    """Raw 2-D inputs with labels (-1 when unlabeled), ids and group tags."""

    x: np.ndarray
    labels: np.ndarray
    ids: list
    groups: list

    def __len__(self) -> int:
        return len(self.x)

    def take(self, mask) -> "InputSet":
        idx = np.flatnonzero(mask)
        return InputSet(self.x[idx], self.labels[idx], [self.ids[i] for i in idx], [self.groups[i] for i in idx])


@dataclass
class ToyData:
    spec: ToySpec
    train: InputSet
    val: InputSet
    grid: InputSet
    unsup: InputSet
    grid_axes: tuple


def _rejection_sample(spec: ToySpec, gen: Generator, rng, n: int) -> np.ndarray:
    kept = []
    total = drawn = 0
    while total < n:
        batch = gen.sample(rng, max(4 * (n - total), 256))
        drawn += len(batch)
        ok = batch[spec.is_familiar(batch)]
        kept.append(ok)
        total += len(ok)
        if drawn >= 10_000 and total / drawn < MIN_ACCEPTANCE:
            raise ValueError(f"familiar region acceptance rate {total / drawn:.4f} below 1%")
    return np.concatenate(kept)[:n]


def _noisy_labels(y, noise, rng):
    flip = rng.random(len(y)) < noise
    return np.where(flip, 1 - y, y)


def grid_axes(spec: ToySpec) -> tuple[np.ndarray, np.ndarray]:
    (a0, b0), (a1, b1) = get_generator(spec.generator).box
    m0 = spec.grid_margin * (b0 - a0)
    m1 = spec.grid_margin * (b1 - a1)
    return (np.linspace(a0 - m0, b0 + m0, spec.grid_resolution),
            np.linspace(a1 - m1, b1 + m1, spec.grid_resolution))


def generate(spec: ToySpec) -> ToyData:
    gen = get_generator(spec.generator)
    rng = np.random.default_rng([spec.seed, 0])
    x_tr = _rejection_sample(spec, gen, rng, spec.n_train)
    x_va = _rejection_sample(spec, gen, rng, spec.n_val)
    y_tr = _noisy_labels(gen.rule(x_tr), spec.label_noise, rng)
    y_va = _noisy_labels(gen.rule(x_va), spec.label_noise, rng)
    x_g = gen.sample(rng, spec.n_unsup)
    ax0, ax1 = grid_axes(spec)
    g0, g1 = np.meshgrid(ax0, ax1, indexing="xy")
    x_grid = np.stack([g0.ravel(), g1.ravel()], axis=1)
    fam = spec.is_familiar(x_grid)
    # same label-noise model on the grid: P(y|x) is shared by train, val, familiar and novel
    y_grid = _noisy_labels(gen.rule(x_grid), spec.label_noise, np.random.default_rng([spec.seed, 1]))
    return ToyData(
        spec,
        InputSet(x_tr, y_tr, [f"tr{i}" for i in range(len(x_tr))], ["train"] * len(x_tr)),
        InputSet(x_va, y_va, [f"va{i}" for i in range(len(x_va))], ["val"] * len(x_va)),
        InputSet(x_grid, y_grid, [f"g{i}" for i in range(len(x_grid))],
                 ["familiar_test" if f else "novel_test" for f in fam]),
        InputSet(x_g, np.full(len(x_g), -1), [f"u{i}" for i in range(len(x_g))], ["unsup"] * len(x_g)),
        (ax0, ax1),
    )


def audit(data: ToyData) -> dict:
    """Check the familiar/novel protocol: no novel point in training/validation inputs."""
    spec = data.spec
    novel = data.grid.x[np.array([g == "novel_test" for g in data.grid.groups], dtype=bool)]
    fit_inputs = np.concatenate([data.train.x, data.val.x])
    novel_keys = {tuple(p) for p in novel}
    fit_ids = set(data.train.ids) | set(data.val.ids)
    grid_ids = set(data.grid.ids)
    result = {
        "train_val_all_familiar": bool(np.all(spec.is_familiar(fit_inputs))),
        "no_novel_point_in_train_val": not any(tuple(p) in novel_keys for p in fit_inputs),
        "train_val_ids_disjoint_from_grid": fit_ids.isdisjoint(grid_ids),
        "unsup_ids_disjoint_from_grid": set(data.unsup.ids).isdisjoint(grid_ids),
        "grid_partition_complete": all(g in GROUPS for g in data.grid.groups),
    }
    result["ok"] = all(result.values())
    return result


# ---------------------------------------------------------------------------
# Novelty score
# ---------------------------------------------------------------------------

def novelty_score(model: MlpModel, inputs, score_temperature: float = 1000.0) -> np.ndarray:
    """1 - max softmax(logits / score_temperature); higher means more novel."""
    return novelty_from_logits(model.logits(np.asarray(inputs, dtype=np.float64)), score_temperature)


def novelty_from_logits(logits, score_temperature: float = 1000.0) -> np.ndarray:
    return 1.0 - softmax(np.asarray(logits, dtype=np.float64), score_temperature).max(axis=1)


# ---------------------------------------------------------------------------
# Experiment
# ---------------------------------------------------------------------------

@dataclass
class ToyConfig:
    width: int = 128
    depth: int = 3
    members: int = 10
    dropout_rate: float = 0.2
    train: TrainConfig = field(default_factory=TrainConfig)
    distill_temperature: float = 2.0
    lambda_cls: float = 0.5
    unsup_ratio: float = 0.25
    bayes: BayesConfig = field(default_factory=BayesConfig)
    score_temperature: float = 1000.0
    sweep_temperatures: tuple = tuple(np.round(np.arange(0.25, 10.0 + 1e-9, 0.05), 2))
    heatmap_seeds: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sweep_temperatures"] = [float(t) for t in self.sweep_temperatures]
        return d


def _seed(*parts) -> int:
    return int(np.random.SeedSequence([abs(int(p)) for p in parts]).generate_state(1)[0])


def _mlp_config(cfg: ToyConfig) -> MlpConfig:
    return MlpConfig(2, (cfg.width,) * cfg.depth, 2, dropout_rate=cfg.dropout_rate)


def _pset(logits, inputs: InputSet) -> PredictionSet:
    return PredictionSet(inputs.ids, logits, inputs.labels, inputs.groups, class_count=logits.shape[1])


def _probs(p, inputs: InputSet) -> ProbabilitySet:
    return ProbabilitySet(p, inputs.labels, inputs.groups, inputs.ids)


def _by_group(probs: ProbabilitySet) -> dict:
    return {g: metrics.evaluate(probs.select_group(g)) for g in GROUPS if g in probs.groups}


def _sweep_curves(logit_stack: np.ndarray, grid: InputSet, temps) -> dict:
    """NLL per group for each temperature; logit_stack is (M, N, C), members averaged."""
    out = {}
    for g in GROUPS:
        idx = np.array([gr == g for gr in grid.groups], dtype=bool)
        if not idx.any():
            continue
        z = logit_stack[:, idx]
        y = grid.labels[idx]
        rows = np.arange(len(y))
        vals = []
        for t in temps:
            p = softmax(z, t).mean(axis=0)[rows, y]
            vals.append(float(-np.mean(np.log(np.clip(p, metrics.CLIP_LOW, metrics.CLIP_HIGH)))))
        out[g] = vals
    return out


@dataclass
class ToyRun:
    spec: ToySpec
    config: ToyConfig
    roster: list
    seeds: list
    per_seed: dict = field(default_factory=dict)
    heatmaps: dict = field(default_factory=dict, repr=False)
    grid_x: np.ndarray | None = field(default=None, repr=False)
    grid_groups: list = field(default_factory=list, repr=False)
    seconds: dict = field(default_factory=dict, repr=False)

    def method_report(self, seed, method, group) -> metrics.MetricsReport:
        return metrics.MetricsReport.from_dict(self.per_seed[seed]["methods"][method][group])

    def summary(self) -> dict:
        """Mean and sample standard deviation across seeds per method/group/metric."""
        out = {}
        for method in self.roster:
            out[method] = {}
            for g in GROUPS:
                out[method][g] = {}
                for name in METRIC_NAMES:
                    vals = [self.per_seed[s]["methods"][method][g][name]
                            for s in self.seeds
                            if method in self.per_seed[s]["methods"] and g in self.per_seed[s]["methods"][method]]
                    vals = [v for v in vals if v is not None]
                    if not vals:
                        out[method][g][name] = {"mean": None, "std": None, "n": 0}
                        continue
                    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
                    out[method][g][name] = {"mean": float(np.mean(vals)), "std": std, "n": len(vals)}
        return out

    def to_dict(self) -> dict:
        return {
            "spec": asdict(self.spec),
            "config": self.config.to_dict(),
            "roster": list(self.roster),
            "seeds": list(self.seeds),
            "per_seed": {str(s): v for s, v in self.per_seed.items()},
            "summary": self.summary(),
        }

    def heatmap_rows(self):
        """(x0, x1, group, method, nll) rows for every exported seed."""
        for seed, fields in self.heatmaps.items():
            for method, values in fields.items():
                for (x0, x1), g, v in zip(self.grid_x, self.grid_groups, values):
                    yield seed, float(x0), float(x1), g, method, float(v)


def _needs(roster) -> set:
    need = set(roster)
    if need & {"ensemble", "ens_tscaled", "distill", "gdistill"}:
        need.add("members")
    if need & {"single", "tscaled", "novelty"}:
        need.add("first")
    return need


def run_seed(spec: ToySpec, roster: Sequence[str], cfg: ToyConfig, seed: int, heatmap: bool = False) -> tuple:
    """Train and evaluate every requested method for one seed.

    Returns ``(record, heatmap_fields, grid, seconds)``. Wall time stays out of
    ``record`` so serialized runs are reproducible. A failing method is recorded
    under ``failures`` without stopping the others.
    """
    t_start = time.perf_counter()
    spec = replace(spec, seed=seed)
    data = generate(spec)
    need = _needs(roster)
    mcfg = _mlp_config(cfg)
    n_members = cfg.members if "members" in need else 1
    record = {"methods": {}, "temperatures": {}, "failures": {}, "sweeps": {}, "audit": audit(data),
              "train_logs": {}}
    fields = {}
    grid = data.grid

    def evaluate(name, probs: ProbabilitySet):
        record["methods"][name] = {g: r.to_dict() for g, r in _by_group(probs).items()}
        if heatmap:
            fields[name] = metrics.per_sample_nll(probs)

    def attempt(name, fn):
        try:
            fn()
        except Exception as exc:  # recorded per method; other methods continue
            log.exception("seed %s method %s failed", seed, name)
            record["failures"][name] = f"{type(exc).__name__}: {exc}"

    members, cal = [], []
    grid_logits, val_logits, train_logits = [], [], []
    if need & {"members", "first"}:
        for j in range(n_members):
            model = init(mcfg, _seed(seed, 1, j))
            tlog = train(model, data.train.x, data.train.labels, data.val.x, data.val.labels,
                         replace(cfg.train, seed=_seed(seed, 2, j)))
            record["train_logs"][f"member{j}"] = {"epochs": len(tlog.epochs), "lr_drops": tlog.lr_drops}
            members.append(model)
            grid_logits.append(model.logits(grid.x))
            val_logits.append(model.logits(data.val.x))
            if j == 0:
                train_logits.append(model.logits(data.train.x))
            cal.append(calibration.fit_temperature(_pset(val_logits[-1], data.val)))
        record["temperatures"]["members"] = [c.t for c in cal]
        stack = np.stack(grid_logits)
        record["sweeps"]["single"] = _sweep_curves(stack[:1], grid, cfg.sweep_temperatures)
        if "members" in need:
            record["sweeps"]["ensemble"] = _sweep_curves(stack, grid, cfg.sweep_temperatures)

    def teacher(x):
        return np.mean([softmax(m.logits(x), c.t) for m, c in zip(members, cal)], axis=0)

    for method in roster:
        if method == "single":
            attempt(method, lambda: evaluate("single", _probs(softmax(grid_logits[0]), grid)))
        elif method == "tscaled":
            attempt(method, lambda: evaluate("tscaled", _probs(softmax(grid_logits[0], cal[0].t), grid)))
        elif method == "ensemble":
            attempt(method, lambda: evaluate("ensemble", ensemble.combine(
                [_probs(softmax(z), grid) for z in grid_logits])))
        elif method == "ens_tscaled":
            attempt(method, lambda: evaluate("ens_tscaled", ensemble.combine(
                [_probs(softmax(z, c.t), grid) for z, c in zip(grid_logits, cal)])))
        elif method in ("distill", "gdistill"):
            attempt(method, lambda m=method: _run_student(m, data, cfg, mcfg, seed, teacher, record, evaluate))
        elif method == "bayesian":
            attempt(method, lambda: _run_bayesian(data, cfg, seed, record, evaluate))
        elif method == "novelty":
            attempt(method, lambda: _run_novelty(data, cfg, train_logits[0], val_logits[0], grid_logits[0],
                                                 record, evaluate))
        else:
            record["failures"][method] = f"unknown method {method!r}"
    return record, fields, grid, time.perf_counter() - t_start


def _run_student(method, data: ToyData, cfg: ToyConfig, mcfg: MlpConfig, seed, teacher, record, evaluate):
    dcfg = DistillConfig(cfg.lambda_cls, cfg.distill_temperature, cfg.unsup_ratio,
                         replace(cfg.train, seed=_seed(seed, 4, int(method == "gdistill"))))
    student = init(mcfg, _seed(seed, 3, int(method == "gdistill")))
    if method == "distill":
        tlog = train_distilled(student, teacher, data.train.x, data.train.labels, data.val.x, dcfg)
    else:
        tlog = train_g_distilled(student, teacher, data.train.x, data.train.labels, data.unsup.x, data.val.x,
                                 dcfg, unsup_labels=data.unsup.labels)
    record["train_logs"][method] = {"epochs": len(tlog.epochs), "lr_drops": tlog.lr_drops}
    fitted = calibration.fit_temperature(_pset(student.logits(data.val.x), data.val)).t
    # calibration only when it softens: T < 1 would sharpen an already soft student
    t = max(fitted, 1.0)
    record["temperatures"][method] = {"fitted": fitted, "used": t, "clamped": fitted < 1.0}
    z = student.logits(data.grid.x)
    record["sweeps"][method] = _sweep_curves(z[None], data.grid, cfg.sweep_temperatures)
    evaluate(method, _probs(softmax(z, t), data.grid))


def _run_bayesian(data: ToyData, cfg: ToyConfig, seed, record, evaluate):
    model = new_bayes_model(2, (cfg.width,) * cfg.depth, 2, _seed(seed, 5), cfg.bayes)
    tlog = train_bayesian(model, data.train.x, data.train.labels, data.val.x, data.val.labels,
                          replace(cfg.train, seed=_seed(seed, 6)), cfg.bayes)
    record["train_logs"]["bayesian"] = {"epochs": len(tlog.epochs), "lr_drops": tlog.lr_drops}
    val = bayes_samples(model, data.val.x, cfg.bayes, _seed(seed, 7))
    cal = fit_bayes_temperature(val, data.val.labels, cfg.bayes.temperature_target)
    record["temperatures"]["bayesian"] = cal.t
    probs = bayes_samples(model, data.grid.x, cfg.bayes, _seed(seed, 8)).probabilities(
        cal.t, cfg.bayes.temperature_target)
    evaluate("bayesian", _probs(probs, data.grid))


def _run_novelty(data: ToyData, cfg: ToyConfig, train_z, val_z, grid_z, record, evaluate):
    st = cfg.score_temperature
    pct = calibration.fit_novelty_percentiles(novelty_from_logits(train_z, st))
    val = _pset(val_z, data.val).with_novelty(novelty_from_logits(val_z, st))
    cal = calibration.fit_novelty_scaling(val, pct)
    record["temperatures"]["novelty"] = cal.to_dict()
    test = _pset(grid_z, data.grid).with_novelty(novelty_from_logits(grid_z, st))
    evaluate("novelty", calibration.apply(cal, test))


def run_experiment(spec: ToySpec, roster: Sequence[str], seeds: Sequence[int],
                   config: ToyConfig | None = None, progress: Callable[[str], None] | None = None) -> ToyRun:
    if not roster:
        raise ValueError("roster must not be empty")
    unknown = [m for m in roster if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
    config = config or ToyConfig()
    run = ToyRun(spec, config, list(roster), [int(s) for s in seeds])
    for k, seed in enumerate(run.seeds):
        record, fields, grid, seconds = run_seed(spec, roster, config, seed, heatmap=k < config.heatmap_seeds)
        run.per_seed[seed] = record
        run.seconds[seed] = seconds
        if fields:
            run.heatmaps[seed] = fields
        if run.grid_x is None:
            run.grid_x = grid.x
            run.grid_groups = list(grid.groups)
        if progress:
            progress(f"seed {seed}: {seconds:.1f}s, failures={list(record['failures'])}")
    return run


def sweep_argmin(run: ToyRun, seed, method: str = "single") -> dict:
    """Temperature minimizing each group's NLL curve (first minimum on ties)."""
    temps = run.config.sweep_temperatures
    curves = run.per_seed[seed]["sweeps"][method]
    return {g: float(temps[int(np.argmin(v))]) for g, v in curves.items()}
