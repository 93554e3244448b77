"""Command-line front end.

Subcommands::

    segvi run <config.json>
    segvi verify {lemmas,descent,chung,all} [--trials N] [--seed S]
    segvi fit <file.csv> --column NAME --scale {loglog,semilog} [--window A:B]

Exit codes: 0 success, 1 verification violation (or an unfit series),
2 unparseable input, 3 divergence during a run, 4 nonpositive values in a
fit window.  ``SEGVI_OUTPUT_DIR`` overrides the output directory of ``run``.

Configuration schema (JSON object; unknown keys are errors)::

    problem      {"family": "quad_quartic", "d1", "d2", "eps1", "eps2",
                  "matrix_seed", "conditioning", "lipschitz_radius"}
                 {"family": "strongly_monotone_quadratic", "dim", "alpha",
                  "lipschitz", "seed"}
                 {"family": "bilinear", "dim", "seed", "set"}
                 {"family": "zero", "dim", "set"}
                 set: {"kind": "whole"} | {"kind": "ball", "radius"}
                      | {"kind": "box", "lower", "upper"}
    algorithm    "PEG" or a list such as ["PEG", "RG", "OG"]
    schedule     {"kind": "constant" | "inverse_linear", "gamma" | "gamma_L"
                  | "gamma_alpha", "b"}; ``gamma_L = c`` means gamma = c / L,
                  ``gamma_alpha = c`` means gamma = c / alpha (alpha from the
                  problem, or the local modulus at the solution when a
                  neighborhood radius is given)
    noise        {"kind": "none"} | {"kind": "gaussian", "variance"}
    x_start      {"kind": "explicit", "value": [...]}
                 | {"kind": "near_solution", "scale"}
                 | {"kind": "random", "radius"}
    init         "zero_feedback" | "warm"
    T            number of iterations
    seeds        list of integers
    metrics      subset of ["dist_sq", "err_res"]
    merit        {"radius", "inner_solver", "restarts", "iters"}
    fits         list of {"column", "scale", "window"}
    record       "thinned" | "all"
    neighborhood_radius   radius for the stay-in-neighborhood frequency
    output       output directory
    workers      worker threads (default: hardware threads)
    chunk        seeds per vectorized batch
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import verify as V
from .algorithms import AlgorithmKind, InfeasibleStateError, sweep
from .merit import (CLOSED_FORM, PROJECTED_ASCENT, DegenerateFitError, MeritConfig,
                    NonPositiveValueError, fit_rate)
from .oracles import NoiseModel, Oracle
from .problems import (make_bilinear, make_quad_quartic, make_strongly_monotone_quadratic,
                       zero_problem)
from .schedules import (DET_ERGODIC, STOCH_GLOBAL, Constant, InverseLinear, validate)
from .vi_core import Ball, Box, NonFiniteError, WholeSpace, check_regular_solution

CSV_COLUMNS = ("t", "oracle_calls", "dist_sq_last", "dist_sq_avg_lead", "dist_sq_avg_base",
               "err_res")
OUTPUT_ENV = "SEGVI_OUTPUT_DIR"

EXIT_OK, EXIT_VIOLATION, EXIT_PARSE, EXIT_DIVERGED, EXIT_NONPOSITIVE = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_FAMILY_FIELDS = {
    "quad_quartic": {"d1": 50, "d2": 50, "eps1": 1.0, "eps2": 0.0, "matrix_seed": 0,
                     "conditioning": 0.5, "lipschitz_radius": 1.0},
    "strongly_monotone_quadratic": {"dim": 20, "alpha": 1.0, "lipschitz": 4.0, "seed": 0},
    "bilinear": {"dim": 10, "seed": 0, "set": None},
    "zero": {"dim": 2, "set": None},
}
_SCHEDULE_FIELDS = {"kind", "gamma", "gamma_L", "gamma_alpha", "b"}
_MERIT_FIELDS = {"radius": None, "inner_solver": PROJECTED_ASCENT, "restarts": 20, "iters": 500}
_TOP_FIELDS = {"problem", "algorithm", "schedule", "noise", "x_start", "init", "T", "seeds",
               "metrics", "merit", "fits", "record", "neighborhood_radius", "output",
               "workers", "chunk"}
_DEFAULT_FITS = ({"column": "dist_sq_last", "scale": "loglog", "window": None},)


def _where(path):
    return "config" + "".join(f".{p}" if isinstance(p, str) else f"[{p}]" for p in path)


def _expect(cond, path, msg):
    if not cond:
        raise ConfigError(f"{_where(path)}: {msg}")


def _num(obj, path, positive=False, integer=False, nonneg=False):
    ok = isinstance(obj, (int, float)) and not isinstance(obj, bool)
    _expect(ok, path, f"expected a number, got {obj!r}")
    if integer:
        _expect(float(obj).is_integer(), path, f"expected an integer, got {obj!r}")
        obj = int(obj)
    _expect(math.isfinite(obj), path, "must be finite")
    if positive:
        _expect(obj > 0, path, "must be positive")
    if nonneg:
        _expect(obj >= 0, path, "must be nonnegative")
    return obj


def _keys(obj, allowed, path, required=()):
    _expect(isinstance(obj, dict), path, f"expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(allowed))
    _expect(not unknown, path + [unknown[0]] if unknown else path, "unknown key")
    for r in required:
        _expect(r in obj, path + [r], "missing required key")


def _vector(obj, path):
    _expect(isinstance(obj, list) and obj, path, "expected a non-empty list of numbers")
    return [float(_num(v, path + [i])) for i, v in enumerate(obj)]


def _parse_set(obj, path):
    if obj is None:
        return None
    _expect(isinstance(obj, dict) and "kind" in obj, path, "set needs a 'kind'")
    kind = obj["kind"]
    if kind == "whole":
        _keys(obj, {"kind"}, path)
        return {"kind": "whole"}
    if kind == "ball":
        _keys(obj, {"kind", "radius"}, path, ("radius",))
        return {"kind": "ball", "radius": float(_num(obj["radius"], path + ["radius"], positive=True))}
    if kind == "box":
        _keys(obj, {"kind", "lower", "upper"}, path, ("lower", "upper"))
        return {"kind": "box", "lower": _vector(obj["lower"], path + ["lower"]),
                "upper": _vector(obj["upper"], path + ["upper"])}
    raise ConfigError(f"{_where(path + ['kind'])}: unknown set kind {kind!r}")


def _parse_problem(obj, path):
    _expect(isinstance(obj, dict) and "family" in obj, path, "problem needs a 'family'")
    fam = obj["family"]
    _expect(fam in _FAMILY_FIELDS, path + ["family"],
            f"unknown family {fam!r}; expected one of {sorted(_FAMILY_FIELDS)}")
    defaults = _FAMILY_FIELDS[fam]
    _keys(obj, set(defaults) | {"family"}, path)
    out = {"family": fam}
    for k, dflt in defaults.items():
        v = obj.get(k, dflt)
        p = path + [k]
        if k == "set":
            out[k] = _parse_set(v, p)
        elif k in ("d1", "d2", "dim"):
            out[k] = _num(v, p, positive=True, integer=True)
        elif k in ("seed", "matrix_seed"):
            out[k] = _num(v, p, integer=True)
        elif k in ("conditioning", "lipschitz_radius", "alpha", "lipschitz"):
            out[k] = float(_num(v, p, positive=True))
        else:
            out[k] = float(_num(v, p))
    return out


def _parse_schedule(obj, path):
    _keys(obj, _SCHEDULE_FIELDS, path, ("kind",))
    kind = obj["kind"]
    _expect(kind in ("constant", "inverse_linear"), path + ["kind"],
            f"unknown schedule kind {kind!r}")
    given = [k for k in ("gamma", "gamma_L", "gamma_alpha") if k in obj]
    _expect(len(given) == 1, path, "give exactly one of 'gamma', 'gamma_L', 'gamma_alpha'")
    out = {"kind": kind, given[0]: float(_num(obj[given[0]], path + [given[0]], positive=True))}
    if kind == "inverse_linear":
        out["b"] = float(_num(obj.get("b", 0.0), path + ["b"], nonneg=True))
    else:
        _expect("b" not in obj, path + ["b"], "only inverse_linear schedules take 'b'")
    return out


def _parse_noise(obj, path):
    _keys(obj, {"kind", "variance"}, path, ("kind",))
    if obj["kind"] == "none":
        _expect("variance" not in obj, path + ["variance"], "noise kind 'none' takes no variance")
        return {"kind": "none"}
    _expect(obj["kind"] == "gaussian", path + ["kind"], f"unknown noise kind {obj['kind']!r}")
    _expect("variance" in obj, path + ["variance"], "missing required key")
    return {"kind": "gaussian", "variance": float(_num(obj["variance"], path + ["variance"],
                                                       positive=True))}


def _parse_x_start(obj, path):
    _expect(isinstance(obj, dict) and "kind" in obj, path, "x_start needs a 'kind'")
    kind = obj["kind"]
    if kind == "explicit":
        _keys(obj, {"kind", "value"}, path, ("value",))
        return {"kind": kind, "value": _vector(obj["value"], path + ["value"])}
    if kind == "near_solution":
        _keys(obj, {"kind", "scale"}, path, ("scale",))
        return {"kind": kind, "scale": float(_num(obj["scale"], path + ["scale"], nonneg=True))}
    if kind == "random":
        _keys(obj, {"kind", "radius"}, path)
        return {"kind": kind, "radius": float(_num(obj.get("radius", 1.0), path + ["radius"],
                                                   positive=True))}
    raise ConfigError(f"{_where(path + ['kind'])}: unknown x_start kind {kind!r}")


def _parse_merit(obj, path):
    if obj is None:
        return None
    _keys(obj, set(_MERIT_FIELDS), path)
    out = dict(_MERIT_FIELDS)
    out.update(obj)
    if out["radius"] is not None:
        out["radius"] = float(_num(out["radius"], path + ["radius"], positive=True))
    _expect(out["inner_solver"] in (CLOSED_FORM, PROJECTED_ASCENT), path + ["inner_solver"],
            f"expected {CLOSED_FORM!r} or {PROJECTED_ASCENT!r}")
    out["restarts"] = _num(out["restarts"], path + ["restarts"], positive=True, integer=True)
    out["iters"] = _num(out["iters"], path + ["iters"], positive=True, integer=True)
    return out


def _parse_fit(obj, path):
    _keys(obj, {"column", "scale", "window"}, path, ("column",))
    col = obj["column"]
    _expect(col in CSV_COLUMNS[2:], path + ["column"], f"unknown metric column {col!r}")
    scale = obj.get("scale", "loglog")
    _expect(scale in ("loglog", "semilog"), path + ["scale"], f"unknown scale {scale!r}")
    win = obj.get("window")
    if win is not None:
        _expect(isinstance(win, list) and len(win) == 2, path + ["window"], "expected [lo, hi]")
        win = [float(_num(w, path + ["window", i], positive=True)) for i, w in enumerate(win)]
        _expect(win[0] < win[1], path + ["window"], "window must satisfy lo < hi")
    return {"column": col, "scale": scale, "window": win}


@dataclass
class RunConfig:
    """Validated, fully serializable experiment description."""

    problem: dict
    algorithms: list
    schedule: dict
    noise: dict = field(default_factory=lambda: {"kind": "none"})
    x_start: dict = field(default_factory=lambda: {"kind": "near_solution", "scale": 1.0})
    init: str = "zero_feedback"
    T: int = 1000
    seeds: list = field(default_factory=lambda: [0])
    metrics: list = field(default_factory=lambda: ["dist_sq"])
    merit: Optional[dict] = None
    fits: list = field(default_factory=lambda: [dict(f) for f in _DEFAULT_FITS])
    record: str = "thinned"
    neighborhood_radius: Optional[float] = None
    output: str = "segvi_out"
    workers: Optional[int] = None
    chunk: int = 16

    @classmethod
    def from_dict(cls, obj):
        _keys(obj, _TOP_FIELDS, [], ("problem", "algorithm", "schedule"))
        kw = {"problem": _parse_problem(obj["problem"], ["problem"])}
        alg = obj["algorithm"]
        algs = [alg] if isinstance(alg, str) else alg
        _expect(isinstance(algs, list) and algs, ["algorithm"], "expected a name or a list")
        for i, a in enumerate(algs):
            _expect(a in AlgorithmKind.__members__, ["algorithm", i],
                    f"unknown algorithm {a!r}; expected one of EG, PEG, RG, OG")
        _expect(len(set(algs)) == len(algs), ["algorithm"], "duplicate algorithm")
        kw["algorithms"] = list(algs)
        kw["schedule"] = _parse_schedule(obj["schedule"], ["schedule"])
        if "noise" in obj:
            kw["noise"] = _parse_noise(obj["noise"], ["noise"])
        if "x_start" in obj:
            kw["x_start"] = _parse_x_start(obj["x_start"], ["x_start"])
        if "init" in obj:
            _expect(obj["init"] in ("zero_feedback", "warm"), ["init"],
                    "expected 'zero_feedback' or 'warm'")
            kw["init"] = obj["init"]
        if "T" in obj:
            kw["T"] = _num(obj["T"], ["T"], positive=True, integer=True)
        if "seeds" in obj:
            s = obj["seeds"]
            _expect(isinstance(s, list) and s, ["seeds"], "expected a non-empty list of integers")
            kw["seeds"] = [_num(v, ["seeds", i], integer=True) for i, v in enumerate(s)]
            _expect(len(set(kw["seeds"])) == len(kw["seeds"]), ["seeds"], "duplicate seed")
        if "metrics" in obj:
            m = obj["metrics"]
            _expect(isinstance(m, list), ["metrics"], "expected a list")
            for i, name in enumerate(m):
                _expect(name in ("dist_sq", "err_res"), ["metrics", i],
                        f"unknown metric {name!r}")
            kw["metrics"] = list(m)
        if "merit" in obj:
            kw["merit"] = _parse_merit(obj["merit"], ["merit"])
        if "fits" in obj:
            _expect(isinstance(obj["fits"], list), ["fits"], "expected a list")
            kw["fits"] = [_parse_fit(f, ["fits", i]) for i, f in enumerate(obj["fits"])]
        if "record" in obj:
            _expect(obj["record"] in ("thinned", "all"), ["record"], "expected 'thinned' or 'all'")
            kw["record"] = obj["record"]
        if obj.get("neighborhood_radius") is not None:
            kw["neighborhood_radius"] = float(_num(obj["neighborhood_radius"],
                                                   ["neighborhood_radius"], positive=True))
        if "output" in obj:
            _expect(isinstance(obj["output"], str) and obj["output"], ["output"],
                    "expected a path")
            kw["output"] = obj["output"]
        if obj.get("workers") is not None:
            kw["workers"] = _num(obj["workers"], ["workers"], positive=True, integer=True)
        if "chunk" in obj:
            kw["chunk"] = _num(obj["chunk"], ["chunk"], positive=True, integer=True)
        cfg = cls(**kw)
        if "err_res" in cfg.metrics and cfg.merit is None:
            cfg.merit = dict(_MERIT_FIELDS)
        return cfg

    def to_dict(self):
        d = asdict(self)
        algs = d.pop("algorithms")
        d = {"problem": d.pop("problem"), "algorithm": algs, **d}
        return d

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def load_config(text):
    """Parse JSON text into a :class:`RunConfig`; raises :class:`ConfigError`."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return RunConfig.from_dict(obj)


# ---------------------------------------------------------------------------
# building runs from a config
# ---------------------------------------------------------------------------

def _build_set(spec, dim):
    if spec is None or spec["kind"] == "whole":
        return None
    if spec["kind"] == "ball":
        return Ball(np.zeros(dim), spec["radius"])
    lo, hi = np.asarray(spec["lower"]), np.asarray(spec["upper"])
    if lo.size != dim or hi.size != dim:
        raise ConfigError(f"config.problem.set: bounds must have length {dim}")
    return Box(lo, hi)


def build_problem(spec):
    fam = spec["family"]
    if fam == "quad_quartic":
        return make_quad_quartic(spec["d1"], spec["d2"], spec["eps1"], spec["eps2"],
                                 matrix_seed=spec["matrix_seed"],
                                 conditioning=spec["conditioning"],
                                 lipschitz_radius=spec["lipschitz_radius"])
    if fam == "strongly_monotone_quadratic":
        return make_strongly_monotone_quadratic(spec["dim"], spec["alpha"], spec["lipschitz"],
                                                seed=spec["seed"])
    if fam == "bilinear":
        d = spec["dim"]
        return make_bilinear(d, seed=spec["seed"], cset=_build_set(spec["set"], 2 * d))
    return zero_problem(spec["dim"], cset=_build_set(spec["set"], spec["dim"]))


def local_modulus(problem, radius):
    """Regularity report on the ball of ``radius`` around the known solution."""
    return check_regular_solution(problem, problem.known_solution, radius)


def build_schedule(spec, problem, neighborhood_radius=None):
    if "gamma" in spec:
        gamma = spec["gamma"]
    elif "gamma_L" in spec:
        if problem.lipschitz is None:
            raise ConfigError("config.schedule.gamma_L: the problem has no Lipschitz constant")
        gamma = spec["gamma_L"] / problem.lipschitz
    else:
        if neighborhood_radius is not None:
            alpha = local_modulus(problem, neighborhood_radius).local_strong_mono
        else:
            alpha = problem.strong_mono
        if alpha is None or not alpha > 0:
            raise ConfigError("config.schedule.gamma_alpha: no positive monotonicity modulus")
        gamma = spec["gamma_alpha"] / alpha
    if spec["kind"] == "constant":
        return Constant(gamma)
    return InverseLinear(gamma, spec["b"])


def start_point(spec, problem, seed):
    """Seed-dependent initial point (explicit points ignore the seed)."""
    dim = problem.dim
    cset = problem.set
    if spec["kind"] == "explicit":
        x = np.asarray(spec["value"], dtype=float)
        if x.size != dim:
            raise ConfigError(f"config.x_start.value: expected length {dim}, got {x.size}")
        return cset.project(x)
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 0x5EED])
    if spec["kind"] == "near_solution":
        if problem.known_solution is None:
            raise ConfigError("config.x_start: near_solution needs a problem with a known solution")
        u = rng.standard_normal(dim)
        return cset.project(problem.known_solution + spec["scale"] * u / np.linalg.norm(u))
    if isinstance(cset, WholeSpace):
        return Ball(np.zeros(dim), spec["radius"]).sample(rng, 1)[0]
    return cset.sample(rng, 1)[0]


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    """Recorded metrics of one algorithm over a list of seeds (in listed order)."""

    kind: str
    seeds: list
    t: np.ndarray
    columns: dict  # name -> array (n_records, n_seeds)
    max_lead_dist: Optional[np.ndarray] = None
    base_history: Optional[np.ndarray] = None  # (n_records, n_seeds, dim)

    def mean(self, column="dist_sq_last"):
        return np.mean(self.columns[column], axis=1)

    def quantiles(self, column="dist_sq_last", qs=(0.1, 0.5, 0.9)):
        return np.quantile(self.columns[column], qs, axis=1)

    def stay_frequency(self, radius, seeds_mask=False):
        if self.max_lead_dist is None:
            raise ValueError("stay frequency needs a known solution")
        stay = self.max_lead_dist <= radius
        return stay if seeds_mask else float(np.mean(stay))


class Divergence(RuntimeError):
    def __init__(self, kind, seed, iteration):
        super().__init__(f"{kind}: seed {seed} diverged at iteration {iteration}")
        self.seed, self.iteration = seed, iteration


def _merit_for(cfg, problem, x0):
    if cfg.merit is None or "err_res" not in cfg.metrics:
        return None
    m = cfg.merit
    return MeritConfig.around_start(problem, x0, m["radius"], inner_solver=m["inner_solver"],
                                    restarts=m["restarts"], iters=m["iters"])


def _run_chunk(kind, cfg, problem, schedule, noise, seeds, keep_history):
    oracles = [Oracle(problem, noise, seed=s) for s in seeds]
    x0 = np.array([start_point(cfg.x_start, problem, s) for s in seeds])
    merit = None
    if cfg.merit is not None and "err_res" in cfg.metrics:
        # the restricted domain is centered at each run's own X_1
        merit = [_merit_for(cfg, problem, row) for row in x0]
    warm = cfg.init == "warm"
    if merit is not None:
        trs = []
        for s, o, row, m in zip(seeds, oracles, x0, merit):
            try:
                trs.append(sweep(kind, problem, [o], schedule, row[None], cfg.T,
                                 record=cfg.record, warm=warm, merit=m,
                                 keep_base_history=keep_history))
            except NonFiniteError as exc:
                raise Divergence(kind, s, exc.iteration) from None
        return _stack_chunks(trs)
    try:
        tr = sweep(kind, problem, oracles, schedule, x0, cfg.T, record=cfg.record,
                   warm=warm, keep_base_history=keep_history)
    except NonFiniteError as exc:
        row = exc.rows[0] if exc.rows else 0
        raise Divergence(kind, seeds[row], exc.iteration) from None
    err = None
    m = tr.metrics
    cols = {"oracle_calls": np.broadcast_to(m.oracle_calls[:, None], m.dist_sq_last.shape),
            "dist_sq_last": m.dist_sq_last, "dist_sq_avg_lead": m.dist_sq_avg_lead,
            "dist_sq_avg_base": m.dist_sq_avg_base, "err_res": err}
    return m.t, cols, tr.max_lead_dist, tr.base_history


def _stack_chunks(trs):
    t = trs[0].metrics.t
    names = ("dist_sq_last", "dist_sq_avg_lead", "dist_sq_avg_base", "err_res")
    cols = {n: np.concatenate([getattr(tr.metrics, n) for tr in trs], axis=1) for n in names}
    calls = trs[0].metrics.oracle_calls
    cols["oracle_calls"] = np.broadcast_to(calls[:, None], cols["dist_sq_last"].shape)
    ml = None if trs[0].max_lead_dist is None else np.concatenate([tr.max_lead_dist for tr in trs])
    hist = None if trs[0].base_history is None else np.concatenate(
        [tr.base_history for tr in trs], axis=1)
    return t, cols, ml, hist


def run_sweep(cfg: RunConfig, kind, problem, schedule, keep_history=False):
    """Run ``kind`` on every seed of ``cfg``; seeds are processed in fixed chunks."""
    noise = (NoiseModel() if cfg.noise["kind"] == "none"
             else NoiseModel.gaussian(cfg.noise["variance"]))
    chunks = [cfg.seeds[i:i + cfg.chunk] for i in range(0, len(cfg.seeds), cfg.chunk)]
    workers = cfg.workers or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=min(workers, len(chunks))) as pool:
        parts = list(pool.map(
            lambda s: _run_chunk(kind, cfg, problem, schedule, noise, s, keep_history), chunks))
    t = parts[0][0]
    cols = {}
    for name in CSV_COLUMNS[1:]:
        vals = [p[1][name] for p in parts]
        cols[name] = None if vals[0] is None else np.concatenate(vals, axis=1)
    ml = None if parts[0][2] is None else np.concatenate([p[2] for p in parts])
    hist = None if parts[0][3] is None else np.concatenate([p[3] for p in parts], axis=1)
    return SweepResult(kind, list(cfg.seeds), t, cols, ml, hist)


def _fmt(v):
    return "" if v is None or not np.isfinite(v) else repr(float(v))


def write_seed_csv(path, result: SweepResult, col):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for k, t in enumerate(result.t):
            row = [str(int(t)), str(int(result.columns["oracle_calls"][k, col]))]
            for name in CSV_COLUMNS[2:]:
                arr = result.columns[name]
                row.append("" if arr is None else _fmt(arr[k, col]))
            w.writerow(row)


def _fit_summary(result, spec, stay_mask=None):
    vals = result.columns[spec["column"]]
    if vals is None:
        return {"refused": f"column {spec['column']} was not computed"}
    if stay_mask is not None:
        if not np.any(stay_mask):
            return {"refused": "no seed stayed in the neighborhood"}
        vals = vals[:, stay_mask]
    pts = np.column_stack([result.t, np.mean(vals, axis=1)])
    win = tuple(spec["window"]) if spec["window"] else None
    try:
        fit = fit_rate(pts, spec["scale"], win)
    except (DegenerateFitError, NonPositiveValueError, ValueError) as exc:
        return {"refused": str(exc)}
    return {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
            "window": list(fit.window), "scale": fit.scale, "n_points": fit.n_points}


def _max_pairwise_deviation(results):
    devs = {}
    for i, a in enumerate(results):
        for b in results[i + 1:]:
            ha, hb = a.base_history, b.base_history
            num = np.max(np.linalg.norm(ha - hb, axis=-1))
            den = max(np.max(np.linalg.norm(ha, axis=-1)), np.max(np.linalg.norm(hb, axis=-1)))
            devs[f"{a.kind}-{b.kind}"] = float(num / den) if den > 0 else float(num)
    return devs


def execute(cfg: RunConfig, out_dir=None, log=None):
    """Run every algorithm of ``cfg`` and write CSVs and ``summary.json``.

    Returns the summary dictionary; raises :class:`Divergence`.
    """
    log = log or (lambda msg: print(msg, file=sys.stderr))
    out = Path(out_dir or os.environ.get(OUTPUT_ENV) or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg.problem)
    schedule = build_schedule(cfg.schedule, problem, cfg.neighborhood_radius)
    theorem = DET_ERGODIC if isinstance(schedule, Constant) else STOCH_GLOBAL
    keep_history = len(cfg.algorithms) > 1
    summary = {"config": cfg.to_dict(), "problem": {
        "name": problem.name, "dim": problem.dim, "lipschitz": problem.lipschitz,
        "strong_mono": problem.strong_mono,
        "monotonicity_class": problem.monotonicity_class.value},
        "schedule": {"kind": type(schedule).__name__, "gamma": schedule.gamma,
                     "b": getattr(schedule, "b", None)},
        "algorithms": {}}
    if cfg.neighborhood_radius is not None and problem.known_solution is not None:
        rep = local_modulus(problem, cfg.neighborhood_radius)
        summary["regularity"] = {"min_symmetric_eigenvalue": rep.min_symmetric_eigenvalue,
                                 "local_strong_mono": rep.local_strong_mono,
                                 "local_bound": rep.local_bound,
                                 "radius": cfg.neighborhood_radius}
    results = []
    for kind in cfg.algorithms:
        val = validate(schedule, problem, kind, theorem)
        if not val.satisfied:
            log(f"warning: {kind} schedule does not meet {theorem} conditions\n{val}")
        res = run_sweep(cfg, kind, problem, schedule, keep_history)
        results.append(res)
        for j, s in enumerate(cfg.seeds):
            write_seed_csv(out / f"{kind}_seed{s}.csv", res, j)
        entry = {"validation": {"theorem": theorem, "satisfied": val.satisfied,
                                "conditions": [_finite_or_none(asdict(c))
                                               for c in val.conditions]}}
        stay = None
        if cfg.neighborhood_radius is not None and res.max_lead_dist is not None:
            stay = res.stay_frequency(cfg.neighborhood_radius, seeds_mask=True)
            entry["stay_frequency"] = float(np.mean(stay))
        entry["fits"] = [dict(spec, result=_fit_summary(res, spec, stay)) for spec in cfg.fits]
        q = res.quantiles()
        with open(out / f"{kind}_aggregate.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "mean", "q10", "q50", "q90"])
            for k, t in enumerate(res.t):
                w.writerow([int(t), _fmt(res.mean()[k]), _fmt(q[0, k]), _fmt(q[1, k]),
                            _fmt(q[2, k])])
        summary["algorithms"][kind] = entry
    if keep_history:
        summary["max_pairwise_deviation"] = _max_pairwise_deviation(results)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, allow_nan=False, default=_json_default)
    return summary


def _finite_or_none(d):
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
            for k, v in d.items()}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_run(config_file, out_dir=None):
    try:
        text = Path(config_file).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        cfg = load_config(text)
        summary = execute(cfg, out_dir)
    except ConfigError as exc:
        print(f"error: {config_file}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except Divergence as exc:
        print(f"error: divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except InfeasibleStateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    for kind, entry in summary["algorithms"].items():
        line = [kind]
        if "stay_frequency" in entry:
            line.append(f"stay_frequency={entry['stay_frequency']:.3f}")
        for f in entry["fits"]:
            r = f["result"]
            line.append(f"{f['column']}: " + (f"slope={r['slope']:.4f} r2={r['r_squared']:.4f}"
                                              if "slope" in r else f"fit refused ({r['refused']})"))
        print("  ".join(line))
    for pair, dev in summary.get("max_pairwise_deviation", {}).items():
        print(f"max pairwise deviation {pair}: {dev:.3e}")
    return EXIT_OK


def _corrupted_projection(cset, v):
    # deliberately wrong: overshoots the true projection
    p = cset.project(v)
    return p + 0.05 * (p - v) + 0.01


CHUNG_CASES = ((2.0, 1.0), (3.0, 4.0), (1.5, 0.5))
CHUNG_SLACK = 1.01
# the q = 1.5 case approaches its bound like t^(-1/2), so the horizon is fixed
CHUNG_HORIZON = 1_000_000


def _descent_reports(trials, seed, tol):
    """Quasi-descent checks along deterministic warm-started runs."""
    from .algorithms import run
    reports = []
    T = max(trials, 10)
    rng = np.random.default_rng(seed)
    problems = [
        make_strongly_monotone_quadratic(10, 1.0, 4.0, seed=seed),
        make_bilinear(5, seed=seed),
        make_bilinear(5, seed=seed, cset=Ball(np.zeros(10), 0.3)),
        make_quad_quartic(5, 5, 0.0, 1.0, matrix_seed=seed, lipschitz_radius=1.0),
    ]
    for problem in problems:
        x0 = rng.standard_normal(problem.dim)
        x0 = problem.set.project(0.5 * x0 / np.linalg.norm(x0))
        for kind in ("PEG", "RG", "OG"):
            c = {"PEG": 2.0, "OG": 2.0, "RG": 1.0 + math.sqrt(2.0)}[kind]
            gamma = 0.9 / (c * problem.lipschitz)
            tr = run(kind, problem, None, Constant(gamma), x0, T, record="none",
                     keep_states=True, warm=True)
            rep = V.check_descent_along_run(tr, problem, gamma, tol=tol)
            p = problem.set.project(problem.known_solution + rng.standard_normal(problem.dim))
            rep = rep.merge(V.check_descent_along_run(tr, problem, gamma, tol=tol, p=p))
            tag = "" if isinstance(problem.set, WholeSpace) else ", ball"
            rep.name = f"descent_{kind}[{problem.name}{tag}]"
            reports.append(rep)
    return reports


def cmd_verify(suite, trials=10_000, seed=0, tol=1e-9, inject_fault=False, out=print):
    proj = _corrupted_projection if inject_fault else None
    reports = []
    if suite in ("lemmas", "all"):
        reports.append(V.check_lemma_three_point(trials, seed, tol=tol, project=proj))
        reports.append(V.check_lemma_four_point(trials, seed, "A", tol=tol, project=proj))
        reports.append(V.check_lemma_four_point(trials, seed, "B", tol=tol, project=proj))
    if suite in ("descent", "all"):
        reports.extend(_descent_reports(trials, seed, tol))
    chung_ok = True
    if suite in ("chung", "all"):
        t_max = CHUNG_HORIZON
        for q, c in CHUNG_CASES:
            limsup, bound = V.check_chung_recurrence(q, b=q + 1.0, c_prime=c, a_init=1.0,
                                                     t_max=t_max)
            ratio = limsup / bound
            ok = ratio <= CHUNG_SLACK
            chung_ok &= ok
            out(f"{'PASS' if ok else 'FAIL'} chung(q={q:g}, c'={c:g}): "
                f"limsup t*a_t={limsup:.6f} bound={bound:.6f} ratio={ratio:.6f} "
                f"(<= {CHUNG_SLACK})")
    for r in reports:
        out(str(r))
        if not r.ok:
            out(f"  witness: {json.dumps(r.witness)}")
    ok = chung_ok and all(r.ok for r in reports)
    return EXIT_OK if ok else EXIT_VIOLATION


def _parse_window(text):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must look like A:B, got {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("window must satisfy A < B")
    return lo, hi


def read_metric_csv(path, column):
    """``(t, value)`` pairs from a metrics CSV; blank cells are skipped."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        if "t" not in header:
            raise ConfigError(f"{path}: header has no 't' column")
        if column not in header:
            raise ConfigError(f"{path}: no column {column!r}; available: {', '.join(header)}")
        it, ic = header.index("t"), header.index(column)
        pts = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigError(f"{path}: line {lineno}: expected {len(header)} fields, "
                                  f"got {len(row)}")
            if row[ic].strip() == "":
                continue
            try:
                pts.append((float(row[it]), float(row[ic])))
            except ValueError:
                raise ConfigError(f"{path}: line {lineno}: not a number") from None
    return np.array(pts, dtype=float).reshape(-1, 2)


def cmd_fit(csv_path, column, scale="loglog", window=None, out=print):
    try:
        pts = read_metric_csv(csv_path, column)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        fit = fit_rate(pts, scale, window)
    except NonPositiveValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONPOSITIVE
    except (DegenerateFitError, ValueError) as exc:
        print(f"error: fit refused: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    out(f"slope={fit.slope:.6f}")
    out(f"intercept={fit.intercept:.6f}")
    out(f"r2={fit.r_squared:.6f}")
    out(f"window={fit.window[0]:g}:{fit.window[1]:g}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="segvi", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment described by a JSON config")
    p.add_argument("config")
    p.add_argument("--output", default=None, help="output directory (overrides the config)")

    p = sub.add_parser("verify", help="randomized checks of the analysis inequalities")
    p.add_argument("suite", choices=["lemmas", "descent", "chung", "all"])
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("fit", help="fit a convergence rate to one CSV column")
    p.add_argument("csv")
    p.add_argument("--column", required=True)
    p.add_argument("--scale", choices=["loglog", "semilog"], default="loglog")
    p.add_argument("--window", type=_parse_window, default=None)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    if args.command == "run":
        return cmd_run(args.config, args.output)
    if args.command == "verify":
        if args.trials < 1:
            print("error: --trials must be positive", file=sys.stderr)
            return EXIT_PARSE
        return cmd_verify(args.suite, args.trials, args.seed, args.tol, args.inject_fault)
    return cmd_fit(args.csv, args.column, args.scale, args.window)


if __name__ == "__main__":
    sys.exit(main())
