"""Experiment configuration, replicate runs and regret/accuracy metrics."""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from statistics import NormalDist

import numpy as np

from .cooperation import System
from .environment import ContextGenerator, RewardModel
from .errors import ConfigError, InvalidInputError
from .learner import MODES, PRIVATE_MODES, Learner, LearnerConfig
from .partition import MAX_CHILDREN, MAX_DIMENSION
from .privacy import PrivacyParams

METRIC_COLUMNS = ["mode", "seed", "t", "regret", "avg_regret", "accuracy"]

# Four Gaussian blobs: dense regions next to sparse ones, the regime the
# adaptive partition is meant for.
DEFAULT_CONTEXT = {"kind": "clustered",
                   "centers": [[0.2, 0.3], [0.7, 0.8], [0.8, 0.2], [0.35, 0.75]],
                   "spread": 0.08}


@dataclass
class ExperimentConfig:
    mode: str = "DAP"
    modes: list = field(default_factory=list)
    M: int = 4
    K: int = 10
    d: int = 2
    T: int = 50_000
    m: int = 2
    A: float = 1.0
    p: float = 4.0
    L: float = 1.0
    alpha: float = 1.0
    epsilon: float = 1.0
    epsilon0: float = 0.01
    geometric: bool = False
    delta_f: float = 1.0
    sigma: float = 0.1
    h_min: float = 0.5
    context: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_CONTEXT))
    seeds: list = field(default_factory=lambda: list(range(1, 11)))
    out: str = "results"
    control_log: str = "current"
    # multiplies the m^{2 alpha l} ln t part of every control function; with
    # 1.0 exploration alone outlasts the desk-scale horizon
    explore_scale: float = 0.003
    gamma_scale: float = 1.0
    stride: int = 1

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {', '.join(MODES)}")
        for md in self.modes:
            if md not in MODES:
                raise ConfigError("modes", f"unknown mode {md!r}")
        for name in ("M", "K", "d", "T", "m", "stride"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(name, "must be an integer")
        if self.M < 1:
            raise ConfigError("M", "must be >= 1")
        if self.K < 1:
            raise ConfigError("K", "must be >= 1")
        if not 1 <= self.d <= MAX_DIMENSION:
            raise ConfigError("d", f"must be in [1, {MAX_DIMENSION}]")
        if self.m < 2:
            raise ConfigError("m", "must be >= 2")
        if self.m ** self.d > MAX_CHILDREN:
            raise ConfigError("m", f"m**d must not exceed {MAX_CHILDREN}")
        if self.T < 0:
            raise ConfigError("T", "must be a non-negative integer")
        if self.stride < 1:
            raise ConfigError("stride", "must be >= 1")
        for name in ("A", "p", "L"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be > 0")
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha", "must be in (0, 1]")
        if any(md in PRIVATE_MODES for md in self.all_modes()):
            if not self.epsilon > 0:
                raise ConfigError("epsilon", "must be > 0 in private modes")
            if not self.epsilon0 > 0:
                raise ConfigError("epsilon0", "must be > 0 in private modes")
        if not 0 < self.sigma < 1:
            raise ConfigError("sigma", "must be in (0, 1)")
        if not self.delta_f > 0:
            raise ConfigError("delta_f", "must be > 0")
        if not 0 <= self.h_min <= 1:
            raise ConfigError("h_min", "must be in [0, 1]")
        if self.control_log not in ("current", "horizon"):
            raise ConfigError("control_log", "must be 'current' or 'horizon'")
        if not self.explore_scale > 0:
            raise ConfigError("explore_scale", "must be > 0")
        if not self.gamma_scale >= 0:
            raise ConfigError("gamma_scale", "must be >= 0")
        if not self.seeds:
            raise ConfigError("seeds", "must list at least one seed")
        try:
            ContextGenerator.from_dict(self.context, self.d)
        except InvalidInputError as exc:
            raise ConfigError("context", str(exc)) from None
        return self

    def all_modes(self):
        return list(self.modes) if self.modes else [self.mode]

    def privacy(self, mode=None):
        mode = mode or self.mode
        return PrivacyParams(epsilon=self.epsilon, epsilon0=self.epsilon0,
                             geometric=mode == "GP-DAP" or (self.geometric and mode in PRIVATE_MODES),
                             delta_f=self.delta_f, sigma=self.sigma)

    def uniform_level(self):
        """Fixed partition level of the uniform-partition baseline."""
        if self.T <= self.A:
            return 0
        return max(0, math.ceil(math.log(self.T / self.A, self.m) / (self.d + self.p)))

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration field")
        cfg = cls(**data)
        for name in ("A", "p", "L", "alpha", "epsilon", "epsilon0", "delta_f", "sigma",
                     "h_min", "explore_scale", "gamma_scale"):
            v = getattr(cfg, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(name, "must be a number")
            setattr(cfg, name, float(v))
        return cfg.validate()

    @classmethod
    def load(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be an object")
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)


def environment_for(cfg: ExperimentConfig, seed):
    """Reward model and arrival stream shared by every mode for ``seed``."""
    model_ss, stream_ss, system_ss = np.random.SeedSequence(seed).spawn(3)
    n_videos = cfg.M * cfg.K
    model = RewardModel.random(n_videos, cfg.d, np.random.default_rng(model_ss),
                               L=cfg.L, alpha=cfg.alpha, h_min=cfg.h_min)
    gen = ContextGenerator.from_dict(cfg.context, cfg.d)
    stream = gen.sample(cfg.T * cfg.M, np.random.default_rng(stream_ss)).reshape(cfg.T, cfg.M, cfg.d)
    return model, stream, int(system_ss.generate_state(1)[0])


def build_system(cfg: ExperimentConfig, mode, model, system_seed):
    privacy = cfg.privacy(mode)
    common = dict(L=cfg.L, alpha=cfg.alpha, m=cfg.m, d=cfg.d, A=cfg.A, p=cfg.p, T=cfg.T,
                  privacy=privacy, mode=mode, control_log=cfg.control_log,
                  explore_scale=cfg.explore_scale, gamma_scale=cfg.gamma_scale)
    counter_ss = np.random.SeedSequence([system_seed, 7]).spawn(cfg.M)
    if mode == "CAP":
        lc = LearnerConfig(learner_id=0, own_videos=list(range(cfg.M * cfg.K)), peer_ids=[], **common)
        return System([Learner(lc)], model, cfg.T, seed=system_seed, slots=[0] * cfg.M)
    base = cfg.uniform_level() if mode == "DUP" else 0
    learners = []
    for i in range(cfg.M):
        lc = LearnerConfig(learner_id=i, own_videos=list(range(i * cfg.K, (i + 1) * cfg.K)),
                           peer_ids=[j for j in range(cfg.M) if j != i], base_level=base, **common)
        learners.append(Learner(lc, counter_rng=np.random.default_rng(counter_ss[i])))
    return System(learners, model, cfg.T, seed=system_seed)


@dataclass
class MetricsSeries:
    """System-wide curves indexed by round ``t = 1..T``.

    Regret is pseudo-regret (expected value of the oracle video minus that of
    the served video); averages are per user arrival.
    """

    t: np.ndarray
    regret: np.ndarray
    avg_regret: np.ndarray
    accuracy: np.ndarray
    per_learner_regret: np.ndarray

    @property
    def final_regret(self):
        return float(self.regret[-1]) if self.regret.size else 0.0

    @property
    def final_accuracy(self):
        return float(self.accuracy[-1]) if self.accuracy.size else 0.0

    @property
    def final_avg_regret(self):
        return float(self.avg_regret[-1]) if self.avg_regret.size else 0.0

    def at(self, t):
        return int(t) - 1


def log_arrays(log):
    n = len(log)
    if n == 0:
        return None
    d = len(log[0].x)
    X = np.empty((n, d))
    t = np.empty(n, dtype=np.int64)
    learner = np.empty(n, dtype=np.int64)
    video = np.empty(n, dtype=np.int64)
    click = np.empty(n, dtype=np.int64)
    for i, r in enumerate(log):
        X[i] = r.x
        t[i] = r.t
        learner[i] = r.learner
        video[i] = r.video
        click[i] = r.click
    return X, t, learner, video, click


def compute_regret(log, model: RewardModel, arms=None):
    """Pseudo-regret and click accuracy curves from an event log alone."""
    if not log:
        z = np.zeros(0)
        return MetricsSeries(z.astype(np.int64), z, z, z, np.zeros((0, 0)))
    X, t, learner, video, click = log_arrays(log)
    if video.max() >= model.n_videos or video.min() < 0:
        raise InvalidInputError("log refers to videos the model does not know")
    if X.shape[1] != model.d:
        raise InvalidInputError("log contexts do not match the model dimension")
    arms = np.arange(model.n_videos) if arms is None else np.asarray(list(arms))
    best = np.empty(len(X))
    served = np.empty(len(X))
    for lo in range(0, len(X), 8192):
        U = model.expected_rewards(X[lo:lo + 8192])
        best[lo:lo + 8192] = U[:, arms].max(axis=1)
        served[lo:lo + 8192] = U[np.arange(U.shape[0]), video[lo:lo + 8192]]
    inc = best - served
    T = int(t.max())
    if np.any(np.diff(t) < 0):
        raise InvalidInputError("log is not ordered by round")
    per_round = np.bincount(t - 1, weights=inc, minlength=T)
    arrivals = np.bincount(t - 1, minlength=T)
    clicks = np.bincount(t - 1, weights=click, minlength=T)
    n_learners = int(learner.max()) + 1
    per_learner = np.zeros((n_learners, T))
    for k in range(n_learners):
        sel = learner == k
        per_learner[k] = np.cumsum(np.bincount(t[sel] - 1, weights=inc[sel], minlength=T))
    regret = np.cumsum(per_round)
    seen = np.cumsum(arrivals)
    rounds = np.arange(1, T + 1)
    return MetricsSeries(rounds, regret, regret / seen, np.cumsum(clicks) / seen, per_learner)


def run_single(cfg: ExperimentConfig, mode, seed):
    model, stream, system_seed = environment_for(cfg, seed)
    system = build_system(cfg, mode, model, system_seed)
    system.run_simulation(stream, cfg.T)
    return system, model, compute_regret(system.event_log, model)


# -- replicate runs ------------------------------------------------------------


def environment_fingerprint(cfg: ExperimentConfig, seed):
    """Digest of everything that determines the environment drawn for ``seed``."""
    key = {"seed": seed, "M": cfg.M, "K": cfg.K, "d": cfg.d, "T": cfg.T, "L": cfg.L,
           "alpha": cfg.alpha, "h_min": cfg.h_min, "context": cfg.context}
    return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]


def _fmt(v):
    return format(float(v), ".10g")


def sample_rounds(T, stride):
    """Round indices 1..T kept at the given stride; the last round is always kept."""
    if T <= 0:
        return np.zeros(0, dtype=np.int64)
    t = np.arange(stride, T + 1, stride, dtype=np.int64)
    if t.size == 0 or t[-1] != T:
        t = np.append(t, T)
    return t


def plot_stride(T):
    return max(1, math.ceil(T / 500))


def metrics_rows(mode, seed, ms: MetricsSeries, stride=1):
    rows = []
    for t in sample_rounds(len(ms.t), stride):
        i = t - 1
        rows.append([mode, seed, int(t), _fmt(ms.regret[i]), _fmt(ms.avg_regret[i]),
                     _fmt(ms.accuracy[i])])
    return rows


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


@dataclass
class RunResult:
    mode: str
    seed: int
    fingerprint: str
    final_regret: float
    final_avg_regret: float
    final_accuracy: float
    rows: list


def _run_job(args):
    cfg, mode, seed = args
    _, _, ms = run_single(cfg, mode, seed)
    return RunResult(mode, seed, environment_fingerprint(cfg, seed), ms.final_regret,
                     ms.final_avg_regret, ms.final_accuracy, metrics_rows(mode, seed, ms, cfg.stride))


def thread_cap():
    raw = os.environ.get("DPBANDIT_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = 1
    return max(1, n)


def run_file_name(mode, seed):
    return f"run_{mode}_seed{seed}.csv"


@dataclass
class ModeSummary:
    """Final-round metrics of one mode across seeds."""

    mode: str
    seeds: list
    fingerprints: list
    final_regret: list
    final_avg_regret: list
    final_accuracy: list

    @staticmethod
    def _ms(values):
        a = np.asarray(values, dtype=float)
        sd = float(a.std(ddof=1)) if a.size > 1 else 0.0
        return float(a.mean()), sd

    @property
    def accuracy(self):
        return self._ms(self.final_accuracy)

    @property
    def regret(self):
        return self._ms(self.final_regret)

    @property
    def avg_regret(self):
        return self._ms(self.final_avg_regret)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


SUMMARY_COLUMNS = ["mode", "n_seeds", "accuracy_mean", "accuracy_std", "regret_mean",
                   "regret_std", "avg_regret_mean", "avg_regret_std"]


def summarize(results):
    by_mode: dict[str, list[RunResult]] = {}
    for r in results:
        by_mode.setdefault(r.mode, []).append(r)
    out = []
    for mode, rs in by_mode.items():
        rs = sorted(rs, key=lambda r: r.seed)
        out.append(ModeSummary(mode, [r.seed for r in rs], [r.fingerprint for r in rs],
                               [r.final_regret for r in rs], [r.final_avg_regret for r in rs],
                               [r.final_accuracy for r in rs]))
    # best mode first; ties keep the configured mode order
    out.sort(key=lambda s: -s.accuracy[0])
    return out


def write_summary(out_dir, summaries):
    rows = []
    for s in summaries:
        rows.append([s.mode, len(s.seeds), *map(_fmt, s.accuracy), *map(_fmt, s.regret),
                     *map(_fmt, s.avg_regret)])
    write_csv(Path(out_dir) / "summary.csv", SUMMARY_COLUMNS, rows)
    Path(out_dir, "summary.json").write_text(
        json.dumps([s.to_dict() for s in summaries], indent=2, sort_keys=True) + "\n")


def load_summaries(path):
    path = Path(path)
    if path.is_dir():
        path = path / "summary.json"
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read summaries from {path}: {exc}") from None
    return [ModeSummary.from_dict(d) for d in data]


def run_suite(cfg: ExperimentConfig, out=None, log=None):
    """Run every (mode, seed) pair, writing one CSV per run and a summary.

    Runs fan out over ``DPBANDIT_THREADS`` worker processes (default 1). Files
    are written in job order, so the output does not depend on scheduling. If
    interrupted, the summary covers the runs that finished.
    """
    cfg.validate()
    out_dir = Path(out or cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, mode, seed) for mode in cfg.all_modes() for seed in cfg.seeds]
    results = []

    def keep(res):
        write_csv(out_dir / run_file_name(res.mode, res.seed), METRIC_COLUMNS, res.rows)
        res.rows = []
        results.append(res)
        if log:
            log(f"{res.mode} seed {res.seed}: accuracy {res.final_accuracy:.4f} "
                f"avg regret {res.final_avg_regret:.4f}")

    workers = min(thread_cap(), len(jobs))
    try:
        if workers <= 1:
            for job in jobs:
                keep(_run_job(job))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for res in pool.map(_run_job, jobs):
                    keep(res)
    finally:
        summaries = summarize(results)
        if summaries:
            write_summary(out_dir, summaries)
        saved = {k: v for k, v in cfg.to_dict().items() if k != "out"}
        Path(out_dir, "config.json").write_text(json.dumps(saved, indent=2, sort_keys=True) + "\n")
    return summaries


# -- comparison ----------------------------------------------------------------


Z95 = NormalDist().inv_cdf(0.975)


@dataclass
class Comparison:
    a: str
    b: str
    n: int
    regret_ratio: float
    regret_ratio_ci: tuple
    accuracy_delta: float
    accuracy_delta_ci: tuple


def _mean_ci(values):
    a = np.asarray(values, dtype=float)
    mean = float(a.mean())
    half = Z95 * float(a.std(ddof=1)) / math.sqrt(a.size) if a.size > 1 else 0.0
    return mean, (mean - half, mean + half)


def compare_pair(sa: ModeSummary, sb: ModeSummary):
    """Paired comparison of ``sa`` against ``sb`` over their shared seeds.

    The regret ratio is the ratio of mean final regrets; its interval comes
    from the per-seed ratios. Accuracy delta is ``a - b``.
    """
    if sa.seeds != sb.seeds or sa.fingerprints != sb.fingerprints:
        raise InvalidInputError(f"{sa.mode} and {sb.mode} were not run on identical environments")
    ra, rb = np.asarray(sa.final_regret), np.asarray(sb.final_regret)
    ratio = float(ra.mean() / rb.mean()) if rb.mean() > 0 else (1.0 if ra.mean() == 0 else math.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        per_seed = np.where(rb > 0, ra / np.where(rb > 0, rb, 1.0), np.where(ra == 0, 1.0, np.inf))
    _, ratio_ci = _mean_ci(per_seed)
    delta, delta_ci = _mean_ci(np.asarray(sa.final_accuracy) - np.asarray(sb.final_accuracy))
    return Comparison(sa.mode, sb.mode, len(sa.seeds), ratio, ratio_ci, delta, delta_ci)


def compare_modes(summaries):
    summaries = list(summaries)
    if len(summaries) < 2:
        raise InvalidInputError("need at least two mode summaries to compare")
    out = []
    for i, sa in enumerate(summaries):
        for sb in summaries[i + 1:]:
            out.append(compare_pair(sa, sb))
    return out


COMPARE_COLUMNS = ["a", "b", "n_seeds", "regret_ratio", "regret_ratio_lo", "regret_ratio_hi",
                   "accuracy_delta", "accuracy_delta_lo", "accuracy_delta_hi"]


def comparison_rows(comparisons):
    return [[c.a, c.b, c.n, _fmt(c.regret_ratio), *map(_fmt, c.regret_ratio_ci),
             _fmt(c.accuracy_delta), *map(_fmt, c.accuracy_delta_ci)] for c in comparisons]


# -- plot data -----------------------------------------------------------------


PLOT_COLUMNS = ["mode", "t", "n_seeds", "regret_mean", "regret_std", "avg_regret_mean",
                "avg_regret_std", "accuracy_mean", "accuracy_std"]


def read_run_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != METRIC_COLUMNS:
            raise InvalidInputError(f"{path} is not a run file")
        rows = list(reader)
    mode = rows[0][0] if rows else None
    t = np.array([int(r[2]) for r in rows], dtype=np.int64)
    vals = np.array([[float(v) for v in r[3:6]] for r in rows]).reshape(-1, 3)
    return mode, t, vals


def plot_data(run_dir, T=None):
    """Mean/std curves per mode, sampled every ``ceil(T/500)`` rounds."""
    files = sorted(Path(run_dir).glob("run_*.csv"))
    if not files:
        raise InvalidInputError(f"no run files in {run_dir}")
    by_mode: dict[str, list] = {}
    for f in files:
        mode, t, vals = read_run_csv(f)
        if mode is not None:
            by_mode.setdefault(mode, []).append((t, vals))
    rows = []
    for mode in sorted(by_mode):
        runs = by_mode[mode]
        horizon = T or int(min(r[0][-1] for r in runs))
        keep = sample_rounds(horizon, plot_stride(horizon))
        stacked = []
        for t, vals in runs:
            idx = np.searchsorted(t, keep)
            if np.any(idx >= len(t)) or np.any(t[np.minimum(idx, len(t) - 1)] != keep):
                raise InvalidInputError("run files were written with a stride that misses plot rounds")
            stacked.append(vals[idx])
        arr = np.stack(stacked)
        mean = arr.mean(axis=0)
        sd = arr.std(axis=0, ddof=1) if arr.shape[0] > 1 else np.zeros_like(mean)
        for j, t in enumerate(keep):
            rows.append([mode, int(t), arr.shape[0],
                         *[_fmt(v) for pair in zip(mean[j], sd[j]) for v in pair]])
    return rows
