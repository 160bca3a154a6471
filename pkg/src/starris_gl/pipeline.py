"""Dataset generation, the learned CSI-free precoder, evaluation and sweeps.

Seeds: sample ``i`` of a run with base seed ``s`` draws its channel from
``(s, i, 0)``, its uplink noise from ``(s, i, 1)`` and its random-baseline
choice from ``(s, i, 2)``. Training samples use ``i = 0, 1, ...``; test and
evaluation samples start at :data:`TEST_OFFSET` and :data:`EVAL_OFFSET` so
the sets never share a channel.
"""

from __future__ import annotations

import dataclasses
import logging
import time
import warnings
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted

from .channel import ChannelRealization, draw_channel
from .codec import TargetCodec
from .config import RunConfig, SystemConfig
from .flops import FlopsBreakdown, flops_report
from .gbdt import GBDTRegressor
from .rates import bcd_optimize, canonicalize, evaluate, random_baseline
from .rft import RFTSelector
from .ris import amplitude_grid, dft_codebook
from .saab import SaabTransform
from .sounding import ReceivedPilotTensor, sound_channel

log = logging.getLogger(__name__)

TEST_OFFSET = 1_000_000
EVAL_OFFSET = 2_000_000
SCHEMES = ("bcd", "gl", "random")
Z95 = NormalDist().inv_cdf(0.975)

LABEL_FIELDS = ("index", "w", "theta_r", "theta_t", "alpha_r", "rate_r", "rate_t", "objective", "iterations")


class PipelineError(RuntimeError):
    """Inconsistent shapes between pipeline stages."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def sample_seed(base: int, index: int, stream: int) -> list[int]:
    return [int(base), int(index), int(stream)]


@dataclass
class Dataset:
    """Pilot tensors, encoded targets and raw label records of ``n`` samples."""

    tensors: np.ndarray  # complex (n, M, N_p, N, K)
    targets: np.ndarray  # (n, D)
    labels: dict  # LABEL_FIELDS -> arrays with leading axis n
    data_hash: str
    seed: int

    def __len__(self) -> int:
        return len(self.targets)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.tensors[idx], self.targets[idx], {k: v[idx] for k, v in self.labels.items()},
                       self.data_hash, self.seed)

    @staticmethod
    def concat(parts: list["Dataset"]) -> "Dataset":
        first = parts[0]
        return Dataset(
            np.concatenate([p.tensors for p in parts]),
            np.concatenate([p.targets for p in parts]),
            {k: np.concatenate([p.labels[k] for p in parts]) for k in first.labels},
            first.data_hash, first.seed,
        )


def make_sample(cfg: RunConfig, seed: int, index: int, codec: TargetCodec):
    """Channel -> BCD label (canonicalised, encoded) and the matching pilot tensor."""
    s = cfg.system
    ch = draw_channel(s, cfg.channel, sample_seed(seed, index, 0))
    sol = canonicalize(bcd_optimize(ch, s, cfg.bcd))
    tensor = sound_channel(ch, s, cfg.sounding.n_amp_levels, sample_seed(seed, index, 1))
    record = {
        "index": index, "w": sol.w, "theta_r": sol.ris.theta_r, "theta_t": sol.ris.theta_t,
        "alpha_r": sol.ris.alpha_r, "rate_r": sol.rate_r, "rate_t": sol.rate_t,
        "objective": sol.objective, "iterations": sol.iterations,
    }
    return tensor.R, codec.encode(sol), record


def _generate_range(cfg: RunConfig, seed: int, start: int, stop: int) -> Dataset:
    codec = TargetCodec(cfg.system.n_elements, cfg.system.n_bs_antennas)
    out = [make_sample(cfg, seed, i, codec) for i in range(start, stop)]
    labels = {k: np.array([r[2][k] for r in out]) for k in LABEL_FIELDS}
    return Dataset(np.array([r[0] for r in out]), np.array([r[1] for r in out]), labels,
                   cfg.data_hash(), seed)


def generate_dataset(cfg: RunConfig, n_samples: int, seed: int | None = None, start: int = 0,
                     chunk_dir=None, n_jobs: int = 1) -> Dataset:
    """Generate ``n_samples`` labelled samples with indices ``start, start+1, ...``.

    With ``chunk_dir`` every chunk of ``experiment.chunk_size`` samples is
    stored as its own file; chunks already on disk with a matching data hash
    are loaded instead of recomputed, so an interrupted run resumes.
    """
    from . import io  # local: io depends on this module's types

    if n_samples < 2:
        raise ValueError("a dataset needs at least 2 samples")
    seed = cfg.experiment.seed if seed is None else seed
    size = max(1, cfg.experiment.chunk_size)
    bounds = [(a, min(a + size, start + n_samples)) for a in range(start, start + n_samples, size)]

    def work(a, b):
        if chunk_dir is not None:
            path = io.chunk_path(chunk_dir, seed, a, b)
            cached = io.try_load_dataset(path, cfg.data_hash())
            if cached is not None:
                return cached
        part = _generate_range(cfg, seed, a, b)
        if chunk_dir is not None:
            io.save_dataset(path, part, cfg)
        return part

    parts = Parallel(n_jobs=n_jobs)(delayed(work)(a, b) for a, b in bounds)
    return Dataset.concat(parts)


def _fit_one(X, y, order, params, seed):
    return GBDTRegressor(**params, random_state=seed).fit(X, y, order=order)


class GLPrecoder(BaseEstimator):
    """Saab features -> per-target RFT selection -> one boosted-tree ensemble per target.

    ``fit`` holds out the last ``val_fraction`` of a seeded permutation for
    validation. ``predict`` maps pilot tensors to encoded target vectors.
    """

    def __init__(self, energy_threshold=0.995, bias_mode="none", n_thresholds=16, n_select=256,
                 shared_selection=False, n_estimators=200, max_depth=4, learning_rate=0.1,
                 reg_lambda=1.0, gamma=0.0, subsample=0.8, colsample=0.8, min_child_weight=1.0,
                 val_fraction=0.1, random_state=0, n_jobs=1):
        self.energy_threshold = energy_threshold
        self.bias_mode = bias_mode
        self.n_thresholds = n_thresholds
        self.n_select = n_select
        self.shared_selection = shared_selection
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.subsample = subsample
        self.colsample = colsample
        self.min_child_weight = min_child_weight
        self.val_fraction = val_fraction
        self.random_state = random_state
        self.n_jobs = n_jobs

    @classmethod
    def from_config(cls, cfg: RunConfig, n_jobs: int = 1) -> "GLPrecoder":
        return cls(
            energy_threshold=cfg.saab.energy_threshold, bias_mode=cfg.saab.bias_mode,
            n_thresholds=cfg.rft.n_thresholds, n_select=cfg.rft.n_select,
            shared_selection=cfg.rft.shared, **dataclasses.asdict(cfg.gbdt),
            val_fraction=cfg.experiment.val_fraction, random_state=cfg.experiment.seed, n_jobs=n_jobs,
        )

    def _gbdt_params(self) -> dict:
        return dict(n_estimators=self.n_estimators, max_depth=self.max_depth,
                    learning_rate=self.learning_rate, reg_lambda=self.reg_lambda, gamma=self.gamma,
                    subsample=self.subsample, colsample=self.colsample,
                    min_child_weight=self.min_child_weight)

    def split(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Train / validation indices (validation may be empty)."""
        perm = check_random_state(self.random_state).permutation(n)
        n_val = int(round(self.val_fraction * n))
        if n - n_val < 2:
            n_val = 0
        return np.sort(perm[: n - n_val]), np.sort(perm[n - n_val:])

    def fit(self, tensors, targets):
        targets = np.asarray(targets, dtype=float)
        tensors = np.asarray(tensors)
        if len(tensors) != len(targets):
            raise PipelineError("input", f"{len(tensors)} tensors but {len(targets)} target rows")
        tr, va = self.split(len(targets))
        self.train_index_, self.val_index_ = tr, va

        self.saab_ = SaabTransform(self.energy_threshold, self.bias_mode).fit(tensors[tr])
        X = self.saab_.transform(tensors)
        n_feat = X.shape[1]
        if n_feat < self.n_select:
            warnings.warn(f"Saab produced {n_feat} features < n_select={self.n_select}; "
                          "selecting all of them", stacklevel=2)

        self.selector_ = RFTSelector(self.n_thresholds, self.n_select, self.shared_selection)
        self.selector_.fit(X[tr], targets[tr])
        sel = self.selector_.selected_
        if sel.shape[0] != targets.shape[1] or sel.max() >= n_feat:
            raise PipelineError("rft", f"selection shape {sel.shape} does not match {n_feat} features "
                                       f"and {targets.shape[1]} targets")

        Xtr = X[tr]
        order = np.argsort(Xtr, axis=0, kind="stable")
        base = check_random_state(self.random_state).randint(0, 2**31 - 1, size=targets.shape[1])
        params = self._gbdt_params()
        self.ensembles_ = Parallel(n_jobs=self.n_jobs)(
            delayed(_fit_one)(Xtr[:, sel[d]], targets[tr, d], order[:, sel[d]], params, int(base[d]))
            for d in range(targets.shape[1])
        )
        self.n_targets_ = targets.shape[1]
        self.n_features_ = n_feat

        self.train_mse_ = np.mean((self._predict_features(Xtr) - targets[tr]) ** 2, axis=0)
        if len(va):
            pred = self._predict_features(X[va])
            self.val_mse_ = np.mean((pred - targets[va]) ** 2, axis=0)
            self.val_baseline_mse_ = np.mean((targets[va] - targets[tr].mean(axis=0)) ** 2, axis=0)
        else:
            self.val_mse_ = self.val_baseline_mse_ = np.full(targets.shape[1], np.nan)
        return self

    def _predict_features(self, X) -> np.ndarray:
        sel = self.selector_.selected_
        return np.column_stack([m.predict(X[:, sel[d]]) for d, m in enumerate(self.ensembles_)])

    def transform(self, tensors) -> np.ndarray:
        check_is_fitted(self, "ensembles_")
        X = self.saab_.transform(tensors)
        if X.shape[1] != self.n_features_:
            raise PipelineError("saab", f"got {X.shape[1]} features, expected {self.n_features_}")
        return X

    def predict(self, tensors) -> np.ndarray:
        return self._predict_features(self.transform(tensors))

    def stage_outputs(self) -> list[int]:
        return [n_out for _, _, n_out in self.saab_.stage_shapes()]

    def tree_shapes(self) -> list[tuple[int, int]]:
        return [(len(m.trees_), m.max_depth) for m in self.ensembles_]


@dataclass
class GlModel:
    """Fitted precoder plus its target codec and the config it was trained on."""

    precoder: GLPrecoder
    codec: TargetCodec
    config: RunConfig
    data_hash: str

    @property
    def config_hash(self) -> str:
        return self.config.hash()


def train(dataset: Dataset, cfg: RunConfig, n_jobs: int = 1) -> GlModel:
    if dataset.data_hash != cfg.data_hash():
        raise PipelineError("input", f"dataset hash {dataset.data_hash} != config hash {cfg.data_hash()}")
    s = cfg.system
    codec = TargetCodec(s.n_elements, s.n_bs_antennas)
    if dataset.targets.shape[1] != codec.dim:
        raise PipelineError("codec", f"targets have {dataset.targets.shape[1]} columns, codec expects {codec.dim}")
    precoder = GLPrecoder.from_config(cfg, n_jobs=n_jobs).fit(dataset.tensors, dataset.targets)
    return GlModel(precoder, codec, cfg, dataset.data_hash)


def infer(model: GlModel, tensor, cfg: SystemConfig):
    """CSI-free inference: pilot tensor in, decoded precoding solution out.

    Only the received tensor and the system config are accepted; passing a
    channel realization is refused.
    """
    for arg in (tensor, cfg):
        if isinstance(arg, ChannelRealization):
            raise TypeError("infer must not receive channel state information")
    if not isinstance(cfg, SystemConfig):
        raise TypeError(f"cfg must be a SystemConfig, got {type(cfg).__name__}")
    R = tensor.R if isinstance(tensor, ReceivedPilotTensor) else np.asarray(tensor)
    if not np.iscomplexobj(R) or R.ndim != 4:
        raise TypeError("tensor must be a complex (M, N_p, N, K) pilot tensor")
    u = model.precoder.predict(R[None])[0]
    return model.codec.decode(u, cfg.tx_power)


def infer_batch(model: GlModel, tensors: np.ndarray, cfg: SystemConfig) -> list:
    if isinstance(tensors, ChannelRealization):
        raise TypeError("infer must not receive channel state information")
    U = model.precoder.predict(np.asarray(tensors))
    return [model.codec.decode(u, cfg.tx_power) for u in U]


@dataclass(frozen=True)
class SchemeStat:
    scheme: str
    mean: float
    ci_low: float
    ci_high: float
    n: int

    @classmethod
    def from_values(cls, scheme: str, values) -> "SchemeStat":
        v = np.asarray(values, dtype=float)
        mean = float(v.mean())
        half = Z95 * float(v.std(ddof=1)) / np.sqrt(len(v)) if len(v) > 1 else 0.0
        return cls(scheme, mean, mean - half, mean + half, len(v))


@dataclass
class ExperimentReport:
    axis: str
    rows: list = field(default_factory=list)  # (value, SchemeStat)
    seeds: dict = field(default_factory=dict)
    runtime: float = 0.0
    flops: FlopsBreakdown | None = None

    CSV_HEADER = "axis,value,scheme,mean,ci_low,ci_high,n"

    def stat(self, value, scheme) -> SchemeStat:
        for v, s in self.rows:
            if v == value and s.scheme == scheme:
                return s
        raise KeyError((value, scheme))

    def values(self) -> list:
        return list(dict.fromkeys(v for v, _ in self.rows))

    def gl_bcd_ratio(self, value) -> float:
        return self.stat(value, "gl").mean / self.stat(value, "bcd").mean

    def to_csv(self, header_comment: str | None = None) -> str:
        """Deterministic CSV text; numbers use 12 significant digits."""
        lines = [f"# {header_comment}"] if header_comment else []
        lines.append(self.CSV_HEADER)
        for value, s in self.rows:
            lines.append(f"{self.axis},{value:.12g},{s.scheme},{s.mean:.12g},{s.ci_low:.12g},"
                         f"{s.ci_high:.12g},{s.n}")
        return "\n".join(lines) + "\n"


def evaluate_schemes(cfg: RunConfig, n_eval: int, seed: int, schemes=SCHEMES, model: GlModel | None = None,
                     start: int = EVAL_OFFSET, n_jobs: int = 1) -> dict[str, np.ndarray]:
    """Objective value of every scheme on ``n_eval`` fresh channels."""
    schemes = tuple(schemes)
    bad = set(schemes) - set(SCHEMES)
    if bad:
        raise ValueError(f"unknown scheme(s) {sorted(bad)}")
    if "gl" in schemes and model is None:
        raise ValueError("scheme 'gl' needs a trained model")
    s = cfg.system
    objective = cfg.bcd.objective
    codebook = dft_codebook(s.ris_h, s.ris_v)
    grid = amplitude_grid(cfg.sounding.n_amp_levels)

    def one(i):
        ch = draw_channel(s, cfg.channel, sample_seed(seed, i, 0))
        out = {}
        if "bcd" in schemes:
            out["bcd"] = bcd_optimize(ch, s, cfg.bcd).objective
        if "random" in schemes:
            out["random"] = random_baseline(ch, s, codebook, grid, sample_seed(seed, i, 2), objective).objective
        if "gl" in schemes:
            tensor = sound_channel(ch, s, cfg.sounding.n_amp_levels, sample_seed(seed, i, 1)).R
            out["gl_tensor"] = tensor
        return ch, out

    results = Parallel(n_jobs=n_jobs)(delayed(one)(i) for i in range(start, start + n_eval))
    values = {k: np.array([r[1][k] for r in results]) for k in schemes if k != "gl"}
    if "gl" in schemes:
        tensors = np.array([r[1]["gl_tensor"] for r in results])
        sols = infer_batch(model, tensors, s)
        values["gl"] = np.array([evaluate(ch, s, sol, objective).objective
                                 for (ch, _), sol in zip(results, sols)])
    return {k: values[k] for k in schemes}


def evaluate_dataset(model: GlModel, dataset: Dataset, cfg: RunConfig) -> dict[str, np.ndarray]:
    """GL, BCD (stored labels) and random objectives on a labelled dataset.

    Channels are redrawn from the dataset's seeds, never read by the model.
    """
    if dataset.data_hash != cfg.data_hash():
        raise PipelineError("input", f"dataset hash {dataset.data_hash} != config hash {cfg.data_hash()}")
    seed = dataset.seed
    s = cfg.system
    objective = cfg.bcd.objective
    codebook = dft_codebook(s.ris_h, s.ris_v)
    grid = amplitude_grid(cfg.sounding.n_amp_levels)
    sols = infer_batch(model, dataset.tensors, s)
    gl, rnd = [], []
    for idx, sol in zip(dataset.labels["index"], sols):
        ch = draw_channel(s, cfg.channel, sample_seed(seed, int(idx), 0))
        gl.append(evaluate(ch, s, sol, objective).objective)
        rnd.append(random_baseline(ch, s, codebook, grid, sample_seed(seed, int(idx), 2), objective).objective)
    return {"bcd": np.asarray(dataset.labels["objective"], dtype=float), "gl": np.array(gl),
            "random": np.array(rnd)}


def axis_config(cfg: RunConfig, axis: str, value) -> RunConfig:
    """Config of one sweep point."""
    s = cfg.system
    if axis == "power":
        s = dataclasses.replace(s, tx_power_dbm=float(value))
    elif axis == "elements":
        n = int(value)
        if n < 1:
            raise ValueError("element count must be >= 1")
        ris_v = max(d for d in range(1, int(np.sqrt(n)) + 1) if n % d == 0)
        s = dataclasses.replace(s, ris_h=n // ris_v, ris_v=ris_v)
    elif axis == "distance":
        d = float(value)
        if not d > 0:
            raise ValueError("distance must be positive")
        ris = np.asarray(s.ris_pos)
        ray = np.asarray(s.user_r_pos) - ris
        s = dataclasses.replace(s, user_r_pos=tuple(ris + ray / np.linalg.norm(ray) * d))
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    return cfg.replace(system=s)


def needs_retrain(cfg: RunConfig, axis: str) -> bool:
    e = cfg.experiment
    return {"power": e.retrain_power, "elements": e.retrain_elements, "distance": e.retrain_distance}[axis]


def fit_model(cfg: RunConfig, n_jobs: int = 1) -> GlModel:
    e = cfg.experiment
    data = generate_dataset(cfg, e.n_train, e.seed, n_jobs=n_jobs)
    return train(data, cfg, n_jobs=n_jobs)


def run_sweep(cfg: RunConfig, axis: str, values, schemes=SCHEMES, n_eval: int = 100, seed: int | None = None,
              model: GlModel | None = None, n_jobs: int = 1) -> ExperimentReport:
    """Mean objective and 95% interval per scheme at every sweep point.

    Every point reuses the same channel seeds. For ``gl`` the model is
    retrained per point when the config asks for it on this axis, and
    ``model`` is used otherwise.
    """
    t0 = time.perf_counter()
    seed = cfg.experiment.seed if seed is None else seed
    report = ExperimentReport(axis, seeds={"eval": seed, "train": cfg.experiment.seed})
    for value in values:
        point = axis_config(cfg, axis, value)
        point_model = model
        if "gl" in schemes and (model is None or needs_retrain(cfg, axis)):
            log.info("training model for %s=%s", axis, value)
            point_model = fit_model(point, n_jobs=n_jobs)
        res = evaluate_schemes(point, n_eval, seed, schemes, point_model, n_jobs=n_jobs)
        for scheme in schemes:
            report.rows.append((float(value), SchemeStat.from_values(scheme, res[scheme])))
    report.runtime = time.perf_counter() - t0
    return report


def model_flops(model: GlModel, cfg: RunConfig | None = None) -> FlopsBreakdown:
    cfg = cfg or model.config
    return flops_report(cfg.system, cfg.sounding.n_amp_levels, cfg.bcd, model.precoder.stage_outputs(),
                        model.precoder.tree_shapes())


def nominal_flops(cfg: RunConfig) -> FlopsBreakdown:
    """Upper bound without a fitted model: every Saab component kept, every tree full."""
    s = cfg.system
    stage_outputs = [2 * s.n_bs_antennas, cfg.sounding.n_amp_levels, s.n_elements, s.n_pilots]
    codec = TargetCodec(s.n_elements, s.n_bs_antennas)
    trees = [(cfg.gbdt.n_estimators, cfg.gbdt.max_depth)] * codec.dim
    return flops_report(s, cfg.sounding.n_amp_levels, cfg.bcd, stage_outputs, trees)
