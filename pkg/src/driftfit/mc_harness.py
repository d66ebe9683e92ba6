"""Replicated simulate-then-estimate experiments with reproducible seeding.

Replication ``j`` of an experiment draws its path from the seed
``derive_seed(master_seed, j)``, so any replication can be rerun on its own
and the output does not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, NamedTuple, Sequence

import numpy as np

from .contrast import (DEFAULT_BOX, ContrastConfig, estimate_theta2_stable, kept_fraction,
                       minimize_contrast)
from .kernels import TruncationKernel
from .levy_integrals import kernel_fractional_moment
from .model import GaussianCP, ModelSpec, NoJumps, TemperedStable, affine_model
from .moment_approx import (MCOracle, MomentApprox, Euler, KesslerGeneric, KesslerOUExact,
                            StableCorrected)
from .rng import derive_seed
from .sde_sim import SimScheme, simulate_path, uniform_grid

REP_FIELDS = ["rep", "seed", "theta1_hat", "theta2_hat", "theta2_euler", "contrast",
              "kept_fraction", "converged", "error"]
SUMMARY_FIELDS = ["label", "mean1", "std1", "mean2", "std2", "reps", "failed",
                  "std_undefined", "runtime_s"]


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class JumpConfig:
    type: str = "none"
    lam: float = 0.0
    mu_j: float = 0.0
    sigma_j: float = 1.0
    alpha: float = 0.5

    def build(self):
        if self.type == "none":
            return NoJumps()
        if self.type == "gaussian_cp":
            return GaussianCP(self.lam, self.mu_j, self.sigma_j)
        if self.type == "tempered_stable":
            return TemperedStable(self.alpha)
        raise ValueError(f"unknown jump type {self.type!r}")


@dataclass(frozen=True)
class ModelConfig:
    theta1: float = -0.5
    theta2: float = 2.0
    sigma: float = 0.3
    gamma: float = 1.0
    jumps: JumpConfig = field(default_factory=JumpConfig)
    drift: str = "affine"

    def build(self) -> ModelSpec:
        if self.drift != "affine":
            raise ValueError(f"unsupported drift {self.drift!r}")
        return affine_model(self.sigma, self.gamma, self.jumps.build())

    @property
    def theta(self) -> tuple[float, float]:
        return (self.theta1, self.theta2)


@dataclass(frozen=True)
class SamplingConfig:
    t_final: float = 2000.0
    n: int = 10_000
    x0: float = 4.0
    substeps: int = 10
    exact_ou: bool = True
    times: tuple[float, ...] | None = None

    def grid(self) -> np.ndarray:
        if self.times is not None:
            return np.asarray(self.times, dtype=float)
        return uniform_grid(self.t_final, self.n)

    def scheme(self) -> SimScheme:
        return SimScheme(self.substeps, self.exact_ou)


@dataclass(frozen=True)
class EstimatorConfig:
    m_approx: str = "kessler_ou"
    order: int = 2
    beta: float = 0.49
    c: float = 1.0
    kernel: dict = field(default_factory=lambda: {"kind": "phi0"})
    k_ind: float | None = 3.0
    weighted: bool = False
    theta_box: tuple = DEFAULT_BOX
    frozen: dict = field(default_factory=dict)
    # "contrast" minimises numerically, "explicit" uses the closed-form theta2
    method: str = "contrast"
    oracle_paths: int = 100_000

    def build_kernel(self) -> TruncationKernel:
        k = dict(self.kernel)
        kind = k.get("kind", "phi0")
        if kind == "osc":
            return TruncationKernel.oscillating(int(k["l"]), float(k["d"]))
        return TruncationKernel(kind)

    def contrast_config(self) -> ContrastConfig:
        return ContrastConfig(self.beta, self.c, self.build_kernel(), self.k_ind, self.weighted)

    def build_approx(self, model: ModelSpec) -> MomentApprox:
        name = self.m_approx
        if name == "euler":
            return Euler()
        if name == "kessler_ou":
            return KesslerOUExact()
        if name == "kessler_generic":
            return KesslerGeneric(self.order)
        if name == "stable_corrected":
            return StableCorrected.for_model(model, self.beta, self.c, self.build_kernel())
        if name == "mc_oracle":
            return MCOracle(self.oracle_paths, self.beta, self.c, self.build_kernel())
        raise ValueError(f"unknown m_approx {name!r}")


@dataclass(frozen=True)
class MCConfig:
    replications: int = 500
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    label: str = "experiment"
    model: ModelConfig = field(default_factory=ModelConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    mc: MCConfig = field(default_factory=MCConfig)

    def __post_init__(self):
        if self.mc.replications < 1:
            raise ValueError("replications must be >= 1")
        s = self.sampling
        if s.times is None:
            if s.n < 1 or s.t_final <= 0:
                raise ValueError("uniform grid needs n >= 1 and t_final > 0")
        elif len(s.times) < 2:
            raise ValueError("supplied times need at least two points")
        if self.estimator.method not in ("contrast", "explicit"):
            raise ValueError(f"unknown method {self.estimator.method!r}")
        if self.estimator.method == "explicit" and "theta1" not in self.estimator.frozen:
            raise ValueError("the explicit estimator needs theta1 frozen")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        m = dict(d.get("model", {}))
        jumps = dict(m.pop("jumps", {}) or {})
        if "lambda" in jumps:
            jumps["lam"] = jumps.pop("lambda")
        model = ModelConfig(jumps=JumpConfig(**jumps), **m)
        s = dict(d.get("sampling", {}))
        if s.get("times") is not None:
            s["times"] = tuple(float(t) for t in s["times"])
        e = dict(d.get("estimator", {}))
        if "theta_box" in e:
            e["theta_box"] = tuple(tuple(float(v) for v in b) for b in e["theta_box"])
        return cls(label=d.get("label", "experiment"), model=model,
                   sampling=SamplingConfig(**s), estimator=EstimatorConfig(**e),
                   mc=MCConfig(**d.get("mc", {})))

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        jumps = d["model"]["jumps"]
        jumps["lambda"] = jumps.pop("lam")
        return d

    def with_replications(self, reps: int) -> "ExperimentConfig":
        return replace(self, mc=replace(self.mc, replications=int(reps)))


def load_preset(name: str) -> ExperimentConfig:
    """Bundled configuration ``presets/<name>.json``."""
    ref = resources.files("driftfit") / "presets" / f"{name}.json"
    return ExperimentConfig.from_dict(json.loads(ref.read_text()))


def preset_names() -> list[str]:
    folder = resources.files("driftfit") / "presets"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


# -- one replication ----------------------------------------------------------


def run_replication(cfg: ExperimentConfig, rep: int) -> dict[str, Any]:
    """Simulate and estimate replication ``rep``; failures are returned, not raised."""
    seed = derive_seed(cfg.mc.seed, rep)
    row = {"rep": rep, "seed": seed, "theta1_hat": math.nan, "theta2_hat": math.nan,
           "theta2_euler": math.nan, "contrast": math.nan, "kept_fraction": math.nan,
           "converged": False, "error": ""}
    try:
        model = cfg.model.build()
        path = simulate_path(model, cfg.model.theta, cfg.sampling.x0, cfg.sampling.grid(),
                             cfg.sampling.scheme(), seed=seed)
        est = cfg.estimator
        ccfg = est.contrast_config()
        if est.method == "explicit":
            th1 = float(est.frozen["theta1"])
            j = _cached_j(est, model) if isinstance(model.levy, TemperedStable) else None
            t2, t2e = estimate_theta2_stable(path, th1, model, ccfg, j=j)
            row.update(theta1_hat=th1, theta2_hat=t2, theta2_euler=t2e, converged=True,
                       kept_fraction=kept_fraction(path, model, ccfg))
        else:
            res = minimize_contrast(path, model, est.build_approx(model), ccfg,
                                    est.theta_box, est.frozen)
            row.update(theta1_hat=res.theta[0], theta2_hat=res.theta[1],
                       contrast=res.contrast_at_opt, kept_fraction=res.kept_fraction,
                       converged=res.converged)
    except Exception as exc:  # recorded and excluded from the summary
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


_J_CACHE: dict = {}


def _cached_j(est: EstimatorConfig, model: ModelSpec) -> float:
    key = (repr(est.build_kernel()), model.levy.alpha)
    if key not in _J_CACHE:
        _J_CACHE[key] = kernel_fractional_moment(est.build_kernel(), model.levy.alpha).value
    return _J_CACHE[key]


def _run_block(args):
    cfg_dict, reps = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return [run_replication(cfg, r) for r in reps]


# -- summaries ----------------------------------------------------------------


class SummaryRow(NamedTuple):
    label: str
    mean1: float
    std1: float
    mean2: float
    std2: float
    reps: int
    failed: int = 0
    std_undefined: bool = False
    runtime_s: float = 0.0


def _ok(row) -> bool:
    return not row.get("error")


def summarize(rows: Iterable[dict], label: str = "", runtime_s: float = 0.0,
              key2: str = "theta2_hat") -> SummaryRow:
    """Sample mean and std (divisor R - 1) of the successful rows.

    With a single row the std is undefined; it is reported as 0 with
    ``std_undefined`` set.
    """
    rows = list(rows)
    good = [r for r in rows if _ok(r)]
    if not good:
        raise ValueError("no successful replications to summarize")
    t1 = np.array([float(r["theta1_hat"]) for r in good])
    t2 = np.array([float(r[key2]) for r in good])
    single = len(good) == 1
    std1 = 0.0 if single else float(np.std(t1, ddof=1))
    std2 = 0.0 if single else float(np.std(t2, ddof=1))
    return SummaryRow(label, float(t1.mean()), std1, float(t2.mean()), std2, len(good),
                      len(rows) - len(good), single, float(runtime_s))


# -- driver -------------------------------------------------------------------


class ExperimentResult(NamedTuple):
    rows: list[dict]
    summary: list[SummaryRow]

    @property
    def failures(self) -> list[dict]:
        return [r for r in self.rows if not _ok(r)]


def _format(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REP_FIELDS)
        for r in rows:
            w.writerow([_format(r[k]) for k in REP_FIELDS])


def write_summary(summary: Sequence[SummaryRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for s in summary:
            w.writerow([_format(v) for v in s])


def run_experiment(cfg: ExperimentConfig, reps: int | None = None,
                   out_dir: str | Path | None = None, workers: int = 1) -> ExperimentResult:
    """Run all replications, write ``reps.csv`` then ``summary.csv``.

    Replications are split in contiguous blocks over ``workers`` processes
    and gathered back in replication order.
    """
    if reps is not None:
        cfg = cfg.with_replications(reps)
    n_rep = cfg.mc.replications
    t0 = time.perf_counter()
    if workers <= 1:
        rows = [run_replication(cfg, r) for r in range(n_rep)]
    else:
        blocks = [list(b) for b in np.array_split(np.arange(n_rep), workers) if len(b)]
        payload = [(cfg.to_dict(), [int(r) for r in b]) for b in blocks]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = [row for block in ex.map(_run_block, payload) for row in block]
    rows.sort(key=lambda r: r["rep"])
    runtime = time.perf_counter() - t0

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_rows(rows, out / "reps.csv")

    summary = []
    if any(_ok(r) for r in rows):
        summary.append(summarize(rows, cfg.label, runtime))
        if cfg.estimator.method == "explicit":
            summary.append(summarize(rows, f"{cfg.label}/euler", runtime, key2="theta2_euler"))
    if out_dir is not None:
        write_summary(summary, Path(out_dir) / "summary.csv")
    return ExperimentResult(rows, summary)


# -- Fisher information reference ---------------------------------------------


class FisherReference(NamedTuple):
    info: np.ndarray        # per unit time, restricted to the free parameters
    cov: np.ndarray         # asymptotic covariance at horizon t_final
    std: np.ndarray
    analytic_std: np.ndarray | None


def analytic_affine_moments(model: ModelSpec, theta) -> tuple[float, float]:
    """Stationary mean and variance of the affine model (compensated jumps)."""
    if model.affine is None:
        raise ValueError("needs the affine model")
    th1, th2 = float(theta[0]), float(theta[1])
    if th1 >= 0:
        raise ValueError("theta1 must be negative for ergodicity")
    levy = model.levy
    if isinstance(levy, GaussianCP):
        jump_var = levy.lam * (levy.mu_j**2 + levy.sigma_j**2)
    elif isinstance(levy, TemperedStable):
        jump_var = math.gamma(2.0 - levy.alpha)
    else:
        jump_var = 0.0
    var = (model.affine.sigma**2 + model.affine.gamma**2 * jump_var) / (-2.0 * th1)
    return -th2 / th1, var


def _restrict(mat: np.ndarray, free: Sequence[int]) -> np.ndarray:
    idx = np.asarray(free)
    return mat[np.ix_(idx, idx)]


def _invert(info: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(info)) or np.linalg.cond(info) > 1e12:
        raise np.linalg.LinAlgError("singular Fisher information matrix")
    return np.linalg.inv(info)


def fisher_reference(model: ModelSpec, theta0, t_final: float, free: Sequence[int] = (0, 1),
                     t_ref: float = 1e5, dt_ref: float = 0.01, seed: int = 0,
                     x0: float | None = None, segment: float = 1e4) -> FisherReference:
    """Efficient std of each free parameter at horizon ``t_final``.

    The information E_pi[grad_b grad_b^T / a^2] is an ergodic average along
    one long simulated path, built in segments of length ``segment``. For
    the affine model the same matrix from the analytic stationary moments is
    returned as ``analytic_std``.
    """
    free = list(free)
    if x0 is None:
        x0 = (-float(theta0[1]) / float(theta0[0])) if model.affine is not None else 0.0
    n_seg = max(1, int(round(t_ref / segment)))
    steps = max(1, int(round(segment / dt_ref)))
    scheme = SimScheme(1, exact_ou=model.affine is not None)
    acc = np.zeros((2, 2))
    count = 0
    x = float(x0)
    for s in range(n_seg):
        grid = uniform_grid(segment, steps)
        p = simulate_path(model, theta0, x, grid, scheme, seed=derive_seed(seed, "fisher", s))
        xs = p.values[:-1]
        g1, g2 = model.drift_theta_grad(theta0, xs)
        g = np.stack([np.broadcast_to(g1, xs.shape), np.broadcast_to(g2, xs.shape)])
        a2 = np.broadcast_to(np.asarray(model.diffusion(xs), dtype=float) ** 2, xs.shape)
        if np.any(a2 == 0):
            raise np.linalg.LinAlgError("zero diffusion: the Fisher information is undefined")
        acc += (g / a2) @ g.T
        count += xs.size
        x = float(p.values[-1])
    info = _restrict(acc / count, free)
    cov = _invert(info) / t_final
    std = np.sqrt(np.diag(cov))

    analytic = None
    if model.affine is not None and float(theta0[0]) < 0:
        mean, var = analytic_affine_moments(model, theta0)
        full = np.array([[var + mean**2, mean], [mean, 1.0]]) / model.affine.sigma**2
        analytic = np.sqrt(np.diag(_invert(_restrict(full, free)) / t_final))
    return FisherReference(info, cov, std, analytic)
