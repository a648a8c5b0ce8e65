"""Seeded simulations of parallel HK geodesics, emitting CSV and JSON artifacts.

Each experiment returns an ``ExperimentReport``. ``checks`` holds the asserted
tolerances; the CLI exits nonzero when any of them fails.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cone import ConeTangentVec, cone_parallel_transport, cone_pt_ode_oracle, make_geodesic
from .hk_maps import hk_exp, hk_log, hk_norm
from .let_solver import SolverConfig, solve_let
from .lifting import field_norm, hk_interpolate, isometric_lift
from .measures import ConePoint, DiscreteMeasure, _write_table, save_cone_csv, save_measure_csv
from .transport import hk_parallel_transport

PRNG_NAME = "numpy.Philox-4x64-10"
# clouds are jointly scaled to this fraction of pi/2 so every pair stays in the
# reaction-transport regime
DIAMETER_FRACTION = 0.99
MASS_TOL = 0.05
ISOMETRY_TOL = 0.02
MOMENT_TOL = 0.15


@dataclass
class ExperimentReport:
    name: str
    seed: int
    parameters: dict
    metrics: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_json(self) -> str:
        data = asdict(self)
        data["prng"] = PRNG_NAME
        data["passed"] = self.passed
        return json.dumps(data, indent=2, sort_keys=True, default=float)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{self.name}.json"
        self.artifacts.append(str(path))
        path.write_text(self.to_json() + "\n")
        return path


# ------------------------------------------------------------------ sampling

def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def gaussian_samples(rng: np.random.Generator, n: int, mean, variance: float, dim: int = 1) -> np.ndarray:
    """Normal draws by the Box-Muller transform of Philox uniforms."""
    m = -(-n * dim // 2)
    u1 = 1.0 - rng.random(m)  # (0, 1], keeps the log finite
    u2 = rng.random(m)
    radius = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([radius * np.cos(2 * np.pi * u2), radius * np.sin(2 * np.pi * u2)])
    z = z[:n * dim].reshape(n, dim)
    return np.asarray(mean, dtype=float) + np.sqrt(variance) * z


def _joint_rescale(clouds):
    """Scale all clouds about their common centroid to a joint diameter below pi/2."""
    allpts = np.vstack(clouds)
    if allpts.shape[1] == 1:
        diam = float(allpts.max() - allpts.min())
    else:
        from scipy.spatial.distance import pdist
        diam = float(pdist(allpts).max())
    target = DIAMETER_FRACTION * np.pi / 2
    if diam <= 0:
        return clouds, 1.0
    scale = target / diam
    center = allpts.mean(axis=0)
    return [center + scale * (c - center) for c in clouds], scale


def _unit_clouds(clouds):
    return [DiscreteMeasure(c, np.ones(len(c)), c.shape[1]) for c in clouds]


def moments(mu: DiscreteMeasure) -> dict:
    m = mu.masses
    total = float(m.sum())
    mean = m @ mu.points / total
    centered = mu.points - mean
    second = float(np.sum(m * np.sum(centered**2, axis=1)) / total)
    return {"mass": total, "mean": mean.tolist() if mean.size > 1 else float(mean[0]),
            "second_moment": second}


def _parallel_triple(mu1, mu2, mu3, n_steps, cfg):
    """Transport log(mu2 -> mu3) to mu1 along the mu2 -> mu1 geodesic and shoot mu4."""
    sol23 = solve_let(mu2, mu3, cfg)
    u = hk_log(mu2, mu3, sol23, 1.0, edgewise=cfg.edgewise)
    result = hk_parallel_transport(mu2, mu1, u, n_steps, cfg)
    mu4, dropped = hk_exp(mu1, result.transported, 1.0, return_dropped=True)
    return sol23, u, result, mu4, dropped


def _save_clouds(out, prefix, measures, report):
    if out is None:
        return
    for k, mu in enumerate(measures, start=1):
        path = Path(out) / f"{prefix}_mu{k}.csv"
        save_measure_csv(path, mu)
        report.artifacts.append(str(path))


def _norm_trace_ok(norms) -> bool:
    return bool(np.all(np.diff(norms) <= 1e-9 * max(norms[0], 1.0)))


# --------------------------------------------------------------- experiments

def exp_mass_growth(seed: int = 0, M1: int = 2000, M2: int = 1000, M3: int = 500,
                    variance: float = 2.0, n_steps: int = 32,
                    cfg: SolverConfig | None = None, out=None) -> ExperimentReport:
    for M in (M1, M2, M3):
        if M < 1:
            raise ValueError("sample counts must be >= 1")
    cfg = cfg or SolverConfig()
    rng = _rng(seed)
    clouds = [gaussian_samples(rng, M, 0.0, variance) for M in (M1, M2, M3)]
    clouds, scale = _joint_rescale(clouds)
    mu1, mu2, mu3 = _unit_clouds(clouds)
    start = time.perf_counter()
    sol23, u, res, mu4, dropped = _parallel_triple(mu1, mu2, mu3, n_steps, cfg)
    elapsed = time.perf_counter() - start

    beta23 = 0.5 * (np.sqrt(M3 / M2) - 1.0)
    beta_pt = beta23 * np.sqrt(M2 / M1)
    predicted = M1 * (2.0 * beta_pt + 1.0) ** 2
    mass4 = float(mu4.masses.sum())
    rel = abs(mass4 - predicted) / predicted
    report = ExperimentReport(
        name="mass-growth", seed=seed,
        parameters={"M1": M1, "M2": M2, "M3": M3, "variance": variance, "n_steps": n_steps,
                    "scale": scale})
    report.metrics.update({
        "mu4_mass": mass4, "predicted_mu4_mass": float(predicted), "relative_error": rel,
        "beta23_predicted": float(beta23), "beta23_mean": float(np.average(u.beta, weights=mu2.masses)),
        "beta_pt_predicted": float(beta_pt),
        "beta_pt_mean": float(np.average(res.transported.beta, weights=mu1.masses)),
        "hk_norm_u": hk_norm(u), "hk_norm_transported": hk_norm(res.transported),
        "dropped_atoms": dropped, "seconds": elapsed,
    })
    report.checks["mu4_mass_within_5pct"] = rel <= MASS_TOL
    report.checks["norms_non_increasing"] = _norm_trace_ok(res.per_step_norms)
    _save_clouds(out, "mass_growth", [mu1, mu2, mu3, mu4], report)
    return report


def _hk_gap_report(name, seed, params, mu1, mu2, mu3, n_steps, cfg, out):
    sol23, u, res, mu4, dropped = _parallel_triple(mu1, mu2, mu3, n_steps, cfg)
    hk14 = solve_let(mu1, mu4, cfg).hk_distance
    hk23 = sol23.hk_distance
    gap = abs(hk14 - hk23) / hk23 if hk23 > 0 else abs(hk14)
    report = ExperimentReport(name=name, seed=seed, parameters=params)
    report.metrics.update({"hk_14": hk14, "hk_23": hk23, "relative_gap": gap,
                           "hk_norm_u": hk_norm(u), "hk_norm_transported": hk_norm(res.transported),
                           "dropped_atoms": dropped})
    for k, mu in enumerate((mu1, mu2, mu3, mu4), start=1):
        for key, val in moments(mu).items():
            report.metrics[f"mu{k}_{key}"] = val
    report.checks["norms_non_increasing"] = _norm_trace_ok(res.per_step_norms)
    _save_clouds(out, name.replace("-", "_"), [mu1, mu2, mu3, mu4], report)
    return report, gap


def exp_mean_shift(seed: int = 0, n: int = 1000, means=(-1.0, 0.0, 1.0), variance: float = 1.0,
                   n_steps: int = 32, cfg: SolverConfig | None = None, out=None) -> ExperimentReport:
    if n < 1:
        raise ValueError("n must be >= 1")
    cfg = cfg or SolverConfig()
    rng = _rng(seed)
    clouds, scale = _joint_rescale([gaussian_samples(rng, n, m, variance) for m in means])
    mu1, mu2, mu3 = _unit_clouds(clouds)
    params = {"n": n, "means": list(means), "variance": variance, "n_steps": n_steps, "scale": scale}
    report, gap = _hk_gap_report("mean-shift", seed, params, mu1, mu2, mu3, n_steps, cfg, out)
    report.checks["hk_isometry_within_2pct"] = gap <= ISOMETRY_TOL
    return report


def exp_cov_change(seed: int = 0, n: int = 1000, variances=(1.0, 1.0, 2.0),
                   n_steps: int = 32, cfg: SolverConfig | None = None, out=None) -> ExperimentReport:
    if n < 1:
        raise ValueError("n must be >= 1")
    cfg = cfg or SolverConfig()
    rng = _rng(seed)
    clouds, scale = _joint_rescale([gaussian_samples(rng, n, 0.0, v) for v in variances])
    mu1, mu2, mu3 = _unit_clouds(clouds)
    params = {"n": n, "variances": list(variances), "n_steps": n_steps, "scale": scale}
    report, gap = _hk_gap_report("cov-change", seed, params, mu1, mu2, mu3, n_steps, cfg, out)
    m = report.metrics
    ratio41 = m["mu4_second_moment"] / m["mu1_second_moment"]
    ratio32 = m["mu3_second_moment"] / m["mu2_second_moment"]
    m["moment_ratio_41"] = ratio41
    m["moment_ratio_32"] = ratio32
    m["moment_ratio_gap"] = abs(ratio41 - ratio32) / ratio32
    m["mass_variation"] = (m["mu4_mass"] - m["mu1_mass"]) / m["mu1_mass"]
    report.checks["moment_ratio_within_15pct"] = m["moment_ratio_gap"] <= MOMENT_TOL
    return report


def exp_interpolation(seed: int = 0, n0: int = 1000, n1: int = 2000, n_steps: int = 8,
                      means=(-1.0, 1.0), variance: float = 1.0,
                      cfg: SolverConfig | None = None, out=None) -> ExperimentReport:
    if n0 < 1 or n1 < 1:
        raise ValueError("counts must be >= 1")
    cfg = cfg or SolverConfig()
    rng = _rng(seed)
    clouds, scale = _joint_rescale([gaussian_samples(rng, n0, means[0], variance),
                                    gaussian_samples(rng, n1, means[1], variance)])
    mu0, mu1 = _unit_clouds(clouds)
    sol = solve_let(mu0, mu1, cfg)
    path = isometric_lift(mu0, mu1, n_steps, cfg, sol=sol)
    report = ExperimentReport(name="interpolation", seed=seed,
                              parameters={"n0": n0, "n1": n1, "n_steps": n_steps,
                                          "means": list(means), "variance": variance,
                                          "scale": scale})
    let_flags, iso_flags = [], []
    for k, t in enumerate(path.times):
        _, lam_t = hk_interpolate(mu0, mu1, sol, float(t))
        let_flags.append(lam_t.deterministic_radial())
        iso_flags.append(path.measures[k].deterministic_radial())
        if out is not None:
            for tag, lam in (("let", lam_t), ("iso", path.measures[k])):
                path_csv = Path(out) / f"interp_{tag}_cone_{k:03d}.csv"
                save_cone_csv(path_csv, lam)
                report.artifacts.append(str(path_csv))
            base_csv = Path(out) / f"interp_base_{k:03d}.csv"
            save_measure_csv(base_csv, path.base_measures[k])
            report.artifacts.append(str(base_csv))
    start_mass = float(path.base_measures[0].masses.sum())
    end_mass = float(path.base_measures[-1].masses.sum())
    report.metrics.update({"hk_distance": sol.hk_distance,
                           "let_lift_deterministic": let_flags,
                           "isometric_deterministic": iso_flags,
                           "start_mass": start_mass, "end_mass": end_mass,
                           "field_norms": [field_norm(V) for V in path.tangents]})
    report.checks["isometric_deterministic_everywhere"] = all(iso_flags)
    report.checks["endpoint_masses"] = (abs(start_mass - n0) <= 1e-9 * n0
                                        and abs(end_mass - n1) <= 1e-9 * n1)
    return report


FIGURE_START = (1.0, 0.5)
FIGURE_END = (3.0, 1.0)
FIGURE_RADIAL = 0.75


def cone_pt_trajectory(n_samples: int = 100):
    """Closed-form and ODE transport of 0.75 d/dr from (x, r) = (1, 0.5) to (3, 1).

    Returns ``(table, oracle)``: table columns are t, x, r, a, b, polar_x,
    polar_y for ``n_samples`` equispaced times, oracle the RK4 values.
    """
    t = np.linspace(0.0, 1.0, n_samples)
    ones = np.ones(n_samples)
    z0 = ConePoint(np.full((n_samples, 1), FIGURE_START[0]), FIGURE_START[1] * ones)
    z1 = ConePoint(np.full((n_samples, 1), FIGURE_END[0]), FIGURE_END[1] * ones)
    g = make_geodesic(z0, z1)
    u0 = ConeTangentVec(z0, np.zeros((n_samples, 1)), FIGURE_RADIAL * ones)
    closed = cone_parallel_transport(g, u0, t)
    oracle = cone_pt_ode_oracle(g, u0, t)
    x, r = closed.base.x[:, 0], closed.base.r
    table = np.column_stack([t, x, r, closed.a[:, 0], closed.b, r * np.cos(x), r * np.sin(x)])
    return table, oracle


def exp_cone_pt_figure(n_samples: int = 100, out=None) -> ExperimentReport:
    """Cone transport figure: trajectory, norm drift and agreement with the ODE oracle."""
    table, oracle = cone_pt_trajectory(n_samples)
    r, a, b = table[:, 2], table[:, 3], table[:, 4]
    norms = np.sqrt(r**2 * a**2 + b**2)
    deviation = float(max(np.abs(a - oracle.a[:, 0]).max(), np.abs(b - oracle.b).max()))
    drift = float(np.abs(norms - FIGURE_RADIAL).max())
    report = ExperimentReport(name="cone-pt", seed=0,
                              parameters={"start": list(FIGURE_START), "end": list(FIGURE_END),
                                          "radial": FIGURE_RADIAL, "n_samples": n_samples})
    report.metrics.update({"max_oracle_deviation": deviation, "norm_drift": drift,
                           "final_a": float(a[-1]), "final_b": float(b[-1])})
    report.checks["oracle_within_1e-6"] = deviation <= 1e-6
    report.checks["norm_drift_within_1e-10"] = drift <= 1e-10
    if out is not None:
        path = Path(out) / "cone_pt_trajectory.csv"
        _write_table(path, ["t", "x", "r", "a", "b", "polar_x", "polar_y", "ode_a", "ode_b"],
                     np.column_stack([table, oracle.a[:, 0], oracle.b]))
        report.artifacts.append(str(path))
    return report


EXPERIMENTS = {
    "mass-growth": exp_mass_growth,
    "mean-shift": exp_mean_shift,
    "cov-change": exp_cov_change,
    "interpolation": exp_interpolation,
    "cone-pt": exp_cone_pt_figure,
}
