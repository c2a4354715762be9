"""Scenario runs, parameter sweeps and the no-incentive (m = 0) regression."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .dynamics import (
    CooperationState,
    GameParams,
    IntegrationFault,
    IntegratorConfig,
    TrajectoryRecord,
    evolve,
    potential,
    total_payoff,
)
from .metrics import AssortativityResult, assortativity, cooperation_graph, degree_stats
from .model import (
    ChannelParams,
    ConnectivityMatrix,
    Deployment,
    Domain,
    analytic_mean_degree,
    build_connectivity_matrix,
    sample_deployment,
)

__all__ = [
    "ScenarioConfig",
    "SweepSpec",
    "EquilibriumSummary",
    "SweepRow",
    "TragedyReport",
    "SWEEP_PARAMS",
    "DEFAULT_SWEEP_AXES",
    "build_network",
    "run_scenario",
    "run_sweep",
    "summarize_sweep",
    "write_sweep_csv",
    "tragedy_regression",
    "fast_decay_plateau",
]

SWEEP_PARAMS = ("mu", "tau", "eta", "eps", "m", "rho", "r0")

DEFAULT_SWEEP_AXES = {
    "mu": tuple(float(x) for x in np.geomspace(0.25, 4.0, 8)),
    "tau": tuple(float(x) for x in np.geomspace(0.25, 4.0, 8)),
    "eta": (2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0),
    "eps": (0.0, 0.1, 0.2, 0.3, 0.4, 0.5),
    "m": (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0),
}


@dataclass(frozen=True)
class ScenarioConfig:
    channel: ChannelParams = ChannelParams(eta=4.0, eps=0.1, r0=1.0)
    game: GameParams = GameParams(m=1.0, mu=1.0, tau=1.0)
    integrator: IntegratorConfig = IntegratorConfig()
    n: int = 36
    rho: float = 4.0
    seed: int = 0
    coop_threshold: float = 1e-6
    replicate_count: int = 5
    domain: Literal["square", "torus"] = "square"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be at least 2, got {self.n}")
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if not self.coop_threshold >= 0:
            raise ValueError(f"coop_threshold must be non-negative, got {self.coop_threshold}")
        if self.replicate_count < 1:
            raise ValueError(f"replicate_count must be at least 1, got {self.replicate_count}")
        Domain(self.domain, 1.0)

    def with_param(self, name: str, value: float) -> "ScenarioConfig":
        """Copy with one sweepable parameter replaced."""
        if name in ("mu", "tau", "m"):
            return dataclasses.replace(self, game=dataclasses.replace(self.game, **{name: value}))
        if name in ("eta", "eps", "r0"):
            return dataclasses.replace(self, channel=dataclasses.replace(self.channel, **{name: value}))
        if name == "rho":
            return dataclasses.replace(self, rho=value)
        raise KeyError(f"unknown sweep parameter {name!r}; expected one of {SWEEP_PARAMS}")

    def get_param(self, name: str) -> float:
        if name in ("mu", "tau", "m"):
            return getattr(self.game, name)
        if name in ("eta", "eps", "r0"):
            return getattr(self.channel, name)
        if name == "rho":
            return self.rho
        raise KeyError(name)


def _validate_axis(axis) -> tuple[str, tuple[float, ...]]:
    name, values = axis
    if name not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {name!r}; expected one of {SWEEP_PARAMS}")
    values = tuple(float(v) for v in values)
    if not values:
        raise ValueError(f"sweep axis {name!r} has no values")
    d = np.diff(values)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError(f"sweep axis {name!r} values must be strictly monotone")
    return name, values


@dataclass(frozen=True)
class SweepSpec:
    """Grid over one or two parameters.

    ``seed_mode="per_cell"`` gives replicate ``r`` of cell ``c`` the seed
    ``base.seed + c * R + r`` (``R`` replicates); ``"shared"`` reuses
    ``base.seed + r`` in every cell so all cells see the same deployments.
    """

    base: ScenarioConfig
    axis1: tuple[str, tuple[float, ...]]
    axis2: Optional[tuple[str, tuple[float, ...]]] = None
    seed_mode: Literal["per_cell", "shared"] = "per_cell"

    def __post_init__(self):
        object.__setattr__(self, "axis1", _validate_axis(self.axis1))
        if self.axis2 is not None:
            object.__setattr__(self, "axis2", _validate_axis(self.axis2))
            if self.axis2[0] == self.axis1[0]:
                raise ValueError("sweep axes must name different parameters")
        if self.seed_mode not in ("per_cell", "shared"):
            raise ValueError(f"unknown seed_mode {self.seed_mode!r}")

    def cells(self) -> list[tuple[float, Optional[float]]]:
        a2 = self.axis2[1] if self.axis2 else (None,)
        return [(v1, v2) for v1 in self.axis1[1] for v2 in a2]

    def seed_for(self, cell: int, replicate: int) -> int:
        r = self.base.replicate_count
        if self.seed_mode == "shared":
            return self.base.seed + replicate
        return self.base.seed + cell * r + replicate

    def config_for(self, cell_values, seed: int) -> ScenarioConfig:
        v1, v2 = cell_values
        cfg = self.base.with_param(self.axis1[0], v1)
        if self.axis2 is not None:
            cfg = cfg.with_param(self.axis2[0], v2)
        return dataclasses.replace(cfg, seed=seed)


@dataclass
class EquilibriumSummary:
    seed: int
    n: int
    steps: int
    t: float
    converged: bool
    initial_mean_degree: float
    mean_degree: float
    assortativity: AssortativityResult
    total_payoff: float
    potential: float
    max_weight: float
    connectivity_mean_degree: float
    analytic_mean_degree: float
    state: Optional[CooperationState] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "state"}
        d["assortativity"] = self.assortativity.to_dict()
        return d


def build_network(cfg: ScenarioConfig) -> tuple[Deployment, ConnectivityMatrix]:
    """Deployment drawn with ``cfg.seed`` on a domain of area ``n / rho``, and its H."""
    dom = Domain.for_density(cfg.n, cfg.rho, cfg.domain)
    dep = sample_deployment(cfg.n, dom, cfg.seed)
    return dep, build_connectivity_matrix(dep, cfg.channel)


def run_scenario(cfg: ScenarioConfig, observer=None) -> tuple[TrajectoryRecord, EquilibriumSummary]:
    """Deploy, build H and evolve from ``E(0) = J - I``."""
    _, h = build_network(cfg)
    try:
        state, rec = evolve(None, h, cfg.game, cfg.integrator, observer, cfg.coop_threshold)
    except IntegrationFault as exc:
        raise IntegrationFault(
            f"{exc} (scenario seed={cfg.seed}, n={cfg.n}, rho={cfg.rho}, "
            f"channel={cfg.channel}, game={cfg.game})",
            exc.indices,
            exc.step,
        ) from exc
    g = cooperation_graph(state, cfg.coop_threshold)
    summary = EquilibriumSummary(
        seed=cfg.seed,
        n=cfg.n,
        steps=rec.steps_taken,
        t=state.t,
        converged=rec.converged,
        initial_mean_degree=rec.coop_mean_degree[0],
        mean_degree=degree_stats(g).mean,
        assortativity=assortativity(g),
        total_payoff=total_payoff(state, h, cfg.game),
        potential=potential(state, h, cfg.game),
        max_weight=float(state.e.max()),
        connectivity_mean_degree=float(h.h.sum()) / cfg.n,
        analytic_mean_degree=analytic_mean_degree(cfg.rho, cfg.channel, guard_correction=False),
        state=state,
    )
    return rec, summary


@dataclass(frozen=True)
class SweepRow:
    axis1: float
    axis2: Optional[float]
    replicate: int
    seed: int
    mean_degree: Optional[float]
    assortativity: Optional[float]
    total_payoff: Optional[float]
    steps: Optional[int]
    converged: bool
    error: Optional[str] = None


SWEEP_HEADER = (
    "axis1",
    "axis2",
    "replicate",
    "seed",
    "mean_degree",
    "assortativity",
    "total_payoff",
    "steps",
    "converged",
    "error",
)


def _run_cell(job) -> SweepRow:
    cfg, v1, v2, rep = job
    try:
        _, s = run_scenario(cfg)
    except IntegrationFault as exc:
        return SweepRow(v1, v2, rep, cfg.seed, None, None, None, exc.step, False, str(exc))
    return SweepRow(
        v1, v2, rep, cfg.seed, s.mean_degree, s.assortativity.value, s.total_payoff, s.steps, s.converged
    )


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    """One row per grid cell per replicate, in grid order (axis1 outer, axis2 inner,
    replicate innermost) regardless of how cells are scheduled."""
    jobs = []
    for c, (v1, v2) in enumerate(spec.cells()):
        for r in range(spec.base.replicate_count):
            jobs.append((spec.config_for((v1, v2), spec.seed_for(c, r)), v1, v2, r))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(j) for j in jobs]


def _fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_sweep_csv(rows: Sequence[SweepRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([_fmt(getattr(r, name)) if name != "error" else (r.error or "") for name in SWEEP_HEADER])


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    write_sweep_csv(rows, buf)
    return buf.getvalue()


def summarize_sweep(rows: Sequence[SweepRow]) -> list[dict]:
    """Per-cell mean and sample standard deviation over replicates."""
    cells: dict[tuple, list[SweepRow]] = {}
    for r in rows:
        cells.setdefault((r.axis1, r.axis2), []).append(r)
    out = []
    for (v1, v2), rs in cells.items():
        deg = [r.mean_degree for r in rs if r.mean_degree is not None]
        ass = [r.assortativity for r in rs if r.assortativity is not None]
        out.append(
            {
                "axis1": v1,
                "axis2": v2,
                "replicates": len(rs),
                "mean_degree_mean": float(np.mean(deg)) if deg else None,
                "mean_degree_sd": float(np.std(deg, ddof=1)) if len(deg) > 1 else None,
                "assortativity_mean": float(np.mean(ass)) if ass else None,
                "assortativity_sd": float(np.std(ass, ddof=1)) if len(ass) > 1 else None,
                "assortativity_defined": len(ass),
                "converged": sum(r.converged for r in rs),
            }
        )
    return out


@dataclass
class TragedyReport:
    passed: bool
    failures: list[str]
    converged: bool
    steps: int
    convergence_tol: float
    first_violating_step: Optional[int]
    max_final_weight: float
    remaining_edges: int
    excluded_pairs: int
    measured_decay_rate: Optional[float]
    slowest_pair_rate: Optional[float]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def tragedy_regression(cfg: ScenarioConfig, force_zero_m: bool = False) -> TragedyReport:
    """Check that without incentive (m = 0) cooperation collapses monotonically.

    Pairs with ``H_ij = 1`` have zero rates and are excluded.  A plain
    ``s**2`` exit can fire while the slowest weight is still ~1e-3, so the run
    uses a tolerance that bounds the residual weights: for ``m = 0`` an unclamped
    weight satisfies ``e_ij <= |delta e_ij| / (2 s a_ij^2)`` with ``a_ij = 1 - H_ij``,
    and ``0.5 * s * a_min^2 * threshold`` keeps every pair sum below the threshold.
    """
    if cfg.game.m != 0:
        if not force_zero_m:
            raise ValueError(f"tragedy regression needs m = 0 (got m={cfg.game.m}); pass force_zero_m to override")
        cfg = cfg.with_param("m", 0.0)
    _, h = build_network(cfg)
    n = cfg.n
    off = ~np.eye(n, dtype=bool)
    active = off & (h.h < 1.0)
    excluded = int(np.sum(off & ~active)) // 2
    failures = []
    if not np.any(active):
        return TragedyReport(False, ["no pair with H < 1"], False, 0, 0.0, None, 0.0, 0, excluded, None, None)
    a_min = float(np.min(1.0 - h.h[active]))
    s = cfg.integrator.s
    tol = min(cfg.integrator.tol, 0.5 * s * a_min * a_min * cfg.coop_threshold)
    icfg = dataclasses.replace(cfg.integrator, convergence_tol=tol)

    times: list[float] = []
    peaks: list[float] = []

    def watch(step, st):
        times.append(st.t)
        peaks.append(float(st.e[active].max()))

    state, rec = evolve(None, h, cfg.game, icfg, watch, cfg.coop_threshold)
    if not rec.converged:
        failures.append(f"did not converge within {icfg.max_steps} steps")
    if rec.first_increase_step is not None:
        failures.append(f"a cooperation weight increased at step {rec.first_increase_step}")
    w = state.e + state.e.T
    remaining = int(np.sum(np.triu(active & (w > cfg.coop_threshold), 1)))
    if remaining:
        failures.append(f"{remaining} cooperation edges remain above threshold {cfg.coop_threshold}")

    rate = None
    pos = [(t, p) for t, p in zip(times, peaks) if p > 0]
    if len(pos) >= 2:
        (t1, p1), (t2, p2) = pos[-2], pos[-1]
        if t2 > t1 and p2 < p1:
            rate = math.log(p1 / p2) / (t2 - t1)
    return TragedyReport(
        passed=not failures,
        failures=failures,
        converged=rec.converged,
        steps=rec.steps_taken,
        convergence_tol=tol,
        first_violating_step=rec.first_increase_step,
        max_final_weight=float(state.e[active].max()),
        remaining_edges=remaining,
        excluded_pairs=excluded,
        measured_decay_rate=rate,
        slowest_pair_rate=2.0 * a_min * a_min,
    )


def fast_decay_plateau(record: TrajectoryRecord, fraction: float = 0.1) -> tuple[float, float]:
    """Level ``(t, mean degree)`` reached when the initial collapse of the cooperation
    degree is over.

    The collapse ends at the first record after the steepest per-record drop whose
    next drop is smaller than ``fraction`` of that steepest drop.
    """
    k = np.asarray(record.coop_mean_degree, dtype=float)
    if len(k) < 3:
        raise ValueError("need at least three records")
    drops = k[:-1] - k[1:]
    peak = int(np.argmax(drops))
    if drops[peak] <= 0:
        raise ValueError("mean degree never decreases")
    for idx in range(peak + 1, len(drops)):
        if drops[idx] < fraction * drops[peak]:
            return record.times[idx], float(k[idx])
    return record.times[-1], float(k[-1])
