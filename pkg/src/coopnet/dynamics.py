"""Snowdrift cooperation game on a weighted connectivity graph.

Node ``i`` puts effort ``e_ij >= 0`` into its link towards ``j``.  Its payoff is

    P_i = sqrt(sum_j H_ji e_ji) - (sum_j (1 - H_ij) e_ij)^2 + m * sum_j H_ij f(e_ij + e_ji)

and every weight follows the gradient of its owner's payoff, integrated with
a clamped explicit Euler scheme.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernel
from .metrics import DEFAULT_COOP_THRESHOLD, cooperation_observables
from .model import ConnectivityMatrix

__all__ = [
    "GameParams",
    "CooperationState",
    "IntegratorConfig",
    "TrajectoryRecord",
    "IntegrationFault",
    "sigmoid_benefit",
    "sigmoid_benefit_derivative",
    "node_benefit",
    "node_cost",
    "node_mutual_benefit",
    "node_payoff",
    "rate_matrix",
    "euler_step",
    "evolve",
    "potential",
    "total_payoff",
]


class IntegrationFault(ArithmeticError):
    """A rate became non-finite during integration."""

    def __init__(self, message: str, indices: tuple[int, int], step: int | None = None):
        super().__init__(message)
        self.indices = indices
        self.step = step


@dataclass(frozen=True)
class GameParams:
    """Incentive level ``m`` and sigmoid inflection ``mu`` / steepness ``tau``."""

    m: float = 1.0
    mu: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if not (self.m >= 0 and math.isfinite(self.m)):
            raise ValueError(f"m must be non-negative and finite, got {self.m}")
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be positive and finite, got {self.mu}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")

    @property
    def b(self) -> float:
        """Normalization that pins ``f(0) = 0`` and ``f(inf) = 1``."""
        return 1.0 / (2.0 + 2.0 * self.mu / math.sqrt(self.tau + self.mu**2))


@dataclass
class CooperationState:
    e: np.ndarray = field(repr=False)
    t: float = 0.0

    def __post_init__(self):
        e = np.array(self.e, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError(f"cooperation matrix must be square, got {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ValueError("cooperation weights must be finite")
        if np.any(e < 0):
            raise ValueError("cooperation weights must be non-negative")
        if np.any(np.diag(e) != 0):
            raise ValueError("self-cooperation must be zero")
        self.e = e
        self.t = float(self.t)

    @classmethod
    def uniform(cls, n: int, level: float = 1.0) -> "CooperationState":
        """Everyone cooperates with everyone at ``level`` (``J - I`` by default)."""
        e = np.full((n, n), float(level))
        np.fill_diagonal(e, 0.0)
        return cls(e)

    @property
    def n(self) -> int:
        return self.e.shape[0]

    def copy(self) -> "CooperationState":
        return CooperationState(self.e.copy(), self.t)

    def to_dict(self) -> dict:
        return {"n": self.n, "t": self.t, "e": self.e.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CooperationState":
        st = cls(np.asarray(d["e"], dtype=float), float(d.get("t", 0.0)))
        if int(d["n"]) != st.n:
            raise ValueError(f"n={d['n']} does not match matrix of size {st.n}")
        return st


@dataclass(frozen=True)
class IntegratorConfig:
    s: float = 1e-4
    max_steps: int = 10_000_000
    convergence_tol: Optional[float] = None
    record_every: int = 100

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError(f"step size s must lie in (0, 1), got {self.s}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be at least 1, got {self.max_steps}")
        if self.convergence_tol is not None and not self.convergence_tol > 0:
            raise ValueError(f"convergence_tol must be positive, got {self.convergence_tol}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be at least 1, got {self.record_every}")

    @property
    def tol(self) -> float:
        """Per-entry change bound; defaults to ``s**2``."""
        return self.s * self.s if self.convergence_tol is None else self.convergence_tol


CSV_HEADER = ("t", "coop_mean_degree", "coop_assortativity", "total_payoff", "potential", "clamp_events")


def _fmt(x: float) -> str:
    return format(x, ".17g")


@dataclass
class TrajectoryRecord:
    times: list[float] = field(default_factory=list)
    coop_mean_degree: list[float] = field(default_factory=list)
    coop_assortativity: list[Optional[float]] = field(default_factory=list)
    total_payoff: list[float] = field(default_factory=list)
    potential: list[float] = field(default_factory=list)
    clamp_events: list[int] = field(default_factory=list)
    converged: bool = False
    steps_taken: int = 0
    first_increase_step: Optional[int] = None

    def __len__(self) -> int:
        return len(self.times)

    def append(self, t, mean_degree, assort, payoff, phi, clamps) -> None:
        self.times.append(float(t))
        self.coop_mean_degree.append(float(mean_degree))
        self.coop_assortativity.append(assort)
        self.total_payoff.append(float(payoff))
        self.potential.append(float(phi))
        self.clamp_events.append(int(clamps))

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in zip(
            self.times,
            self.coop_mean_degree,
            self.coop_assortativity,
            self.total_payoff,
            self.potential,
            self.clamp_events,
        ):
            t, k, r, p, phi, c = row
            w.writerow([_fmt(t), _fmt(k), "NA" if r is None else _fmt(r), _fmt(p), _fmt(phi), c])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    @classmethod
    def read_csv(cls, fh) -> "TrajectoryRecord":
        rec = cls()
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected trajectory header {header}")
        for t, k, r, p, phi, c in reader:
            rec.append(float(t), float(k), None if r == "NA" else float(r), float(p), float(phi), int(c))
        return rec


# -- payoff pieces -----------------------------------------------------------


def sigmoid_benefit(x, gp: GameParams):
    """Mutual-benefit sigmoid ``f``: ``f(0) = 0``, increasing, ``f -> 1`` as ``x -> inf``."""
    x = np.asarray(x, dtype=float)
    b, mu, tau = gp.b, gp.mu, gp.tau
    d = x - mu
    out = 2.0 * b * mu / np.sqrt(tau + mu * mu) + 2.0 * b * d / np.sqrt(tau + d * d)
    return float(out) if out.ndim == 0 else out


def sigmoid_benefit_derivative(x, gp: GameParams):
    x = np.asarray(x, dtype=float)
    d = x - gp.mu
    w = gp.tau + d * d
    out = 2.0 * gp.b * gp.tau / (w * np.sqrt(w))
    return float(out) if out.ndim == 0 else out


def _h(h) -> np.ndarray:
    return h.h if isinstance(h, ConnectivityMatrix) else np.asarray(h, dtype=float)


def _e(state) -> np.ndarray:
    return state.e if isinstance(state, CooperationState) else np.asarray(state, dtype=float)


def _offdiag(n: int, i: int) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    mask[i] = False
    return mask


def node_benefit(state, h, i: int) -> float:
    """Square root of the link-weighted incoming effort; depends only on column ``i``."""
    e, hm = _e(state), _h(h)
    k = _offdiag(e.shape[0], i)
    return math.sqrt(float(np.dot(hm[k, i], e[k, i])))


def _outgoing_cost_effort(e: np.ndarray, hm: np.ndarray, i: int) -> float:
    k = _offdiag(e.shape[0], i)
    return float(np.dot(1.0 - hm[i, k], e[i, k]))


def node_cost(state, h, i: int) -> float:
    return _outgoing_cost_effort(_e(state), _h(h), i) ** 2


def node_mutual_benefit(state, h, i: int, gp: GameParams) -> float:
    e, hm = _e(state), _h(h)
    k = _offdiag(e.shape[0], i)
    return float(np.dot(hm[i, k], sigmoid_benefit(e[i, k] + e[k, i], gp)))


def node_payoff(state, h, i: int, gp: GameParams) -> float:
    return node_benefit(state, h, i) - node_cost(state, h, i) + gp.m * node_mutual_benefit(state, h, i, gp)


def _row_cost_effort(e: np.ndarray, hm: np.ndarray) -> np.ndarray:
    a = 1.0 - hm
    np.fill_diagonal(a, 0.0)
    return np.sum(a * e, axis=1)


def total_payoff(state, h, gp: GameParams) -> float:
    """Sum of all node payoffs (vectorized form of ``node_payoff``)."""
    e, hm = _e(state), _h(h)
    benefit = np.sqrt(np.sum(hm * e, axis=0))
    cost = _row_cost_effort(e, hm) ** 2
    f = sigmoid_benefit(e + e.T, gp)
    np.fill_diagonal(f, 0.0)
    mutual = np.sum(hm * f, axis=1)
    return float(np.sum(benefit - cost + gp.m * mutual))


def rate_matrix(state, h, gp: GameParams) -> np.ndarray:
    """``d e_ij / dt = m H_ij f'(e_ij + e_ji) - 2 (1 - H_ij) S_i`` with ``S_i`` the
    row's cost-weighted outgoing effort, computed once per row."""
    e, hm = _e(state), _h(h)
    s_row = _row_cost_effort(e, hm)
    r = gp.m * hm * sigmoid_benefit_derivative(e + e.T, gp) - 2.0 * (1.0 - hm) * s_row[:, None]
    np.fill_diagonal(r, 0.0)
    return r


def _payoff_and_potential(e: np.ndarray, hm: np.ndarray, gp: GameParams) -> tuple[float, float]:
    f = sigmoid_benefit(e + e.T, gp)
    np.fill_diagonal(f, 0.0)
    hf = hm * f
    row_cost = _row_cost_effort(e, hm) ** 2
    benefit = np.sqrt(np.sum(hm * e, axis=0))
    payoff = float(np.sum(benefit - row_cost + gp.m * np.sum(hf, axis=1)))
    # hf is symmetric, so the upper triangle is half the total
    phi = gp.m * 0.5 * float(np.sum(hf)) - float(np.sum(row_cost))
    return payoff, phi


def potential(state, h, gp: GameParams) -> float:
    """Scalar whose gradient is ``rate_matrix``:
    ``sum_{i<j} m H_ij f(e_ij + e_ji) - sum_i C_i``."""
    e, hm = _e(state), _h(h)
    iu = np.triu_indices(e.shape[0], 1)
    mutual = gp.m * float(np.sum(hm[iu] * sigmoid_benefit(e[iu] + e.T[iu], gp)))
    cost = float(np.sum(_row_cost_effort(e, hm) ** 2))
    return mutual - cost


# -- integration -------------------------------------------------------------


def _raise_fault(e: np.ndarray, i: int, j: int, step: int):
    raise IntegrationFault(
        f"non-finite rate for entry ({i}, {j}) at step {step}", (int(i), int(j)), step
    )


def euler_step(state: CooperationState, h, gp: GameParams, cfg: IntegratorConfig):
    """One synchronous clamped Euler step; returns ``(new_state, clamp_count)``.

    Entries that would turn negative are set to exactly zero and counted; they stay
    live and may grow again on a later step.
    """
    hm = _h(h)
    e = np.array(state.e, dtype=float)
    steps, status, clamps, _, fi, fj, _ = _kernel.run(e, hm, gp.m, gp.mu, gp.tau, gp.b, cfg.s, 1, -1.0)
    if status == _kernel.FAULT:
        _raise_fault(state.e, fi, fj, 1)
    return CooperationState(e, state.t + cfg.s), int(clamps)


Observer = Callable[[int, CooperationState], None]


def evolve(
    state0: Optional[CooperationState],
    h,
    gp: GameParams,
    cfg: IntegratorConfig = IntegratorConfig(),
    observer: Optional[Observer] = None,
    threshold: float = DEFAULT_COOP_THRESHOLD,
) -> tuple[CooperationState, TrajectoryRecord]:
    """Integrate until every entry changes by at most ``cfg.tol`` in one step, or
    until ``cfg.max_steps`` steps have been taken.

    Observables are recorded at step 0, every ``cfg.record_every`` steps and at the
    final step.  ``observer(step, state)`` is called at each of those points.
    Hitting ``max_steps`` is not an error; the record's ``converged`` flag is False.
    """
    hm = _h(h)
    n = hm.shape[0]
    if state0 is None:
        state0 = CooperationState.uniform(n)
    if state0.n != n:
        raise ValueError(f"state has {state0.n} nodes but H has {n}")
    e = np.array(state0.e, dtype=float)
    t0 = state0.t
    rec = TrajectoryRecord()

    def snapshot(step: int, clamps: int) -> None:
        t = t0 + step * cfg.s
        mean_deg, assort = cooperation_observables(e, threshold)
        payoff, phi = _payoff_and_potential(e, hm, gp)
        rec.append(t, mean_deg, assort.value, payoff, phi, clamps)
        if observer is not None:
            observer(step, CooperationState(e.copy(), t))

    snapshot(0, 0)
    step = 0
    converged = False
    while step < cfg.max_steps:
        chunk = min(cfg.record_every - step % cfg.record_every, cfg.max_steps - step)
        backup = e.copy()
        done, status, clamps, first_up, fi, fj, _ = _kernel.run(
            e, hm, gp.m, gp.mu, gp.tau, gp.b, cfg.s, chunk, cfg.tol
        )
        if status == _kernel.FAULT:
            # replay the good steps so the fault carries a consistent state
            e[:] = backup
            if done:
                _kernel.run(e, hm, gp.m, gp.mu, gp.tau, gp.b, cfg.s, done, -1.0)
            _raise_fault(e, fi, fj, step + done + 1)
        if first_up and rec.first_increase_step is None:
            rec.first_increase_step = step + first_up
        step += done
        converged = status == _kernel.CONVERGED
        # every chunk ends on a record stride, at convergence or at max_steps
        snapshot(step, clamps)
        if converged:
            break
    rec.converged = converged
    rec.steps_taken = step
    return CooperationState(e, t0 + step * cfg.s), rec
