"""Node deployments, the Rayleigh-fading connection function and analytic connectivity.

Random numbers come from numpy's ``Generator`` backed by the PCG64 bit generator,
seeded directly with the user-supplied non-negative integer, so identical seeds
give identical deployments and edge realizations on every platform numpy supports.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import special, stats

__all__ = [
    "Domain",
    "Deployment",
    "ChannelParams",
    "ConnectivityMatrix",
    "BinaryGraph",
    "SingularGainError",
    "CoincidentNodesWarning",
    "make_rng",
    "derive_seed",
    "sample_deployment",
    "path_loss",
    "pair_connectivity",
    "build_connectivity_matrix",
    "realize_edges",
    "analytic_mean_degree",
    "local_connection_probability",
    "degree_pmf",
]

RNG_ALGORITHM = "PCG64"


class SingularGainError(ZeroDivisionError):
    """Path loss is infinite: zero distance with no guard zone."""


class CoincidentNodesWarning(UserWarning):
    pass


def make_rng(seed: int) -> np.random.Generator:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {seed!r}")
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must lie in [0, 2**64), got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(root: int, stream: int) -> int:
    """64-bit sub-seed for an independent stream: the first two 32-bit words of
    ``SeedSequence(root, spawn_key=(stream,))``, low word first."""
    make_rng(root)  # validates root
    lo, hi = np.random.SeedSequence(int(root), spawn_key=(int(stream),)).generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


@dataclass(frozen=True)
class Domain:
    """Square region ``[0, side]^2``, optionally with periodic (torus) boundaries."""

    shape: Literal["square", "torus"] = "square"
    side: float = 1.0

    def __post_init__(self):
        if self.shape not in ("square", "torus"):
            raise ValueError(f"unknown domain shape {self.shape!r}")
        if not (self.side > 0 and math.isfinite(self.side)):
            raise ValueError(f"domain side must be positive and finite, got {self.side}")

    @classmethod
    def for_density(cls, n: int, rho: float, shape: str = "square") -> "Domain":
        """Domain of area ``n / rho``."""
        if rho <= 0:
            raise ValueError(f"density must be positive, got {rho}")
        return cls(shape, math.sqrt(n / rho))

    @property
    def area(self) -> float:
        return self.side * self.side

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return np.all((p >= 0.0) & (p <= self.side), axis=-1)

    def displacement(self, a, b) -> np.ndarray:
        """Coordinate differences ``a - b`` under this domain's metric (broadcasting)."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.shape == "torus":
            d = np.abs(d)
            d = np.minimum(d, self.side - d)
        return d

    def distance(self, a, b) -> np.ndarray:
        d = self.displacement(a, b)
        return np.sqrt(np.sum(d * d, axis=-1))

    def to_dict(self) -> dict:
        return {"shape": self.shape, "side": self.side}

    @classmethod
    def from_dict(cls, d: dict) -> "Domain":
        return cls(d["shape"], float(d["side"]))


@dataclass(frozen=True)
class Deployment:
    domain: Domain
    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError(f"positions must have shape (N, 2), got {pos.shape}")
        if pos.shape[0] < 2:
            raise ValueError("a deployment needs at least 2 nodes")
        if not np.all(self.domain.contains(pos)):
            raise ValueError("every position must lie inside the domain")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def density(self) -> float:
        return self.n / self.domain.area

    def distance_matrix(self, block: int = 512) -> np.ndarray:
        p = self.positions
        d = np.empty((self.n, self.n))
        for start in range(0, self.n, block):
            stop = min(start + block, self.n)
            d[start:stop] = self.domain.distance(p[start:stop, None, :], p[None, :, :])
        # exact symmetry regardless of rounding in the metric
        iu = np.triu_indices(self.n, 1)
        d.T[iu] = d[iu]
        np.fill_diagonal(d, 0.0)
        return d

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "domain": self.domain.to_dict(),
            "positions": self.positions.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Deployment":
        dep = cls(Domain.from_dict(d["domain"]), np.asarray(d["positions"], dtype=float))
        if int(d["n"]) != dep.n:
            raise ValueError(f"n={d['n']} does not match {dep.n} positions")
        return dep


@dataclass(frozen=True)
class ChannelParams:
    """Path-loss exponent ``eta``, guard zone ``eps`` and connection length ``r0``.

    ``eta = inf`` selects the hard-disk (unit-disk) limit.  The outage threshold
    times the noise scale is never stored; it is always ``r0 ** -eta``.
    """

    eta: float = 4.0
    eps: float = 0.1
    r0: float = 1.0

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be non-negative and finite, got {self.eps}")
        if not (self.r0 > 0 and math.isfinite(self.r0)):
            raise ValueError(f"r0 must be positive and finite, got {self.r0}")

    @property
    def hard_disk(self) -> bool:
        return math.isinf(self.eta)

    @property
    def threshold_scale(self) -> float:
        """The composite outage threshold, ``r0 ** -eta``."""
        return self.r0 ** -self.eta


@dataclass(frozen=True)
class ConnectivityMatrix:
    h: np.ndarray = field(repr=False)

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError(f"connectivity matrix must be square, got {h.shape}")
        if not np.array_equal(h, h.T):
            raise ValueError("connectivity matrix must be symmetric")
        if np.any(np.diag(h) != 0):
            raise ValueError("connectivity matrix must have a zero diagonal")
        if np.any(~np.isfinite(h)) or np.any(h < 0) or np.any(h > 1):
            raise ValueError("connectivity entries must lie in [0, 1]")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @property
    def n(self) -> int:
        return self.h.shape[0]

    def to_dict(self) -> dict:
        return {"n": self.n, "h": self.h.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ConnectivityMatrix":
        cm = cls(np.asarray(d["h"], dtype=float))
        if int(d["n"]) != cm.n:
            raise ValueError(f"n={d['n']} does not match matrix of size {cm.n}")
        return cm


@dataclass(frozen=True)
class BinaryGraph:
    """Simple undirected graph stored as a sorted ``(k, 2)`` array of pairs ``i < j``."""

    n: int
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        if e.size:
            if e.min() < 0 or e.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loops are not allowed")
        e = np.sort(e, axis=1)
        e = e[np.lexsort((e[:, 1], e[:, 0]))]
        if len(e) > 1 and np.any(np.all(e[1:] == e[:-1], axis=1)):
            raise ValueError("multi-edges are not allowed")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @classmethod
    def from_adjacency(cls, adj) -> "BinaryGraph":
        a = np.asarray(adj, dtype=bool)
        i, j = np.nonzero(np.triu(a | a.T, 1))
        return cls(a.shape[0], np.column_stack([i, j]))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        a[self.edges[:, 0], self.edges[:, 1]] = True
        a[self.edges[:, 1], self.edges[:, 0]] = True
        return a

    def to_dict(self) -> dict:
        return {"n": self.n, "edges": self.edges.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BinaryGraph":
        return cls(int(d["n"]), np.asarray(d["edges"], dtype=np.int64))


def sample_deployment(n: int, domain: Domain, seed: int) -> Deployment:
    """Place ``n`` nodes independently and uniformly over ``domain`` (binomial point process)."""
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got n={n}")
    rng = make_rng(seed)
    pos = rng.random((n, 2)) * domain.side
    return Deployment(domain, pos)


def path_loss(r, params: ChannelParams):
    """Deterministic gain ``1 / (eps + r**eta)``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be non-negative")
    denom = params.eps + r**params.eta
    if np.any(denom == 0):
        raise SingularGainError("zero distance with eps=0 gives an infinite gain")
    out = 1.0 / denom
    return float(out) if out.ndim == 0 else out


def pair_connectivity(r, params: ChannelParams):
    """Probability that a Rayleigh-faded link over distance ``r`` is not in outage.

    Soft mode evaluates ``exp(-(eps + r**eta) / r0**eta)``; coincident nodes with
    ``eps = 0`` therefore get probability 1.  Hard-disk mode is ``1`` for
    ``r <= r0`` and ``0`` beyond.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be non-negative")
    if params.hard_disk:
        out = (r <= params.r0).astype(float)
    else:
        # scaled form avoids overflow of r0**eta for large eta
        out = np.exp(-params.eps * params.r0 ** -params.eta - (r / params.r0) ** params.eta)
    return float(out) if out.ndim == 0 else out


def build_connectivity_matrix(dep: Deployment, params: ChannelParams) -> ConnectivityMatrix:
    d = dep.distance_matrix()
    if params.eps == 0 and not params.hard_disk:
        off = ~np.eye(dep.n, dtype=bool)
        if np.any(d[off] == 0):
            warnings.warn(
                "coincident nodes with eps=0: connection probability set to 1",
                CoincidentNodesWarning,
                stacklevel=2,
            )
    h = pair_connectivity(d, params)
    np.fill_diagonal(h, 0.0)
    return ConnectivityMatrix(h)


def realize_edges(h: ConnectivityMatrix, seed: int) -> BinaryGraph:
    """Draw one uniform ``zeta`` per unordered pair (row-major over ``i < j``) and
    keep the edge iff ``zeta <= H_ij``; pairs with ``H_ij = 0`` never connect."""
    iu, ju = np.triu_indices(h.n, 1)
    p = h.h[iu, ju]
    zeta = make_rng(seed).random(p.size)
    keep = (zeta <= p) & (p > 0)
    return BinaryGraph(h.n, np.column_stack([iu[keep], ju[keep]]))


def analytic_mean_degree(rho: float, params: ChannelParams, guard_correction: bool = True) -> float:
    """Mean one-hop degree of a borderless network of density ``rho``.

    With ``guard_correction`` the factor ``exp(-eps / r0**eta)`` is applied; switch it
    off to get the guard-free expression ``2 rho pi r0^2 Gamma(2/eta) / eta``.
    """
    if rho <= 0:
        raise ValueError(f"density must be positive, got {rho}")
    disk = rho * math.pi * params.r0**2
    if params.hard_disk:
        return disk
    lam = 2.0 * disk * special.gamma(2.0 / params.eta) / params.eta
    if guard_correction:
        lam *= math.exp(-params.eps * params.r0 ** -params.eta)
    return float(lam)


def local_connection_probability(
    i: int, dep: Deployment, params: ChannelParams, resolution: int = 128
) -> float:
    """Average of ``H(r_ij)`` over a uniformly placed partner, by midpoint-rule quadrature."""
    if resolution < 8:
        raise ValueError(f"resolution must be at least 8, got {resolution}")
    if not 0 <= i < dep.n:
        raise IndexError(f"node index {i} out of range for {dep.n} nodes")
    side = dep.domain.side
    g = (np.arange(resolution) + 0.5) * (side / resolution)
    x, y = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([x.ravel(), y.ravel()], axis=1)
    r = dep.domain.distance(pts, dep.positions[i])
    val = float(np.mean(pair_connectivity(r, params)))
    return min(max(val, 0.0), 1.0)


def degree_pmf(h_i: float, n: int, poisson: bool = False) -> np.ndarray:
    """Probability of each degree ``k = 0 .. n-1`` for a node with link probability ``h_i``.

    The exact law is Binomial(n - 1, h_i); ``poisson=True`` returns the Poisson
    approximation with rate ``(n - 1) h_i`` on the same support (not renormalized).
    """
    if not 0.0 <= h_i <= 1.0:
        raise ValueError(f"h_i must lie in [0, 1], got {h_i}")
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    k = np.arange(n)
    if poisson:
        return stats.poisson.pmf(k, (n - 1) * h_i)
    return stats.binom.pmf(k, n - 1, h_i)
