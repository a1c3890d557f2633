"""Direct sampling, random-walk Metropolis and Metropolis-coupled MCMC.

All samplers draw from a caller-supplied ``numpy.random.Generator``; the order
of draws is fixed so a run is reproducible bit for bit. Per iteration of the
coupled sampler, chains 0..M-1 each draw their proposal then their acceptance
uniform, and only then does the swap phase draw. With one chain the swap
phase draws nothing, so ``run_mc3`` with M=1 reproduces ``run_rwm`` exactly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import (
    GaussianMixture,
    TargetDistribution,
    _log_density,
    as_point,
    mode_of,
    sample_direct,
)


@dataclass(frozen=True)
class ProposalSpec:
    """Isotropic Gaussian step of scale ``sigma``, or a truncated power-law jump."""

    kind: str = "gaussian"
    sigma: float = 1.0
    levy_mu: float = 2.0
    levy_lmin: float = 0.1
    levy_lmax: float = 36.0

    def __post_init__(self):
        if self.kind == "gaussian":
            if not self.sigma > 0:
                raise ValueError("proposal sigma must be positive")
        elif self.kind == "levy":
            if not 1 < self.levy_mu <= 3:
                raise ValueError("levy_mu must lie in (1, 3]")
            if not 0 < self.levy_lmin < self.levy_lmax:
                raise ValueError("need 0 < levy_lmin < levy_lmax")
        else:
            raise ValueError(f"unknown proposal kind {self.kind!r}")

    @classmethod
    def gaussian(cls, sigma: float = 1.0) -> "ProposalSpec":
        return cls("gaussian", sigma=sigma)

    @classmethod
    def levy(cls, mu: float, lmin: float, lmax: float) -> "ProposalSpec":
        return cls("levy", levy_mu=mu, levy_lmin=lmin, levy_lmax=lmax)


@dataclass(frozen=True)
class TemperatureLadder:
    temps: tuple

    def __post_init__(self):
        t = tuple(float(v) for v in self.temps)
        if not t or t[0] != 1.0:
            raise ValueError("ladder must start at T=1")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("ladder temperatures must be strictly increasing")
        object.__setattr__(self, "temps", t)

    def __len__(self):
        return len(self.temps)

    @classmethod
    def geometric(cls, n_chains: int, ratio: float = 2.0) -> "TemperatureLadder":
        if n_chains < 1:
            raise ValueError("need at least one chain")
        if n_chains > 1 and not ratio > 1:
            raise ValueError("geometric ratio must exceed 1")
        return cls(tuple(ratio**i for i in range(n_chains)))


RANDOM_PAIRS = "random_pairs"
NEIGHBORS_ONLY = "neighbors_only"
SWAP_POLICIES = (RANDOM_PAIRS, NEIGHBORS_ONLY)


@dataclass
class Trace:
    """Sampler output.

    ``positions`` is (L, d) and holds the cold chain. ``accepted`` and
    ``swapped`` are (L, M) per-step flags (row 0 is the start and all False).
    ``all_chains`` is (L, M, d) when requested.
    """

    positions: np.ndarray
    accept_count: np.ndarray
    swap_attempts: int = 0
    swap_accepts: int = 0
    accepted: np.ndarray | None = None
    swapped: np.ndarray | None = None
    all_chains: np.ndarray | None = None
    temps: tuple = (1.0,)
    algorithm: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.positions.shape[0]

    @property
    def n_chains(self) -> int:
        return len(self.accept_count)

    @property
    def acceptance_rate(self) -> np.ndarray:
        steps = max(len(self) - 1, 1)
        return self.accept_count / steps

    @property
    def swap_rate(self) -> float:
        return self.swap_accepts / self.swap_attempts if self.swap_attempts else 0.0


def _check_length(L: int) -> int:
    if int(L) != L or L < 1:
        raise ValueError(f"sample count must be a positive integer, got {L}")
    return int(L)


def run_ds(target: TargetDistribution, L: int, rng: np.random.Generator) -> Trace:
    L = _check_length(L)
    pos = np.asarray(sample_direct(target, rng, size=L))
    return Trace(
        positions=pos,
        accept_count=np.zeros(1, dtype=int),
        accepted=np.zeros((L, 1), dtype=bool),
        swapped=np.zeros((L, 1), dtype=bool),
        algorithm="DS",
    )


def levy_proposal(x, levy_mu: float, levy_lmin: float, levy_lmax: float, rng: np.random.Generator) -> np.ndarray:
    """Jump from ``x`` by a truncated power-law length in a uniform direction.

    The length has density proportional to l**-mu on [lmin, lmax] and is drawn
    by inverting its CDF; the direction is a normalised Gaussian vector.
    """
    if not 1 < levy_mu <= 3 or not 0 < levy_lmin < levy_lmax:
        raise ValueError("invalid Levy proposal parameters")
    x = np.asarray(x, dtype=float)
    length = truncated_power_law_inverse_cdf(rng.random(), levy_mu, levy_lmin, levy_lmax)
    direction = rng.standard_normal(x.shape[0])
    return x + length * direction / np.linalg.norm(direction)


def truncated_power_law_inverse_cdf(u, mu: float, lmin: float, lmax: float):
    a = 1.0 - mu
    lo, hi = lmin**a, lmax**a
    return (lo + np.asarray(u) * (hi - lo)) ** (1.0 / a)


def _propose(x: np.ndarray, proposal: ProposalSpec, rng: np.random.Generator) -> np.ndarray:
    if proposal.kind == "gaussian":
        return x + proposal.sigma * rng.standard_normal(x.shape[0])
    return levy_proposal(x, proposal.levy_mu, proposal.levy_lmin, proposal.levy_lmax, rng)


def _metropolis_step(target, x, logp, proposal, T, rng):
    # returns (new_x, new_logp, accepted); consumes proposal draws then one uniform
    xp = _propose(x, proposal, rng)
    u = rng.random()
    lpp = _log_density(target, xp)
    if u < math.exp(min(0.0, (lpp - logp) / T)):
        return xp, lpp, True
    return x, logp, False


def metropolis_acceptance(logp_current: float, logp_proposed: float, T: float = 1.0) -> float:
    """min{1, [pi(x')/pi(x)]^(1/T)} evaluated in log space."""
    return math.exp(min(0.0, (logp_proposed - logp_current) / T))


def rwm_step(target: TargetDistribution, x, proposal: ProposalSpec, T: float, rng: np.random.Generator):
    """One Metropolis update at temperature ``T``; returns (point, accepted)."""
    if not T >= 1:
        raise ValueError("temperature must be >= 1")
    x = as_point(x, target.dim)
    new_x, _, acc = _metropolis_step(target, x, _log_density(target, x), proposal, T, rng)
    return new_x, acc


def swap_acceptance(target: TargetDistribution, xi, xj, Ti: float, Tj: float) -> float:
    if not (Ti >= 1 and Tj >= 1):
        raise ValueError("temperatures must be >= 1")
    li = _log_density(target, as_point(xi, target.dim))
    lj = _log_density(target, as_point(xj, target.dim))
    return _swap_prob(li, lj, Ti, Tj)


def _swap_prob(li: float, lj: float, Ti: float, Tj: float) -> float:
    if Ti == Tj:
        return 1.0
    e = (1.0 / Ti - 1.0 / Tj) * (lj - li)
    if e != e:  # both log-densities -inf
        return 1.0
    return math.exp(min(0.0, e))


def initial_point(target: TargetDistribution, how="mode") -> np.ndarray:
    """Starting state: ``"mode"`` (mode nearest the origin for mixtures), ``"origin"`` or explicit coordinates."""
    if isinstance(how, str):
        if how == "origin":
            return np.zeros(target.dim)
        if how != "mode":
            raise ValueError(f"unknown initialisation {how!r}")
        if isinstance(target, GaussianMixture):
            return target.means[int(np.argmin((target.means**2).sum(axis=1)))].copy()
        return mode_of(target)
    return as_point(how, target.dim).copy()


def run_rwm(target: TargetDistribution, L: int, x0, proposal: ProposalSpec, rng: np.random.Generator) -> Trace:
    L = _check_length(L)
    x = as_point(x0, target.dim).copy()
    logp = _log_density(target, x)
    pos = np.empty((L, target.dim))
    pos[0] = x
    accepted = np.zeros((L, 1), dtype=bool)
    for t in range(1, L):
        x, logp, acc = _metropolis_step(target, x, logp, proposal, 1.0, rng)
        pos[t] = x
        accepted[t, 0] = acc
    return Trace(
        positions=pos,
        accept_count=accepted.sum(axis=0),
        accepted=accepted,
        swapped=np.zeros((L, 1), dtype=bool),
        algorithm="RwM" if proposal.kind == "gaussian" else "RwM-Levy",
    )


def _swap_pairs(M: int, policy: str, rng: np.random.Generator):
    if policy == RANDOM_PAIRS:
        # floor(M/2) disjoint pairs from a shuffled chain list
        perm = rng.permutation(M)
        return [(int(perm[2 * k]), int(perm[2 * k + 1])) for k in range(M // 2)]
    # adjacent pairs, alternating even/odd offset so every neighbour link gets used
    offset = int(rng.integers(2)) if M > 2 else 0
    return [(i, i + 1) for i in range(offset, M - 1, 2)]


def run_mc3(
    target: TargetDistribution,
    L: int,
    M: int,
    ladder: TemperatureLadder,
    proposal: ProposalSpec,
    policy: str,
    x0,
    rng: np.random.Generator,
    keep_all_chains: bool = False,
) -> Trace:
    """Metropolis-coupled MCMC; ``positions`` records the T=1 chain after each swap phase."""
    L = _check_length(L)
    if M < 1:
        raise ValueError("need at least one chain")
    if len(ladder) != M:
        raise ValueError(f"ladder has {len(ladder)} temperatures but M={M}")
    if policy not in SWAP_POLICIES:
        raise ValueError(f"unknown swap policy {policy!r}")
    temps = ladder.temps
    x0 = as_point(x0, target.dim)
    xs = [x0.copy() for _ in range(M)]
    lp0 = _log_density(target, x0)
    lps = [lp0] * M
    pos = np.empty((L, target.dim))
    pos[0] = x0
    chains = np.empty((L, M, target.dim)) if keep_all_chains else None
    if chains is not None:
        chains[0] = x0
    accepted = np.zeros((L, M), dtype=bool)
    swapped = np.zeros((L, M), dtype=bool)
    attempts = accepts = 0
    for t in range(1, L):
        for m in range(M):
            xs[m], lps[m], accepted[t, m] = _metropolis_step(target, xs[m], lps[m], proposal, temps[m], rng)
        if M > 1:
            for i, j in _swap_pairs(M, policy, rng):
                u = rng.random()
                attempts += 1
                if u < _swap_prob(lps[i], lps[j], temps[i], temps[j]):
                    xs[i], xs[j] = xs[j], xs[i]
                    lps[i], lps[j] = lps[j], lps[i]
                    swapped[t, i] = swapped[t, j] = True
                    accepts += 1
        pos[t] = xs[0]
        if chains is not None:
            chains[t] = xs
    return Trace(
        positions=pos,
        accept_count=accepted.sum(axis=0),
        swap_attempts=attempts,
        swap_accepts=accepts,
        accepted=accepted,
        swapped=swapped,
        all_chains=chains,
        temps=temps,
        algorithm="MC3",
    )


def write_trace_csv(trace: Trace, path, full_chains: bool = False) -> None:
    """Write ``t,chain,dim0,...,accepted,swapped`` rows; cold chain only unless ``full_chains``."""
    L, d = trace.positions.shape
    if full_chains and trace.all_chains is None and trace.n_chains > 1:
        raise ValueError("trace was run without keep_all_chains")
    chains = range(trace.n_chains) if full_chains else range(1)
    acc = trace.accepted if trace.accepted is not None else np.zeros((L, trace.n_chains), dtype=bool)
    swp = trace.swapped if trace.swapped is not None else np.zeros((L, trace.n_chains), dtype=bool)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "chain"] + [f"dim{k}" for k in range(d)] + ["accepted", "swapped"])
        for t in range(L):
            for c in chains:
                p = trace.positions[t] if c == 0 else trace.all_chains[t, c]
                w.writerow([t, c, *(repr(float(v)) for v in p), int(acc[t, c]), int(swp[t, c])])


def read_trace_csv(path, chain: int = 0) -> np.ndarray:
    """Positions of one chain from a trace CSV as an (L, d) array."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty trace")
    dims = sorted((k for k in rows[0] if k.startswith("dim")), key=lambda k: int(k[3:]))
    sel = [r for r in rows if int(r["chain"]) == chain]
    return np.array([[float(r[k]) for k in dims] for r in sel])
