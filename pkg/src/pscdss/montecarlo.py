"""Stochastic oracles: Poisson points on spherical caps, SINR realisations,
empirical outage and empirical consensus success.

All estimators split their trials into fixed-size blocks. Each block draws
from its own counter-based Philox stream keyed by (seed, stream id, block
index), so results do not depend on how blocks are scheduled over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analytics.params import ChannelParams, Direction, GeometryParams, LinkBudget

BLOCK_TRIALS = 8192

# stream ids keep estimators that share a seed statistically independent
STREAM_CAP = 1
STREAM_OUTAGE = 2
STREAM_PS = 3
STREAM_E2E = 4


def substream(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream), int(block)])
    return np.random.Generator(np.random.Philox(ss))


def _blocks(trials: int) -> list[tuple[int, int]]:
    return [(b, min(BLOCK_TRIALS, trials - b * BLOCK_TRIALS))
            for b in range(math.ceil(trials / BLOCK_TRIALS))]


def _run_blocks(fn: Callable[[np.random.Generator, int], np.ndarray], seed: int, stream: int,
                trials: int, n_jobs: int = 1) -> np.ndarray:
    """Sum per-block count vectors; ``fn(rng, n)`` returns counts for n trials."""
    jobs = _blocks(trials)

    def one(job):
        block, n = job
        return np.asarray(fn(substream(seed, stream, block), n), dtype=np.int64)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(one, jobs))
    else:
        parts = [one(j) for j in jobs]
    return np.sum(parts, axis=0)


def binomial_stderr(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


# ------------------------------------------------------------------ cap sampling

@dataclass
class CapSample:
    points: np.ndarray  # (k, 3) positions on the transmitter sphere, meters
    receiver: np.ndarray  # (3,)
    nearest: int | None  # index into points, None when the cap is empty

    @property
    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.points - self.receiver, axis=1)


def _cap_z_range(geom: GeometryParams) -> tuple[float, float]:
    rt, rr = geom.tx_radius, geom.rx_radius
    cos_max = (rt * rt + rr * rr - geom.d_max**2) / (2.0 * rt * rr)
    return rt * cos_max, rt


def _cap_distances(geom: GeometryParams, z: np.ndarray) -> np.ndarray:
    # receiver sits on the cap axis at height rx_radius
    rt, rr = geom.tx_radius, geom.rx_radius
    return np.sqrt(np.maximum(rt * rt + rr * rr - 2.0 * rr * z, 0.0))


def sample_cap_points(geom: GeometryParams, rng: np.random.Generator) -> CapSample:
    """One SPPP realisation restricted to the receiver's visible cap.

    Uniform positions follow from the hat-box theorem: axial height and
    azimuth are independent and uniform.
    """
    count = rng.poisson(geom.mean_visible())
    z_lo, z_hi = _cap_z_range(geom)
    z = rng.uniform(z_lo, z_hi, size=count)
    phi = rng.uniform(0.0, 2.0 * math.pi, size=count)
    rho = np.sqrt(np.maximum(geom.tx_radius**2 - z * z, 0.0))
    pts = np.column_stack((rho * np.cos(phi), rho * np.sin(phi), z))
    receiver = np.array([0.0, 0.0, geom.rx_radius])
    nearest = int(np.argmin(np.linalg.norm(pts - receiver, axis=1))) if count else None
    return CapSample(points=pts, receiver=receiver, nearest=nearest)


def sample_nearest_distances(geom: GeometryParams, n: int, rng: np.random.Generator):
    """Nearest-transmitter distances of ``n`` independent caps (NaN when empty)."""
    counts = rng.poisson(geom.mean_visible(), size=n)
    total = int(counts.sum())
    z_lo, z_hi = _cap_z_range(geom)
    d = _cap_distances(geom, rng.uniform(z_lo, z_hi, size=total))
    out = np.full(n, np.nan)
    nonempty = counts > 0
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    if total:
        out[nonempty] = np.minimum.reduceat(d, starts[nonempty])
    return out, counts


# ------------------------------------------------------------------ link outage

def sinr_realizations(geom: GeometryParams, channel: ChannelParams, budget: LinkBudget,
                      n: int, rng: np.random.Generator) -> np.ndarray:
    """SINR of ``n`` independent receivers; NaN marks an empty visible cap."""
    counts = rng.poisson(geom.mean_visible(), size=n)
    total = int(counts.sum())
    z_lo, z_hi = _cap_z_range(geom)
    d = _cap_distances(geom, rng.uniform(z_lo, z_hi, size=total))
    h = rng.gamma(channel.alpha, channel.beta, size=total)
    sinr = np.full(n, np.nan)
    nonempty = counts > 0
    if not total:
        return sinr
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))[nonempty]
    owner = np.repeat(np.arange(n), counts)
    d2 = d * d
    # serving transmitter = nearest one in each cap
    dmin2 = np.minimum.reduceat(d2, starts)
    nearest_of = np.full(n, np.inf)
    nearest_of[nonempty] = dmin2
    is_serving = d2 == nearest_of[owner]
    # guard against exact distance ties: keep only the first match per cap
    first = np.zeros(total, dtype=bool)
    idx = np.flatnonzero(is_serving)
    _, uniq = np.unique(owner[idx], return_index=True)
    first[idx[uniq]] = True
    received = h / d2
    signal = np.zeros(n)
    np.add.at(signal, owner[first], received[first])
    interference = np.zeros(n)
    np.add.at(interference, owner[~first], received[~first])
    sinr[nonempty] = signal[nonempty] / (budget.normalized_noise + budget.gbar * interference[nonempty])
    return sinr


def simulate_link_outage(gamma_thr, geom: GeometryParams, channel: ChannelParams,
                         budget: LinkBudget, trials: int, seed: int = 0, n_jobs: int = 1):
    """Empirical outage ``P(visible and SINR < gamma)`` with binomial standard error.

    ``gamma_thr`` may be a scalar or a sequence of linear thresholds; the same
    realisations serve every threshold.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    gammas = np.atleast_1d(np.asarray(gamma_thr, dtype=float))
    stream = STREAM_OUTAGE * 10 + (0 if geom.direction is Direction.DOWNLINK else 1)

    def block(rng, n):
        sinr = sinr_realizations(geom, channel, budget, n, rng)
        visible = ~np.isnan(sinr)
        return np.array([np.count_nonzero(visible & (sinr < g)) for g in gammas])

    counts = _run_blocks(block, seed, stream, trials, n_jobs)
    p = counts / trials
    err = np.sqrt(p * (1.0 - p) / trials)
    if np.ndim(gamma_thr) == 0:
        return float(p[0]), float(err[0])
    return p, err


def empirical_visibility(geom: GeometryParams, trials: int, seed: int = 0) -> tuple[float, float]:
    def block(rng, n):
        return np.array([np.count_nonzero(rng.poisson(geom.mean_visible(), size=n) > 0)])

    hits = int(_run_blocks(block, seed, STREAM_CAP, trials)[0])
    p = hits / trials
    return p, binomial_stderr(p, trials)


# ----------------------------------------------------------- consensus success

def consensus_success(reg_faulty, ground_faults, sat_faults, sat_count, other_reg_faults,
                      ng: int, m: int):
    """Round success under the two-tier fault rule, vectorised over trials.

    ``ground_faults`` counts faulty non-regulator ground nodes, so the region
    holds ``ng + sat_count`` blockchain participants.
    """
    reg_faulty = np.asarray(reg_faulty, dtype=np.int64)
    intra_faults = reg_faulty + ground_faults + sat_faults
    tolerated = (ng + np.asarray(sat_count)) // 3
    relay = np.asarray(sat_faults) < np.asarray(sat_count)
    inter_ok = reg_faulty + other_reg_faults <= m // 2
    return (intra_faults <= tolerated) & relay & inter_ok


def estimate_ps_empirical(pf_g: float, pf_s: float, m: int, ng: int, ns: int,
                          trials: int, seed: int = 0, n_jobs: int = 1) -> tuple[float, float]:
    """Empirical probability that a round commits in both tiers.

    ``seed`` fixes the node-level uniforms, so sweeping one probability with a
    fixed seed gives common random numbers across the sweep.
    """
    for p in (pf_g, pf_s):
        if not 0.0 <= p <= 1.0:
            raise ValueError("fault probabilities must lie in [0, 1]")
    if trials < 1:
        raise ValueError("trials must be >= 1")

    # per-node uniforms rather than binomial counts: with a fixed seed the
    # estimate is then monotone in both fault probabilities
    def block(rng, n):
        u_ground = rng.random((n, ng + m - 1))
        u_sat = rng.random((n, ns))
        reg = u_ground[:, 0] < pf_g
        ground = np.count_nonzero(u_ground[:, 1:ng] < pf_g, axis=1)
        others = np.count_nonzero(u_ground[:, ng:] < pf_g, axis=1)
        sats = np.count_nonzero(u_sat < pf_s, axis=1)
        ok = consensus_success(reg, ground, sats, ns, others, ng, m)
        return np.array([np.count_nonzero(ok)])

    hits = int(_run_blocks(block, seed, STREAM_PS, trials, n_jobs)[0])
    p = hits / trials
    return p, binomial_stderr(p, trials)


def _node_faults(geom: GeometryParams, channel: ChannelParams, budget: LinkBudget,
                 gamma_thr: float, backup_outage: float, n: int, rng) -> np.ndarray:
    sinr = sinr_realizations(geom, channel, budget, n, rng)
    link_out = ~np.isnan(sinr) & (sinr < gamma_thr)
    backup_out = rng.random(n) < backup_outage
    return link_out & backup_out


def estimate_ps_end_to_end(gamma_dl: float, gamma_ul: float, geom: GeometryParams,
                           channel: ChannelParams, dl_budget: LinkBudget, ul_budget: LinkBudget,
                           pout_wl: float, pout_isl: float, m: int, ng: int, ns: int | None,
                           trials: int, seed: int = 0, n_jobs: int = 1) -> tuple[float, float]:
    """Consensus success with every node's fault drawn from its own link realisation.

    Ground nodes fail when their downlink is in outage and the wired backup
    fails; satellites when their uplink is in outage and the ISL backup fails.
    ``ns=None`` selects the dynamic topology: the number of satellites per trial
    is the Poisson count of satellites visible from the region.
    """
    dl = geom.with_direction(Direction.DOWNLINK)
    ul = geom.with_direction(Direction.UPLINK)
    mean_ns = dl.mean_visible()

    def block(rng, n):
        if ns is None:
            sat_count = rng.poisson(mean_ns, size=n)
        else:
            sat_count = np.full(n, ns, dtype=np.int64)
        g = _node_faults(dl, channel, dl_budget, gamma_dl, pout_wl, n * (ng + m - 1), rng)
        g = g.reshape(n, ng + m - 1)
        total_sats = int(sat_count.sum())
        s = _node_faults(ul, channel, ul_budget, gamma_ul, pout_isl, total_sats, rng)
        sat_faults = np.zeros(n, dtype=np.int64)
        np.add.at(sat_faults, np.repeat(np.arange(n), sat_count), s.astype(np.int64))
        ok = consensus_success(g[:, 0], g[:, 1:ng].sum(axis=1), sat_faults, sat_count,
                               g[:, ng:].sum(axis=1), ng, m)
        return np.array([np.count_nonzero(ok)])

    hits = int(_run_blocks(block, seed, STREAM_E2E, trials, n_jobs)[0])
    p = hits / trials
    return p, binomial_stderr(p, trials)
