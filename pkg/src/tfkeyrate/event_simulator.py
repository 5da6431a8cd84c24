"""Event-level Monte Carlo oracle for the analytic channel and matching model.

Each round draws intensities, phases, classical bits and emitted photon
numbers, propagates the photons through loss to the middle beam splitter,
and applies the exact click statistics of interfering phase-randomized
coherent pulses: arrivals at the two detectors are independent Poisson
variables with means M/2 +- w cos(Theta), realized here by splitting the
total arrived photons binomially.  Emitted photon numbers are kept as tags
so the decoy-state lower bounds can be compared against ground truth.

Determinism: rounds are partitioned into fixed-size shards, each driven by a
counter-based Philox stream keyed by (seed, shard index); the two matching
passes use dedicated streams.  Tallies are therefore bit-exact functions of
(seed, configuration) regardless of thread count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .channel_model import (
    INTENSITY_LABELS,
    LinkGeometry,
    SourceSetting,
    SystemParams,
    observed_statistics,
    single_photon_yields,
    z_basis_counts,
)
from . import keyrate_engine

SHARD_ROUNDS = 1_000_000

# Philox stream ids: shard index for round generation, plus two reserved
# streams for the Z and X matching passes
_Z_MATCH_STREAM = 1 << 62
_X_MATCH_STREAM = (1 << 62) + 1

_MU, _NU, _O, _OHAT = 0, 1, 2, 3
_CODE_TO_LABEL = {_MU: "mu", _NU: "nu", _O: "o", _OHAT: "ohat"}


def _stream(seed: int, stream_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(stream_id)))


@dataclass(frozen=True)
class RoundRecord:
    """One protocol round, for inspection and scalar cross-checks."""

    k_a: float
    k_b: float
    theta_a: float
    theta_b: float
    phi_ab: float
    r_a: int
    r_b: int
    n_a: int
    n_b: int
    outcome: str  # none | L | R | both-discarded

    @property
    def theta(self) -> float:
        return (self.theta_a - self.theta_b + self.phi_ab) % (2.0 * math.pi)


@dataclass
class MonteCarloTally:
    """Merged per-shard event data plus post-matching results.

    Event pools keep one row per successful click so that the matching
    passes can run globally (pairing within shards would bias the pair
    count through per-shard pool-size fluctuations).
    """

    n_rounds: int
    seed: int
    e_d_z: float
    sigma: float
    delta: float
    clicks: dict[tuple[str, str], int]
    # Z pools, in round order: events where the first user sent o / mu
    z_o_bob_mu: np.ndarray
    z_o_nb: np.ndarray
    z_mu_bob_mu: np.ndarray
    z_mu_na: np.ndarray
    z_mu_nb: np.ndarray
    # X events inside the phase slice, in round order
    x_u: np.ndarray
    x_tag10: np.ndarray
    x_tag01: np.ndarray
    # ground-truth yield counters
    o_mu_single_rounds: int
    o_mu_single_clicks: int
    mu_o_single_rounds: int
    mu_o_single_clicks: int
    # filled by the matching passes
    n_z: int | None = None
    m_z: int | None = None
    z_discarded: int | None = None
    s11_z_true: int | None = None
    s0mub_true: int | None = None
    n_x: int | None = None
    x_pairs: int | None = None
    m_x: int | None = None
    s11_x_true_pairs: int | None = None

    def summary(self) -> dict:
        """JSON-ready post-matching summary (event pools omitted)."""
        return {
            "n_rounds": self.n_rounds,
            "seed": self.seed,
            "clicks": {f"{ka},{kb}": int(v) for (ka, kb), v in sorted(self.clicks.items())},
            "n_z": self.n_z,
            "m_z": self.m_z,
            "z_discarded": self.z_discarded,
            "s11_z_true": self.s11_z_true,
            "s0mub_true": self.s0mub_true,
            "n_x": self.n_x,
            "x_pairs": self.x_pairs,
            "m_x": self.m_x,
            "s11_x_true_pairs": self.s11_x_true_pairs,
            "o_mu_single_rounds": self.o_mu_single_rounds,
            "o_mu_single_clicks": self.o_mu_single_clicks,
            "mu_o_single_rounds": self.mu_o_single_rounds,
            "mu_o_single_clicks": self.mu_o_single_clicks,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


@dataclass
class _ShardData:
    clicks: np.ndarray  # 4x4 success counts
    z_o_bob_mu: np.ndarray
    z_o_nb: np.ndarray
    z_mu_bob_mu: np.ndarray
    z_mu_na: np.ndarray
    z_mu_nb: np.ndarray
    x_u: np.ndarray
    x_tag10: np.ndarray
    x_tag01: np.ndarray
    o_mu_single_rounds: int
    o_mu_single_clicks: int
    mu_o_single_rounds: int
    mu_o_single_clicks: int


def _simulate_shard(
    a: SourceSetting,
    b: SourceSetting,
    geom: LinkGeometry,
    params: SystemParams,
    n: int,
    seed: int,
    shard_index: int,
) -> _ShardData:
    rng = _stream(seed, shard_index)
    eta_a, eta_b = geom.transmittances(params)
    two_pi = 2.0 * math.pi

    probs_a = np.array([a.p_mu, a.p_nu, a.p_o, a.p_ohat])
    probs_b = np.array([b.p_mu, b.p_nu, b.p_o, b.p_ohat])
    vals_a = np.array([a.mu, a.nu, 0.0, 0.0])
    vals_b = np.array([b.mu, b.nu, 0.0, 0.0])

    # fixed draw order: intensities, phases, bits, photon numbers, loss,
    # detector split, darks
    ia = np.searchsorted(np.cumsum(probs_a), rng.random(n), side="right")
    ib = np.searchsorted(np.cumsum(probs_b), rng.random(n), side="right")
    theta_a = rng.random(n) * two_pi
    theta_b = rng.random(n) * two_pi
    phi_ab = rng.random(n) * two_pi
    r_a = rng.integers(0, 2, size=n, dtype=np.int8)
    r_b = rng.integers(0, 2, size=n, dtype=np.int8)
    k_a = vals_a[ia]
    k_b = vals_b[ib]
    n_a = rng.poisson(k_a)
    n_b = rng.poisson(k_b)
    surv_a = rng.binomial(n_a, eta_a)
    surv_b = rng.binomial(n_b, eta_b)

    arrived = surv_a + surv_b
    mean_total = eta_a * k_a + eta_b * k_b
    omega = np.sqrt(eta_a * k_a * eta_b * k_b)
    theta = np.mod(theta_a - theta_b + phi_ab, two_pi)
    # encoded bits shift the relative phase by pi each
    sign = 1.0 - 2.0 * np.logical_xor(r_a, r_b)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_left = np.where(
            mean_total > 0.0,
            0.5 + sign * (omega / mean_total) * np.cos(theta),
            0.5,
        )
    p_left = np.clip(p_left, 0.0, 1.0)
    arr_left = rng.binomial(arrived, p_left)
    arr_right = arrived - arr_left
    dark_left = rng.random(n) < params.p_d
    dark_right = rng.random(n) < params.p_d

    click_left = (arr_left > 0) | dark_left
    click_right = (arr_right > 0) | dark_right
    success = np.logical_xor(click_left, click_right)
    det_right = success & click_right

    flat = (ia * 4 + ib)[success]
    clicks = np.bincount(flat, minlength=16).reshape(4, 4)

    bob_z = (ib == _O) | (ib == _MU)
    pool_o = success & (ia == _O) & bob_z
    pool_mu = success & (ia == _MU) & bob_z

    x_mask = success & (ia == _NU) & (ib == _NU)
    folded = np.mod(theta - params.sigma, two_pi)
    kept = x_mask & (np.mod(folded, math.pi) < params.delta)
    arm = folded[kept] >= math.pi
    u = np.logical_xor(
        np.logical_xor(r_a[kept].astype(bool), r_b[kept].astype(bool)),
        np.logical_xor(arm, det_right[kept]),
    )

    o_mu_single = (ia == _O) & (ib == _MU) & (n_b == 1)
    mu_o_single = (ia == _MU) & (ib == _O) & (n_a == 1)

    cap = np.iinfo(np.uint8).max
    return _ShardData(
        clicks=clicks,
        z_o_bob_mu=(ib[pool_o] == _MU),
        z_o_nb=np.minimum(n_b[pool_o], cap).astype(np.uint8),
        z_mu_bob_mu=(ib[pool_mu] == _MU),
        z_mu_na=np.minimum(n_a[pool_mu], cap).astype(np.uint8),
        z_mu_nb=np.minimum(n_b[pool_mu], cap).astype(np.uint8),
        x_u=u,
        x_tag10=(n_a[kept] == 1) & (n_b[kept] == 0),
        x_tag01=(n_a[kept] == 0) & (n_b[kept] == 1),
        o_mu_single_rounds=int(o_mu_single.sum()),
        o_mu_single_clicks=int((o_mu_single & success).sum()),
        mu_o_single_rounds=int(mu_o_single.sum()),
        mu_o_single_clicks=int((mu_o_single & success).sum()),
    )


def resolve_threads(threads: int | None) -> int:
    """Thread count from the argument, the TFKEYRATE_THREADS variable, or 1."""
    if threads is not None:
        return max(int(threads), 1)
    env = os.environ.get("TFKEYRATE_THREADS")
    if env:
        try:
            return max(int(env), 1)
        except ValueError as exc:
            raise ValueError(f"TFKEYRATE_THREADS must be an integer, got {env!r}") from exc
    return 1


def simulate_rounds(
    a: SourceSetting,
    b: SourceSetting,
    geom: LinkGeometry,
    params: SystemParams,
    n_rounds: int,
    seed: int,
    threads: int | None = None,
) -> MonteCarloTally:
    """Simulate n_rounds protocol rounds and collect the event pools.

    The returned tally has not been matched yet; run post_match_z and
    post_match_x (or use oracle_tally) for the pair-level numbers.
    """
    if n_rounds < 1:
        raise ValueError(f"n_rounds must be >= 1, got {n_rounds}")
    n_rounds = int(n_rounds)
    shard_sizes = [
        min(SHARD_ROUNDS, n_rounds - start) for start in range(0, n_rounds, SHARD_ROUNDS)
    ]
    workers = resolve_threads(threads)

    def run(idx_size: tuple[int, int]) -> _ShardData:
        idx, size = idx_size
        return _simulate_shard(a, b, geom, params, size, seed, idx)

    jobs = list(enumerate(shard_sizes))
    if workers == 1 or len(jobs) == 1:
        shards = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            shards = list(pool.map(run, jobs))

    clicks_matrix = sum(s.clicks for s in shards)
    clicks = {
        (_CODE_TO_LABEL[i], _CODE_TO_LABEL[j]): int(clicks_matrix[i, j])
        for i in range(4)
        for j in range(4)
    }
    return MonteCarloTally(
        n_rounds=n_rounds,
        seed=int(seed),
        e_d_z=params.e_d_z,
        sigma=params.sigma,
        delta=params.delta,
        clicks=clicks,
        z_o_bob_mu=np.concatenate([s.z_o_bob_mu for s in shards]),
        z_o_nb=np.concatenate([s.z_o_nb for s in shards]),
        z_mu_bob_mu=np.concatenate([s.z_mu_bob_mu for s in shards]),
        z_mu_na=np.concatenate([s.z_mu_na for s in shards]),
        z_mu_nb=np.concatenate([s.z_mu_nb for s in shards]),
        x_u=np.concatenate([s.x_u for s in shards]),
        x_tag10=np.concatenate([s.x_tag10 for s in shards]),
        x_tag01=np.concatenate([s.x_tag01 for s in shards]),
        o_mu_single_rounds=sum(s.o_mu_single_rounds for s in shards),
        o_mu_single_clicks=sum(s.o_mu_single_clicks for s in shards),
        mu_o_single_rounds=sum(s.mu_o_single_rounds for s in shards),
        mu_o_single_clicks=sum(s.mu_o_single_clicks for s in shards),
    )


def post_match_z(tally: MonteCarloTally) -> tuple[int, int]:
    """Randomly pair the first user's silent-events pool against her signal
    pool, apply the second user's equal-intensity discard rule, and classify
    errors (his signal bin equals hers; misalignment flips a pair's class).

    Returns (n_z, m_z) and records the tagged single-photon-pair truths.
    """
    rng = _stream(tally.seed, _Z_MATCH_STREAM)
    len_o = tally.z_o_bob_mu.shape[0]
    len_mu = tally.z_mu_bob_mu.shape[0]
    k = min(len_o, len_mu)
    sel_o = rng.permutation(len_o)[:k]
    sel_mu = rng.permutation(len_mu)[:k]
    flip_draws = rng.random(k)

    bob_mu_i = tally.z_o_bob_mu[sel_o]
    bob_mu_j = tally.z_mu_bob_mu[sel_mu]
    formed = np.logical_xor(bob_mu_i, bob_mu_j)
    error_raw = (~bob_mu_i) & bob_mu_j
    flips = flip_draws < tally.e_d_z
    errors = formed & np.logical_xor(error_raw, flips)

    nb_i = tally.z_o_nb[sel_o]
    na_j = tally.z_mu_na[sel_mu]
    correct_raw = bob_mu_i & (~bob_mu_j)
    s11_true = correct_raw & (nb_i == 1) & (na_j == 1)
    s0mub_true = formed & (na_j == 0)

    tally.n_z = int(formed.sum())
    tally.m_z = int(errors.sum())
    tally.z_discarded = int(k - formed.sum())
    tally.s11_z_true = int(s11_true.sum())
    tally.s0mub_true = int(s0mub_true.sum())
    return tally.n_z, tally.m_z


def post_match_x(tally: MonteCarloTally, params: SystemParams) -> tuple[int, int]:
    """Pair retained X events greedily in arrival order and count errors.

    Every retained event lies in the slice [sigma, sigma+delta] on one of
    the two opposite arms, so consecutive events always satisfy the
    matching condition |theta_i - theta_j| close to 0 or pi; the arm bit is
    already folded into each event's parity bit u, and a pair is an error
    exactly when u_i differs from u_j.  m_x is reported in event units
    (two per error pair) to match the analytic bookkeeping.
    """
    del params  # window already applied at simulation time; kept for symmetry
    u = tally.x_u
    n_kept = u.shape[0]
    n_pairs = n_kept // 2
    u_i = u[0 : 2 * n_pairs : 2]
    u_j = u[1 : 2 * n_pairs : 2]
    errors = np.logical_xor(u_i, u_j)

    tag10_i = tally.x_tag10[0 : 2 * n_pairs : 2]
    tag01_i = tally.x_tag01[0 : 2 * n_pairs : 2]
    tag10_j = tally.x_tag10[1 : 2 * n_pairs : 2]
    tag01_j = tally.x_tag01[1 : 2 * n_pairs : 2]
    s11_pairs = (tag10_i & tag01_j) | (tag01_i & tag10_j)

    tally.n_x = int(n_kept)
    tally.x_pairs = int(n_pairs)
    tally.m_x = int(2 * errors.sum())
    tally.s11_x_true_pairs = int(s11_pairs.sum())
    return tally.n_x, tally.m_x


def oracle_tally(
    a: SourceSetting,
    b: SourceSetting,
    geom: LinkGeometry,
    params: SystemParams,
    n_rounds: int,
    seed: int,
    threads: int | None = None,
) -> MonteCarloTally:
    """simulate_rounds plus both matching passes."""
    tally = simulate_rounds(a, b, geom, params, n_rounds, seed, threads=threads)
    post_match_z(tally)
    post_match_x(tally, params)
    return tally


def iterate_rounds(
    a: SourceSetting,
    b: SourceSetting,
    geom: LinkGeometry,
    params: SystemParams,
    n_rounds: int,
    seed: int,
) -> Iterator[RoundRecord]:
    """Scalar per-round replay for inspection and unit-level cross-checks.

    Uses its own draw sequence (one stream, round by round), so aggregate
    statistics match simulate_rounds but individual rounds do not align.
    """
    rng = _stream(seed, (1 << 62) + 2)
    eta_a, eta_b = geom.transmittances(params)
    labels_a = [a.mu, a.nu, 0.0, 0.0]
    labels_b = [b.mu, b.nu, 0.0, 0.0]
    probs_a = np.cumsum([a.p_mu, a.p_nu, a.p_o, a.p_ohat])
    probs_b = np.cumsum([b.p_mu, b.p_nu, b.p_o, b.p_ohat])
    two_pi = 2.0 * math.pi
    for _ in range(int(n_rounds)):
        k_a = labels_a[int(np.searchsorted(probs_a, rng.random(), side="right"))]
        k_b = labels_b[int(np.searchsorted(probs_b, rng.random(), side="right"))]
        theta_a = rng.random() * two_pi
        theta_b = rng.random() * two_pi
        phi_ab = rng.random() * two_pi
        r_a = int(rng.integers(0, 2))
        r_b = int(rng.integers(0, 2))
        n_a = int(rng.poisson(k_a))
        n_b = int(rng.poisson(k_b))
        surv = int(rng.binomial(n_a, eta_a)) + int(rng.binomial(n_b, eta_b))
        mean_total = eta_a * k_a + eta_b * k_b
        omega = math.sqrt(eta_a * k_a * eta_b * k_b)
        theta = (theta_a - theta_b + phi_ab) % two_pi
        if mean_total > 0.0:
            p_left = 0.5 + (1.0 - 2.0 * (r_a ^ r_b)) * (omega / mean_total) * math.cos(theta)
            p_left = min(max(p_left, 0.0), 1.0)
        else:
            p_left = 0.5
        arr_left = int(rng.binomial(surv, p_left))
        click_left = (arr_left > 0) or (rng.random() < params.p_d)
        click_right = (surv - arr_left > 0) or (rng.random() < params.p_d)
        if click_left and click_right:
            outcome = "both-discarded"
        elif click_left:
            outcome = "L"
        elif click_right:
            outcome = "R"
        else:
            outcome = "none"
        yield RoundRecord(
            k_a=k_a,
            k_b=k_b,
            theta_a=theta_a,
            theta_b=theta_b,
            phi_ab=phi_ab,
            r_a=r_a,
            r_b=r_b,
            n_a=n_a,
            n_b=n_b,
            outcome=outcome,
        )


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    observed: float
    expected: float
    z_score: float


def compare_with_analytics(
    tally: MonteCarloTally,
    a: SourceSetting,
    b: SourceSetting,
    geom: LinkGeometry,
    params: SystemParams,
) -> list[ComparisonRow]:
    """Observed-vs-expected rows with z = (obs - exp)/sqrt(exp).

    Expectations are the analytic formulas evaluated at N = n_rounds; the
    X error expectation uses the first-principles form, the one the click
    model actually realizes.
    """
    scaled = replace(params, N=float(tally.n_rounds))
    counts = observed_statistics(a, b, geom, scaled, x_error_form="first_principles")
    rows: list[ComparisonRow] = []

    def add(name: str, observed: float, expected: float) -> None:
        se = math.sqrt(expected) if expected > 0.0 else 1.0
        rows.append(ComparisonRow(name, observed, expected, (observed - expected) / se))

    for la in INTENSITY_LABELS:
        for lb in INTENSITY_LABELS:
            add(f"gain[{la},{lb}]", tally.clicks[(la, lb)], counts.x[(la, lb)])
    add("n_z", tally.n_z, counts.n_z)
    add("m_z", tally.m_z, counts.m_z)
    add("n_x", tally.n_x, counts.n_x)
    add("m_x", tally.m_x, counts.m_x)
    return rows
