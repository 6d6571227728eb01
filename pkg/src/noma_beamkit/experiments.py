"""Deterministic two-user cases and Monte-Carlo deployment sweeps."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .certificate import Classification
from .model import BeamSolution, ChannelSet, PowerBudget, QosSpec, Scenario, SicSet, dbm_to_watts
from .precoding import SingularChannelError, zf_precoder
from .rates import build_context
from .sdp import residuals
from .strategy_one import best_rider
from .strategy_two import SicPolicy, best_new_beam

#: Strategy I and II "coincide" when their rates agree to this much.
COINCIDE_TOL = 1e-6


@dataclass(frozen=True)
class SolvedScenario:
    strategy_one: BeamSolution
    strategy_two: BeamSolution
    precoder: object
    context: object


def solve_scenario(scenario: Scenario, policy=SicPolicy.FULL, seed: int = 0, samples: int = 1000) -> SolvedScenario:
    ch, budget = scenario.channels, scenario.budget
    precoder = zf_precoder(ch, budget.p_sdma)
    ctx = build_context(ch, precoder, scenario.qos)
    one = best_rider(ch, precoder, ctx, budget)
    two = best_new_beam(ch, precoder, ctx, budget, sic_policy=policy, samples=samples, seed=seed)
    return SolvedScenario(one, two, precoder, ctx)


# -- deterministic two-user cases ----------------------------------------------------------


@dataclass(frozen=True)
class DeterministicCase:
    case_id: str
    theta: float
    p0_dbm: float
    # expected_mode: (strategies, acceptable SIC sets for the winner)
    expected_strategies: str
    expected_sic: tuple

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi / 2 + 1e-15:
            raise ValueError("theta must lie in [0, pi/2]")

    @property
    def expected_mode(self) -> str:
        sets = " or ".join(str(list(s.sorted())) for s in self.expected_sic)
        return f"Strategy {self.expected_strategies}, SIC set {sets}"


_S0, _S1, _S2 = SicSet(), SicSet.of(1), SicSet.of(2)

CASES = {
    "1": DeterministicCase("1", math.pi / 2, 30.0, "I and II", (_S1,)),
    "2": DeterministicCase("2", math.pi / 3, 30.0, "II", (_S1,)),
    "3-1": DeterministicCase("3-1", math.pi / 4, 30.0, "II", (_S1, _S2)),
    "3-2": DeterministicCase("3-2", math.pi / 4, 30.0, "II", (_S1, _S2)),
    "4": DeterministicCase("4", math.pi / 6, 30.0, "II", (_S2,)),
    "5": DeterministicCase("5", 0.0, 30.0, "I and II", (_S2,)),
    "0": DeterministicCase("0", math.pi / 4, 27.0, "II", (_S0,)),
}


def get_case(case_id) -> DeterministicCase:
    key = str(case_id)
    if key == "3":
        key = "3-1"
    if key not in CASES:
        raise KeyError(f"unknown case id {case_id!r}; choose from {', '.join(CASES)}")
    return CASES[key]


def fig1_scenario(case: DeterministicCase, perturbation: float = 0.0, seed: int = 0) -> Scenario:
    """Orthonormal primaries, ``g = [sin t, cos t]``, no path loss."""
    H = np.eye(2, dtype=complex)
    g = np.array([math.sin(case.theta), math.cos(case.theta)], dtype=complex)
    if perturbation > 0.0:
        rng = np.random.default_rng(seed)
        H = H + perturbation * _cn(rng, (2, 2))
        g = g + perturbation * _cn(rng, 2)
    channels = ChannelSet(H, g, dbm_to_watts(-10.0))
    budget = PowerBudget(dbm_to_watts(30.0), dbm_to_watts(case.p0_dbm))
    return Scenario(channels, budget, QosSpec.uniform(2, 1.0))


@dataclass(frozen=True)
class CaseOutcome:
    case: DeterministicCase
    solved: SolvedScenario

    @property
    def coincide(self) -> bool:
        one, two = self.solved.strategy_one, self.solved.strategy_two
        return abs(two.rate_bpcu - one.rate_bpcu) <= COINCIDE_TOL and one.sic_set == two.sic_set

    @property
    def winner(self) -> str:
        return "I and II" if self.coincide else (
            "II" if self.solved.strategy_two.rate_bpcu > self.solved.strategy_one.rate_bpcu else "I")

    @property
    def winning_sic(self) -> SicSet:
        return self.solved.strategy_two.sic_set

    @property
    def matches(self) -> bool:
        return self.winner == self.case.expected_strategies and self.winning_sic in self.case.expected_sic

    def to_json(self) -> dict:
        two = self.solved.strategy_two
        from .model import complex_list

        return {
            "case": self.case.case_id,
            "theta_rad": self.case.theta,
            "p0_dbm": self.case.p0_dbm,
            "expected": self.case.expected_mode,
            "winner": f"Strategy {self.winner}",
            "sic_users": list(self.winning_sic.sorted()),
            "rate_strategy1_bpcu": self.solved.strategy_one.rate_bpcu,
            "rate_strategy2_bpcu": two.rate_bpcu,
            "beam": complex_list(two.beam),
            "beam_power_w": two.power_w,
            "matches_table": self.matches,
        }


def run_case(case: DeterministicCase, perturbation: float = 0.0, seed: int = 0) -> CaseOutcome:
    return CaseOutcome(case, solve_scenario(fig1_scenario(case, perturbation, seed), seed=seed))


# -- random deployments ----------------------------------------------------


def _cn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


@dataclass(frozen=True)
class DeploymentConfig:
    k_users: int = 2
    square_edge_m: float = 6.0
    secondary_position: tuple = (0.0, 1.0)
    pathloss_exponent: float = 3.0
    min_distance_m: float = 0.5
    noise_dbm: float = -94.0
    rate_bpcu: float = 1.0
    p_sdma_dbm: float = 30.0
    p0_dbm: float = 30.0
    master_seed: int = 0
    # base station sits at the origin

    def __post_init__(self):
        if self.square_edge_m <= 0:
            raise ValueError("square edge must be positive")
        if not 0 <= self.min_distance_m < self.square_edge_m / 2:
            raise ValueError("min distance must be below half the square edge")
        if self.k_users < 1:
            raise ValueError("need at least one primary user")


@dataclass(frozen=True)
class Deployment:
    trial: int
    positions: np.ndarray  # K x 2, metres
    channels: ChannelSet

    @property
    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.positions, axis=1)


def sample_deployment(config: DeploymentConfig, trial: int) -> Deployment:
    rng = np.random.default_rng([config.master_seed, trial])
    half = config.square_edge_m / 2.0
    k, n = config.k_users, config.k_users
    pos = np.empty((k, 2))
    for i in range(k):
        while True:
            p = rng.uniform(-half, half, size=2)
            if np.hypot(*p) >= config.min_distance_m:
                break
        pos[i] = p
    d = np.linalg.norm(pos, axis=1)
    H = _cn(rng, (n, k)) * d[None, :] ** (-config.pathloss_exponent / 2.0)
    d0 = float(np.hypot(*config.secondary_position))
    g = _cn(rng, n) * d0 ** (-config.pathloss_exponent / 2.0)
    return Deployment(trial, pos, ChannelSet(H, g, dbm_to_watts(config.noise_dbm)))


def deployment_scenario(config: DeploymentConfig, deployment: Deployment) -> Scenario:
    budget = PowerBudget(dbm_to_watts(config.p_sdma_dbm), dbm_to_watts(config.p0_dbm))
    return Scenario(deployment.channels, budget, QosSpec.uniform(config.k_users, config.rate_bpcu))


@dataclass
class TrialRecord:
    trial_index: int
    seed: tuple
    user_positions: list
    channel_digest: str
    rate_strategy1: float = 0.0
    rate_strategy2: float = 0.0
    sic_strategy1: tuple = ()
    sic_strategy2: tuple = ()
    classifications: dict = field(default_factory=dict)
    winner_rank_one: bool = False
    # (sic users, Residuals, objective) for every Optimal relaxation
    solver_health: list = field(default_factory=list)
    failed: bool = False
    error: str = ""


def run_trial(config: DeploymentConfig, trial: int, policy=SicPolicy.FULL, samples: int = 1000) -> TrialRecord:
    dep = sample_deployment(config, trial)
    rec = TrialRecord(trial, (config.master_seed, trial), dep.positions.tolist(), dep.channels.digest())
    try:
        solved = solve_scenario(deployment_scenario(config, dep), policy, seed=config.master_seed, samples=samples)
    except SingularChannelError as exc:
        rec.failed, rec.error = True, str(exc)
        return rec
    one, two = solved.strategy_one, solved.strategy_two
    if not two.feasible:
        rec.failed, rec.error = True, "; ".join(two.warnings)
        return rec
    rec.rate_strategy1, rec.rate_strategy2 = one.rate_bpcu, two.rate_bpcu
    rec.sic_strategy1, rec.sic_strategy2 = one.sic_set.sorted(), two.sic_set.sorted()
    for o in two.details["subsets"]:
        if o.certificate is not None:
            rec.classifications[str(list(o.sic_set.sorted()))] = o.certificate.classification.value
        if o.sic_set == two.sic_set:
            rec.winner_rank_one = o.W_rank == 1
        if o.ok:
            obj = o.instance.objective_value(o.result.W, o.result.z)
            rec.solver_health.append((o.sic_set.sorted(), residuals(o.instance, o.result), obj))
    return rec


def _trial_job(args):
    return run_trial(*args)


def run_trials(config: DeploymentConfig, trials: int, policy=SicPolicy.FULL, threads: int = 1,
               samples: int = 1000) -> list:
    jobs = [(config, t, SicPolicy(policy), samples) for t in range(trials)]
    if threads <= 1:
        return [_trial_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_trial_job, jobs, chunksize=max(1, trials // (4 * threads))))


CSV_COLUMNS = ["sweep_var", "value", "strategy", "mean_rate_bpcu", "stderr", "n_trials", "n_failures",
               "rank_one_fraction"]


def _summary(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def aggregate(variable: str, value, records: Sequence[TrialRecord]) -> list:
    good = [r for r in records if not r.failed]
    n_fail = len(records) - len(good)
    rows = []
    for tag, attr in (("StrategyI", "rate_strategy1"), ("StrategyII", "rate_strategy2")):
        mean, se = _summary([getattr(r, attr) for r in good])
        frac = float(np.mean([r.winner_rank_one for r in good])) if (good and tag == "StrategyII") else float("nan")
        rows.append({"sweep_var": variable, "value": value, "strategy": tag, "mean_rate_bpcu": mean,
                     "stderr": se, "n_trials": len(good), "n_failures": n_fail, "rank_one_fraction": frac})
    return rows


def parse_grid(spec: str) -> list:
    """``"a:b:step"`` inclusive of ``b`` (within half a step)."""
    try:
        a, b, step = (float(x) for x in spec.split(":"))
    except ValueError as exc:
        raise ValueError(f"grid must look like a:b:step, got {spec!r}") from exc
    if step <= 0 or b < a:
        raise ValueError("grid needs step > 0 and b >= a")
    n = int(math.floor((b - a) / step + 0.5)) + 1
    return [a + i * step for i in range(n)]


def sweep_configs(config: DeploymentConfig, variable: str, values) -> list:
    if variable == "p0":
        return [replace(config, p0_dbm=float(v)) for v in values]
    if variable == "k":
        return [replace(config, k_users=int(v)) for v in values]
    raise ValueError(f"unknown sweep variable {variable!r}; use p0 or k")


def run_sweep(config: DeploymentConfig, variable: str, values, trials_per_point: int,
              sic_policy=SicPolicy.FULL, threads: int = 1, samples: int = 1000,
              keep_records: Optional[dict] = None) -> list:
    if trials_per_point < 1:
        raise ValueError("trials_per_point must be at least 1")
    rows = []
    for cfg, v in zip(sweep_configs(config, variable, values), values):
        recs = run_trials(cfg, trials_per_point, sic_policy, threads, samples)
        if keep_records is not None:
            keep_records[v] = recs
        shown = int(v) if variable == "k" else float(v)
        rows.extend(aggregate(variable, shown, recs))
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (f"{r[k]:.12g}" if isinstance(r[k], float) else r[k]) for k in CSV_COLUMNS})
    return buf.getvalue()


def rank_one_classification_share(records: Sequence[TrialRecord]) -> float:
    tags = [c for r in records for c in r.classifications.values()]
    return float(np.mean([t == Classification.PROVABLY_RANK_ONE.value for t in tags])) if tags else float("nan")
