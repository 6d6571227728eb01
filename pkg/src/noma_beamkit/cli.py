"""Command-line front end.

Every command writes JSON (or CSV for ``sweep``) to ``--out`` or stdout.
Failures print ``{"error": {...}}`` to stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .certificate import Classification
from .experiments import (
    CASES,
    DeploymentConfig,
    get_case,
    parse_grid,
    rows_to_csv,
    run_case,
    run_sweep,
    solve_scenario,
)
from .model import ChannelSet, PowerBudget, QosSpec, Scenario, ScenarioError, complex_list, load_scenario
from .oracle import grid_search_2d
from .precoding import SingularChannelError
from .sdp import residuals
from .strategy_two import SicPolicy, enumerate_subsets

DEFAULT_SEED = 0
SEED_ENV = "NOMA_BEAMKIT_SEED"


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def ortho2_scenario() -> Scenario:
    """Orthonormal primaries, ``g = [1, 1]/sqrt 2``, unit budgets, noise 1e-4 W."""
    ch = ChannelSet(np.eye(2), np.ones(2) / np.sqrt(2.0), 1e-4)
    return Scenario(ch, PowerBudget(1.0, 1.0), QosSpec.uniform(2))


def resolve_seed(flag) -> int:
    if flag is not None:
        return int(flag)
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError as exc:
            raise CliError("BadSeed", f"{SEED_ENV} must be an integer, got {env!r}") from exc
    return DEFAULT_SEED


def _scenario_from_args(args) -> Scenario:
    if args.scenario:
        if not Path(args.scenario).is_file():
            raise CliError("MissingFile", f"scenario file not found: {args.scenario}")
        return load_scenario(args.scenario)
    if getattr(args, "case", None) is not None:
        if str(args.case).lower() == "ortho2":
            return ortho2_scenario()
        from .experiments import fig1_scenario

        return fig1_scenario(_case(args.case))
    raise CliError("MissingInput", "give --scenario PATH (or --case ID where supported)")


def _case(case_id):
    try:
        return get_case(case_id)
    except KeyError as exc:
        raise CliError("UnknownCase", exc.args[0]) from exc


def _certificate_warnings(outcomes) -> list:
    out = []
    for o in outcomes:
        cert = o.certificate
        if cert is not None and cert.classification is not Classification.PROVABLY_RANK_ONE:
            out.append(f"subset {list(o.sic_set.sorted())}: certificate {cert.classification.value}")
    return out


def _solve_payload(scenario: Scenario, policy: str, seed: int) -> dict:
    solved = solve_scenario(scenario, policy, seed=seed)
    one, two = solved.strategy_one, solved.strategy_two
    outcomes = two.details["subsets"]
    if not two.feasible:
        raise CliError("NumericalFailure", "every SIC subset failed: " + "; ".join(two.warnings))
    s1 = one.to_json()
    s1.update(mode=one.details["mode"], alpha=one.details["alpha"], candidates=one.details["candidates"])
    s2 = two.to_json()
    s2["subsets"] = [o.to_json() for o in outcomes]
    warnings = list(one.warnings) + list(two.warnings) + _certificate_warnings(outcomes)
    best = "StrategyII" if two.rate_bpcu > one.rate_bpcu + 1e-9 else "StrategyI"
    return {
        "seed": seed,
        "policy": SicPolicy(policy).value,
        "channel_digest": scenario.channels.digest(),
        "strategy_one": s1,
        "strategy_two": s2,
        "best_strategy": best,
        "warnings": warnings,
    }


def cmd_solve(args) -> dict:
    return _solve_payload(_scenario_from_args(args), args.policy or "full", resolve_seed(args.seed))


def cmd_certify(args) -> dict:
    scenario = _scenario_from_args(args)
    solved = solve_scenario(scenario, args.policy or "full", seed=resolve_seed(args.seed))
    outcomes = solved.strategy_two.details["subsets"]
    subsets = []
    for o in outcomes:
        entry = {"sic_users": list(o.sic_set.sorted()), "status": o.status.value, "rank": o.W_rank,
                 "certificate": None if o.certificate is None else o.certificate.to_json()}
        if o.ok:
            entry["residuals"] = residuals(o.instance, o.result).to_json()
        subsets.append(entry)
    warnings = [f"subset {list(o.sic_set.sorted())}: {o.status.value}" for o in outcomes if not o.ok]
    if all(not o.ok for o in outcomes):
        raise CliError("NumericalFailure", "every SIC subset failed")
    return {"channel_digest": scenario.channels.digest(), "subsets": subsets,
            "warnings": warnings + _certificate_warnings(outcomes)}


def cmd_fig1(args) -> dict:
    ids = [_case(args.case).case_id] if args.case is not None else list(CASES)
    seed = resolve_seed(args.seed)
    rows = [run_case(CASES[i], seed=seed).to_json() for i in ids]
    warnings = [f"case {r['case']}: winner differs from the table ({r['expected']})"
                for r in rows if not r["matches_table"]]
    return {"cases": rows, "warnings": warnings}


def cmd_oracle_check(args) -> dict:
    scenario = _scenario_from_args(args)
    if scenario.channels.n_antennas != 2:
        raise CliError("Unsupported", "oracle-check needs N = 2")
    solved = solve_scenario(scenario, "full", seed=resolve_seed(args.seed))
    n = int(args.oracle_resolution)
    if n < 2:
        raise CliError("BadResolution", "--oracle-resolution must be at least 2")
    resolution = (n, n, max(4, round(0.9 * n)))
    subsets = enumerate_subsets(scenario.channels.n_users, SicPolicy.FULL)
    reports = grid_search_2d(subsets, scenario.channels, solved.context, scenario.budget, resolution)
    rows = []
    for o in solved.strategy_two.details["subsets"]:
        rep = reports[o.sic_set]
        rows.append({"sic_users": list(o.sic_set.sorted()), "solver_rate_bpcu": o.achieved_rate,
                     "oracle_rate_bpcu": rep.best_rate, "delta_bpcu": o.achieved_rate - rep.best_rate,
                     "oracle_beam": complex_list(rep.best_beam)})
    return {"resolution": f"{resolution[0]}x{resolution[1]}x{resolution[2]}", "subsets": rows,
            "max_abs_delta_bpcu": max(abs(r["delta_bpcu"]) for r in rows), "warnings": []}


def cmd_sweep(args) -> str:
    variable = args.sweep
    grid = args.grid or ("20:30:2" if variable == "p0" else "2:4:1")
    try:
        values = parse_grid(grid)
    except ValueError as exc:
        raise CliError("BadGrid", str(exc)) from exc
    if variable == "k":
        values = [int(round(v)) for v in values]
    policy = args.policy or ("full" if variable == "p0" else "simplified")
    config = DeploymentConfig(master_seed=resolve_seed(args.seed))
    if args.trials < 1:
        raise CliError("BadTrials", "--trials must be at least 1")
    rows = run_sweep(config, variable, values, args.trials, policy, threads=max(1, args.threads))
    return rows_to_csv(rows)


COMMANDS = {
    "solve": cmd_solve,
    "fig1": cmd_fig1,
    "sweep": cmd_sweep,
    "certify": cmd_certify,
    "oracle-check": cmd_oracle_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="noma-beamkit", description="NOMA secondary-user beamforming toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help=f"RNG seed (fallback: ${SEED_ENV}, then 0)")
        sp.add_argument("--out", default=None, help="write output here instead of stdout")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--policy", choices=[x.value for x in SicPolicy], default=None)
        sp.add_argument("-v", "--verbose", action="count", default=0)

    sp = sub.add_parser("solve", help="run both strategies on a scenario file")
    sp.add_argument("--scenario", required=False)
    sp.add_argument("--case", default=None)
    common(sp)
    sp = sub.add_parser("certify", help="dual certificates for every SIC subset")
    sp.add_argument("--scenario", required=False)
    sp.add_argument("--case", default=None)
    common(sp)
    sp = sub.add_parser("fig1", help="the deterministic two-user cases")
    sp.add_argument("--case", default=None)
    common(sp)
    sp = sub.add_parser("oracle-check", help="solver against the 2-antenna grid oracle")
    sp.add_argument("--scenario", required=False)
    sp.add_argument("--case", default=None, help="case id, or 'ortho2'")
    sp.add_argument("--oracle-resolution", type=int, default=200)
    common(sp)
    sp = sub.add_parser("sweep", help="Monte-Carlo sweep over P0 or K (CSV)")
    sp.add_argument("--sweep", choices=["p0", "k"], required=True)
    sp.add_argument("--grid", default=None, help='"a:b:step" (default 20:30:2 for p0, 2:4:1 for k)')
    sp.add_argument("--trials", type=int, default=200)
    common(sp)
    return p


def _finite(obj):
    # JSON has no NaN/Infinity; report them as null
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _emit(payload, out) -> None:
    if isinstance(payload, str):
        text = payload
    else:
        text = json.dumps(_finite(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        payload = COMMANDS[args.command](args)
    except CliError as exc:
        return _fail(exc.kind, str(exc))
    except ScenarioError as exc:
        return _fail("ValidationError", str(exc))
    except SingularChannelError as exc:
        return _fail("SingularChannel", str(exc))
    _emit(payload, args.out)
    return 0


def _fail(kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": {"type": kind, "message": message}}, sort_keys=True) + "\n")
    return 2


if __name__ == "__main__":
    sys.exit(main())
