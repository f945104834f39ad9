"""Command-line entry point: ``osposg {solve,play,eval,oracle}``.

Exit codes: 0 success, 1 a requested check failed, 2 usage or input error,
3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import traceback
from collections import defaultdict
from pathlib import Path
from typing import TextIO

import numpy as np

from osposg import agents
from osposg.arena import (ProperBeliefViolation, bound_report, default_horizon, estimate_from_returns,
                          play_episode, shapley_solve, truncation_bound)
from osposg.games import PRESETS, preset
from osposg.hsvi import FrozenBounds, solve_hsvi
from osposg.model import GameModel, ModelParseError, ModelValidationError, load_model

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3
PE_TIMEOUT = 7200.0


class UsageError(Exception):
    pass


def _model_from_args(args) -> GameModel:
    if args.model and args.preset:
        raise UsageError("give either --model or --preset, not both")
    if args.model:
        path = Path(args.model)
        if not path.exists():
            raise UsageError(f"model file {path} does not exist")
        return load_model(path.read_text(encoding="utf-8"))
    if args.preset:
        return preset(args.preset)
    raise UsageError("one of --model or --preset is required")


def _write_json(path: str, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# human play
# ---------------------------------------------------------------------------

class _Prompt:
    def __init__(self, stdin: TextIO, stdout: TextIO):
        self.stdin, self.stdout = stdin, stdout

    def choose(self, header: str, names) -> int:
        while True:
            self.stdout.write(f"{header}\n  " + "  ".join(f"[{i}] {n}" for i, n in enumerate(names)) + "\n> ")
            self.stdout.flush()
            line = self.stdin.readline()
            if not line:
                raise EOFError("input closed")
            line = line.strip()
            if line.isdigit() and int(line) < len(names):
                return int(line)
            if line in names:
                return list(names).index(line)
            self.stdout.write("unknown action\n")


class HumanAgent1(agents.Agent1):
    name = "human"

    def __init__(self, prompt: _Prompt):
        self.prompt = prompt

    def act(self, s1):
        st = self.model.agent_state(s1)
        a = self.prompt.choose(f"you observe {st.loc1}/{st.per1}", self.model.a1)
        self.last_probs = np.eye(self.model.n_a1)[a]
        return a


class HumanAgent2(agents.Agent2):
    name = "human"

    def __init__(self, prompt: _Prompt):
        self.prompt = prompt

    def act(self, s1, e):
        st = self.model.agent_state(s1)
        a = self.prompt.choose(f"state {st.loc1}/{st.per1} at {self.model.points[e]}", self.model.a2)
        self.last_row = np.eye(self.model.n_a2)[a]
        return a


def _make_agents(profile: str, frozen: FrozenBounds, prompt: _Prompt):
    left, sep, right = profile.partition("-vs-")
    if not sep:
        raise UsageError(f"profile {profile!r} must look like <agent1>-vs-<agent2>")
    if left == "lb":
        a1 = agents.ResolvingAgent(frozen)
    elif left == "human":
        a1 = HumanAgent1(prompt)
    elif left in agents.HEURISTICS1:
        a1 = agents.HEURISTICS1[left]()
    else:
        raise UsageError(f"unknown agent1 {left!r}")
    if right == "ub":
        a2 = agents.InferredAgent(frozen)
    elif right == "human":
        a2 = HumanAgent2(prompt)
    elif right in agents.ADVERSARIES2:
        a2 = agents.ADVERSARIES2[right]()
    else:
        raise UsageError(f"unknown agent2 {right!r}")
    if left in agents.PURSUIT_ONLY or right in agents.PURSUIT_ONLY:
        if "stay" not in frozen.model.a2 or frozen.model.coords.shape[1] < 4:
            raise UsageError(f"profile {profile!r} needs a pursuit-evasion model")
    return a1, a2


def suite_profiles(model: GameModel) -> list[str]:
    """Cross-play, the bound agent against every adversary, every heuristic against the bound agent."""
    pe = "stay" in model.a2 and model.coords.shape[1] >= 4
    adv = [a for a in agents.ADVERSARIES2 if pe or a not in agents.PURSUIT_ONLY]
    heur = [h for h in agents.HEURISTICS1 if pe or h not in agents.PURSUIT_ONLY]
    return ["lb-vs-ub"] + [f"lb-vs-{a}" for a in adv] + [f"{h}-vs-ub" for h in heur]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(args, out: TextIO) -> int:
    model = _model_from_args(args)
    if args.epsilon <= 0:
        raise UsageError("--epsilon must be positive")
    limit = args.time_limit
    if limit is None and args.preset == "pe3":
        limit = PE_TIMEOUT
    upper_init = args.upper_init
    frozen = solve_hsvi(model, args.epsilon, max_trials=args.max_trials, time_limit=limit,
                        max_depth=args.max_depth, seed=args.seed, upper_init=upper_init)
    if args.out:
        frozen.save(args.out)
    out.write(f"status={frozen.status} lb={frozen.lb_init:.6f} ub={frozen.ub_init:.6f} "
              f"gap={frozen.gap:.6f} trials={frozen.stats['trials']} "
              f"seconds={frozen.stats['seconds']:.2f}\n")
    if args.require_converged and frozen.status != "converged":
        return EXIT_CHECK
    return EXIT_OK


def cmd_play(args, out: TextIO, stdin: TextIO) -> int:
    frozen = FrozenBounds.load(args.bounds)
    model = frozen.model
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    horizon = args.horizon or default_horizon(model)
    profiles = args.profile or suite_profiles(model)
    prompt = _Prompt(stdin, out)
    failures = 0
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for profile in profiles:
            a1, a2 = _make_agents(profile, frozen, prompt)
            for k in range(args.episodes):
                seed = args.seed + k
                try:
                    trace = play_episode(model, a1, a2, horizon, seed, profile=profile,
                                         record=not args.summary_only)
                except ProperBeliefViolation as exc:
                    out.write(f"{profile} seed={seed}: {exc}\n")
                    failures += 1
                    continue
                for step in trace.steps:
                    fh.write(json.dumps(step) + "\n")
                fh.write(json.dumps(trace.summary()) + "\n")
            out.write(f"{profile}: {args.episodes} episodes\n")
    return EXIT_CHECK if failures else EXIT_OK


def read_returns(path: str) -> tuple[dict[str, list[tuple[int, float]]], dict[str, int]]:
    returns: dict[str, list[tuple[int, float]]] = defaultdict(list)
    horizons: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            if rec.get("type") == "summary":
                returns[rec["profile"]].append((rec["seed"], rec["return"]))
                horizons[rec["profile"]] = min(rec["horizon"], horizons.get(rec["profile"], rec["horizon"]))
    return returns, horizons


def cmd_eval(args, out: TextIO) -> int:
    frozen = FrozenBounds.load(args.bounds)
    returns, horizons = read_returns(args.traces)
    if not returns:
        raise UsageError(f"no episode summaries in {args.traces}")
    estimates = {}
    for profile, rows in returns.items():
        if len(rows) < 2:
            raise UsageError(f"profile {profile!r} has fewer than two episodes")
        estimates[profile] = estimate_from_returns([r for _, r in rows],
                                                   truncation_bound(frozen.model, horizons[profile]))
    report = bound_report(frozen, estimates)
    if args.report:
        _write_json(args.report, report)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["profile", "seed", "return"])
            for profile in sorted(returns):
                for seed, r in returns[profile]:
                    w.writerow([profile, seed, repr(r)])
    for c in report["checks"]:
        out.write(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}  mean={c['lhs']:.4f} "
                  f"bound={c['rhs']:.4f} margin={c['margin']:.4f}\n")
    return EXIT_OK if report["pass"] else EXIT_CHECK


def cmd_oracle(args, out: TextIO) -> int:
    model = _model_from_args(args)
    try:
        values = shapley_solve(model, args.tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    doc = {model.points[e]: v + 0.0 for (_, e), v in sorted(values.items())}
    out.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="osposg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--lp-dump", metavar="DIR", help="write every LP in text form to DIR")
    sub = p.add_subparsers(dest="command", required=True)

    def model_opts(sp):
        sp.add_argument("--model", help="model document (JSON)")
        sp.add_argument("--preset", choices=sorted(PRESETS))

    s = sub.add_parser("solve", help="compute value bounds")
    model_opts(s)
    s.add_argument("--epsilon", type=float, default=0.01)
    s.add_argument("--out", help="bounds file to write")
    s.add_argument("--time-limit", type=float, help="seconds (pe3 preset default: 7200)")
    s.add_argument("--max-trials", type=int, default=10_000)
    s.add_argument("--max-depth", type=int, default=50)
    s.add_argument("--upper-init", choices=["constant", "perfect-info"], default="constant",
                   help="perfect-info also seeds the upper bound with full-information values")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--require-converged", action="store_true", help="exit 1 unless the gap reached epsilon")

    pl = sub.add_parser("play", help="simulate episodes and write traces (JSONL)")
    pl.add_argument("--bounds", required=True)
    pl.add_argument("--episodes", type=int, default=2000)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--horizon", type=int, help="default: smallest H whose truncated tail is at most 0.01")
    pl.add_argument("--profile", action="append",
                    help="<agent1>-vs-<agent2>, e.g. lb-vs-ub, lb-vs-flee, sweep-vs-ub, human-vs-ub; "
                         "repeatable; default: the full suite")
    pl.add_argument("--out", required=True, help="trace file")
    pl.add_argument("--summary-only", action="store_true", help="omit per-step records")

    e = sub.add_parser("eval", help="check traces against the bounds")
    e.add_argument("--traces", required=True)
    e.add_argument("--bounds", required=True)
    e.add_argument("--report", help="report JSON to write")
    e.add_argument("--csv", help="per-episode returns CSV to write")

    o = sub.add_parser("oracle", help="values of a fully observed model")
    model_opts(o)
    o.add_argument("--tol", type=float, default=1e-4)
    return p


def run(argv=None, stdout: TextIO | None = None, stdin: TextIO | None = None) -> int:
    out = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.lp_dump:
        os.environ["OSPOSG_LP_DUMP"] = args.lp_dump
    try:
        if args.command == "solve":
            return cmd_solve(args, out)
        if args.command == "play":
            return cmd_play(args, out, stdin or sys.stdin)
        if args.command == "eval":
            return cmd_eval(args, out)
        return cmd_oracle(args, out)
    except (UsageError, ModelParseError, ModelValidationError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        sys.stderr.write(f"osposg: error: {exc}\n")
        return EXIT_USAGE
    except Exception:  # noqa: BLE001
        sys.stderr.write("osposg: internal error\n" + traceback.format_exc())
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
