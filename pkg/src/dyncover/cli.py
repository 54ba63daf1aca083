"""Command-line harness: ``dyncover gen``, ``dyncover run`` and ``dyncover bench``.

Exit codes: 0 when every audit passed, 1 when some audit failed, 2 for bad
flags, missing files or an instance too large for the exact oracle.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

from .amortized import AmortizedEngine
from .core import DynCoverError, Instance, Update, gt, validate_instance
from .static_hierarchy import build_static
from .verifier import (
    MAX_ORACLE_SETS,
    AuditReport,
    attach_oracle,
    check_amortized_invariants,
    check_feasibility,
    check_primal_dual,
    check_worstcase_invariants,
)
from .workload import (
    GenParams,
    gen_instance,
    gen_stream,
    read_instance,
    read_stream,
    write_instance,
    write_report,
    write_stream,
)
from .worstcase import EFFICIENT, SIMPLE, WorstCaseEngine

SEED_ENV = "DYNCOVER_SEED"
EXIT_OK, EXIT_AUDIT, EXIT_USAGE = 0, 1, 2


class NaiveEngine:
    """Baseline that rebuilds the static hierarchy from scratch after every update."""

    def __init__(self, instance: Instance, epsilon: float | None = None):
        self.instance = instance
        self.epsilon = instance.epsilon if epsilon is None else epsilon
        self.live = dict(instance.element_sets())
        self.work = 0
        self.last_update_work = 0
        self.max_update_work = 0
        self._rebuild()
        self.preprocessing_work = self.last_update_work
        self.max_update_work = 0

    def _rebuild(self) -> None:
        inst = self.instance
        current = validate_instance({
            "epsilon": inst.epsilon, "C": inst.C, "f": inst.f, "n": inst.n,
            "sets": list(zip(inst.set_ids, inst.costs)),
            "elements": list(self.live.items()),
        })
        self.snapshot = build_static(current, self.epsilon)
        self.last_update_work = self.snapshot.work
        self.work += self.snapshot.work
        self.max_update_work = max(self.max_update_work, self.snapshot.work)

    def apply_update(self, update: Update) -> None:
        if update.op == "insert":
            self.live[update.element] = tuple(update.sets)
        else:
            del self.live[update.element]
        self._rebuild()

    @property
    def cover_value(self) -> float:
        return sum((self.instance.cost_of(s) for s in self.snapshot.tight_sets), 0.0)

    def export_cover(self) -> list[str]:
        return sorted(self.snapshot.tight_sets)

    def live_elements(self) -> dict[str, tuple[str, ...]]:
        return dict(self.live)


def check_naive(engine: NaiveEngine, *, oracle: bool = False) -> AuditReport:
    rep = AuditReport()
    costs = dict(zip(engine.instance.set_ids, engine.instance.costs))
    feas = check_feasibility(engine.export_cover(), engine.live)
    rep.feasible, rep.uncovered = feas.ok, feas.uncovered
    rep.dual_ok = check_primal_dual(costs, engine.snapshot.set_weights, engine.epsilon).ok
    if oracle:
        total = sum(engine.snapshot.element_weights.values())
        attach_oracle(rep, costs, engine.live, engine.cover_value, total, engine.epsilon)
    return rep


def ratio_bound(algo: str, f: int, epsilon: float) -> float:
    """Approximation factor each engine is held to when the oracle is on."""
    if algo == "amortized":
        return (1 + 5 * epsilon) * f
    if algo == "worstcase":
        return (1 + 2 * epsilon * (1 + epsilon)) * (1 + epsilon) ** 2 * f
    return (1 + epsilon) ** 2 * f


def make_engine(args, instance: Instance):
    if args.algo == "amortized":
        return AmortizedEngine(instance, args.epsilon)
    if args.algo == "worstcase":
        return WorstCaseEngine(
            instance, args.epsilon, strategy=args.strategy, budget_constant=args.budget_constant
        )
    return NaiveEngine(instance, args.epsilon)


def cover_of(engine) -> tuple[float, list[str]]:
    if isinstance(engine, AmortizedEngine):
        return engine.cover_value, engine.tight_sets()
    if isinstance(engine, WorstCaseEngine):
        return engine.query_value(), engine.export_cover()
    return engine.cover_value, engine.export_cover()


def audit(engine, oracle: bool) -> AuditReport:
    if isinstance(engine, AmortizedEngine):
        return check_amortized_invariants(engine, oracle=oracle)
    if isinstance(engine, WorstCaseEngine):
        return check_worstcase_invariants(engine, oracle=oracle)
    return check_naive(engine, oracle=oracle)


def replay(args, instance: Instance, stream: list[Update]) -> dict:
    """Run ``stream`` through the chosen engine and build a report dictionary."""
    started = time.perf_counter()
    engine = make_engine(args, instance)
    epsilon = engine.epsilon
    bound = ratio_bound(args.algo, instance.f, epsilon)
    records = []
    violations = audits = 0
    max_ratio = None
    total_work = 0
    max_work = 0
    for index, update in enumerate(stream, start=1):
        before = engine.work
        engine.apply_update(update)
        work = engine.work - before
        total_work += work
        max_work = max(max_work, work)
        value, cover = cover_of(engine)
        record = {
            "update": index,
            "op": update.op,
            "element": update.element,
            "cover_value": value,
            "work": work,
            "audit": None,
            "failures": [],
            "opt": None,
            "ratio": None,
        }
        if args.check_every and index % args.check_every == 0:
            audits += 1
            rep = audit(engine, args.oracle)
            failures = rep.failures()
            if not check_feasibility(cover, engine.live_elements()):
                failures.append("exported cover misses a live element")
            if args.oracle:
                ratio = value / rep.opt if rep.opt > 0 else (1.0 if value == 0 else math.inf)
                record["opt"], record["ratio"] = rep.opt, ratio
                max_ratio = ratio if max_ratio is None else max(max_ratio, ratio)
                if gt(value, bound * rep.opt):
                    failures.append(f"ratio {ratio:.6g} above {bound:.6g}")
            record["audit"] = not failures
            record["failures"] = failures
            violations += bool(failures)
        records.append(record)

    value, _ = cover_of(engine)
    config = {
        "algo": args.algo,
        "epsilon": epsilon,
        "f": instance.f,
        "C": instance.C,
        "m": instance.m,
        "n": instance.n,
        "initial_elements": len(instance.element_ids),
        "check_every": args.check_every,
        "oracle": args.oracle,
        "ratio_bound": bound,
    }
    if isinstance(engine, WorstCaseEngine):
        config.update(strategy=args.strategy, budget_constant=args.budget_constant,
                      levels=engine.top, budget=engine.budget)
    summary = {
        "updates": len(stream),
        "preprocessing_work": engine.preprocessing_work,
        "total_work": total_work,
        "max_work_per_update": max_work,
        "mean_work_per_update": total_work / len(stream) if stream else 0.0,
        "max_ratio": max_ratio,
        "audits": audits,
        "violations": violations,
        "final_cover_value": value,
    }
    if isinstance(engine, WorstCaseEngine):
        summary["max_concurrent_schedulers"] = engine.max_concurrent
        summary["rebuild_completions"] = len(engine.completions)
    if args.timing:
        summary["wall_clock_seconds"] = time.perf_counter() - started
    return {"config": config, "summary": summary, "records": records}


# -- commands --------------------------------------------------------------------------


def gen_params(args, seed: int) -> GenParams:
    return GenParams(
        m=args.m, n_max=args.n_max, f=args.f, C=args.C, epsilon=args.epsilon,
        n_initial=args.n_initial, t=args.t, insert_fraction=args.insert_fraction,
        delete_burst=args.delete_burst, close_out=args.close_out, seed=seed,
    )


def stream_seed(default: int) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise DynCoverError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def cmd_gen(args) -> int:
    instance = gen_instance(gen_params(args, args.seed))
    stream = gen_stream(instance, gen_params(args, stream_seed(args.seed)))
    write_instance(args.instance, instance)
    write_stream(args.stream, stream)
    return EXIT_OK


def cmd_run(args) -> int:
    instance = read_instance(args.instance)
    stream = read_stream(args.stream)
    if args.oracle and instance.m > MAX_ORACLE_SETS:
        raise OracleTooLarge(f"--oracle supports at most {MAX_ORACLE_SETS} sets, instance has {instance.m}")
    report = replay(args, instance, stream)
    write_report(args.report, report)
    return EXIT_OK if report["summary"]["violations"] == 0 else EXIT_AUDIT


def cmd_bench(args) -> int:
    configs = []
    for algo in args.algos:
        for f in args.fs:
            for epsilon in args.epsilons:
                for n in args.ns:
                    params = GenParams(
                        m=max(args.m, f), n_max=2 * n, n_initial=n, f=f, C=args.C, epsilon=epsilon,
                        t=args.t, close_out=args.close_out, seed=args.seed,
                    )
                    instance = gen_instance(params)
                    stream = gen_stream(instance, GenParams(**{**params.__dict__, "seed": stream_seed(args.seed)}))
                    run_args = argparse.Namespace(
                        algo=algo, epsilon=None, strategy=args.strategy,
                        budget_constant=args.budget_constant, check_every=0, oracle=False,
                        timing=args.timing,
                    )
                    result = replay(run_args, instance, stream)
                    summary = result["summary"]
                    updates = len(instance.element_ids) + summary["updates"]
                    entry = {
                        "algo": algo, "n": n, "f": f, "epsilon": epsilon, "C": args.C, "m": instance.m,
                        "updates": summary["updates"],
                        "preprocessing_work": summary["preprocessing_work"],
                        "total_work": summary["total_work"],
                        "max_work_per_update": summary["max_work_per_update"],
                        "mean_work_per_update": summary["mean_work_per_update"],
                        "mean_work_including_initial": (summary["preprocessing_work"] + summary["total_work"]) / max(1, updates),
                    }
                    if algo == "worstcase":
                        entry["levels"] = result["config"]["levels"]
                        entry["budget"] = result["config"]["budget"]
                    if args.timing:
                        entry["wall_clock_seconds"] = summary["wall_clock_seconds"]
                    configs.append(entry)
    write_report(args.report, {"kind": "bench", "configs": configs})
    return EXIT_OK


class OracleTooLarge(DynCoverError, ValueError):
    """``--oracle`` requested on an instance beyond the exact solver's reach."""


def _csv(kind):
    def parse(text: str):
        try:
            return [kind(x) for x in text.split(",") if x]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}") from None
    return parse


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyncover", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate an instance and an update stream")
    gen.add_argument("--m", type=int, required=True, help="number of sets")
    gen.add_argument("--n-max", type=int, required=True, help="live-element capacity")
    gen.add_argument("--n-initial", type=int, default=None, help="initial elements (default n-max/2)")
    gen.add_argument("--f", type=int, required=True, help="maximum sets per element")
    gen.add_argument("--C", type=float, default=2.0, help="cost range parameter")
    gen.add_argument("--epsilon", type=float, default=0.1)
    gen.add_argument("--t", type=int, default=100, help="stream length")
    gen.add_argument("--insert-fraction", type=float, default=0.5)
    gen.add_argument("--delete-burst", type=float, default=0.0, help="per-step chance of a deletion run")
    gen.add_argument("--close-out", action="store_true", help="delete everything at the end")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--instance", required=True, help="instance output path")
    gen.add_argument("--stream", required=True, help="stream output path")
    gen.set_defaults(handler=cmd_gen)

    run = sub.add_parser("run", help="replay a stream through one engine")
    run.add_argument("--algo", choices=("amortized", "worstcase", "naive"), required=True)
    run.add_argument("--instance", required=True)
    run.add_argument("--stream", required=True)
    run.add_argument("--epsilon", type=float, default=None, help="override the instance epsilon")
    run.add_argument("--check-every", type=_positive_int, default=1, help="audit period (0 disables)")
    run.add_argument("--oracle", action="store_true", help="compare against the exact optimum")
    run.add_argument("--budget-constant", type=float, default=20.0)
    run.add_argument("--strategy", choices=(SIMPLE, EFFICIENT), default=EFFICIENT)
    run.add_argument("--timing", action="store_true", help="add wall-clock seconds to the report")
    run.add_argument("--report", required=True)
    run.set_defaults(handler=cmd_run)

    bench = sub.add_parser("bench", help="sweep n, f and epsilon and record work counters")
    bench.add_argument("--algos", type=_csv(str), default=["amortized", "worstcase"])
    bench.add_argument("--ns", type=_csv(int), default=[50, 100, 200])
    bench.add_argument("--fs", type=_csv(int), default=[2, 3])
    bench.add_argument("--epsilons", type=_csv(float), default=[0.1])
    bench.add_argument("--m", type=int, default=20)
    bench.add_argument("--C", type=float, default=2.0)
    bench.add_argument("--t", type=int, default=500)
    bench.add_argument("--close-out", action="store_true")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--budget-constant", type=float, default=20.0)
    bench.add_argument("--strategy", choices=(SIMPLE, EFFICIENT), default=EFFICIENT)
    bench.add_argument("--timing", action="store_true")
    bench.add_argument("--report", required=True)
    bench.set_defaults(handler=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "algos", None):
        unknown = set(args.algos) - {"amortized", "worstcase", "naive"}
        if unknown:
            parser.error(f"unknown algorithm(s): {', '.join(sorted(unknown))}")
    if getattr(args, "check_every", None) is not None and args.oracle and args.check_every == 0:
        parser.error("--oracle needs audits; use --check-every N with N >= 1")
    try:
        return args.handler(args)
    except FileNotFoundError as exc:
        print(f"dyncover: file not found: {exc.filename}", file=sys.stderr)
    except (DynCoverError, ValueError) as exc:
        print(f"dyncover: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
