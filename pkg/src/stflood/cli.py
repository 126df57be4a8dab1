"""Command-line harness: collect, train, quantize, eval, compare.

Exit codes: 0 success, 2 validation error (bad input, missing file), 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from stflood.coordinator import make_controller, mab_log_csv, round_log_csv, run_experiment
from stflood.core import InterferencePattern, ValidationError
from stflood.dqn.io import load_model, save_model
from stflood.dqn.model import MlpModel, QuantizedModel, agreement_report, quantize
from stflood.dqn.train import TrainConfig, Trainer
from stflood.scenario import CONTROLLERS, Scenario, get_scenario
from stflood.simnet.topology import Topology
from stflood.traceenv import TraceEnvironment, collect_trace, load_trace, save_trace

log = logging.getLogger("stflood")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
SWEEP_DUTIES = (0, 5, 10, 15, 20, 25, 30, 35)


def _scenario(args) -> Scenario:
    topo = Topology.load(args.topology) if getattr(args, "topology", None) else None
    scen = get_scenario(args.scenario, topo)
    if topo is not None:
        scen = replace(scen, topology_ref=str(args.topology))
    if getattr(args, "seed", None) is not None:
        scen = scen.with_overrides(seed=args.seed)
    return scen


def _deployable(model) -> QuantizedModel:
    return model if isinstance(model, QuantizedModel) else quantize(model)


def _load_dqn(path) -> QuantizedModel | None:
    if path is None:
        return None
    return _deployable(load_model(path))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_collect(args) -> int:
    scen = _scenario(args)
    trace = collect_trace(scen, args.blocks, range(args.n_min, args.n_max + 1), seed=scen.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_trace(trace, out)
    print(json.dumps({"trace": str(out), "scenario_hash": scen.digest(), **trace.balance_report()}, indent=2))
    return EXIT_OK


def cmd_train(args) -> int:
    out = Path(args.out)
    if args.resume:
        trainer = Trainer.resume(args.resume)
    else:
        trace = load_trace(args.trace)
        overrides = {k: v for k, v in (("iterations", args.iterations), ("optimizer", args.optimizer),
                                        ("learning_rate", args.learning_rate),
                                        ("quant_aware_fraction", args.quant_aware_fraction)) if v is not None}
        trainer = Trainer(TraceEnvironment(trace), replace(TrainConfig(), **overrides), seed=args.seed)
    end = trainer.config.iterations
    step = args.checkpoint_every or end
    while trainer.step < end:
        trainer.run(min(trainer.step + step, end))
        if args.checkpoint:
            trainer.checkpoint(args.checkpoint)
    # run() at the end is a no-op that hands back the deployable (grid-snapped) model
    model = trainer.run(end)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    curve = Path(args.curve) if args.curve else out.with_name(out.stem + "_curve.csv")
    _write(curve, f"# seed={trainer.seed} iterations={end}\n" + trainer.log.curve_csv())
    print(json.dumps({"model": str(out), "curve": str(curve), "iterations": trainer.step}))
    return EXIT_OK


def cmd_quantize(args) -> int:
    model = load_model(args.model)
    if isinstance(model, QuantizedModel):
        float_model, qmodel = model.dequantize(), model
    else:
        float_model, qmodel = model, quantize(model)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(qmodel, out)
    report = agreement_report(float_model, qmodel, args.samples, args.seed or 0)
    text = json.dumps({"model": str(out), **report}, indent=2)
    if args.report:
        _write(Path(args.report), text + "\n")
    print(text)
    return EXIT_OK


def _evaluate(scen: Scenario, mode: str, model, seed: int, rounds: int | None = None):
    if mode == "dqn" and model is None:
        raise ValidationError("controller dqn needs --model")
    controller = make_controller(mode, scen, model, forwarder_seed=seed)
    return run_experiment(scen, controller, mode=mode, seed=seed, rounds=rounds)


def cmd_eval(args) -> int:
    scen = _scenario(args)
    mode = args.controller or scen.controller
    result = _evaluate(scen, mode, _load_dqn(args.model), scen.seed, args.rounds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "rounds.csv").write_text(round_log_csv(result))
    (out / "summary.json").write_text(json.dumps(result.summary(), indent=2) + "\n")
    blocks = mab_log_csv(result)
    if blocks is not None:
        (out / "mab_blocks.csv").write_text(blocks)
    s = result.summary()
    print(f"{mode}: reliability {s['reliability_pct']:.3f} %  radio-on {s['avg_radio_on_ms']:.3f} ms  "
          f"({s['rounds']} rounds) -> {out}")
    return EXIT_OK


COMPARE_FIELDS = ("scenario", "scenario_hash", "controller", "duty_pct", "seed", "reliability_pct",
                  "avg_radio_on_ms", "mean_ntx")


def cmd_compare(args) -> int:
    base = _scenario(args)
    controllers = [c.strip() for c in args.controllers.split(",") if c.strip()]
    bad = [c for c in controllers if c not in CONTROLLERS]
    if bad or not controllers:
        raise ValidationError(f"unknown controllers {bad or controllers}")
    model = _load_dqn(args.model)
    if args.sweep:
        scenarios = []
        for duty in SWEEP_DUTIES:
            pat = InterferencePattern.from_duty(duty / 100) if duty else InterferencePattern()
            scenarios.append((duty, base.with_overrides(name=f"sweep-{duty}", timeline=[(0, pat)])))
    else:
        scenarios = [(None, base)]
    rows = []
    for duty, scen in scenarios:
        for mode in controllers:
            res = _evaluate(scen, mode, model, scen.seed, args.rounds)
            traj = res.n_trajectory
            rows.append({
                "scenario": scen.name, "scenario_hash": scen.digest(), "controller": mode,
                "duty_pct": "" if duty is None else duty, "seed": scen.seed,
                "reliability_pct": round(res.reliability_pct, 6),
                "avg_radio_on_ms": round(res.avg_radio_on_ms, 6),
                "mean_ntx": round(sum(traj) / len(traj), 6),
            })
    buf = io.StringIO()
    buf.write(f"# scenario={base.name} scenario_hash={base.digest()} seed={base.seed}\n")
    w = csv.DictWriter(buf, COMPARE_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.csv").write_text(buf.getvalue())
    (out / "compare.json").write_text(json.dumps(rows, indent=2) + "\n")
    for r in rows:
        duty = f"{r['duty_pct']:>3}% " if r["duty_pct"] != "" else ""
        print(f"{duty}{r['controller']:<7} reliability {r['reliability_pct']:8.3f} %  "
              f"radio-on {r['avg_radio_on_ms']:7.3f} ms  mean N {r['mean_ntx']:.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stflood", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, default="dynamic"):
        sp.add_argument("--scenario", default=default,
                        help="built-in name (free, dynamic, mab, mixed, static-<duty%%>) or scenario JSON file")
        sp.add_argument("--topology", help="topology JSON file (default: built-in reference topology)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--rounds", type=int, help="stop after this many rounds (default: scenario duration)")

    sp = sub.add_parser("collect", help="record a sweep trace under a scenario")
    scenario_args(sp, "mixed")
    sp.add_argument("--blocks", type=int, default=1000)
    sp.add_argument("--n-min", type=int, default=1)
    sp.add_argument("--n-max", type=int, default=8)
    sp.add_argument("--out", required=True, help="trace file (JSONL)")
    sp.set_defaults(func=cmd_collect)

    sp = sub.add_parser("train", help="train a Q-network on a trace")
    sp.add_argument("--trace")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--optimizer", choices=("sgd", "adam"))
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--quant-aware-fraction", type=float,
                    help="final share of iterations trained through the fixed-point forward pass")
    sp.add_argument("--out", required=True, help="model file (.json)")
    sp.add_argument("--curve", help="training curve CSV (default: next to the model)")
    sp.add_argument("--checkpoint", help="write a resumable checkpoint here")
    sp.add_argument("--checkpoint-every", type=int)
    sp.add_argument("--resume", help="continue from a checkpoint")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("quantize", help="scale-100 fixed-point export with agreement report")
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True, help=".json or .bin")
    sp.add_argument("--samples", type=int, default=100_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--report", help="also write the report JSON here")
    sp.set_defaults(func=cmd_quantize)

    sp = sub.add_parser("eval", help="run one controller over a scenario")
    scenario_args(sp)
    sp.add_argument("--controller", choices=CONTROLLERS)
    sp.add_argument("--model")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("compare", help="side-by-side controller metrics")
    scenario_args(sp, "static-10")
    sp.add_argument("--controllers", default="dqn,pid,static")
    sp.add_argument("--model")
    sp.add_argument("--sweep", action="store_true", help="static jammer sweep 0-35 %% in 5 %% steps")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "train" and not args.resume and not args.trace:
        parser.error("train needs --trace or --resume")
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
