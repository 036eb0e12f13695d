"""Command line entry point: ``celldtx {config,train,infer,baseline,sweep,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import io
from .harness import (
    ScenarioConfig,
    categorize_and_report,
    make_probe_cell,
    reset_observation,
    run_baseline,
    run_inference,
    sweep_probe,
    train,
)

log = logging.getLogger("celldtx")


def _config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_config(args):
    text = json.dumps(ScenarioConfig().to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_train(args):
    cfg = _config(args)
    agent, history = train(cfg, n_episodes=args.episodes)
    io.save_model(args.out, agent, cfg.action_space(), cfg.reward, cfg.seed)
    if args.convergence:
        io.write_convergence(args.convergence, agent.q_log_)
    if args.records:
        io.write_records(args.records, history)
    log.info("trained %d steps, model written to %s", agent.n_steps_, args.out)


def cmd_infer(args):
    cfg = _config(args)
    agent, actions, reward, _ = io.load_model(args.model)
    cfg.reward = reward
    records = run_inference(agent, cfg, n_episodes=args.episodes, actions=actions)
    io.write_records(args.out, records)


def cmd_baseline(args):
    cfg = _config(args)
    io.write_records(args.out, run_baseline(cfg, n_episodes=args.episodes))


def cmd_sweep(args):
    cfg = _config(args)
    probe = make_probe_cell(cfg, args.scenario, args.repetitions)
    sweep = sweep_probe(cfg, probe)
    io.write_sweep(args.out, sweep)
    best = sweep.rows[sweep.best]
    msg = (f"scenario {args.scenario}: capacity {probe.scenario.capacity:.1f} B/TTI, "
           f"best action {sweep.best} ({best.cycle_length},{best.on_duration}) "
           f"reward {best.reward:.4f}")
    if args.model:
        agent, _, _, _ = io.load_model(args.model)
        chosen = int(agent.predict(reset_observation(probe.cell(0), cfg)[None, :])[0])
        msg += f"; model picks {chosen} reward {sweep.reward_of(chosen):.4f}"
    print(msg)


def cmd_report(args):
    report = categorize_and_report(io.read_records(args.agent), io.read_records(args.baseline))
    io.write_report(args.out, report, args.table, args.series)
    print(report.table())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="celldtx", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON scenario config (defaults if omitted)")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")

    sp = sub.add_parser("config", help="print the default config")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_config)

    sp = sub.add_parser("train", help="train an agent")
    common(sp)
    sp.add_argument("--out", required=True, help="model file")
    sp.add_argument("--convergence", help="Q-convergence CSV")
    sp.add_argument("--records", help="per-experience CSV")
    sp.add_argument("--episodes", type=int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("infer", help="evaluate a trained model")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--out", required=True, help="episode records CSV")
    sp.add_argument("--episodes", type=int)
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("baseline", help="always-active reference run")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--episodes", type=int)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("sweep", help="brute-force every action on one probe cell")
    common(sp)
    sp.add_argument("--scenario", type=int, required=True, help="probe cell id")
    sp.add_argument("--repetitions", type=int, default=4)
    sp.add_argument("--model", help="also report this model's choice")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="load-category comparison")
    sp.add_argument("--agent", required=True)
    sp.add_argument("--baseline", required=True)
    sp.add_argument("--out", required=True, help="report CSV")
    sp.add_argument("--table", help="human-readable table")
    sp.add_argument("--series", help="plot-ready JSON series")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, KeyError, OSError, io.ModelFormatError) as exc:
        print(f"celldtx {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
