"""Command-line pipeline: generate data, pretrain embeddings, fit the
simulator, train policies, evaluate, and sweep."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .agent import AblationFlags, AgentConfig, PaiAgent, run_training
from .baselines import GreedyPolicy, KnnPolicy, train_vanilla_dqn
from .data import SynthSpec, load_dataset, save_dataset, synth_dataset
from .embedding import EmbeddingTable, PretrainConfig, make_triples, pretrain
from .episodes import World, evaluate, sweep
from .report import write_report
from .simulator import CdFitConfig, CdModel, SimConfig, Tier, fit


def _add_gen_data(sub):
    p = sub.add_parser("gen-data", help="synthesize a dataset directory")
    p.add_argument("--students", type=int, default=200)
    p.add_argument("--concepts", type=int, default=30)
    p.add_argument("--exercises", type=int, default=150)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)


def cmd_gen_data(args):
    spec = SynthSpec(n_students=args.students, n_concepts=args.concepts,
                     n_exercises=args.exercises)
    bundle = synth_dataset(spec, seed=args.seed)
    save_dataset(bundle, args.out)
    print(json.dumps({
        "out": args.out,
        "students": bundle.graph.catalog.n_students,
        "train_samples": len(bundle.train_samples),
        "test_samples": len(bundle.test_samples),
    }))


def _add_pretrain(sub):
    p = sub.add_parser("pretrain", help="pretrain node embeddings")
    p.add_argument("--data", required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain)


def cmd_pretrain(args):
    bundle = load_dataset(args.data)
    cfg = PretrainConfig(dim=args.dim, epochs=args.epochs)
    table = pretrain(make_triples(bundle.graph), cfg, seed=args.seed)
    table.save(args.out, meta={"dim": args.dim, "epochs": args.epochs,
                               "seed": args.seed})
    print(json.dumps({"out": args.out, "entities": table.entities.shape[0]}))


def _add_train_sim(sub):
    p = sub.add_parser("train-sim", help="fit the diagnosis simulator")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_sim)


def cmd_train_sim(args):
    bundle = load_dataset(args.data)
    losses: list[float] = []
    model = fit(bundle.graph, CdFitConfig(epochs=args.epochs), seed=args.seed,
                loss_log=losses)
    model.save(args.out, meta={"epochs": args.epochs, "seed": args.seed})
    print(json.dumps({"out": args.out, "final_loss": losses[-1] if losses else None}))


def _add_train_policy(sub):
    p = sub.add_parser("train-policy", help="train a reinforcement-learning policy")
    p.add_argument("--data", required=True)
    p.add_argument("--policy", choices=["pai", "dqn"], default="pai")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--sim", required=True)
    p.add_argument("--episodes", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ablate", default="",
                   help="comma list: no-gcn,no-pretrain,no-selection,no-prereq")
    p.add_argument("--out", required=True)
    p.add_argument("--log-out", default=None, help="JSON-lines training log")
    p.set_defaults(func=cmd_train_policy)


def cmd_train_policy(args):
    bundle = load_dataset(args.data)
    embeddings = EmbeddingTable.load(args.embeddings)
    model = CdModel.load(args.sim)
    cfg = AgentConfig()
    samples = [(s.student, s.concept) for s in bundle.train_samples]
    if args.policy == "dqn":
        agent, log = train_vanilla_dqn(bundle.graph, model, SimConfig(), embeddings,
                                       samples, cfg, args.episodes, args.seed)
    else:
        flags = AblationFlags.from_names(
            [a for a in args.ablate.split(",") if a.strip()])
        agent, log = run_training(bundle.graph, model, SimConfig(), embeddings,
                                  samples, cfg, args.episodes, args.seed,
                                  flags=flags)
    agent.save(args.out, extra_meta={"episodes": args.episodes, "seed": args.seed})
    if args.log_out:
        with open(args.log_out, "w") as fh:
            for row in log:
                fh.write(json.dumps(row) + "\n")
    done = [row for row in log if row["outcome"] == "mastered"]
    print(json.dumps({"out": args.out, "episodes": len(log),
                      "train_success_rate": len(done) / max(1, len(log))}))


def _make_policy(name, bundle, embeddings, ckpt):
    if name == "knn":
        return KnnPolicy(bundle.graph, embeddings)
    if name == "greedy":
        return GreedyPolicy(bundle.graph)
    if name in ("pai", "dqn"):
        if ckpt is None:
            raise ValueError(f"policy {name!r} needs --ckpt")
        return PaiAgent.load(ckpt, bundle.graph, embeddings)
    raise ValueError(f"unknown policy {name!r}")


def _sim_config(args) -> SimConfig:
    cfg = SimConfig()
    if getattr(args, "beta", None) is not None:
        cfg = replace(cfg, beta=args.beta)
    if getattr(args, "alpha", None) is not None:
        cfg = replace(cfg, alpha=args.alpha)
    return cfg


def _add_eval(sub):
    p = sub.add_parser("eval", help="evaluate a policy on the test split")
    p.add_argument("--data", required=True)
    p.add_argument("--policy", choices=["pai", "knn", "greedy", "dqn"], required=True)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--sim", required=True)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--tier", choices=["easy", "medium", "hard"], default=None)
    p.add_argument("--seeds", default="0", help="comma list of evaluation seeds")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--report", required=True, help="output report directory")
    p.set_defaults(func=cmd_eval)


def cmd_eval(args):
    bundle = load_dataset(args.data)
    embeddings = EmbeddingTable.load(args.embeddings)
    model = CdModel.load(args.sim)
    policy = _make_policy(args.policy, bundle, embeddings, args.ckpt)
    sim_cfg = _sim_config(args)
    samples = bundle.test_samples
    if args.tier:
        samples = [s for s in samples if s.tier is Tier(args.tier)]
    seeds = [int(s) for s in args.seeds.split(",")]
    world = World(bundle.graph, model, sim_cfg)
    rep = evaluate(policy, world, samples, seeds, workers=args.workers,
                   config={"agent": AgentConfig().to_dict(),
                           "sim": sim_cfg.to_dict(), "tier": args.tier,
                           "seeds": seeds})
    write_report(args.report, [rep])
    print(json.dumps({"report": args.report, "policy": rep.policy,
                      "success_rate": rep.success_rate,
                      "average_turn": rep.average_turn,
                      "impatience": rep.impatience}))


def _add_sweep(sub):
    p = sub.add_parser("sweep", help="grid evaluation over patience/learnrate/tier")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=["patience", "learnrate", "tier"], required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--sim", required=True)
    p.add_argument("--policies", default="knn,greedy",
                   help="comma list; pai/dqn entries as name=ckpt.json")
    p.add_argument("--seeds", default="0")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_sweep)


def cmd_sweep(args):
    bundle = load_dataset(args.data)
    embeddings = EmbeddingTable.load(args.embeddings)
    model = CdModel.load(args.sim)
    policies = {}
    for item in args.policies.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, ckpt = item.partition("=")
        policies[name] = _make_policy(name, bundle, embeddings, ckpt or None)
    seeds = [int(s) for s in args.seeds.split(",")]
    world = World(bundle.graph, model, SimConfig())
    rows = sweep(args.kind, policies, world, bundle.test_samples, seeds,
                 workers=args.workers)
    reports = [row["report"] for row in rows]
    write_report(args.report, reports, sweep_rows=rows,
                 extra_config={"kind": args.kind, "seeds": seeds,
                               "sim": world.sim_cfg.to_dict()})
    print(json.dumps({"report": args.report, "rows": len(rows)}))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tutorlab",
        description="Goal-oriented tutoring policy lab over prerequisite graphs")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen_data(sub)
    _add_pretrain(sub)
    _add_train_sim(sub)
    _add_train_policy(sub)
    _add_eval(sub)
    _add_sweep(sub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as err:  # surface machine-readable failures
        print(json.dumps({"error": {"type": type(err).__name__,
                                    "message": str(err)}}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
