"""Command-line entry points.

    corridorpilot dataset record --worlds 28 --layout all --theme all --seed 0 --out data/
    corridorpilot dataset augment --var 0.01 --seed 1 data/
    corridorpilot dataset stats data/
    corridorpilot train --data data/ --out model.cpnv --iters 3000 --lr 0.005 --seed 0
    corridorpilot eval --model model.cpnv --data data/ --split holdout
    corridorpilot fly --model model.cpnv --world w.cpworld --threshold 0.5 --seed 0
    corridorpilot bench --model model.cpnv --suite suite.json
    corridorpilot viz class --model model.cpnv --class spin_left --steps 200 --out viz/
    corridorpilot viz saliency --model model.cpnv --data data/ --class stop --topk 50 --out viz/
    corridorpilot world gen --seed 3 --layout corridor --theme 0 --out w.cpworld
    corridorpilot serve --worlds-dir worlds/ --models-dir models/ --data-dir data/
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dataset as ds
from . import training as tr
from .commands import COMMAND_LABELS, FlightCommand
from .controller import BenchmarkSuite, format_benchmark, run_benchmark, run_trial
from .expert import rollout_expert
from .network import build_micronet, replace_head
from .visualize import (
    VizConfig,
    class_model_visualization,
    emit_report,
    saliency_map,
    saliency_overlay,
    top_scoring_images,
)
from .world import LAYOUTS, NUM_THEMES, generate_world, load_world, save_world


def _parse_multi(value: str, valid, cast):
    if value == "all":
        return list(valid)
    return [cast(v) for v in value.split(",")]


def cmd_dataset_record(args) -> int:
    layouts = _parse_multi(args.layout, LAYOUTS, str)
    themes = _parse_multi(args.theme, range(NUM_THEMES), int)
    rollouts = []
    for i in range(args.worlds):
        seed = args.seed + i
        layout = layouts[i % len(layouts)]
        theme = themes[i % len(themes)]
        plan = generate_world(seed, layout, theme)
        meta = {"theme": plan.theme, "layout": plan.layout, "seed": plan.seed}
        wid = f"w{seed:05d}"
        rollouts.append((wid, meta, rollout_expert(plan)))
        for j in range(args.jitter):
            rollouts.append((f"{wid}j{j}", meta, rollout_expert(plan, jitter_seed=j)))
    manifest = ds.record(args.out, rollouts)
    print(f"recorded {len(manifest.samples)} samples from "
          f"{len(rollouts)} rollouts into {args.out}")
    return 0


def cmd_dataset_augment(args) -> int:
    manifest = ds.augment_gaussian(args.dir, variance=args.var, seed=args.seed)
    print(f"dataset now has {len(manifest.samples)} samples")
    return 0


def cmd_dataset_stats(args) -> int:
    manifest = ds.load_manifest(args.dir)
    print(ds.class_counts(manifest).format())
    train, holdout = ds.split_world_ids(manifest)
    print(f"\nworlds: {len(manifest.worlds)} ({len(train)} train, {len(holdout)} holdout)")
    return 0


def cmd_train(args) -> int:
    manifest = ds.load_manifest(args.data)
    net = build_micronet(seed=args.seed)
    net = replace_head(net, head_lr_mult=args.head_lr_mult, seed=args.seed + 1)
    config = tr.TrainConfig(
        base_lr=args.lr, iterations=args.iters, batch_size=args.batch,
        head_lr_mult=args.head_lr_mult, seed=args.seed,
    )
    trained, report = tr.finetune(net, manifest, args.data, config)
    tr.save_checkpoint(trained, args.out)
    print(f"trained {report.iterations} iterations; "
          f"final loss {report.loss_curve[-1]:.4f}; "
          f"holdout accuracy {report.holdout_accuracy:.3f}")
    for cmd, acc in zip(COMMAND_LABELS, report.per_class_accuracy):
        print(f"  {cmd:14s} {acc:.3f}")
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    net = tr.load_checkpoint(args.model)
    manifest = ds.load_manifest(args.data)
    acc, per_class, confusion = tr.evaluate(net, manifest, args.data, args.split)
    print(f"{args.split} accuracy: {acc:.3f}")
    for cmd, a in zip(COMMAND_LABELS, per_class):
        print(f"  {cmd:14s} {a:.3f}")
    print("confusion (rows=truth, cols=prediction):")
    for row in confusion:
        print("  " + " ".join(f"{v:5d}" for v in row))
    return 0


def cmd_fly(args) -> int:
    net = tr.load_checkpoint(args.model)
    plan = load_world(args.world)
    result = run_trial(
        plan, net, threshold=args.threshold,
        sensor_noise_seed=args.seed, record_path=args.record,
    )
    print(f"outcome: {result.outcome.value} after {result.steps} steps")
    if args.record:
        print(f"trajectory log written to {args.record}")
    return 0 if result.outcome.value == "success" else 1


def cmd_bench(args) -> int:
    net = tr.load_checkpoint(args.model)
    spec = json.loads(Path(args.suite).read_text())
    suites = [BenchmarkSuite(s["name"], s["layout"], int(s["theme"]), int(s["n_trials"]))
              for s in spec["suites"]]
    results = run_benchmark(
        suites, net, threshold=args.threshold,
        world_seed_base=spec.get("world_seed_base", 10_000),
    )
    print(format_benchmark(results))
    return 0


def cmd_viz_class(args) -> int:
    net = tr.load_checkpoint(args.model)
    config = VizConfig(steps=args.steps, seed=args.seed)
    wanted = list(FlightCommand) if args.cls == "all" else [FlightCommand.from_label(args.cls)]
    images = {}
    for cmd in wanted:
        image, trace = class_model_visualization(net, int(cmd), config)
        images[cmd] = image
        print(f"{cmd.label}: score {trace[0]:.3f} -> {trace[-1]:.3f}")
    names = emit_report(images, {}, args.out)
    print(f"wrote {len(names)} files to {args.out}")
    return 0


def cmd_viz_saliency(args) -> int:
    net = tr.load_checkpoint(args.model)
    manifest = ds.load_manifest(args.data)
    cmd = FlightCommand.from_label(args.cls)
    ranked = top_scoring_images(net, manifest, args.data, int(cmd), k=args.topk)
    overlays = {}
    by_id = {s.id: s for s in manifest.samples}
    for sample_id, _score in ranked:
        frame = ds.read_ppm(Path(args.data) / by_id[sample_id].file)
        overlays[f"{args.cls}_{sample_id}"] = saliency_overlay(
            frame, saliency_map(net, frame, int(cmd))
        )
    names = emit_report({}, overlays, args.out)
    print(f"wrote {len(names)} saliency overlays to {args.out}")
    return 0


def cmd_world_gen(args) -> int:
    plan = generate_world(args.seed, args.layout, args.theme)
    save_world(plan, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_serve(args) -> int:
    from .gateway import serve

    serve(args.worlds_dir, args.models_dir, args.data_dir,
          port=args.port, step_interval=args.step_interval)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="corridorpilot",
                                description="desk-scale behavioral-cloning navigation")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dataset", help="record, augment, inspect datasets")
    dsub = d.add_subparsers(dest="dataset_command", required=True)
    rec = dsub.add_parser("record", help="record expert demonstrations")
    rec.add_argument("--worlds", type=int, default=8)
    rec.add_argument("--layout", default="corridor",
                     help=f"one of {LAYOUTS}, a comma list, or 'all'")
    rec.add_argument("--theme", default="0", help="0..6, a comma list, or 'all'")
    rec.add_argument("--seed", type=int, default=0)
    rec.add_argument("--jitter", type=int, default=2,
                     help="additional jittered-start rollouts per world")
    rec.add_argument("--out", required=True)
    rec.set_defaults(func=cmd_dataset_record)
    aug = dsub.add_parser("augment", help="double the dataset with Gaussian noise")
    aug.add_argument("--var", type=float, default=0.01)
    aug.add_argument("--seed", type=int, default=0)
    aug.add_argument("dir")
    aug.set_defaults(func=cmd_dataset_augment)
    st = dsub.add_parser("stats", help="per-command per-theme counts")
    st.add_argument("dir")
    st.set_defaults(func=cmd_dataset_stats)

    t = sub.add_parser("train", help="fine-tune the classifier")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--iters", type=int, default=3000)
    t.add_argument("--lr", type=float, default=0.005)
    t.add_argument("--batch", type=int, default=32)
    t.add_argument("--head-lr-mult", type=float, default=10.0)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", default="holdout", choices=("train", "holdout"))
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("fly", help="run one autonomous trial")
    f.add_argument("--model", required=True)
    f.add_argument("--world", required=True)
    f.add_argument("--threshold", type=float, default=0.5)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--record", default=None, help="trajectory JSONL path")
    f.set_defaults(func=cmd_fly)

    b = sub.add_parser("bench", help="run a benchmark suite file")
    b.add_argument("--model", required=True)
    b.add_argument("--suite", required=True)
    b.add_argument("--threshold", type=float, default=0.5)
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("viz", help="model visualizations")
    vsub = v.add_subparsers(dest="viz_command", required=True)
    vc = vsub.add_parser("class", help="gradient-ascent class model images")
    vc.add_argument("--model", required=True)
    vc.add_argument("--class", dest="cls", default="all")
    vc.add_argument("--steps", type=int, default=200)
    vc.add_argument("--seed", type=int, default=0)
    vc.add_argument("--out", required=True)
    vc.set_defaults(func=cmd_viz_class)
    vs = vsub.add_parser("saliency", help="saliency overlays for top images")
    vs.add_argument("--model", required=True)
    vs.add_argument("--data", required=True)
    vs.add_argument("--class", dest="cls", required=True)
    vs.add_argument("--topk", type=int, default=50)
    vs.add_argument("--out", required=True)
    vs.set_defaults(func=cmd_viz_saliency)

    w = sub.add_parser("world", help="world files")
    wsub = w.add_subparsers(dest="world_command", required=True)
    wg = wsub.add_parser("gen", help="generate a world file")
    wg.add_argument("--seed", type=int, required=True)
    wg.add_argument("--layout", default="corridor", choices=LAYOUTS)
    wg.add_argument("--theme", type=int, default=0)
    wg.add_argument("--out", required=True)
    wg.set_defaults(func=cmd_world_gen)

    s = sub.add_parser("serve", help="run the gateway service")
    s.add_argument("--port", type=int, default=8008)
    s.add_argument("--worlds-dir", required=True)
    s.add_argument("--models-dir", required=True)
    s.add_argument("--data-dir", required=True)
    s.add_argument("--step-interval", type=float, default=0.05)
    s.set_defaults(func=cmd_serve)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
