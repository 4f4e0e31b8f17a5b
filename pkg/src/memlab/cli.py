"""Command-line entry point: ``memlab {train,eval,sweep,forgetting,plot-boundary}``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
``MEMLAB_THREADS`` caps the BLAS thread pool.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from memlab import config as cfgmod
from memlab import nn
from memlab.evaluation import evaluate
from memlab.experiments import beta_sweep, forgetting_csv, forgetting_experiment, sweep_csv
from memlab.losses import LossConfig
from memlab.plotting import boundary_plot
from memlab.train import train

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _write_run_config(out: Path, config_path, cfg: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.source.yaml").write_bytes(Path(config_path).read_bytes())
    (out / "config.yaml").write_text(cfgmod.dump(cfg))


def cmd_train(config_path, out_dir, overrides=()) -> int:
    cfg = cfgmod.load(config_path, overrides)
    tcfg = cfgmod.build_train_config(cfg)
    train_ds, test_ds = cfgmod.build_datasets(cfg)
    out = Path(out_dir)
    _write_run_config(out, config_path, cfg)
    state, _ = train(train_ds, test_ds, tcfg, out_dir=out)
    print(f"trained {tcfg.epochs} epochs; best robust accuracy "
          f"{state.best_robust:.4f} at epoch {state.best_epoch}")
    return EXIT_OK


def cmd_eval(checkpoint, config_path, overrides=(), json_path=None) -> int:
    cfg = cfgmod.load(config_path, overrides)
    net = nn.load_network(checkpoint)
    _, test_ds = cfgmod.build_datasets(cfg)
    attack = cfgmod.attack_config(cfg, "attack_eval")
    report = evaluate(net, test_ds, [attack], seed=cfg["train"]["seed"])
    print(report.table())
    json_path = Path(json_path) if json_path else Path(str(checkpoint) + ".eval.json")
    json_path.write_text(report.to_json() + "\n")
    return EXIT_OK


def cmd_sweep(config_path, out_dir, overrides=()) -> int:
    cfg = cfgmod.load(config_path, overrides)
    tcfg = cfgmod.build_train_config(cfg)
    train_ds, test_ds = cfgmod.build_datasets(cfg)
    out = Path(out_dir)
    _write_run_config(out, config_path, cfg)
    rows = beta_sweep(tcfg, cfg["report"]["beta_values"], cfg["report"]["beta_mem_values"],
                      train_ds, test_ds)
    (out / "sweep.csv").write_text(sweep_csv(rows))
    for r in rows:
        print(f"beta={r['beta']:<6g} beta_mem={r['beta_mem']:<6g} "
              f"clean={r['clean']:.4f} robust={r['robust']:.4f}")
    return EXIT_OK


def _paired_config(tcfg, rep):
    method = rep["paired_method"]
    K = 1 if method.startswith("MemLoss") else 0
    loss = LossConfig(method, beta=rep["paired_beta"],
                      beta_mem=[rep["paired_beta_mem"]] * K, K=K)
    attack = replace(tcfg.train_attack, objective=rep["paired_objective"])
    return replace(tcfg, loss=loss, train_attack=attack)


def cmd_forgetting(config_path, out_dir, overrides=()) -> int:
    cfg = cfgmod.load(config_path, overrides)
    tcfg = cfgmod.build_train_config(cfg)
    train_ds, test_ds = cfgmod.build_datasets(cfg)
    if train_ds.dim != 2:
        raise cfgmod.ConfigError(f"data: forgetting experiment needs 2-D inputs, got {train_ds.dim}")
    rep = cfg["report"]
    out = Path(out_dir)
    _write_run_config(out, config_path, cfg)

    cfgs = {tcfg.loss.method: tcfg}
    if rep["paired_method"]:
        try:
            paired = _paired_config(tcfg, rep)
        except ValueError as exc:
            raise cfgmod.ConfigError(f"report.paired_method: {exc}") from None
        cfgs.setdefault(paired.loss.method, paired)
    plot_epochs = [e for e in (rep["plot_epochs"] or [tcfg.epochs]) if 2 <= e <= tcfg.epochs]
    keep = {e for n in plot_epochs for e in (n - 1, n)}
    runs = forgetting_experiment(cfgs, train_ds, test_ds, keep_epochs=keep)
    (out / "forgetting.csv").write_text(forgetting_csv(runs))

    res = (rep["plot_resolution"],) * 2
    ext = "." + rep["plot_format"]
    for name, run in runs.items():
        for n in plot_epochs:
            prev_net, prev_adv = run.snapshots[n - 1]
            cur_net, cur_adv = run.snapshots[n]
            panels = [
                (f"{name}_boundary{n - 1}_adv{n - 1}", prev_net, prev_adv),
                (f"{name}_boundary{n}_adv{n}", cur_net, cur_adv),
                (f"{name}_boundary{n}_adv{n - 1}", cur_net, prev_adv),
            ]
            for stem, net, adv in panels:
                boundary_plot(net, train_ds, out / (stem + ext), resolution=res, adv=adv)
    last = rep["forgetting_last"]
    summary = ", ".join(f"{name}={run.mean_drop(last):.6f}" for name, run in runs.items())
    print(f"mean accuracy drop on previous-epoch adversarial examples (last {last} epochs): {summary}")
    (out / "summary.txt").write_text(summary + "\n")
    return EXIT_OK


def cmd_plot_boundary(checkpoint, config_path, out_path, overrides=(), split="train") -> int:
    cfg = cfgmod.load(config_path, overrides)
    net = nn.load_network(checkpoint)
    train_ds, test_ds = cfgmod.build_datasets(cfg)
    ds = train_ds if split == "train" else test_ds
    if ds.dim != 2:
        raise cfgmod.ConfigError(f"data: boundary plots need 2-D inputs, got {ds.dim}")
    res = (cfg["report"]["plot_resolution"],) * 2
    boundary_plot(net, ds, out_path, resolution=res)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="memlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one scalar config field")

    sp = sub.add_parser("train", help="train one model")
    sp.add_argument("config")
    sp.add_argument("--out", required=True)
    common(sp)

    sp = sub.add_parser("eval", help="clean and robust accuracy of a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("config")
    sp.add_argument("--json", default=None)
    common(sp)

    sp = sub.add_parser("sweep", help="beta / beta_mem grid sweep")
    sp.add_argument("config")
    sp.add_argument("--out", required=True)
    common(sp)

    sp = sub.add_parser("forgetting", help="forgetting experiment with boundary plots")
    sp.add_argument("config")
    sp.add_argument("--out", required=True)
    common(sp)

    sp = sub.add_parser("plot-boundary", help="decision boundary of a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--split", choices=("train", "test"), default="train")
    common(sp)
    return p


def _dispatch(args) -> int:
    if args.command == "train":
        return cmd_train(args.config, args.out, args.overrides)
    if args.command == "eval":
        return cmd_eval(args.checkpoint, args.config, args.overrides, args.json)
    if args.command == "sweep":
        return cmd_sweep(args.config, args.out, args.overrides)
    if args.command == "forgetting":
        return cmd_forgetting(args.config, args.out, args.overrides)
    return cmd_plot_boundary(args.checkpoint, args.config, args.out, args.overrides, args.split)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = os.environ.get("MEMLAB_THREADS")
    try:
        if threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=int(threads)):
                return _dispatch(args)
        return _dispatch(args)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
