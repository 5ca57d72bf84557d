"""Command line entry point (``qagt``)."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .autodiff import NumericError
from .circuit import CircuitError
from .features import sample_descriptors
from .model import VARIANTS, param_count
from .noise import SimulationError, build_dataset, save_dataset

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("qagt_mlp")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                   help="overrides [data].seed and [train].seed")
    p.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="TOML config file")
    p.add_argument("--out-dir", type=Path, default=argparse.SUPPRESS, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="qagt", parents=[common],
                                     description="Learned error mitigation for TFIM circuits.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="simulate a labelled dataset")
    p.add_argument("--out", type=Path, help="dataset path (default <out-dir>/dataset.jsonl)")
    p.add_argument("--materialize-features", action="store_true",
                   help="store descriptor vectors in every record")
    p.add_argument("--jobs", type=int, default=1)

    for name, helptext in [("train", "sweep learning rates and save the best checkpoint"),
                           ("baseline", "ridge baseline predictions on the validation split")]:
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--data", type=Path, required=True)

    p = sub.add_parser("eval", parents=[common], help="per-qubit and per-step error tables")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, required=True)

    p = sub.add_parser("ablate", parents=[common], help="train every variant over several seeds")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at --seed")
    p.add_argument("--variants", nargs="+", choices=VARIANTS, default=list(VARIANTS))

    p = sub.add_parser("lightcone-stats", parents=[common], help="lightcone locality table")
    p.add_argument("--circuits", type=Path, required=True,
                   help=".qasm file, directory of .qasm files, or dataset JSONL")

    p = sub.add_parser("cost-model", parents=[common], help="execution counts versus full ZNE")
    p.add_argument("--m", type=int, nargs="+", default=[2, 3])
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=400)

    sub.add_parser("param-count", parents=[common], help="trainable parameter count")
    return parser


def _out_dir(args) -> Path:
    out = getattr(args, "out_dir", None) or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args, cfg):
    samples = build_dataset(cfg.data, n_jobs=args.jobs)
    if args.materialize_features:
        for s in samples:
            s.descriptor = {q: v.tolist() for q, v in sample_descriptors(s).items()}
    path = args.out or _out_dir(args) / "dataset.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(samples, path)
    print(f"wrote {len(samples)} circuits to {path}")


def cmd_train(args, cfg):
    samples = pl.read_dataset(args.data)
    res = pl.train(samples, cfg)
    out = _out_dir(args)
    pl.write_train_log(res.log_rows, out / "train_log.csv")
    pl.save_checkpoint(res.estimator, out / "checkpoint", seed=cfg.train.seed)
    print(f"best lr {res.best_lr:g}: val_mse {res.estimator.best_val_mse_:.6g} "
          f"at epoch {res.estimator.best_epoch_}; checkpoint in {out / 'checkpoint'}")


def cmd_eval(args, cfg):
    samples = pl.read_dataset(args.data)
    est = pl.load_checkpoint(args.checkpoint)
    report = pl.evaluate(est, samples, cfg)
    paths = report.write(_out_dir(args))
    for method in ("qagt", "baseline", "unmitigated", "zne"):
        if method in report.methods:
            print(f"{method:12s} total MAE {report.mae(method)['total']:.6g}")
    print("wrote " + ", ".join(str(p) for p in paths))


def cmd_ablate(args, cfg):
    samples = pl.read_dataset(args.data)
    seeds = [cfg.train.seed + i for i in range(args.seeds)]
    rows = pl.ablate(samples, cfg, seeds, args.variants)
    measured = samples[0].circuit.measured_qubits
    path = pl.write_csv(_out_dir(args) / "ablation.csv", pl.ablation_header(measured), rows)
    print(f"wrote {path}")


def cmd_baseline(args, cfg):
    rows = pl.ridge_baseline(pl.read_dataset(args.data), cfg)
    path = pl.write_csv(_out_dir(args) / "baseline_predictions.csv", pl.BASELINE_HEADER, rows)
    print(f"wrote {path}")


def cmd_lightcone_stats(args, cfg):
    rows = pl.lightcone_stats(pl.read_circuits(args.circuits))
    path = pl.write_csv(_out_dir(args) / "lightcone_stats.csv", pl.LIGHTCONE_HEADER, rows)
    print(f"wrote {path}")


def cmd_cost_model(args, cfg):
    rows = []
    for m in args.m:
        pair, ratio = pl.cost_model(m, args.n_train, args.n_test)
        rows.extend(pair)
        print(f"m={m}: zne {pair[0][2]}, qagt {pair[1][2]}, relative {pair[1][3]:.4f}, "
              f"break-even n_train/n_test = {ratio:.4f}")
    path = pl.write_csv(_out_dir(args) / "cost_model.csv", pl.COST_HEADER, rows)
    print(f"wrote {path}")


def cmd_param_count(args, cfg):
    print(param_count(cfg.model_config(cfg.data.n_qubits)))


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate,
    "baseline": cmd_baseline, "lightcone-stats": cmd_lightcone_stats,
    "cost-model": cmd_cost_model, "param-count": cmd_param_count,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = pl.load_config(getattr(args, "config", None), getattr(args, "seed", None))
        COMMANDS[args.command](args, cfg)
    except pl.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (pl.DataError, CircuitError, SimulationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
