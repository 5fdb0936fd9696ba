"""Train and evaluate every ablation variant on one generated corpus.

    python scripts/run_ablation.py --out runs/ablation [--config base.yaml] [--group modules]

Writes <out>/<variant>/{model.ckpt, report_novel.json, report_all.json} and a
summary table <out>/summary.json.
"""
import argparse
import json
import logging
from pathlib import Path

from vidrel.config import RunConfig, load_config
from vidrel.experiments import ablation_configs
from vidrel.pipeline import gen_data, run_eval, run_train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--config")
    ap.add_argument("--group", choices=("modules", "iterations", "context", "all"), default="all")
    ap.add_argument("--epochs", type=int, help="override train.epochs for every variant")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    base = load_config(args.config) if args.config else RunConfig().validate()
    if args.epochs is not None:
        base.train.epochs = args.epochs
    out = Path(args.out)
    data = out / "data"
    gen_data(base, data)
    summary = {}
    for name, cfg in ablation_configs(base, args.group).items():
        run = out / name.replace("/", "_").replace(" ", "_").replace("=", "")
        logging.info("variant %s -> %s", name, run)
        run_train(cfg, data, run, evaluate_train=False)
        row = {}
        for split in ("novel", "all"):
            rep = run_eval(cfg, run / "model.ckpt", data, split, run / f"report_{split}.json").to_dict()
            row[split] = {k: rep[k] for k in ("mAP", "R@50", "R@100", "mAP_o")}
        summary[name] = row
        logging.info("  %s", json.dumps(row))
    (out / "summary.json").write_text(json.dumps(summary, indent=1))
    print(json.dumps(summary, indent=1))


if __name__ == "__main__":
    main()
