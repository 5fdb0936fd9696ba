"""Overfit the default desk model on the fixed 4-video corpus and report training-set metrics.

    python scripts/overfit_demo.py [--epochs 300] [--log overfit.jsonl]
"""
import argparse
import json

from vidrel.experiments import OVERFIT_EPOCHS, run_overfit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=OVERFIT_EPOCHS)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--log", help="write per-step loss records here")
    args = ap.parse_args()
    fh = open(args.log, "w") if args.log else None

    def progress(rec):
        if fh:
            fh.write(json.dumps(rec) + "\n")
        if rec["step"] % 50 == 0:
            print(f"step {rec['step']:5d}  total {rec['total']:.4f}", flush=True)

    res = run_overfit(args.seed, args.epochs, progress)
    if fh:
        fh.close()
    print(json.dumps({"steps": res.steps, "initial_loss": res.initial_loss, "loss_at_200": res.loss_at_200,
                      "cpu_seconds": round(res.cpu_seconds, 1), "R@50": res.final_report["R@50"],
                      "mAP": res.final_report["mAP"], "mAP_o": res.final_report["mAP_o"]}, indent=1))


if __name__ == "__main__":
    main()
