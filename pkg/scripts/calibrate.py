"""Re-run the defender-budget sweep and rewrite data/calibration.json.

    python3 scripts/calibrate.py --trials 400
"""
import argparse
import json
from pathlib import Path

from protocol_games.experiments import calibration_sweep, choose_kappa

TARGET = Path(__file__).resolve().parent.parent / "src/protocol_games/data/calibration.json"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--q", type=int, default=320)
    ap.add_argument("--attacker-samples", type=int, default=18000)
    ap.add_argument("--budgets", type=int, nargs="+", default=[0, 1, 2, 3, 4, 6, 8, 10, 12, 16, 20, 40, 400])
    ap.add_argument("--trials", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--dry-run", action="store_true", help="print instead of writing the file")
    args = ap.parse_args()

    sweep = calibration_sweep(args.eps, args.q, args.attacker_samples, args.budgets, args.trials, args.seed)
    out = {
        "description": f"Transferability of the encrypted-band attack against a midpoint-ERM defender drawing t samples; "
                       f"eps = {args.eps}, q = {args.q}, N = {args.attacker_samples}, {args.trials} trials per point.",
        "epsilon": args.eps,
        "q": args.q,
        "attacker_samples": args.attacker_samples,
        "sweep": sweep,
        "target": 0.9,
        "kappa": choose_kappa(sweep, args.eps),
    }
    text = json.dumps(out, indent=2) + "\n"
    if args.dry_run:
        print(text, end="")
    else:
        TARGET.write_text(text)
        print(f"kappa = {out['kappa']} written to {TARGET}")


if __name__ == "__main__":
    main()
