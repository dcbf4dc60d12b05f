"""Run the seeded synthetic end-to-end experiment and print every AUC.

    python scripts/end_to_end.py --data runs/synth --seed 1
"""
import argparse
import json
import logging

from dakd.config import desk_run
from dakd.experiments import end_to_end, synthetic_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", default="runs/synth", help="dataset directory (generated if absent)")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--no-ablations", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    data = synthetic_dataset(args.data)
    result = end_to_end(data, desk_run(args.seed), ablations=not args.no_ablations)
    print(json.dumps(result.as_dict(), indent=2))


if __name__ == "__main__":
    main()
