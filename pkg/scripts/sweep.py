"""Sweep one distillation knob (or run the ablation arms) on the synthetic dataset via the CLI."""
import argparse
import sys

from dakd.cli import main as cli_main


def run(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/sweep")
    p.add_argument("--param", default="alpha")
    p.add_argument("--values", default="0,2.5,7.5,15")
    p.add_argument("--arms", help="run ablation arms instead of a parameter sweep")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)
    code = cli_main(["synth", "--out", args.out])
    if code:
        return code
    which = ["--arms", args.arms] if args.arms else ["--param", args.param, "--values", args.values]
    return cli_main(["ablate", "--out", args.out, "--data", f"{args.out}/data/manifest.ini", "--desk",
                     "--seed", str(args.seed), "--shared-seed", "--workers", str(args.workers), *which])


if __name__ == "__main__":
    sys.exit(run())
