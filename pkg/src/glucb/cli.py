"""``bench`` command line interface.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .harness import ConfigError, load_config, run_experiment, validate_concentration

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="Non-stationary GLM bandit benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a regret experiment and write CSV results")
    run.add_argument("--config", required=True, help="path to a flat key = value config file")
    run.add_argument("--policy", action="append", default=None, metavar="NAME", help="restrict to this policy (repeatable)")
    run.add_argument("--runs", type=int, default=None, help="override the number of independent runs")
    run.add_argument("--seed", type=int, default=None, help="override the base seed")
    run.add_argument("--out", default=None, metavar="DIR", help="override the output directory")

    conc = sub.add_parser("validate-concentration", help="Monte-Carlo check of the self-normalized bound")
    conc.add_argument("--config", required=True, help="path to a flat key = value config file")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            overrides = {
                "policies": tuple(args.policy) if args.policy else None,
                "runs": args.runs,
                "base_seed": args.seed,
                "output_dir": args.out,
            }
            config = load_config(args.config, overrides)
            result = run_experiment(config)
            for name in result.policies:
                print(f"{name}: mean cumulative regret at T={config.horizon}: {result.mean[name][-1]:.4f}")
            if result.failures:
                for run_index, seed, message in result.failures:
                    print(f"run {run_index} (seed {seed}) failed: {message}", file=sys.stderr)
                return EXIT_RUNTIME
            print(f"results written to {config.output_dir} in {result.elapsed_seconds:.1f}s")
            return EXIT_OK
        config = load_config(args.config)
        report = validate_concentration(config)
        for gamma, freq in sorted(report.frequencies.items()):
            status = "PASS" if freq <= report.threshold else "FAIL"
            print(
                f"gamma={gamma}: anytime violation frequency {freq:.4f} "
                f"(threshold {report.threshold:.4f}) {status}"
            )
        return EXIT_OK if report.passed else EXIT_RUNTIME
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
