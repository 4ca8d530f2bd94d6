"""Command-line entry point: ``vxlayer run|validate|report``.

Exit status: 0 success, 1 a tolerance was violated, 2 invalid config or
usage, 3 the experiment raised.
"""

import argparse
import csv
import json
import logging
from pathlib import Path
import sys

from .config import ConfigError, ConfigParseError, output_root, parse_config
from .experiments import describe_plan, run_experiment, write_outcome

__all__ = ["main", "report", "EXIT_OK", "EXIT_FAIL", "EXIT_CONFIG", "EXIT_ERROR"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3

log = logging.getLogger("vxlayer")


def _load(path):
    try:
        return parse_config(path), None
    except FileNotFoundError:
        return None, f"config not found: {path}"
    except (ConfigParseError, ConfigError) as exc:
        return None, f"invalid config {path}: {exc}"


def _cmd_validate(args):
    cfg, err = _load(args.config)
    if err:
        print(err, file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.config}: ok ({cfg.kind}, name {cfg.name})")
    return EXIT_OK


def _cmd_run(args):
    cfg, err = _load(args.config)
    if err:
        print(err, file=sys.stderr)
        return EXIT_CONFIG
    root = output_root(cfg, args.out)
    if args.dry_run:
        print(describe_plan(cfg, root / cfg.name))
        return EXIT_OK
    try:
        outcome = run_experiment(cfg, workers=args.workers)
    except RuntimeError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ERROR
    out_dir = write_outcome(cfg, outcome, root)
    for c in outcome.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status}  [{c.criterion:>2}] {c.name}: measured {c.measured:.4g}")
    print(f"wrote {out_dir}")
    return EXIT_OK if outcome.passed else EXIT_FAIL


def report(directory):
    """Merge ``checks.csv`` of every run under ``directory``.

    Runs are deduplicated by manifest hash. Returns ``(rows, duplicates)``
    with rows as dicts keyed by the check columns.
    """
    seen = set()
    rows, duplicates = [], 0
    for manifest in sorted(Path(directory).rglob("manifest.json")):
        try:
            digest = json.loads(manifest.read_text())["manifest_hash"]
        except (ValueError, KeyError):
            log.warning("skipping unreadable manifest %s", manifest)
            continue
        if digest in seen:
            duplicates += 1
            continue
        seen.add(digest)
        checks = manifest.parent / "checks.csv"
        if not checks.exists():
            log.warning("manifest without checks.csv: %s", manifest)
            continue
        with open(checks, newline="") as fh:
            rows.extend(csv.DictReader(fh))
    return rows, duplicates


def _cmd_report(args):
    directory = Path(args.directory)
    if not directory.is_dir():
        print(f"not a directory: {directory}", file=sys.stderr)
        return EXIT_CONFIG
    rows, dups = report(directory)
    if not rows:
        log.warning("no reports found under %s", directory)
        print("criterion  status  check  measured  expected  tolerance")
        return EXIT_OK
    if dups:
        print(f"({dups} duplicate run(s) skipped)")
    print("criterion  status  experiment / check  measured  expected  tolerance")
    failed = []
    for r in sorted(rows, key=lambda r: (int(r["criterion"]), r["experiment"], r["check"])):
        ok = r["passed"] == "1"
        status = "PASS" if ok else "FAIL"
        print(
            f"{r['criterion']:>9}  {status}  {r['experiment']} / {r['check']}  "
            f"{float(r['measured']):.4g}  {float(r['expected']):.4g}  {float(r['tolerance']):.4g}"
        )
        if not ok:
            failed.append(f"criterion {r['criterion']}: {r['experiment']} / {r['check']}")
    for name in failed:
        print(f"FAILED {name}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="vxlayer", description="Viscous vortex-patch layer experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
    r.add_argument("--workers", type=int, default=1, help="process pool size for nu sweeps")
    r.add_argument("--out", help="output root (default: config output, then $VXLAYER_OUT)")
    r.set_defaults(func=_cmd_run)
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)
    s = sub.add_parser("report", help="summarize checks under a directory")
    s.add_argument("directory")
    s.set_defaults(func=_cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("--workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
