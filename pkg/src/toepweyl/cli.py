"""Command-line entry point: verify-algebra, run-weyl and flow-probe.

Exit codes: 0 success, 2 config error, 3 numerical-tolerance failure, 4 internal error.
Output files never contain timings or absolute paths, so two runs with the same
config, seed and version produce byte-identical directories.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import traceback
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import AccuracyError, ConfigError, ToepWeylError
from .experiments import flow_probe, run_weyl, verify_algebra
from .export import sha256_file, write_json

EXIT_OK, EXIT_CONFIG, EXIT_TOLERANCE, EXIT_INTERNAL = 0, 2, 3, 4

DEFAULT_PRESET = {"verify-algebra": "algebra", "run-weyl": "sphere", "flow-probe": "flow"}

log = logging.getLogger("toepweyl")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: config error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="INI config file, or a preset name (sphere, fock, offlevel, algebra, flow)")
    common.add_argument("--out", metavar="DIR", default="toepweyl-out", help="output directory")
    common.add_argument("--seed", type=int, help="overrides [run] seed")
    common.add_argument("--threads", type=int, help="worker threads for independent cells")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = _Parser(prog="toepweyl", description="Toeplitz-operator Weyl-law experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("verify-algebra", parents=[common], help="symplectic, Folland and metaplectic suites")
    sub.add_parser("run-weyl", parents=[common], help="spectral pipelines for the configured model")
    sub.add_parser("flow-probe", parents=[common], help="trajectories, holonomy slope and periods")
    return parser


def _run_stages(command, cfg, out: Path):
    if command == "verify-algebra":
        return verify_algebra(cfg)
    if command == "run-weyl":
        return [run_weyl(cfg, out)]
    return [flow_probe(cfg, out)]


def write_manifest(out: Path, command: str, cfg, files) -> Path:
    rel = sorted({Path(f).resolve().relative_to(out.resolve()).as_posix() for f in files})
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config_sha256": cfg.digest,
        "config": cfg.to_dict() | {"threads": None},
        "files": [{"path": p, "sha256": sha256_file(out / p)} for p in rel],
    }
    return write_json(out / "manifest.json", manifest)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    stage = "config"
    try:
        cfg = load_config(args.config, DEFAULT_PRESET[args.command])
        overrides = {k: v for k, v in (("seed", args.seed), ("threads", args.threads)) if v is not None}
        if overrides.get("threads", 1) < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = dataclasses.replace(cfg, **overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        stage = args.command
        results = _run_stages(args.command, cfg, out)
        stage = "export"
        report = write_json(out / "report.json", {
            "command": args.command, "passed": all(r.passed for r in results),
            "stages": [r.to_json() for r in results],
        })
        files = [report] + [f for r in results for f in r.files]
        write_manifest(out, args.command, cfg, files)
    except ConfigError as exc:
        print(f"config error [{stage}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AccuracyError as exc:
        print(f"tolerance failure [{stage}]: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except ToepWeylError as exc:
        print(f"error [{stage}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - every unexpected failure maps to exit 4
        print(f"internal error [{stage}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        return EXIT_INTERNAL
    for r in results:
        for c in r.checks:
            flag = "PASS" if c.passed else "FAIL"
            print(f"{flag} {r.stage}:{c.name} value={c.value:.3e} {c.relation} {c.tolerance:.3e}")
    failed = [f"{r.stage}:{name}" for r in results for name in r.failures]
    if failed:
        print("failing invariant(s): " + ", ".join(failed), file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
