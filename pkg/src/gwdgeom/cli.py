"""Command line front end: ``gwdgeom run`` and ``gwdgeom sweep``.

Outputs go to ``--out`` or to the config's ``output`` directory, which is
resolved against ``$GWDGEOM_OUTPUT_ROOT`` when that variable is set.  Each
invocation finishes by writing ``manifest.json``: the configuration hash,
code version, the normalized configuration (so the manifest can be passed
back as ``--config``) and the SHA-256 of every file produced.

Exit status: 0 success, 2 configuration error, 3 trajectory left the range of
the potential, 4 grid wavefunction reached the boundary.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .tasks import TASKS, TaskFailure, run_sweep

OUTPUT_ROOT_ENV = "GWDGEOM_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_RANGE, EXIT_BOUNDARY = 0, 2, 3, 4

log = logging.getLogger("gwdgeom")


def output_dir(cfg_output: str, out: str | None) -> Path:
    if out is not None:
        path = Path(out)
    else:
        root = os.environ.get(OUTPUT_ROOT_ENV)
        path = Path(root) / cfg_output if root else Path(cfg_output)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, cfg, digest: str, command: str, files, status: str, message: str = "",
                   extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "config_sha256": digest,
        "files": [{"path": Path(f).name, "sha256": _sha256(Path(f))} for f in files],
        "message": message,
        "status": status,
        "task": cfg.task,
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values: expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gwdgeom", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run the task of a configuration"),
                       ("sweep", "repeat a propagation for several values of a parameter")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True,
                       help="YAML configuration, run manifest, or bundled name (morse1d.cfg, ...)")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for independent rows")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "sweep":
            p.add_argument("--param", default="dt", choices=["dt"], help="parameter to sweep")
            p.add_argument("--values", required=True, help="comma-separated sorted positive values")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.threads < 1:
        print("gwdgeom: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg, digest = load_config(args.config)
        values = _parse_values(args.values) if args.command == "sweep" else None
    except ConfigError as exc:
        print(f"gwdgeom: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = output_dir(cfg.output, args.out)
    log.info("%s %s -> %s", args.command, cfg.task, out)
    extra = {"sweep": {"param": args.param, "values": values}} if values is not None else None
    try:
        if args.command == "run":
            files = TASKS[cfg.task](cfg, out, args.threads)
        else:
            files = run_sweep(cfg, values, out, args.threads)
    except ConfigError as exc:
        print(f"gwdgeom: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TaskFailure as exc:
        write_manifest(out, cfg, digest, args.command, exc.files, "failed", str(exc), extra)
        print(f"gwdgeom: {exc}", file=sys.stderr)
        return EXIT_BOUNDARY if exc.kind == "boundary" else EXIT_RANGE
    write_manifest(out, cfg, digest, args.command, files, "ok", "", extra)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
