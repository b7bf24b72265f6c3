"""Config-driven runner: ``grwlab --config run.yaml --output-dir out``.

Config layout (YAML)::

    schema_version: 1
    experiment: wigner | grw-trajectory | protocols | dilation | sweep
    master_seed: 42
    output_dir: out           # optional if --output-dir is given
    formats: [json, csv, jsonl]   # optional; default all
    parameters: {...}

``result.json`` and ``manifest.json`` are always written.

Exit codes: 0 success, 2 invalid config (nothing written), 3 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Mapping

import yaml

from . import __version__
from .experiments import DRIVERS, ConfigError

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
TOP_KEYS = {"schema_version", "experiment", "master_seed", "parameters", "output_dir",
            "formats"}
FORMATS = ("json", "csv", "jsonl")


def load_config(path: str | Path) -> dict:
    try:
        cfg = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be a mapping")
    return cfg


def validate(cfg: Mapping, seed_override: int | None = None) -> dict:
    """Check top-level keys; return a normalized copy."""
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level key")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got "
                                            f"{cfg.get('schema_version')!r}")
    exp = cfg.get("experiment")
    if exp not in DRIVERS:
        raise ConfigError("experiment", f"expected one of {sorted(DRIVERS)}, got {exp!r}")
    seed = seed_override if seed_override is not None else cfg.get("master_seed")
    if seed is None:
        raise ConfigError("master_seed", "required (or pass --seed)")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("master_seed", f"must be a non-negative integer, got {seed!r}")
    params = cfg.get("parameters", {}) or {}
    if not isinstance(params, dict):
        raise ConfigError("parameters", "must be a mapping")
    formats = cfg.get("formats", list(FORMATS))
    if not isinstance(formats, list) or not set(formats) <= set(FORMATS):
        raise ConfigError("formats", f"must be a subset of {list(FORMATS)}, got {formats!r}")
    return {"schema_version": SCHEMA_VERSION, "experiment": exp, "master_seed": seed,
            "formats": sorted(set(formats)), "parameters": params}


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def execute(cfg: Mapping, output_dir: str | Path, jobs: int = 1) -> dict:
    """Run a validated config and write its artifacts; returns the manifest."""
    t0 = time.perf_counter()
    summary, files = DRIVERS[cfg["experiment"]](cfg["parameters"], cfg["master_seed"], jobs)
    keep = set(cfg.get("formats", FORMATS))
    files = {k: v for k, v in files.items() if k.rsplit(".", 1)[-1] in keep}
    files["result.json"] = _dump(summary)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    digests = {}
    for name, text in sorted(files.items()):
        data = text.encode()
        (out / name).write_bytes(data)
        digests[name] = hashlib.sha256(data).hexdigest()
    manifest = {"config": cfg, "master_seed": cfg["master_seed"], "version": __version__,
                "wall_time_s": time.perf_counter() - t0, "files": digests}
    (out / "manifest.json").write_text(_dump(manifest))
    return manifest


def run(config_path: str | Path, output_dir: str | Path | None = None,
        seed: int | None = None, jobs: int = 1) -> dict:
    raw = load_config(config_path)
    cfg = validate(raw, seed)
    out = output_dir or raw.get("output_dir")
    if out is None:
        raise ConfigError("output_dir", "required (or pass --output-dir)")
    return execute(cfg, out, jobs)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="grwlab", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--output-dir", help="directory for result files")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (wigner only)")
    p.add_argument("--version", action="version", version=__version__)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run(args.config, args.output_dir, args.seed, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to exit code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(manifest["files"], sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
