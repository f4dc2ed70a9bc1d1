"""``odcompare`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .errors import ConfigError, DataError
from .ingest import DateWindow

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4

log = logging.getLogger("odcompare")


def _common(parser: argparse.ArgumentParser, config_required: bool = True):
    parser.add_argument("--config", required=config_required, help="YAML config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--k", type=int, help="fixed number of clusters (skips the elbow search)")
    parser.add_argument("--k-range", help="elbow search range, a..b")
    parser.add_argument("--epsilon", type=float, help="additive RF smoothing (default 0: undefined cells stay undefined)")
    parser.add_argument("--include-self", dest="include_self", action="store_true", default=None)
    parser.add_argument("--exclude-self", dest="include_self", action="store_false")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--window", help="study window start..end")
    parser.add_argument("--panel-window", help="device averaging window start..end")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="odcompare", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("crosswalk-validate", "check the matching table and feature aggregation"),
        ("ingest", "stream trip records into zone flow tables"),
        ("cluster", "delineate neighbourhoods from zone features"),
        ("compare", "cluster OD matrices, RF/RFR/LRFR, normalizations, sampling rates"),
        ("run", "all stages"),
    ]:
        _common(sub.add_parser(name, help=help_))
    synth = sub.add_parser("synth", help="write a synthetic city with planted biases")
    synth.add_argument("--config", help="YAML synth config (city, window, panel_window, bias)")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int)
    synth.add_argument("-v", "--verbose", action="store_true")
    return parser


def _load_config(args):
    from .pipeline import PipelineConfig, parse_k_range

    cfg = PipelineConfig.load(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.k is not None:
        overrides["k"] = args.k
    if args.k_range:
        overrides["k_range"] = parse_k_range(args.k_range)
    if args.epsilon is not None:
        overrides["epsilon"] = args.epsilon
    if args.include_self is not None:
        overrides["include_self"] = args.include_self
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out:
        overrides["out"] = Path(args.out)
    if args.window:
        overrides["window"] = DateWindow.parse(args.window)
    if args.panel_window:
        overrides["panel_window"] = DateWindow.parse(args.panel_window)
    return replace(cfg, **overrides) if overrides else cfg


def _cmd_crosswalk(args) -> int:
    from .pipeline import load_geography

    cfg = _load_config(args)
    cfg.check_paths()
    registry, features = load_geography(cfg)
    summary = {
        "zones": registry.n_zones,
        "units": len(registry.unit_map),
        "split_units": sum(1 for e in registry.unit_map.values() if len(e) > 1),
        "defined_zones": int(features.defined.sum()),
        "undefined_zones": features.metadata["undefined_zones"],
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _cmd_ingest(args) -> int:
    from .pipeline import load_geography, stage_ingest, write_manifest

    cfg = _load_config(args)
    cfg.check_paths()
    registry, _ = load_geography(cfg)
    tables = stage_ingest(cfg, registry)
    for name, t in tables.items():
        print(f"{name}: {t.total} trips from {t.n_accepted}/{t.n_records} records; rejected {dict(t.rejected)}")
    write_manifest(cfg, "ingest")
    return EXIT_OK


def _cmd_cluster(args) -> int:
    from .pipeline import load_geography, stage_cluster, write_manifest

    cfg = _load_config(args)
    cfg.check_paths()
    _, features = load_geography(cfg)
    result = stage_cluster(cfg, features)
    note = " (no elbow found)" if result.elbow and result.elbow.no_elbow else ""
    print(f"k={result.model.k}{note}, wcss={result.model.wcss:.6g}")
    write_manifest(cfg, "cluster")
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .pipeline import load_geography, stage_compare, write_manifest

    cfg = _load_config(args)
    cfg.check_paths()
    registry, features = load_geography(cfg)
    stage_compare(cfg, registry, features)
    print(f"wrote comparison outputs to {cfg.out}")
    write_manifest(cfg, "compare")
    return EXIT_OK


def _cmd_run(args) -> int:
    from .pipeline import run_pipeline

    cfg = _load_config(args)
    result = run_pipeline(cfg)
    print(f"k={result['clustering'].model.k}; outputs in {cfg.out}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    from .synth import SynthConfig, write_scenario

    data = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"bad YAML in {args.config}: {exc}") from None
    cfg = SynthConfig.from_dict(data)
    if args.seed is not None:
        cfg = replace(cfg, city=replace(cfg.city, seed=args.seed))
    files = write_scenario(cfg, args.out)
    print(f"wrote {len(files)} files to {args.out}; run with: odcompare run --config {files['pipeline']}")
    return EXIT_OK


COMMANDS = {
    "crosswalk-validate": _cmd_crosswalk,
    "ingest": _cmd_ingest,
    "cluster": _cmd_cluster,
    "compare": _cmd_compare,
    "run": _cmd_run,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
