"""Command-line entry point: ``knnperc <subcommand> [flags]``.

Every :class:`~knnperc.harness.ExperimentConfig` field can be set from a JSON
config (``--config``) and overridden by a flag of the same name.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import typing

from . import harness
from .errors import InvalidParameterError, NotFoundError

EXIT_OK, EXIT_CONFIG, EXIT_NOT_FOUND = 0, 2, 3


def _int_list(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _case_list(text):
    # "500:3,1000:5" -> [(500, 3), (1000, 5)]
    out = []
    for item in text.split(","):
        n, k = item.split(":")
        out.append((int(n), int(k)))
    return out


_PARSERS = {"seeds": _int_list, "k_list": _int_list, "cases": _case_list}


def _field_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("-v", "--verbose", action="store_true")
    hints = typing.get_type_hints(harness.ExperimentConfig)
    for f in dataclasses.fields(harness.ExperimentConfig):
        if f.name == "experiment":
            continue
        flags = [f"--{f.name.replace('_', '-')}"]
        if "_" in f.name:
            flags.append(f"--{f.name}")
        hint = hints[f.name]
        if f.name in _PARSERS:
            p.add_argument(*flags, dest=f.name, type=_PARSERS[f.name], default=None)
        elif hint is bool:
            p.add_argument(*flags, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        else:
            base = next((t for t in (int, float, str) if t in typing.get_args(hint) or t is hint), str)
            p.add_argument(*flags, dest=f.name, type=base, default=None)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _field_parser()
    parser = argparse.ArgumentParser(prog="knnperc", description="k-NN graph percolation experiments")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in harness.EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=(harness.RUNNERS[name].__doc__ or "").split("\n")[0])
    return parser


def _summarise(cfg, result) -> dict:
    if cfg.experiment == "sample":
        return {"points": len(result), **result.metadata()}
    if cfg.experiment == "table1":
        return {"summary": result[1]}
    if cfg.experiment == "fit-sweep":
        return result[0].as_dict()
    if cfg.experiment == "bound-search":
        d = result.as_dict()
        d.pop("scan", None)
        return d
    if cfg.experiment == "coupling-verify":
        report, extra = result
        d = report.as_dict()
        d.pop("pair_table", None)
        return {**d, **extra}
    return {"rows": result}


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    logging.basicConfig(level=logging.INFO if args.pop("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config = args.pop("config")
    overrides = {k: v for k, v in args.items() if v is not None}
    try:
        if config:
            cfg = harness.ExperimentConfig.from_file(config, **overrides)
        else:
            cfg = harness.ExperimentConfig.from_dict(overrides)
        result = harness.run(cfg)
    except NotFoundError as exc:
        print(f"not found: {exc}; best={exc.best}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except (InvalidParameterError, TypeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(_summarise(cfg, result), indent=2, sort_keys=True, default=harness._json_default))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
