"""``reconet`` command line: synth, pipeline, report, validate-config.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
error (1 for anything unexpected).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, ReconetError

log = logging.getLogger("reconet")

# flag -> config key for the pipeline overrides
_OVERRIDES = {
    "montage": "montage",
    "bands": "bands",
    "alpha": "alpha",
    "correction": "correction",
    "artifact_threshold": "artifact_threshold_uv",
    "outlier_fraction": "outlier_fraction",
    "group_size": "group_size",
    "classifier": "classifier",
    "seed": "seed",
    "coherence_mode": "coherence_mode",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _parse_set(items) -> dict:
    """``KEY=VALUE`` pairs; VALUE is JSON when it parses, else a string."""
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="reconet", description="Rest-to-oddball EEG network reconfiguration toolkit.")
    p.add_argument("--version", action="version", version=f"reconet {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic cohort with ground-truth manifest")
    s.add_argument("--out", required=True, help="cohort directory to write")
    s.add_argument("--subjects", type=int, default=24)
    s.add_argument("--seed", type=int, default=0, help="master seed")
    s.add_argument("--effect", type=float, default=None, help="mean injected coupling change")
    s.add_argument("--settings", help="JSON file with generator settings")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one generator setting")
    s.add_argument("--jobs", type=int, default=None, help="parallel subjects (default: RECONET_JOBS or 1)")

    r = sub.add_parser("pipeline", help="run the full analysis on a cohort")
    r.add_argument("--config", help="run configuration JSON")
    r.add_argument("--input", action="append", help="cohort or subject directory (repeatable)")
    r.add_argument("--out", required=True, help="run directory to write")
    r.add_argument("--jobs", type=int, default=None, help="parallel subjects (default: RECONET_JOBS or 1)")
    r.add_argument("--montage")
    r.add_argument("--bands", nargs="+", metavar="LO-HI")
    r.add_argument("--alpha", type=float)
    r.add_argument("--correction", choices=("bonferroni", "none"))
    r.add_argument("--artifact-threshold", type=float, metavar="UV")
    r.add_argument("--outlier-fraction", type=float)
    r.add_argument("--group-size", type=int)
    r.add_argument("--classifier", choices=("lda", "svm", "both"))
    r.add_argument("--seed", type=int)
    r.add_argument("--standardize", action="store_true", default=None, help="z-score features inside each fold")
    r.add_argument("--resubstitution", action="store_true", default=None,
                   help="train = test accuracy instead of leave-one-out")
    r.add_argument("--per-electrode-amplitudes", action="store_true", default=None,
                   help="pick the P300 peak per electrode, then average")
    r.add_argument("--coherence-mode", choices=("per_segment", "concatenated"))
    r.add_argument("--no-tfd", action="store_true", help="skip the Morlet TFD (figure f2)")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key (JSON value)")

    g = sub.add_parser("report", help="regenerate figures from a finished run directory")
    g.add_argument("run_dir")
    g.add_argument("--figure", choices=("f2", "f3", "f4", "f5", "f6"))
    g.add_argument("--band", help="restrict band-specific figures to one band, e.g. 1-8")

    v = sub.add_parser("validate-config", help="check a run configuration without running it")
    v.add_argument("config")
    return p


def _pipeline_config(args):
    from .pipeline import RunConfig

    overrides = {}
    for flag, key in _OVERRIDES.items():
        value = getattr(args, flag)
        if value is not None:
            overrides[key] = value
    for flag in ("standardize", "resubstitution", "per_electrode_amplitudes"):
        if getattr(args, flag):
            overrides[flag] = True
    if args.no_tfd:
        overrides["compute_tfd"] = False
    if args.input:
        overrides["inputs"] = args.input
    overrides.update(_parse_set(args.set))
    if args.config:
        cfg = RunConfig.from_file(args.config, overrides)
    else:
        cfg = RunConfig.from_dict(overrides)
    if not cfg.inputs:
        raise ConfigError("no inputs: give --input or an 'inputs' list in the config")
    return cfg


def cmd_synth(args) -> int:
    from . import synth
    from .pipeline import resolve_jobs

    if args.subjects < 4:
        raise ConfigError(f"--subjects must be at least 4, got {args.subjects}")
    data = {}
    if args.settings:
        try:
            data = json.loads(Path(args.settings).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read generator settings {args.settings}: {exc}") from None
    data.update(_parse_set(args.set))
    settings = synth.GeneratorSettings.from_dict(data)
    manifest = synth.gen_cohort(args.out, args.subjects, args.seed, args.effect, settings,
                                jobs=resolve_jobs(args.jobs))
    print(f"wrote {len(manifest.subjects)} subjects to {args.out} "
          f"(manifest sha256 {synth.manifest_hash(manifest)})")
    return 0


def cmd_pipeline(args) -> int:
    from .pipeline import resolve_jobs
    from .report import run_pipeline

    cfg = _pipeline_config(args)
    report = run_pipeline(cfg, args.out, jobs=resolve_jobs(args.jobs))
    for band, cmp_ in report["comparisons"].items():
        n_inc = sum(e["direction"] == "increased" for e in cmp_["edges"])
        n_dec = sum(e["direction"] == "decreased" for e in cmp_["edges"])
        print(f"{band} Hz: {n_inc} increased, {n_dec} decreased edges")
    for kind, res in sorted(report["classification"].items()):
        print(f"{kind}: {res['accuracy_percent']:.2f} % ({res['scheme']})")
    for note in report["notes"]:
        print(f"note: {note}")
    print(f"report {Path(args.out) / 'report.json'} (content hash {report['content_hash']})")
    return 0


def cmd_report(args) -> int:
    from .report import render_figures

    written = render_figures(args.run_dir, args.figure, args.band)
    for path in written:
        print(path)
    return 0


def cmd_validate_config(args) -> int:
    from .pipeline import RunConfig

    cfg = RunConfig.from_file(args.config)
    cfg.validate()
    print(f"config OK (hash {cfg.config_hash()})")
    return 0


COMMANDS = {"synth": cmd_synth, "pipeline": cmd_pipeline, "report": cmd_report,
            "validate-config": cmd_validate_config}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"reconet: error: {exc}", file=sys.stderr)
        return exc.exit_code
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ReconetError as exc:
        print(f"reconet: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
