"""Command-line entry point.

Subcommands: ``simulate`` and ``compare`` run Monte-Carlo sweeps,
``localize`` solves one scene file, ``semiphysical`` benchmarks the
bundled measured dataset.  Exit status is 0 on success, 1 for invalid
input or usage, 2 for solver failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from ..baselines import srls_localize
from ..errors import EdmPoseError, ValidationError
from ..posture import PoseEstimate, _range_residuals, cepp_localize, epp_localize
from .experiment import ExperimentConfig, _fmt, load_config, run_experiment
from .fixtures import SEMANTICS, run_semiphysical, semiphysical_csv
from .scenefile import load_scene

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text):
    return tuple(v.strip().lower() for v in text.split(",") if v.strip())


def _experiment_args(sub):
    sub.add_argument("config", nargs="?", help="YAML experiment config")
    sub.add_argument("--runs", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--methods", type=_names, help="comma-separated, e.g. epp1,epp2,srls")
    sub.add_argument("--eta", type=_floats, help="multiplicative noise levels")
    sub.add_argument("--sigma", type=_floats, help="additive noise levels")
    sub.add_argument("--nlos", action="store_true", help="add exponential NLOS bias to --sigma noise")
    sub.add_argument("--gamma", type=float, help="mean NLOS bias")
    sub.add_argument("--nlos-fraction", type=float, help="share of pairs carrying NLOS bias")
    sub.add_argument("--prior-radius", type=float)
    sub.add_argument("--threads", type=int, help="worker processes (default: $EDMPOSE_THREADS or 1)")
    sub.add_argument("--output", "-o", help="write CSV here instead of stdout")


def build_parser():
    parser = _Parser(prog="edmpose", description="EDM posture positioning toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="Monte-Carlo run; deterministic CSV")
    _experiment_args(sim)
    sim.add_argument("--timing", help="also write per-cell wallclock seconds to this CSV")

    cmp_ = subs.add_parser("compare", help="multi-method sweep with timings")
    _experiment_args(cmp_)

    loc = subs.add_parser("localize", help="localize one scene file, print pose JSON")
    loc.add_argument("scene")
    loc.add_argument("--measurements", help="separate JSON file with 'distances'")
    loc.add_argument("--method", default="epp2", choices=["epp1", "epp2", "cepp2", "srls"])
    loc.add_argument("--clamp", action="store_true",
                     help="clamp infeasible plane projections instead of failing (cepp2)")
    loc.add_argument("--output", "-o")

    semi = subs.add_parser("semiphysical", help="benchmark the measured pump dataset")
    semi.add_argument("--fixture", help="dataset file (default: bundled pump)")
    semi.add_argument("--semantics", choices=[*SEMANTICS, "both"],
                      help="how to read matrix entries (default: the file's flag)")
    semi.add_argument("--no-timing", action="store_true")
    semi.add_argument("--output", "-o")
    return parser


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.eta is not None and args.sigma is not None:
        raise ValidationError("--eta and --sigma are mutually exclusive")
    changes = {}
    if args.eta is not None:
        changes.update(noise_kind="multiplicative", noise_values=args.eta)
    if args.sigma is not None:
        changes.update(noise_kind="nlos" if args.nlos else "additive", noise_values=args.sigma)
    elif args.nlos:
        changes["noise_kind"] = "nlos"
    for flag, key in (("runs", "runs"), ("seed", "seed"), ("methods", "methods"),
                      ("gamma", "nlos_gamma"), ("nlos_fraction", "nlos_fraction"),
                      ("prior_radius", "prior_radius")):
        value = getattr(args, flag)
        if value is not None:
            changes[key] = value
    try:
        return replace(cfg, output=None, **changes)
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc)) from None


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _timing_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "noise_param", "mean_seconds", "runs"])
    for r in report.rows():
        writer.writerow([r["method"], _fmt(r["noise_param"]), _fmt(r["mean_seconds"]), r["runs"]])
    return buf.getvalue()


def _cmd_simulate(args):
    report = run_experiment(_config(args), threads=args.threads)
    _emit(report.to_csv(timing=False, extended=True), args.output)
    if args.timing:
        _emit(_timing_csv(report), args.timing)


def _cmd_compare(args):
    report = run_experiment(_config(args), threads=args.threads)
    _emit(report.to_csv(timing=True, extended=False), args.output)


def _cmd_localize(args):
    scene, meas = load_scene(args.scene, args.measurements)
    if args.method in ("epp1", "epp2"):
        est = epp_localize(scene, meas, use_arm_constraints=(args.method == "epp2"))
    elif args.method == "cepp2":
        est = cepp_localize(scene, meas, clamp_infeasible=args.clamp)
    else:
        R = meas.matrix(scene.p, scene.n)
        joints = []
        for i in range(scene.p):
            seen = ~np.isnan(R[i])
            joints.append(srls_localize(scene.anchors[seen], R[i, seen]))
        joints = np.array(joints)
        est = PoseEstimate(joints, scene.turntable.copy(), _range_residuals(joints, scene, meas),
                           method="srls")
    out = est.to_dict()
    out["units"] = scene.units
    _emit(json.dumps(out, indent=2) + "\n", args.output)


def _cmd_semiphysical(args):
    which = SEMANTICS if args.semantics == "both" else (args.semantics,)
    rows = []
    for semantics in which:
        rows += run_semiphysical(args.fixture, semantics)
    _emit(semiphysical_csv(rows, timing=not args.no_timing), args.output)


COMMANDS = {
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "localize": _cmd_localize,
    "semiphysical": _cmd_semiphysical,
}


def main(argv=None):
    """Run the CLI; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ValidationError, OSError) as exc:
        print(f"edmpose: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except EdmPoseError as exc:
        print(f"edmpose: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
