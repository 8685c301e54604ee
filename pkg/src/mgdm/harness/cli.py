"""Command-line entry point: ``mgdm <kind> [--config spec.json] [--out DIR] ...``."""
import argparse
import json
import sys

from ..errors import EmptyData, InvalidInput, IoError, NumericalFailure, SchemaError
from .experiments import KINDS, ExperimentSpec, default_spec, run_experiment
from .output import emit_outputs

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


def build_parser():
    ap = argparse.ArgumentParser(prog="mgdm", description="Minibatch momentum experiments.")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", help="JSON spec; fields mirror ExperimentSpec")
        sp.add_argument("--out", help="output directory (default: spec out_dir or ./out-<kind>)")
        sp.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        sp.add_argument("--reps", type=int, help="number of replications")
        sp.add_argument("--workers", type=int, help="replication worker threads")
        sp.add_argument("--full-scale", action="store_true", help="use 100 replications by default")
        sp.add_argument("--no-svg", action="store_true", help="skip plot.svg")
    return ap


def load_spec(args):
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise InvalidInput(f"config is not valid JSON: {e}") from None
        except OSError as e:
            raise IoError(f"cannot read config: {e}") from e
        if not isinstance(raw, dict):
            raise InvalidInput("config must be a JSON object")
        if raw.get("kind", args.kind) != args.kind:
            raise InvalidInput(f"config kind {raw['kind']!r} does not match {args.kind!r}")
        base = default_spec(args.kind, args.full_scale).to_dict()
        if isinstance(raw.get("sim"), dict):
            raw = dict(raw, sim={**base["sim"], **raw["sim"]})
        base.update(raw)
        base["kind"] = args.kind
        if args.full_scale and "replications" not in raw:
            base["replications"] = default_spec(args.kind, True).replications
        spec = ExperimentSpec.from_dict(base)
    else:
        spec = default_spec(args.kind, args.full_scale)
    if args.seed is not None:
        spec.seed = args.seed
    if args.reps is not None:
        spec.replications = args.reps
    if args.workers is not None:
        spec.workers = args.workers
    if args.out:
        spec.out_dir = args.out
    if spec.out_dir is None:
        spec.out_dir = f"out-{args.kind}"
    return spec


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args)
        table = run_experiment(spec)
        formats = ("csv", "json") if args.no_svg else ("csv", "json", "svg")
        paths = emit_outputs(table, spec.out_dir, spec, formats)
    except (InvalidInput, SchemaError, EmptyData) as e:
        print(f"mgdm: invalid spec: {e}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalFailure as e:
        print(f"mgdm: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (IoError, OSError) as e:
        print(f"mgdm: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    for sk in table.skipped:
        print(f"mgdm: skipped {sk['param']} ({sk['verdict']}: {sk['condition']})", file=sys.stderr)
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
