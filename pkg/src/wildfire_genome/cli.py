"""Command line entry point: ``wildfire-genome <stage> --config cfg.json --out DIR``."""

import argparse
import json
import logging
import sys

from .exceptions import WildfireGenomeError
from .pipeline import STAGES, Workspace, load_config, run_pipeline, run_stage

COMMANDS = {
    "synth": "generate a synthetic multi-region cell table",
    "label": "derive composite risk scores and quartile classes per region",
    "train": "split, tune and fit one forest per region",
    "evaluate": "score each regional model on its held-out cells",
    "explain": "Tree SHAP attributions and global importance",
    "ice": "ICE curves and partial dependence for the top features",
    "transfer": "cross-region transfer matrices",
    "pipeline": "run every stage in order",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="wildfire-genome", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file (defaults are used for missing keys)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        ws = Workspace(args.out, load_config(args.config, args.seed))
        if args.command == "pipeline":
            result = run_pipeline(ws)
        else:
            result = run_stage(args.command, ws)
    except WildfireGenomeError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(json.dumps({"error": "NumericError", "message": str(exc)}), file=sys.stderr)
        return 4
    print(json.dumps({"command": args.command, "out": str(ws.out), "config_hash": ws.hash,
                      "result": result}, default=str))
    return 0


assert set(STAGES) <= set(COMMANDS)

if __name__ == "__main__":
    sys.exit(main())
