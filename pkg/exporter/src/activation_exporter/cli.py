"""CLI for exporting activations and reference embeddings."""

import argparse
import sys

from .export import ExportError, ExportJob, export_activations, export_reference_embeddings


def build_parser():
    parser = argparse.ArgumentParser(prog="activation-exporter", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("export-activations", help="max-pooled per-layer hidden states over a dev set")
    p.add_argument("--model", required=True, help="model path or hub id")
    p.add_argument("--dev-set", required=True, help="JSON Lines with id and query per line")
    p.add_argument("--out", required=True, help="output container path")
    p.add_argument("--layers", help="comma list of block indices (default: all)")
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--max-length", type=int, default=128)

    p = sub.add_parser("export-embeddings", help="sentence embeddings of the dev set")
    p.add_argument("--encoder", required=True, help="encoder path or hub id")
    p.add_argument("--dev-set", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--max-length", type=int, default=128)
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.command == "export-activations":
            layers = [int(x) for x in args.layers.split(",")] if args.layers else None
            job = ExportJob(
                model_ref=args.model,
                dev_set_path=args.dev_set,
                output_path=args.out,
                layers=layers,
                batch_size=args.batch_size,
                max_length=args.max_length,
            )
            export_activations(job)
        else:
            export_reference_embeddings(
                args.dev_set, args.encoder, args.out, batch_size=args.batch_size, max_length=args.max_length
            )
    except ExportError as exc:
        print(f"activation-exporter: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"activation-exporter: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
