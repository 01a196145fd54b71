"""Command-line entry point.

Subcommands: merge, weights, synth, triplets, eval-accuracy,
eval-consistency, make-fixture.  Results go to user-specified paths (or
stdout), progress goes to stderr.  Exit codes: 0 success, 1 validation
error, 2 I/O or endpoint error.
"""

import argparse
import json
import os
import sys

from . import __version__
from .engine import load_merge_config, merge_config_from_dict, run_merge_pipeline
from .errors import ContainerFormatError, EndpointError, ValidationError
from .metrics import evaluate_accuracy, evaluate_consistency, read_pair_embeddings, read_response_pairs
from .paraphrase import EndpointClient, gen_paraphrases
from .toy import make_toy_fixture
from .triplets import load_embedding_table, mine_triplets, write_triplets
from .variations import (
    gen_howto_variations,
    gen_number_article_variations,
    read_query_corpus,
    write_variations,
)
from .weights import compute_layer_weights, load_activation_set, load_reference_similarity

ENDPOINT_URL_ENV_VAR = "CONMERGE_ENDPOINT_URL"


class _Parser(argparse.ArgumentParser):
    """argparse flavor that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _progress(msg):
    print(msg, file=sys.stderr)


def _emit(obj, out_path):
    text = json.dumps(obj, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
        _progress(f"wrote {out_path}")
    else:
        sys.stdout.write(text)


def build_parser() -> _Parser:
    parser = _Parser(prog="conmerge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"conmerge {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, parents=[], add_help=True)
        p.add_argument("--version", action="version", version=f"conmerge {__version__}")
        return p

    p = add("merge", "merge checkpoints per a config file")
    p.add_argument("--config", required=True, help="merge config JSON")
    p.add_argument("--out", required=True, help="merged checkpoint path")
    p.add_argument("--report", help="weight report path (default: OUT.report.json)")
    p.add_argument("--seed", type=int, help="override the DARE seed")
    p.add_argument("--a", type=float, dest="a", help="sigmoid scale override")
    p.add_argument("--b", type=float, dest="b", help="sigmoid offset override")
    p.add_argument("--dare-p", type=float, help="DARE drop probability override (enables DARE)")
    p.add_argument("--ties-density", type=float, help="TIES density override (enables TIES)")
    p.add_argument("--uniform-weights", action="store_true", help="skip activation analysis, w = 1 everywhere")
    p.add_argument("--threads", type=int, default=1, help="worker threads for per-tensor merging")

    p = add("weights", "compute the layer weight report without merging")
    p.add_argument("--config", required=True, help="merge config JSON (activation/reference parts used)")
    p.add_argument("--out", help="report path (default: stdout)")
    p.add_argument("--a", type=float, dest="a")
    p.add_argument("--b", type=float, dest="b")

    p = add("synth", "generate query variations from a corpus")
    p.add_argument("--corpus", required=True, help="input queries, JSON Lines")
    p.add_argument("--out", required=True, help="output variations, JSON Lines")
    p.add_argument("--kinds", default="howto,spa", help="comma list from {howto,spa,sem}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--endpoint-url", help=f"paraphrase endpoint (or ${ENDPOINT_URL_ENV_VAR})")
    p.add_argument("--paraphrases-per-query", type=int, default=1)
    p.add_argument("--copy-contexts", action="store_true",
                   help="copy each source record's context onto its variants")

    p = add("triplets", "mine triplets from an embedding container")
    p.add_argument("--embeddings", required=True, help="container with an 'embeddings' tensor")
    p.add_argument("--out", required=True, help="output triplets, JSON Lines")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-anchor", type=int, default=1)

    p = add("eval-accuracy", "mean ROUGE-L / BLEU-4 of candidates against references")
    p.add_argument("--pairs", required=True, help="JSON Lines with id, candidate, reference")
    p.add_argument("--out", help="report path (default: stdout)")

    p = add("eval-consistency", "EM/RS (and BS) rates over response pairs")
    p.add_argument("--pairs", required=True, help="JSON Lines of response pairs")
    p.add_argument("--threshold", type=float, default=0.7, help="ROUGE-L F1 threshold for RS")
    p.add_argument("--embeddings", help="optional container of response embeddings ({id}.a/{id}.b)")
    p.add_argument("--out", help="report path (default: stdout)")

    p = add("make-fixture", "emit a toy merge scenario directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--models", type=int, default=3)
    p.add_argument("--queries", type=int, default=16)
    return parser


def _cmd_merge(args) -> int:
    raw = _load_config_dict(args.config)
    if args.dare_p is not None:
        dare = raw.get("dare") or {}
        dare["drop_prob"] = args.dare_p
        raw["dare"] = dare
    if args.seed is not None and raw.get("dare"):
        raw["dare"]["seed"] = args.seed
    if args.ties_density is not None:
        raw["ties"] = {"density": args.ties_density}
    if args.a is not None:
        raw["a"] = args.a
    if args.b is not None:
        raw["b"] = args.b
    if args.uniform_weights:
        raw["uniform_weights"] = True
    cfg = merge_config_from_dict(raw)
    report_path = args.report or f"{args.out}.report.json"
    run_merge_pipeline(cfg, args.out, report_path, threads=args.threads, log=_progress)
    return 0


def _cmd_weights(args) -> int:
    cfg = load_merge_config(args.config)
    if args.a is not None:
        cfg.a = args.a
    if args.b is not None:
        cfg.b = args.b
    activation_sets = [
        load_activation_set(cfg.activation_path_for(entry.id), entry.id) for entry in cfg.tuned_paths
    ]
    ref = load_reference_similarity(cfg.reference_path)
    lw = compute_layer_weights(activation_sets, ref, cfg.a, cfg.b)
    _emit(
        {
            "weights": lw.weights.tolist(),
            "distances": lw.distances.tolist(),
            "layers": lw.weights.shape[1],
            "models": lw.model_ids,
            "config": cfg.to_dict(),
        },
        args.out,
    )
    return 0


def _cmd_synth(args) -> int:
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    unknown = set(kinds) - {"howto", "spa", "sem"}
    if unknown:
        raise ValidationError(f"unknown variation kinds: {sorted(unknown)}")
    queries = read_query_corpus(args.corpus)
    client = None
    if "sem" in kinds:
        url = args.endpoint_url or os.environ.get(ENDPOINT_URL_ENV_VAR)
        if not url:
            raise ValidationError(
                f"semantic paraphrases need --endpoint-url or ${ENDPOINT_URL_ENV_VAR}"
            )
        client = EndpointClient(url)
    variations = []
    for q in queries:
        if "howto" in kinds:
            variations.extend(gen_howto_variations(q))
        if "spa" in kinds:
            variations.extend(gen_number_article_variations(q, seed=args.seed))
        if "sem" in kinds:
            variations.extend(gen_paraphrases(q, client, n=args.paraphrases_per_query))
    contexts = {q.id: q.context for q in queries} if args.copy_contexts else None
    write_variations(variations, args.out, contexts=contexts)
    _progress(f"wrote {len(variations)} variations from {len(queries)} queries to {args.out}")
    return 0


def _cmd_triplets(args) -> int:
    table = load_embedding_table(args.embeddings)
    triplets = mine_triplets(table, seed=args.seed, per_anchor=args.per_anchor)
    write_triplets(triplets, args.out)
    _progress(f"wrote {len(triplets)} triplets to {args.out}")
    return 0


def _cmd_eval_accuracy(args) -> int:
    items = []
    with open(args.pairs, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"line {lineno}: invalid JSON ({exc})") from exc
            for key in ("id", "candidate", "reference"):
                if key not in raw:
                    raise ValidationError(f"line {lineno}: missing field {key}")
            items.append(raw)
    _emit(evaluate_accuracy(items), args.out)
    return 0


def _cmd_eval_consistency(args) -> int:
    pairs = read_response_pairs(args.pairs)
    embeddings = read_pair_embeddings(args.embeddings, pairs) if args.embeddings else None
    report = evaluate_consistency(pairs, embeddings=embeddings, threshold=args.threshold)
    _emit(report.to_dict(), args.out)
    return 0


def _cmd_make_fixture(args) -> int:
    config = make_toy_fixture(args.out, seed=args.seed, num_models=args.models, num_queries=args.queries)
    _progress(f"fixture ready under {args.out} ({len(config['tuned_paths'])} models)")
    return 0


def _load_config_dict(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON config ({exc})") from exc


_COMMANDS = {
    "merge": _cmd_merge,
    "weights": _cmd_weights,
    "synth": _cmd_synth,
    "triplets": _cmd_triplets,
    "eval-accuracy": _cmd_eval_accuracy,
    "eval-consistency": _cmd_eval_consistency,
    "make-fixture": _cmd_make_fixture,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("conmerge: error: a subcommand is required", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"conmerge {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ContainerFormatError, EndpointError, OSError) as exc:
        print(f"conmerge {args.command}: error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
