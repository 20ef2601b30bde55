"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from kgeval import report as rep
from kgeval.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from kgeval.graph import (
    GraphError,
    SplitSpec,
    from_labeled,
    load_dataset,
    read_names,
    read_triples,
    read_types,
    save_dataset,
)
from kgeval.linkpred import write_ranks
from kgeval.models import FAMILIES
from kgeval.pairrank import DEFAULT_BUDGET, write_pair_ranks
from kgeval.training import NumericalError, TrainConfig, bundled_config, train
from kgeval.transform import (
    DEFAULT_SEPARATOR,
    binarize_cvt,
    label_relations,
    load_relation_meta,
    sample_subset,
    split,
    write_relation_meta,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _split_args(p):
    p.add_argument("--train-frac", type=float, default=0.9)
    p.add_argument("--valid-frac", type=float, default=0.05)
    p.add_argument("--test-frac", type=float, default=0.05)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgeval", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="read TSV triple files into a dataset directory")
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    p.add_argument("--test")
    p.add_argument("--types")
    p.add_argument("--mediators")
    p.add_argument("--out", required=True)

    tp = sub.add_parser("transform", help="binarize, subset, split or label a dataset")
    tsub = tp.add_subparsers(dest="action", required=True, parser_class=_Parser)
    b = tsub.add_parser("binarize")
    b.add_argument("--data", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--separator", default=DEFAULT_SEPARATOR)
    s = tsub.add_parser("subset")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--fraction", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=0)
    _split_args(s)
    s = tsub.add_parser("split")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    _split_args(s)
    lab = tsub.add_parser("label")
    lab.add_argument("--data", required=True)
    lab.add_argument("--out", help="defaults to DATA/relation_meta.tsv")
    lab.add_argument("--separator", default=DEFAULT_SEPARATOR)

    t = sub.add_parser("train", help="train a model and write a checkpoint")
    t.add_argument("--data", required=True)
    t.add_argument("--family", required=True, type=str.lower, choices=[f.lower() for f in FAMILIES])
    t.add_argument("--config", default="toy", help="key=value file, or the name of a bundled config")
    t.add_argument("--seed", type=int)
    t.add_argument("--steps", type=int)
    t.add_argument("--dim", type=int)
    t.add_argument("--workers", type=int)
    t.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("protocol", choices=["linkpred", "pairrank", "property", "tripleclass", "all"])
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--filter-data", help="superset dataset used as ground truth for filtering")
    e.add_argument("--negatives-from", help="checkpoint that generates triple-classification negatives")
    e.add_argument("--k", type=int, default=100)
    e.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    e.add_argument("--aggregate", nargs="+", choices=["max", "mean"], default=["max"])
    e.add_argument("--separator", default=DEFAULT_SEPARATOR)
    e.add_argument("--out", default="-", help="report path ('-' for stdout)")
    e.add_argument("--ranks-out", help="per-triple rank TSV (linkpred) or per-relation TSV (pairrank)")

    r = sub.add_parser("report", help="render stored reports")
    rsub = r.add_subparsers(dest="action", required=True, parser_class=_Parser)
    rr = rsub.add_parser("render")
    rr.add_argument("--report", nargs="+", required=True)
    rr.add_argument("--format", choices=["json", "csv", "markdown"], default="markdown")
    rr.add_argument("--out", default="-")
    return parser


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _split_spec(args) -> SplitSpec:
    return SplitSpec(args.train_frac, args.valid_frac, args.test_frac, args.seed)


def cmd_ingest(args):
    parts, dups = [], 0
    for path in (args.train, args.valid, args.test):
        if path:
            triples, d = read_triples(path)
            dups += d
        else:
            triples = []
        parts.append(triples)
    g = from_labeled(
        parts,
        types=read_types(args.types) if args.types else None,
        mediators=read_names(args.mediators) if args.mediators else (),
        meta={"path": args.out},
    )
    save_dataset(args.out, g)
    summary = {**g.fingerprint(), "duplicate_count": g.meta["duplicate_count"] + dups}
    _write("-", json.dumps(summary, indent=2, sort_keys=True) + "\n")


def cmd_transform(args):
    if args.action == "label":
        g = load_dataset(args.data)
        meta = label_relations(g, args.separator)
        write_relation_meta(args.out or os.path.join(args.data, "relation_meta.tsv"), meta)
        return
    g = load_dataset(args.data, check_closure=args.action != "binarize")
    if args.action == "binarize":
        out = binarize_cvt(g, args.separator)
        save_dataset(args.out, out)
        write_relation_meta(os.path.join(args.out, "relation_meta.tsv"), label_relations(out, args.separator))
    elif args.action == "subset":
        out = split(sample_subset(g, args.fraction, args.seed), _split_spec(args))
        save_dataset(args.out, out)
    else:
        out = split(g, _split_spec(args))
        save_dataset(args.out, out)
    keys = ("split_achieved", "subset_fraction", "subset_seed", "split_seed", "binarized_pairs")
    summary = {**out.fingerprint(), **{k: out.meta[k] for k in keys if k in out.meta}}
    _write("-", json.dumps(summary, indent=2, sort_keys=True) + "\n")


def cmd_train(args):
    g = load_dataset(args.data)
    cfg_path = args.config if os.path.exists(args.config) else bundled_config(args.config)
    if not os.path.exists(cfg_path):
        raise UsageError(f"config {args.config!r} not found")
    cfg = TrainConfig.from_file(cfg_path).replace(
        seed=args.seed, steps=args.steps, dim=args.dim, workers=args.workers
    )
    p = train(g, cfg, args.family)
    save_checkpoint(args.out, p, g)


def cmd_eval(args):
    g = load_dataset(args.data)
    p = load_checkpoint(args.model, g)
    sections: dict = {}
    seeds = {"train": (p.meta.get("config") or {}).get("seed")}
    notes = {}
    want = {args.protocol} if args.protocol != "all" else {"linkpred", "pairrank", "property", "tripleclass"}
    if "linkpred" in want:
        meta = load_relation_meta(args.data, g, args.separator)
        full = load_dataset(args.filter_data) if args.filter_data else None
        section, records = rep.linkpred_section(p, g, meta, full)
        sections["link_prediction"] = section
        if args.ranks_out and args.protocol == "linkpred":
            write_ranks(args.ranks_out, records, g)
    if "pairrank" in want:
        section, results = rep.pairrank_section(p, g, args.k, args.budget)
        sections["entity_pair"] = section
        if args.ranks_out and args.protocol == "pairrank":
            write_pair_ranks(args.ranks_out, results, g)
    if "property" in want:
        sections["property"], _ = rep.property_section(p, g, tuple(args.aggregate))
        notes["property_aggregate"] = ",".join(args.aggregate)
    if "tripleclass" in want:
        generator = load_checkpoint(args.negatives_from, g) if args.negatives_from else None
        sections["triple_classification"], _ = rep.tripleclass_section(p, g, generator)
    report = rep.make_report(g, p, sections, seeds=seeds, notes=notes)
    rep.validate_report(report)
    _write(args.out, rep.dumps(report))


def cmd_report(args):
    reports = [rep.read_report(path) for path in args.report]
    for r in reports:
        rep.validate_report(r)
    _write(args.out, rep.render_tables(reports if len(reports) > 1 else reports[0], args.format))


COMMANDS = {
    "ingest": cmd_ingest,
    "transform": cmd_transform,
    "train": cmd_train,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except NumericalError as exc:
        sys.stderr.write(f"kgeval: {exc}\n")
        return EXIT_NUMERIC
    except (GraphError, CheckpointError, OSError, ValueError, KeyError) as exc:
        sys.stderr.write(f"kgeval: {exc}\n")
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
