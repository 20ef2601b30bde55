"""Evaluation reports: assembly, canonical JSON, and table rendering.

JSON is the source of truth.  Keys are sorted and every float is written in
6-decimal fixed point, so a report parsed and re-serialized is
byte-identical.  CSV and markdown renderings only ever print the same
6-decimal strings, which keeps them exact projections of the JSON.
"""

from __future__ import annotations

import csv
import io
import json
import math
from importlib import resources
from typing import Sequence

import numpy as np

from kgeval import __version__
from kgeval.classification import KINDS, directional_gap, run_suite
from kgeval.graph import KnowledgeGraph
from kgeval.linkpred import (
    MACRO_KEY,
    MetricBundle,
    category_split,
    direction_split,
    macro_by_domain,
    macro_by_relation,
    micro_metrics,
    pct_improvement,
    rank_all,
)
from kgeval.models import ModelParams
from kgeval.pairrank import DEFAULT_BUDGET, pair_rank_macro
from kgeval.property import build_property_testset, rank_properties
from kgeval.transform import RelationMeta

SCHEMA_FILE = "report_schema.json"


# canonical serialization ------------------------------------------------------------


def fmt(x: float) -> str:
    return f"{x:.6f}"


def _to_plain(obj):
    if isinstance(obj, MetricBundle):
        return obj.to_dict()
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _emit(obj, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = sorted(obj.items())
        for i, (k, v) in enumerate(items):
            out.append(f"{pad}  {json.dumps(k, ensure_ascii=False)}: ")
            _emit(v, indent + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad + "  ")
            _emit(v, indent + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "]")
    elif obj is None or isinstance(obj, bool):
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(fmt(obj) if math.isfinite(obj) else "null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(report) -> str:
    out: list[str] = []
    _emit(_to_plain(report), 0, out)
    return "".join(out) + "\n"


def loads(text: str) -> dict:
    return json.loads(text)


def write_report(path, report) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(report))


def read_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def schema() -> dict:
    return json.loads((resources.files("kgeval") / SCHEMA_FILE).read_text(encoding="utf-8"))


def validate_report(report: dict) -> None:
    """Schema validation plus the metric-bundle invariants."""
    import jsonschema

    jsonschema.validate(report, schema())
    for path, bundle in iter_bundles(report):
        hits = bundle["hits"]
        ks = sorted(hits, key=lambda s: int(s.lstrip("@")))
        for a, b in zip(ks, ks[1:]):
            if hits[a] > hits[b] + 1e-6:
                raise ValueError(f"{path}: hits not monotone in k")
        if "@1" in hits and hits["@1"] > bundle["mrr"] + 1e-6:
            raise ValueError(f"{path}: hits@1 exceeds mrr")
        if bundle["mrr"] > 1 + 1e-6 or bundle["mr"] < 1 - 1e-6:
            raise ValueError(f"{path}: mrr/mr out of range")


def iter_bundles(obj, path=""):
    if isinstance(obj, dict):
        if {"mrr", "mr", "hits", "count"} <= set(obj):
            yield path, obj
            return
        for k, v in obj.items():
            yield from iter_bundles(v, f"{path}/{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from iter_bundles(v, f"{path}/{i}")


# assembly ----------------------------------------------------------------------------


def model_manifest(p: ModelParams) -> dict:
    return {
        "family": p.family,
        "dim": p.dim,
        "gamma": float(p.gamma),
        "config_hash": p.meta.get("config_hash"),
        "seed": (p.meta.get("config") or {}).get("seed"),
    }


def linkpred_section(
    p: ModelParams,
    g: KnowledgeGraph,
    meta: Sequence[RelationMeta],
    filter_graph: KnowledgeGraph | None = None,
) -> tuple[dict, list]:
    records = rank_all(p, g)
    section = {
        "micro": micro_metrics(records),
        "micro_raw": micro_metrics(records, filtered=False),
        "macro_by_relation": macro_by_relation(records),
        "macro_by_domain": macro_by_domain(records, meta),
        "direction_split": {
            "micro": direction_split(records),
            "macro": direction_split(records, macro=True),
        },
        "category_split": category_split(records, meta),
    }
    if filter_graph is not None:
        wide = micro_metrics(rank_all(p, g, filter_graph))
        sub = section["micro"]
        section["closed_world"] = {
            "subset_bundle": sub,
            "full_bundle": wide,
            "pct_improvement": pct_improvement(sub.mrr, wide.mrr),
            "filter_path": filter_graph.meta.get("path"),
        }
    return section, records


def pairrank_section(p: ModelParams, g: KnowledgeGraph, k: int = 100, budget: int = DEFAULT_BUDGET, candidates=None) -> tuple[dict, list]:
    res = pair_rank_macro(p, g, k, candidates=candidates, budget=budget)
    per = [
        {
            "relation": g.relations[x.relation],
            "ap": x.ap_at_k,
            "p": x.p_at_k,
            "p_percent": 100.0 * x.p_at_k,
            "num_test_pairs": x.num_test_pairs,
        }
        for x in res["per_relation"]
    ]
    section = {
        "k": k,
        "map": res["map"],
        "p": res["p"],
        "p_percent": 100.0 * res["p"],
        "per_relation": per,
    }
    return section, res["per_relation"]


def property_section(p: ModelParams, g: KnowledgeGraph, aggregates=("max",)) -> tuple[dict, dict]:
    cases = build_property_testset(g)
    section: dict = {"num_cases": len(cases), "aggregates": {}}
    ranks = {}
    if not cases:
        return section, ranks
    for agg in aggregates:
        raw_ranks, raw = rank_properties(p, g, cases, agg, filter_known=False)
        filt_ranks, filt = rank_properties(p, g, cases, agg, filter_known=True)
        section["aggregates"][agg] = {"raw": raw, "filtered_variant": filt}
        ranks[agg] = (raw_ranks, filt_ranks)
    first = section["aggregates"][aggregates[0]]
    section["mrr"] = first["raw"].mrr
    section["mr"] = first["raw"].mr
    section["filtered_variant"] = first["filtered_variant"]
    return section, ranks


def tripleclass_section(p: ModelParams, g: KnowledgeGraph, generator: ModelParams | None = None, kinds=KINDS) -> tuple[dict, dict]:
    results = {}
    for kind in kinds:
        try:
            results[kind] = run_suite(p, g, kind, generator)
        except ValueError as exc:
            results[kind] = {"error": str(exc)}
    ok = {k: v for k, v in results.items() if "error" not in v}
    section = {
        "negatives_from": (generator or p).family,
        "kinds": {
            k: (
                {
                    "metrics": v["metrics"],
                    "coverage": v["coverage"],
                    "num_test_negatives": len(v["suites"][1].negatives),
                    "num_test_positives": len(v["suites"][1].positives),
                }
                if "error" not in v
                else {"error": v["error"]}
            )
            for k, v in results.items()
        },
        "thresholds": {
            k: {"num_relations": v["num_thresholds"], "default": v["default_threshold"]}
            for k, v in ok.items()
        },
        "directional_gap": directional_gap(ok),
    }
    return section, results


def make_report(
    g: KnowledgeGraph,
    p: ModelParams,
    sections: dict,
    seeds: dict | None = None,
    notes: dict | None = None,
) -> dict:
    report = {
        "toolkit": {"name": "kgeval", "version": __version__},
        "dataset": g.fingerprint(),
        "model": model_manifest(p),
        "seeds": dict(seeds or {}),
        "protocols": dict(sections),
        "notes": {
            "tie_handling": "average rank",
            "filtered_ranks": "candidates forming a known triple in any split are removed; the test triple is kept",
            "threshold_search": "accuracy-maximizing midpoint sweep, ties to the lower threshold",
            "pair_ranking_average": "per-relation AP@K and P@K averaged over test relations",
            **(notes or {}),
        },
    }
    return loads(dumps(report))


# rendering ---------------------------------------------------------------------------


def _flatten(obj, prefix=()):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], prefix + (str(k),))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, prefix + (str(i),))
    else:
        yield prefix, obj


def _cell(v) -> str:
    if isinstance(v, bool) or v is None:
        return json.dumps(v)
    if isinstance(v, float):
        return fmt(v)
    return str(v)


def render_csv(reports: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "path", "value"])
    for rep in reports:
        name = _model_name(rep)
        for path, v in _flatten(rep):
            w.writerow([name, "/".join(path), _cell(v)])
    return buf.getvalue()


def _model_name(rep: dict) -> str:
    return rep.get("model", {}).get("family", "?")


def _table(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines)


def _b(bundle: dict, field: str) -> str:
    if field.startswith("@"):
        return fmt(bundle["hits"][field])
    return fmt(bundle[field])


def render_markdown(reports: Sequence[dict]) -> str:
    out = []
    first = reports[0]
    ds = first["dataset"]
    out.append(f"# Evaluation report: {ds.get('path') or 'dataset'}")
    out.append(
        f"{ds['num_triples']} triples, {ds['num_entities']} entities, {ds['num_relations']} relations; "
        f"kgeval {first['toolkit']['version']}"
    )
    lp = [(r, r["protocols"]["link_prediction"]) for r in reports if "link_prediction" in r["protocols"]]
    if lp:
        out.append("## Link prediction (filtered, micro-averaged)")
        out.append(_table(
            ["Model", "MRR", "MR", "Hits@1", "Hits@3", "Hits@10"],
            [[_model_name(r)] + [_b(s["micro"], f) for f in ("mrr", "mr", "@1", "@3", "@10")] for r, s in lp],
        ))
        cw = [(r, s["closed_world"]) for r, s in lp if "closed_world" in s]
        if cw:
            out.append("## Closed-world comparison (ground truth: subset vs full)")
            out.append(_table(
                ["Model", "MRR", "MR", "Hits@1", "Hits@10", "MRR (full)", "MR (full)", "Hits@1 (full)", "Hits@10 (full)"],
                [
                    [_model_name(r)]
                    + [_b(c["subset_bundle"], f) for f in ("mrr", "mr", "@1", "@10")]
                    + [f"{_b(c['full_bundle'], 'mrr')} ({fmt(c['pct_improvement'])}%)"]
                    + [_b(c["full_bundle"], f) for f in ("mr", "@1", "@10")]
                    for r, c in cw
                ],
            ))
        out.append("## Micro vs macro average, left and right prediction (MRR)")
        out.append(_table(
            ["Model", "Left (micro)", "Right (micro)", "Overall (micro)", "Left (macro)", "Right (macro)", "Overall (macro)"],
            [
                [_model_name(r)]
                + [_b(s["direction_split"]["micro"][d], "mrr") for d in ("left", "right")]
                + [_b(s["micro"], "mrr")]
                + [_b(s["direction_split"]["macro"][d], "mrr") for d in ("left", "right")]
                + [_b(s["macro_by_relation"], "mrr")]
                for r, s in lp
            ],
        ))
        cats = [c for c in ("binary", "nary", "concatenated") if any(c in s["category_split"] for _, s in lp)]
        out.append("## Relation categories (micro MRR)")
        out.append(_table(
            ["Model"] + cats + ["all"],
            [
                [_model_name(r)]
                + [_b(s["category_split"][c], "mrr") if c in s["category_split"] else "" for c in cats + ["all"]]
                for r, s in lp
            ],
        ))
        domains = sorted({d for _, s in lp for d in s["macro_by_domain"] if d != MACRO_KEY})
        out.append("## Domains (micro MRR per domain)")
        out.append(_table(
            ["Domain"] + [_model_name(r) for r, _ in lp],
            [
                [d] + [_b(s["macro_by_domain"][d], "mrr") if d in s["macro_by_domain"] else "" for _, s in lp]
                for d in domains + [MACRO_KEY]
            ],
        ))
    ep = [(r, r["protocols"]["entity_pair"]) for r in reports if "entity_pair" in r["protocols"]]
    if ep:
        k = ep[0][1]["k"]
        out.append("## Entity-pair ranking")
        out.append(_table(
            ["Model", f"MAP@{k}", f"P@{k} (%)"],
            [[_model_name(r), fmt(s["map"]), fmt(s["p_percent"])] for r, s in ep],
        ))
    pp = [(r, r["protocols"]["property"]) for r in reports if "property" in r["protocols"] and "mrr" in r["protocols"]["property"]]
    if pp:
        out.append("## Property prediction")
        out.append(_table(
            ["Model", "MRR", "MR", "MRR (filtered)", "MR (filtered)"],
            [
                [_model_name(r), fmt(s["mrr"]), fmt(s["mr"]), _b(s["filtered_variant"], "mrr"), _b(s["filtered_variant"], "mr")]
                for r, s in pp
            ],
        ))
    tc = [(r, r["protocols"]["triple_classification"]) for r in reports if "triple_classification" in r["protocols"]]
    if tc:
        out.append("## Triple classification")
        for kind in KINDS:
            rows = []
            for r, s in tc:
                entry = s["kinds"].get(kind)
                if entry and "metrics" in entry:
                    m = entry["metrics"]
                    rows.append([_model_name(r)] + [fmt(m[f]) for f in ("precision", "recall", "accuracy", "f1")])
            if rows:
                out.append(f"### {kind.replace('_', ' ')}")
                out.append(_table(["Model", "Precision", "Recall", "Accuracy", "F1"], rows))
    return "\n\n".join(out) + "\n"


def render_tables(report, format: str = "markdown") -> str:
    """Render one report (or a list of reports, one row per model)."""
    reports = report if isinstance(report, list) else [report]
    if format == "json":
        return dumps(report)
    if format == "csv":
        return render_csv(reports)
    if format == "markdown":
        return render_markdown(reports)
    raise ValueError(f"unknown format {format!r}")
