"""Command-line entry point: ``snipsearch <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 internal error.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from snipsearch import __version__
from snipsearch.errors import ArtifactMismatchError, InvalidInputError, SnipSearchError
from snipsearch.evaluation import EvalReport, ablate, score_ranking, spearman_matrix
from snipsearch.features import (
    INSTANCE_FORMAT_VERSION,
    attach_labels,
    read_instances,
    read_label_file,
    write_instances,
)
from snipsearch.index import INDEX_FORMAT_VERSION, SearchIndex, build_index
from snipsearch.pipeline import (
    PipelineConfig,
    atomic_write,
    bm25_baseline,
    build_instances,
    check_artifacts,
    load_config,
    query_instances,
    read_queries,
    recommend,
    train_topic_model,
)
from snipsearch.rerank import MLR_FORMAT_VERSION, MlrModel, rerank, train_mlr
from snipsearch.segment import read_corpus, read_manifest, segment_tree, write_corpus
from snipsearch.topics import LDA_FORMAT_VERSION, TopicModel

log = logging.getLogger("snipsearch")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _artifact(path: str, default_name: str) -> Path:
    """Resolve an artifact flag; a directory (or trailing slash) gets ``default_name`` inside."""
    p = Path(path)
    if path.endswith(("/", "\\")) or p.is_dir():
        return p / default_name
    return p


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc


def _load_index(path: str) -> SearchIndex:
    return SearchIndex.from_json(_read_text(_artifact(path, "index.json")))


def _load_lda(path: str) -> TopicModel:
    return TopicModel.from_json(_read_text(_artifact(path, "lda.json")))


def _load_mlr(path: str) -> MlrModel:
    return MlrModel.from_json(_read_text(_artifact(path, "mlr.json")))


def _config(args) -> PipelineConfig:
    overrides = {
        key: getattr(args, key, None)
        for key in ("n_cand", "k", "k1", "b", "topics", "lda_iterations", "alpha", "beta",
                    "fold_in_iterations", "lr", "epochs", "l2", "seed")
    }
    if getattr(args, "no_normalize", False):
        overrides["normalize"] = False
    return load_config(args.config, **overrides)


# -- commands -------------------------------------------------------------


def cmd_segment(args) -> str:
    manifest = read_manifest(args.manifest)
    buf = io.StringIO()
    n = write_corpus(segment_tree(args.src, manifest), buf)
    atomic_write(args.out, buf.getvalue())
    return f"wrote {n} snippets from {len(manifest)} project(s) to {args.out}"


def cmd_index(args) -> str:
    cfg = _config(args)
    corpus = read_corpus(args.corpus)
    index = build_index(corpus, params=cfg.bm25)
    out = _artifact(args.out, "index.json")
    atomic_write(out, index.to_json())
    return f"indexed {index.n_docs} snippets over {len(index.fields)} fields to {out}"


def cmd_lda_train(args) -> str:
    cfg = _config(args)
    model = train_topic_model(read_corpus(args.corpus), cfg)
    out = _artifact(args.out, "lda.json")
    atomic_write(out, model.to_json())
    return f"trained {model.n_topics}-topic model on {len(model.doc_ids)} snippets to {out}"


def cmd_features(args) -> str:
    cfg = _config(args)
    index, lda = _load_index(args.index), _load_lda(args.lda)
    check_artifacts(index, lda)
    instances = build_instances(read_queries(args.queries), index, lda, cfg)
    if args.labels:
        instances = attach_labels(instances, read_label_file(args.labels)).instances
    buf = io.StringIO()
    write_instances(instances, buf)
    atomic_write(args.out, buf.getvalue())
    return f"wrote {len(instances)} instances to {args.out}"


def cmd_train(args) -> str:
    cfg = _config(args)
    instances = read_instances(args.features)
    train = attach_labels(instances, read_label_file(args.labels))
    model = train_mlr(train, lr=cfg.lr, epochs=cfg.epochs, l2=cfg.l2, seed=cfg.seed)
    model.normalized = cfg.normalize
    out = _artifact(args.out, "mlr.json")
    atomic_write(out, model.to_json())
    return f"trained on {len(train)} instances ({cfg.epochs} epochs, final loss {model.loss_history[-1]:.6f}) to {out}"


def cmd_query(args) -> str:
    if args.q is None and not args.queries:
        raise UsageError("query: one of --q or --queries is required")
    cfg = _config(args)
    queries = [("q", args.q)] if args.q is not None else read_queries(args.queries)
    index, lda, mlr = _load_index(args.index), _load_lda(args.lda), _load_mlr(args.model)
    lines = []
    for qid, text in queries:
        ranked = recommend(text, index, lda, mlr, cfg, query_id=qid)
        for rec in ranked.to_records():
            rec["preview"] = index.docs[index.position(rec["snippet_id"])].preview
            lines.append(json.dumps(rec, sort_keys=True, ensure_ascii=False))
    text = "".join(line + "\n" for line in lines)
    if args.out:
        atomic_write(args.out, text)
        return f"wrote {len(lines)} results for {len(queries)} quer{'y' if len(queries) == 1 else 'ies'} to {args.out}"
    return text.rstrip("\n")


def cmd_eval(args) -> str:
    cfg = _config(args)
    index, lda, mlr = _load_index(args.index), _load_lda(args.lda), _load_mlr(args.model)
    check_artifacts(index, lda, mlr)
    cfg = cfg.updated(normalize=mlr.normalized)
    labels = read_label_file(args.labels)
    report = EvalReport(k=cfg.k)
    for qid, text in read_queries(args.queries):
        instances = query_instances(qid, text, index, lda, cfg)
        qlabels = {sid: score for (q, sid), score in labels.items() if q == qid}
        for method, ranked in (("rerank", rerank(mlr, instances, cfg.k) if instances else None),
                               ("bm25", bm25_baseline(instances, cfg.k))):
            ids = ranked.ids if ranked else []
            report.rows.append(score_ranking(ids, qlabels, qid, cfg.k, method))
    if args.train_features:
        if not args.train_labels:
            raise UsageError("eval: --train-features needs --train-labels")
        train = attach_labels(read_instances(args.train_features), read_label_file(args.train_labels))
        report.spearman = spearman_matrix(train.instances).tolist()
    if args.out:
        atomic_write(args.out, report.to_json() + "\n")
    if args.tsv:
        atomic_write(args.tsv, report.to_tsv())
    return report.to_table().rstrip("\n")


def cmd_ablate(args) -> str:
    cfg = _config(args)
    train = attach_labels(read_instances(args.train_features), read_label_file(args.train_labels))
    test = attach_labels(read_instances(args.test_features), read_label_file(args.test_labels))
    table = ablate(train, test, k=cfg.k, seed=cfg.seed, lr=cfg.lr, epochs=cfg.epochs, l2=cfg.l2,
                   progress=lambda name: log.info("retraining without %s", name))
    if args.out:
        atomic_write(args.out, json.dumps(table.to_dict(), sort_keys=True, indent=2) + "\n")
    return table.to_table()


def cmd_version(args) -> str:
    return (
        f"snipsearch {__version__}\n"
        f"index format {INDEX_FORMAT_VERSION}\n"
        f"topic model format {LDA_FORMAT_VERSION}\n"
        f"ranking model format {MLR_FORMAT_VERSION}\n"
        f"instance format {INSTANCE_FORMAT_VERSION}"
    )


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key=value config file (default: $SNIPSEARCH_CONFIG)")
    common.add_argument("--seed", type=int, help="seed for every stochastic step")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="snipsearch", description="Two-stage code snippet recommendation.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("segment", parents=[common], help="split Java projects into a snippet corpus")
    p.add_argument("--src", required=True, help="root directory holding the project directories")
    p.add_argument("--manifest", required=True, help="TSV of project_dir<TAB>package_name")
    p.add_argument("--out", required=True, help="corpus JSONL to write")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("index", parents=[common], help="build the multi-field BM25 index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k1", type=float)
    p.add_argument("--b", type=float)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("lda-train", parents=[common], help="train the LDA topic model on snippet contents")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--topics", type=int)
    p.add_argument("--iterations", dest="lda_iterations", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.set_defaults(func=cmd_lda_train)

    p = sub.add_parser("features", parents=[common], help="build instances for each query's candidates")
    p.add_argument("--index", required=True)
    p.add_argument("--lda", required=True)
    p.add_argument("--queries", required=True, help="one query per line, optionally id<TAB>text")
    p.add_argument("--out", required=True)
    p.add_argument("--labels", help="optional label TSV to attach")
    p.add_argument("--n-cand", type=int)
    p.add_argument("--fold-in-iterations", type=int)
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", parents=[common], help="train the re-ranking model")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", default="mlr.json")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--no-normalize", action="store_true", help="record that features are unnormalized")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("query", parents=[common], help="recommend snippets for a query")
    p.add_argument("--index", required=True)
    p.add_argument("--lda", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--q", help="query text")
    p.add_argument("--queries", help="query file for batch mode")
    p.add_argument("--k", type=int)
    p.add_argument("--n-cand", type=int)
    p.add_argument("--fold-in-iterations", type=int)
    p.add_argument("--out", help="write JSON lines here instead of stdout")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", parents=[common], help="Precision@K / NDCG@K against labeled queries")
    p.add_argument("--index", required=True)
    p.add_argument("--lda", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--n-cand", type=int)
    p.add_argument("--fold-in-iterations", type=int)
    p.add_argument("--train-features", help="instances for the Spearman feature matrix")
    p.add_argument("--train-labels")
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--tsv", help="per-query metric rows for external statistical tests")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="leave-one-feature-out ablation")
    p.add_argument("--train-features", required=True)
    p.add_argument("--train-labels", required=True)
    p.add_argument("--test-features", required=True)
    p.add_argument("--test-labels", required=True)
    p.add_argument("--k", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--l2", type=float)
    p.add_argument("--out", help="JSON table path")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("version", parents=[common], help="print package and artifact format versions")
    p.set_defaults(func=cmd_version)
    return parser


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    """Parse ``argv``, dispatch, and map failures onto exit codes."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError(parser.format_usage())
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
            stream=stderr,
            force=True,
        )
        summary = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}".rstrip(), file=stderr)
        return EXIT_USAGE
    except (InvalidInputError, ArtifactMismatchError, OSError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_DATA
    except SnipSearchError as exc:
        print(f"internal error: {exc}", file=stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # invariant violations and bugs
        print(f"internal error: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_INTERNAL
    if summary:
        print(summary, file=stdout)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
