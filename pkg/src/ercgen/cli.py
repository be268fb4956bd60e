"""Command-line pipelines over a workspace directory.

Every command reads ``<workspace>/ercgen.json`` (or ``--config``), applies
flag overrides, writes its outputs under the workspace and drops a
``run-config.json`` snapshot next to them. Outputs carry the config hash.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import fixtures
from .backend import BackendConfig
from .config import ConfigError, RunConfig
from .corpus import Corpus, CorpusError, DatasetManifest, ingest, open_text, stats_table, write_corpus
from .evaluation import EvalAborted, parse_prediction, run_inference, score
from .mixing import SINGLE, MixPlan, composition, plan_grid, read_subset_manifest, sample, write_subset_manifest
from .prompt import WindowSpec, read_samples, write_samples
from .retrieval import RetrievalIndex, build_domain_base, make_embedder
from .training import build_inference_prompts, export_stage1, export_stage2, write_json
from .unify import UNIFIED_ID, SpeakerRegistry, UnknownLabel, build_registry, default_mapping, unify_corpus

log = logging.getLogger("ercgen")

EXIT_USAGE = 2
EXIT_UNPARSEABLE = 3


class CommandError(RuntimeError):
    pass


class Workspace:
    def __init__(self, root: Path, cfg: RunConfig):
        self.root = root
        self.cfg = cfg

    @property
    def provenance(self) -> dict:
        return {"config_hash": self.cfg.hash}

    def dir(self, name: str) -> Path:
        d = self.root / name
        d.mkdir(parents=True, exist_ok=True)
        snapshot = {"config_hash": self.cfg.hash, "config": self.cfg.to_json()}
        (d / "run-config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return d

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.root / p

    def source_paths(self, name: str) -> tuple[Path, Path]:
        try:
            src = self.cfg.datasets[name]
        except KeyError:
            raise CommandError(f"dataset {name!r} is not configured") from None

        def one(path: str, kind: str) -> Path:
            if path.startswith("fixture:"):
                ident = path.split(":")[1:]
                mini = ident[0] == "mini"
                ds = ident[-1]
                return fixtures.corpus_path(ds, mini) if kind == "corpus" else fixtures.manifest_path(ds, mini)
            return self.resolve(path)

        return one(src.corpus, "corpus"), one(src.manifest, "manifest")

    # ingested / unified corpora
    def corpus_file(self, name: str) -> Path:
        return self.root / "corpus" / f"{name}.jsonl"

    def manifest_file(self, name: str) -> Path:
        return self.root / "corpus" / f"{name}.manifest.json"

    def registry_file(self) -> Path:
        return self.root / "corpus" / f"{UNIFIED_ID}.registry.tsv"

    def load_corpus(self, name: str) -> Corpus:
        path, mpath = self.corpus_file(name), self.manifest_file(name)
        if not path.exists() or not mpath.exists():
            hint = "unify" if name == UNIFIED_ID else "ingest"
            raise CommandError(f"no ingested corpus for {name!r}; run `{hint}` first")
        return ingest(path, DatasetManifest.load(mpath), check_sizes=False)

    def embedder(self):
        e = self.cfg.embedder
        return make_embedder(e.kind, dim=e.dim, path=str(self.resolve(e.path)) if e.path else None, endpoint=e.endpoint)

    def index_prefix(self, name: str) -> Path:
        return self.root / "index" / name

    def load_index(self, name: str) -> RetrievalIndex | None:
        if not self.cfg.demonstrations:
            return None
        prefix = self.index_prefix(name)
        if not Path(str(prefix) + ".vectors").exists():
            raise CommandError(f"no retrieval index for {name!r}; run `build-index` first")
        return RetrievalIndex.load(prefix, self.embedder())

    def prompts_file(self, name: str, split: str) -> Path:
        return self.root / "prompts" / f"{name}.{split}.jsonl"


def _dataset_names(ws: Workspace, args) -> list[str]:
    if getattr(args, "dataset", None):
        return [args.dataset]
    return list(ws.cfg.datasets)


# ----------------------------------------------------------------- commands


def cmd_ingest(ws: Workspace, args) -> int:
    out = ws.dir("corpus")
    rows = []
    for name in _dataset_names(ws, args):
        cpath, mpath = ws.source_paths(name)
        manifest = DatasetManifest.load(mpath)
        corpus = ingest(cpath, manifest)
        write_corpus(corpus, out / f"{name}.jsonl", provenance=ws.provenance)
        write_json(out / f"{name}.manifest.json", {**manifest.to_json(), **ws.provenance})
        table = stats_table(corpus)
        write_json(out / f"{name}.stats.json", {"rows": table, **ws.provenance})
        rows.extend(table)
    print(_format_rows(rows, ["dataset", "split", "conversations", "utterances", "classes", "avg_utt"]))
    return 0


def cmd_unify(ws: Workspace, args) -> int:
    names = list(ws.cfg.datasets) if not args.datasets else args.datasets
    corpora = [ws.load_corpus(n) for n in names]
    registry = build_registry([c.manifest for c in corpora])
    unified = unify_corpus(corpora, default_mapping(), registry)
    out = ws.dir("corpus")
    write_corpus(unified, out / f"{UNIFIED_ID}.jsonl", provenance=ws.provenance)
    write_json(out / f"{UNIFIED_ID}.manifest.json", {**unified.manifest.to_json(), **ws.provenance})
    registry.dump(out / f"{UNIFIED_ID}.registry.tsv", comment=f"config_hash={ws.cfg.hash}")
    table = stats_table(unified)
    write_json(out / f"{UNIFIED_ID}.stats.json", {"rows": table, **ws.provenance})
    print(_format_rows(table, ["dataset", "split", "conversations", "utterances", "classes", "avg_utt"]))
    return 0


def _speaker_names(ws: Workspace, name: str, corpus: Corpus) -> set[str]:
    if corpus.manifest.sources:
        return SpeakerRegistry.load(ws.registry_file()).names
    return set(corpus.manifest.speaker_set)


def cmd_build_index(ws: Workspace, args) -> int:
    for name in _selected(ws, args):
        corpus = ws.load_corpus(name)
        index = build_domain_base(corpus, ws.embedder(), ws.cfg.seed, strip_names=_speaker_names(ws, name, corpus))
        ws.dir("index")
        index.save(ws.index_prefix(name), tag=f"config_hash={ws.cfg.hash}")
        counts = index.label_counts()
        print(f"{name}: {len(index)} entries, {counts and next(iter(counts.values()))} per label, dim {index.dim}")
    return 0


def cmd_build_prompts(ws: Workspace, args) -> int:
    for name in _selected(ws, args):
        corpus = ws.load_corpus(name)
        index = ws.load_index(name)
        spec = WindowSpec(ws.cfg.window)
        prompts = build_inference_prompts(corpus, spec, index, pairing=ws.cfg.infer_pairing, split=args.split)
        ws.dir("prompts")
        write_samples(prompts, ws.prompts_file(name, args.split), provenance=ws.provenance)
        print(f"{name}/{args.split}: {len(prompts)} prompts")
    return 0


def cmd_export_train(ws: Workspace, args) -> int:
    restrict = None
    suffix = ""
    if args.subset:
        plan, addresses = read_subset_manifest(ws.resolve(args.subset))
        restrict = set(addresses)
        suffix = f".{plan.plan_id}"
    out = ws.dir("train")
    for name in _selected(ws, args):
        corpus = ws.load_corpus(name)
        index = ws.load_index(name)
        s1 = export_stage1(corpus, seed=ws.cfg.seed, restrict=restrict)
        s2 = export_stage2(
            corpus, WindowSpec(ws.cfg.window), index, ws.cfg.alpha,
            seed=ws.cfg.seed, pairing=ws.cfg.train_pairing, restrict=restrict,
        )
        s1.write(out / f"{name}{suffix}.stage1.jsonl", provenance=ws.provenance)
        s2.write(out / f"{name}{suffix}.stage2.jsonl", provenance=ws.provenance)
        print(f"{name}{suffix}: stage1 {len(s1.records)} records, stage2 {len(s2.records)} records (alpha={ws.cfg.alpha})")
    return 0


def _predictions_file(ws: Workspace, name: str, split: str) -> Path:
    return ws.root / "predictions" / f"{name}.{split}.jsonl"


def _infer(ws: Workspace, name: str, split: str, backend_config: BackendConfig | None = None):
    ppath = ws.prompts_file(name, split)
    if not ppath.exists():
        raise CommandError(f"no prompts for {name}/{split}; run `build-prompts` first")
    samples = list(read_samples(ppath))
    out = ws.dir("predictions")
    config = backend_config or ws.cfg.backend
    checkpoint = out / f"{name}.{split}.{ws.cfg.hash}.partial.jsonl"
    completions = run_inference(samples, config, checkpoint=checkpoint)
    labels = DatasetManifest.load(ws.manifest_file(name)).label_set
    with open_text(_predictions_file(ws, name, split), "w") as fh:
        for s, c in zip(samples, completions):
            p = parse_prediction(c, labels)
            rec = {"meta": s.meta, "completion": c, "prediction": p if isinstance(p, str) else None, **ws.provenance}
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    checkpoint.unlink(missing_ok=True)
    return samples, completions, labels


def cmd_infer(ws: Workspace, args) -> int:
    for name in _selected(ws, args):
        samples, _, _ = _infer(ws, name, args.split)
        print(f"{name}/{args.split}: {len(samples)} completions ({ws.cfg.backend.kind})")
    return 0


def _load_predictions(ws: Workspace, name: str, split: str):
    path = _predictions_file(ws, name, split)
    if not path.exists():
        return None
    completions = []
    with open_text(path) as fh:
        for line in fh:
            rec = json.loads(line)
            if rec.get("config_hash") != ws.cfg.hash:
                return None
            completions.append(rec["completion"])
    return completions


def cmd_eval(ws: Workspace, args) -> int:
    status = 0
    for name in _selected(ws, args):
        completions = _load_predictions(ws, name, args.split)
        if completions is None:
            samples, completions, labels = _infer(ws, name, args.split)
        else:
            samples = list(read_samples(ws.prompts_file(name, args.split)))
            labels = DatasetManifest.load(ws.manifest_file(name)).label_set
        report = score(samples, completions, labels)
        out = ws.dir("reports")
        stem = f"{name}.{args.split}"
        write_json(out / f"{stem}.json", {**report.to_json(), **ws.provenance, "dataset": name, "split": args.split})
        text = report.render(f"{name}/{args.split}  backend={ws.cfg.backend.kind}  config={ws.cfg.hash}")
        (out / f"{stem}.txt").write_text(text + "\n", encoding="utf-8")
        print(text)
        if report.unparseable_fraction > ws.cfg.unparseable_threshold:
            print(
                f"error: unparseable fraction {report.unparseable_fraction:.3f} exceeds {ws.cfg.unparseable_threshold}",
                file=sys.stderr,
            )
            status = EXIT_UNPARSEABLE
    return status


def cmd_pipeline(ws: Workspace, args) -> int:
    """ingest -> unify -> build-index -> build-prompts -> export-train -> eval, per dataset and unified."""
    ns = argparse.Namespace(dataset=None, datasets=None, split=args.split, subset=None)
    cmd_ingest(ws, ns)
    names = list(ws.cfg.datasets)
    if len(names) > 1 and not args.no_unify:
        cmd_unify(ws, ns)
        names.append(UNIFIED_ID)
    status = 0
    for name in names:
        one = argparse.Namespace(dataset=name, split=args.split, subset=None)
        if ws.cfg.demonstrations:
            cmd_build_index(ws, one)
        cmd_build_prompts(ws, one)
        if not args.skip_train:
            cmd_export_train(ws, one)
        status = max(status, cmd_eval(ws, one))
    return status


def cmd_scale_experiment(ws: Workspace, args) -> int:
    corpus = ws.load_corpus(UNIFIED_ID)
    sources = list(corpus.manifest.sources)
    fractions = [Fraction(f) for f in ws.cfg.fractions]
    plans = plan_grid(fractions, ws.cfg.strategies, ws.cfg.seed)
    plans += plan_grid(fractions, [SINGLE], ws.cfg.seed, datasets=sources)
    out = ws.dir("scale")
    rows = []
    for plan in plans:
        addresses = sample(corpus, plan)
        write_subset_manifest(out / f"{plan.plan_id}.json", plan, addresses, **ws.provenance)
        comp = composition(addresses)
        row = {
            "strategy": plan.strategy,
            "fraction": str(plan.fraction),
            "dataset": plan.dataset or "",
            "plan_id": plan.plan_id,
            "size": len(addresses),
            **{f"n_{ds}": comp.get(ds, 0) for ds in sources},
        }
        if args.evaluate:
            row.update(_scale_scores(ws, plan, sources))
        rows.append(row)
    header = list(rows[0]) if rows else []
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    (out / "grid.csv").write_text(f"# config_hash={ws.cfg.hash}\n" + buf.getvalue(), encoding="utf-8")
    table = _pivot_table(rows, sources, fractions, "wf1" if args.evaluate else "n")
    (out / "table.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    print(f"{len(rows)} plans written to {out}")
    return 0


def _scale_scores(ws: Workspace, plan: MixPlan, sources: list[str]) -> dict:
    """Score the configured backend on each benchmark's test prompts.

    An http endpoint may contain ``{plan_id}`` so each plan's trained model is
    queried; mock backends ignore the plan.
    """
    config = ws.cfg.backend
    if config.endpoint and "{plan_id}" in config.endpoint:
        config = replace(config, endpoint=config.endpoint.format(plan_id=plan.plan_id))
    out = {}
    if plan.strategy == SINGLE:
        targets = [(plan.dataset, plan.dataset)]
    else:
        targets = [(UNIFIED_ID, ds) for ds in sources]
    for prompt_set, ds in targets:
        path = ws.prompts_file(prompt_set, "test")
        if not path.exists():
            out[f"wf1_{ds}"] = ""
            continue
        samples = [s for s in read_samples(path) if s.meta["dataset_id"] == ds]
        labels = DatasetManifest.load(ws.manifest_file(prompt_set)).label_set
        completions = run_inference(samples, config)
        out[f"wf1_{ds}"] = f"{100 * score(samples, completions, labels).weighted_f1:.2f}"
    return out


def _pivot_table(rows: list[dict], sources: list[str], fractions: list[Fraction], metric: str) -> str:
    """Fraction x (dataset x {total, ratio, single}) pivot."""
    cols = [(ds, s) for ds in sources for s in ("total", "ratio", "single")]
    cell = {}
    for r in rows:
        for ds in sources:
            if r["strategy"] == SINGLE and r["dataset"] != ds:
                continue
            value = r.get(f"wf1_{ds}", "") if metric == "wf1" else r.get(f"n_{ds}", "")
            cell[(r["fraction"], ds, r["strategy"])] = value
    head = ["fraction"] + [f"{ds}:{s}" for ds, s in cols]
    lines = ["\t".join(head)]
    for f in fractions:
        lines.append("\t".join([str(f)] + [str(cell.get((str(f), ds, s), "")) for ds, s in cols]))
    return "\n".join(lines)


PAIRING_COMBOS = [
    ("all_labels", "all_labels"),
    ("same_label", "all_labels"),
    ("same_label", "same_label"),
    ("all_labels", "same_label"),
]


def cmd_sweep(ws: Workspace, args) -> int:
    base = ws.cfg
    if args.kind == "window":
        variants = [(f"w{w}", base.override(window=w)) for w in base.windows]
    elif args.kind == "alpha":
        variants = [(f"alpha{a:g}", base.override(alpha=float(a))) for a in base.alphas]
    else:
        variants = [
            (f"train-{t}_infer-{i}", base.override(train_pairing=t, infer_pairing=i)) for t, i in PAIRING_COMBOS
        ]
    rows = []
    for name in _selected(ws, args):
        corpus = ws.load_corpus(name)
        index = ws.load_index(name)
        for tag, cfg in variants:
            sub = Workspace(ws.root / "sweeps" / args.kind / tag, cfg)
            out = sub.dir(".")
            spec = WindowSpec(cfg.window)
            s2 = export_stage2(corpus, spec, index, cfg.alpha, seed=cfg.seed, pairing=cfg.train_pairing)
            s2.write(out / f"{name}.stage2.jsonl", provenance=sub.provenance)
            prompts = build_inference_prompts(corpus, spec, index, pairing=cfg.infer_pairing, split=args.split)
            write_samples(prompts, out / f"{name}.{args.split}.jsonl", provenance=sub.provenance)
            row = {"dataset": name, "variant": tag, "config_hash": cfg.hash, "stage2_records": len(s2.records), "prompts": len(prompts)}
            if args.evaluate:
                completions = run_inference(prompts, cfg.backend)
                report = score(prompts, completions, corpus.manifest.label_set)
                write_json(out / f"{name}.{args.split}.report.json", {**report.to_json(), **sub.provenance})
                row["wf1"] = f"{100 * report.weighted_f1:.2f}"
            rows.append(row)
    out = ws.dir(f"sweeps/{args.kind}")
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    (out / "summary.csv").write_text(f"# config_hash={ws.cfg.hash}\n" + buf.getvalue(), encoding="utf-8")
    print(buf.getvalue(), end="")
    return 0


def _selected(ws: Workspace, args) -> list[str]:
    if getattr(args, "dataset", None):
        return [args.dataset]
    names = list(ws.cfg.datasets)
    if ws.manifest_file(UNIFIED_ID).exists():
        names.append(UNIFIED_ID)
    return names


def _format_rows(rows: list[dict], cols: list[str]) -> str:
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) if rows else len(c) for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    lines += ["  ".join(str(r[c]).ljust(widths[c]) for c in cols) for r in rows]
    return "\n".join(lines)


# ----------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workspace", "-w", default=".", help="workspace directory (default: .)")
    common.add_argument("--config", "-c", help="config file (default: <workspace>/ercgen.json)")
    common.add_argument("--seed", type=int)
    common.add_argument("--window", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--train-pairing", choices=["same_label", "all_labels"])
    common.add_argument("--infer-pairing", choices=["same_label", "all_labels"])
    common.add_argument("--no-demonstrations", action="store_true")
    common.add_argument("--backend", choices=["mock_echo", "mock_rule", "http"])
    common.add_argument("--endpoint")
    common.add_argument("--concurrency", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="ercgen", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="validate and copy configured corpora into the workspace")
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("unify", parents=[common], help="build the unified-label corpus and speaker registry")
    p.add_argument("--datasets", nargs="+")
    p.set_defaults(func=cmd_unify)

    p = sub.add_parser("build-index", parents=[common], help="build the demonstration retrieval base")
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("build-prompts", parents=[common], help="render inference prompts")
    p.add_argument("--dataset")
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_build_prompts)

    p = sub.add_parser("export-train", parents=[common], help="write stage-1 and stage-2 training files")
    p.add_argument("--dataset")
    p.add_argument("--subset", help="subset manifest from scale-experiment")
    p.set_defaults(func=cmd_export_train)

    p = sub.add_parser("infer", parents=[common], help="run the configured backend over prompts")
    p.add_argument("--dataset")
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", parents=[common], help="score predictions (running inference if needed)")
    p.add_argument("--dataset")
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", parents=[common], help="run every stage end to end")
    p.add_argument("--split", default="test")
    p.add_argument("--no-unify", action="store_true")
    p.add_argument("--skip-train", action="store_true")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("scale-experiment", parents=[common], help="total/ratio/single data-scaling grid")
    p.add_argument("--evaluate", action="store_true", help="score the backend for every plan")
    p.set_defaults(func=cmd_scale_experiment)

    p = sub.add_parser("sweep", parents=[common], help="window / alpha / pairing sweeps")
    p.add_argument("kind", choices=["window", "alpha", "pairing"])
    p.add_argument("--dataset")
    p.add_argument("--split", default="test")
    p.add_argument("--evaluate", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return ap


def load_config(args) -> RunConfig:
    root = Path(args.workspace)
    path = Path(args.config) if args.config else root / "ercgen.json"
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    cfg = RunConfig.load(path)
    backend = {}
    if args.backend:
        backend["kind"] = args.backend
    if args.endpoint:
        backend["endpoint"] = args.endpoint
    if args.concurrency:
        backend["concurrency"] = args.concurrency
    return cfg.override(
        seed=args.seed,
        window=args.window,
        alpha=args.alpha,
        train_pairing=args.train_pairing,
        infer_pairing=args.infer_pairing,
        demonstrations=False if args.no_demonstrations else None,
        backend=backend or None,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        ws = Workspace(Path(args.workspace), cfg)
        return args.func(ws, args)
    except (ConfigError, CommandError, CorpusError, UnknownLabel, FileNotFoundError, ValueError, LookupError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EvalAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
