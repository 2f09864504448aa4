"""Command-line surface wiring the pipeline stages together.

Every subcommand prints exactly one JSON summary line to stdout; structured
logs (one JSON object per event) go to stderr. Exit codes: 0 success, 1 when
validation rejected triplets, 2 on configuration or I/O errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from sgsynth.config import ConfigError, PipelineConfig, load_config
from sgsynth.core import PipelineError
from sgsynth.dataset import (
    export_instruction_pairs,
    ingest_coco,
    predicate_stats,
    read_pseudo_labels,
    read_records,
    render_stats_table,
    stats_to_dict,
    write_records,
)
from sgsynth.evaluate import read_grounded_file, recall_at_k
from sgsynth.graph import parse_response, validate
from sgsynth.llm import utc_now_iso
from sgsynth.pipeline import (
    build_captioner,
    load_dataset_captions,
    prepare_record,
    responder_from_spec,
    synthesize,
)
from sgsynth.prompt import build_prompt, load_template
from sgsynth.roi import derive_image_seed, select_rois
from sgsynth.dataset import build_entry, pseudo_label_line


class _JsonLogHandler(logging.Handler):
    def emit(self, record):
        payload = {"event": "log", "level": record.levelname.lower(), "logger": record.name,
                   "message": record.getMessage()}
        print(json.dumps(payload, ensure_ascii=False), file=sys.stderr)


def _setup_logging(verbose=False):
    root = logging.getLogger()
    root.handlers = [_JsonLogHandler()]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def log_event(event, **fields):
    print(json.dumps({"event": event, **fields}, ensure_ascii=False), file=sys.stderr)


def _summary(command, **fields):
    print(json.dumps({"command": command, **fields}, ensure_ascii=False))


def _config_from_args(args):
    if getattr(args, "config", None):
        return load_config(args.config)
    return PipelineConfig()


def cmd_ingest(args):
    config = _config_from_args(args)
    annotations = Path(args.annotations) if args.annotations else config.paths.annotations
    if annotations is None:
        raise ConfigError("paths.annotations", "no annotation file given (flag --annotations or config)")
    records = ingest_coco(annotations)
    flagged = sum(1 for record in records if len(record.objects) < 2)
    write_records(records, args.out)
    _summary(
        "ingest",
        images=len(records),
        objects=sum(len(r.objects) for r in records),
        flagged_few_objects=flagged,
        output=str(args.out),
    )
    return 0


def cmd_select_rois(args):
    config = _config_from_args(args)
    records = read_records(args.records)
    total_pairs = 0
    with Path(args.out).open("w", encoding="utf-8") as handle:
        for record in records:
            seed = derive_image_seed(config.seed, record.image_id)
            pairs = select_rois(record.objects, config.n_max_rois, seed) if len(record.objects) >= 2 else []
            total_pairs += len(pairs)
            payload = {
                "image_id": record.image_id,
                "pairs": [
                    {
                        "first": f"{p.first.category}.{p.first.index}",
                        "second": f"{p.second.category}.{p.second.index}",
                        "union": list(p.union.as_tuple()),
                    }
                    for p in pairs
                ],
            }
            handle.write(json.dumps(payload, ensure_ascii=False) + "\n")
    _summary("select-rois", images=len(records), pairs=total_pairs, output=str(args.out))
    return 0


def cmd_narrate(args):
    config = _config_from_args(args)
    if args.mock_captioner:
        config = _replace_mode(config, captioner_mode="mock")
    records = read_records(args.records)
    captioner = build_captioner(config)
    dataset_captions = None
    if config.global_caption_source == "dataset" and config.paths.captions_file is not None:
        dataset_captions = load_dataset_captions(config.paths.captions_file)
    captioned = []
    try:
        for record in records:
            captioned.append(prepare_record(record, config, captioner, dataset_captions))
    finally:
        if hasattr(captioner, "close"):
            captioner.close()
    write_records(captioned, args.out)
    _summary(
        "narrate",
        images=len(captioned),
        captions=sum(len(r.captions) for r in captioned),
        output=str(args.out),
    )
    return 0


def cmd_prompt(args):
    config = _config_from_args(args)
    records = read_records(args.records)
    count = 0
    with Path(args.out).open("w", encoding="utf-8") as handle:
        for i in range(0, len(records), config.batch_size):
            batch = records[i : i + config.batch_size]
            bundle = build_prompt(batch, config.template_id, config.batch_cap)
            handle.write(
                json.dumps(
                    {
                        "image_ids": list(bundle.image_ids),
                        "template_id": bundle.template_id,
                        "template_checksum": bundle.template_checksum,
                        "system": bundle.system,
                        "user": bundle.user,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            count += 1
    _summary("prompt", prompts=count, images=len(records), output=str(args.out))
    return 0


def _replace_mode(config, **changes):
    from dataclasses import replace

    return replace(config, **changes)


def cmd_synth(args):
    config = _config_from_args(args)
    if args.mock_captioner:
        config = _replace_mode(config, captioner_mode="mock")
    responder = responder_from_spec(args.mock_llm)
    if responder is None and config.llm_mode == "mock":
        responder = responder_from_spec("auto")
    from sgsynth.llm import ResponseCache
    from sgsynth.pipeline import build_llm_client

    cache = ResponseCache(config.paths.cache_dir)
    llm_client = build_llm_client(config, cache, responder=responder)
    summary = synthesize(
        config,
        out_path=args.out,
        llm_client=llm_client,
        responses_path=args.responses,
    )
    _summary("synth", **summary)
    return 1 if summary["rejected"] > 0 else 0


def cmd_validate(args):
    config = _config_from_args(args)
    records = {record.image_id: record for record in read_records(args.records)}
    template = load_template(config.template_id)
    entries = []
    rejects = []
    unmatched = 0
    with Path(args.responses).open("r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            data = json.loads(line)
            for graph in parse_response(data["text"]):
                record = records.get(graph.image_id)
                if record is None:
                    log_event("unmatched_graph", image_id=graph.image_id, line=number)
                    unmatched += 1
                    continue
                report = validate(graph, record, config.rules)
                timestamp = data.get("created_at") or utc_now_iso()
                entries.append(
                    build_entry(
                        record, report.accepted, template, data.get("model_name", config.llm.model_name),
                        timestamp, len(report.rejected),
                    )
                )
                for triplet, reason in report.rejected:
                    rejects.append(
                        {
                            "image_id": record.image_id,
                            "source": triplet.source,
                            "target": triplet.target,
                            "relation": triplet.relation,
                            "reason": reason.value,
                        }
                    )
    entries.sort(key=lambda entry: entry.image_id)
    with Path(args.out).open("w", encoding="utf-8") as handle:
        for entry in entries:
            handle.write(pseudo_label_line(entry) + "\n")
    if args.rejects:
        with Path(args.rejects).open("w", encoding="utf-8") as handle:
            for reject in rejects:
                handle.write(json.dumps(reject, ensure_ascii=False) + "\n")
    _summary(
        "validate",
        images=len(entries),
        triplets=sum(len(e.relationships) for e in entries),
        rejected=len(rejects),
        unmatched_graphs=unmatched,
        output=str(args.out),
    )
    return 1 if rejects else 0


def cmd_stats(args):
    entries = read_pseudo_labels(args.corpus)
    hist = predicate_stats(entries)
    report = stats_to_dict(hist, k=args.top)
    if args.out:
        Path(args.out).write_text(json.dumps(report, ensure_ascii=False, indent=2) + "\n", "utf-8")
    if args.table:
        Path(args.table).write_text(render_stats_table(hist, k=args.top) + "\n", "utf-8")
    _summary(
        "stats",
        entries=len(entries),
        triplets=hist.total,
        predicates=len(hist.counts),
        head=report["head"][: min(3, len(report["head"]))],
        output=str(args.out) if args.out else None,
    )
    return 0


def cmd_export_instructions(args):
    config = _config_from_args(args)
    entries = read_pseudo_labels(args.corpus)
    out = Path(args.out) if args.out else config.paths.instructions
    count = export_instruction_pairs(entries, out)
    _summary("export-instructions", pairs=count, output=str(out))
    return 0


def cmd_eval(args):
    config = _config_from_args(args)
    ks = tuple(int(part) for part in args.k.split(",")) if args.k else config.eval.ks
    iou_threshold = args.iou if args.iou is not None else config.eval.iou_threshold
    match_mode = args.mode if args.mode else config.eval.match_mode
    gts = read_grounded_file(args.gt)
    preds = read_grounded_file(args.pred)
    report = recall_at_k(preds, gts, ks=ks, iou_threshold=iou_threshold, match_mode=match_mode)
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + "\n", "utf-8")
    if args.table:
        Path(args.table).write_text(report.render_table() + "\n", "utf-8")
    _summary("eval", **report.summary())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sgsynth",
        description="Synthesize scene-graph pseudo-labels from object annotations and captions, "
        "and evaluate grounded predictions with recall@K.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug-level logs on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="read COCO-style annotations into an image-record file")
    p.add_argument("--config")
    p.add_argument("--annotations", help="COCO-style detection JSON (overrides config)")
    p.add_argument("--out", required=True, help="output records JSONL")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("select-rois", help="enumerate, shuffle and truncate overlapping object pairs")
    p.add_argument("--config")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select_rois)

    p = sub.add_parser("narrate", help="attach global and region captions to records")
    p.add_argument("--config")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mock-captioner", action="store_true")
    p.set_defaults(func=cmd_narrate)

    p = sub.add_parser("prompt", help="render chat prompts for captioned records")
    p.add_argument("--config")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("synth", help="run the full pipeline into a pseudo-label corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="corpus path (default from config)")
    p.add_argument("--responses", help="also save raw completions to this JSONL")
    p.add_argument("--mock-llm", help="'auto' or a file whose text answers every request")
    p.add_argument("--mock-captioner", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="parse and validate raw completions against records")
    p.add_argument("--config")
    p.add_argument("--records", required=True)
    p.add_argument("--responses", required=True, help="JSONL of {'text': completion}")
    p.add_argument("--out", required=True, help="validated corpus JSONL")
    p.add_argument("--rejects", help="optional JSONL of rejected triplets with reasons")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="predicate histogram for a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--table", help="text table path")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export-instructions", help="emit instruction-tuning pairs from a corpus")
    p.add_argument("--config")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_instructions)

    p = sub.add_parser("eval", help="recall@K of grounded predictions against ground truth")
    p.add_argument("--config")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--k", help="comma-separated K values, e.g. 20,50,100")
    p.add_argument("--iou", type=float, help="IoU threshold (strictly greater-than)")
    p.add_argument("--mode", choices=["union", "per_box"])
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--table", help="text table path")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except (PipelineError, OSError) as error:
        log_event("error", type=type(error).__name__, message=str(error))
        return 2


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
