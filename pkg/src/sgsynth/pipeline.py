"""End-to-end corpus synthesis: annotations -> RoIs -> captions -> prompt ->
completion -> validated pseudo-labels.

Runs are resumable (images already present in the output corpus are skipped)
and deterministic: per-image seeds depend only on (seed, image_id), mock
services are pure, and completions are replayed from the response cache, so
a rerun against the same cache reproduces the corpus byte for byte. The
finalized corpus is sorted by image_id regardless of worker completion
order.
"""

import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import replace
from pathlib import Path

from sgsynth.dataset import build_entry, entry_from_dict, ingest_coco, pseudo_label_line
from sgsynth.graph import parse_response, validate
from sgsynth.llm import LlmClient, MockLlmClient, ResponseCache, overlap_responder, static_responder, utc_now_iso
from sgsynth.narrate import HttpCaptioner, MockCaptioner, generate_narratives
from sgsynth.prompt import build_prompt, load_template
from sgsynth.roi import derive_image_seed, select_rois

logger = logging.getLogger(__name__)


def build_captioner(config, transport=None):
    if config.captioner_mode == "mock":
        return MockCaptioner()
    return HttpCaptioner(config.captioner, transport=transport)


def build_llm_client(config, cache, responder=None, transport=None):
    if responder is not None:
        return MockLlmClient(responder, model_name=config.llm.model_name, cache=cache)
    if config.llm_mode == "mock":
        return MockLlmClient(overlap_responder, model_name=config.llm.model_name, cache=cache)
    return LlmClient(config.llm, cache=cache, transport=transport)


def responder_from_spec(spec):
    """--mock-llm argument: 'auto' derives completions from the prompt, any
    other value is a file whose text answers every request."""
    if spec is None:
        return None
    if spec == "auto":
        return overlap_responder
    return static_responder(Path(spec).read_text("utf-8"))


def load_dataset_captions(path):
    """JSON object mapping image_id -> global caption text."""
    data = json.loads(Path(path).read_text("utf-8"))
    if not isinstance(data, dict):
        raise ValueError("captions file must be a JSON object of image_id -> caption")
    return {str(key): str(value) for key, value in data.items()}


def prepare_record(record, config, captioner, dataset_captions=None):
    """Select RoIs and caption them, returning the record with captions filled."""
    seed = derive_image_seed(config.seed, record.image_id)
    pairs = select_rois(record.objects, config.n_max_rois, seed)
    global_caption = None
    if config.global_caption_source == "dataset" and dataset_captions is not None:
        global_caption = dataset_captions.get(record.image_id)
    captions = generate_narratives(
        record, pairs, captioner, uri_template=config.uri_template, global_caption=global_caption
    )
    return replace(record, captions=captions)


def scan_corpus_ids(path):
    """Image ids already present in a corpus file, tolerating a torn final
    line from an interrupted run (skipped with a warning)."""
    path = Path(path)
    ids = set()
    lines = []
    if not path.exists():
        return ids, lines
    with path.open("r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                entry = entry_from_dict(json.loads(line))
            except Exception:
                logger.warning("skipping unreadable corpus line %d in %s", number, path)
                continue
            if entry.image_id in ids:
                logger.warning("dropping duplicate corpus line for image %s", entry.image_id)
                continue
            ids.add(entry.image_id)
            lines.append((entry.image_id, line.rstrip("\n")))
    return ids, lines


def _finalize_corpus(path, lines):
    ordered = sorted(lines, key=lambda item: item[0])
    directory = path.parent if path.parent != Path("") else Path(".")
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as handle:
        for _, line in ordered:
            handle.write(line + "\n")
    os.replace(tmp, path)


def synthesize(config, out_path=None, captioner=None, llm_client=None, responses_path=None):
    """Run the full pipeline over the configured annotations.

    Returns a summary dict with image, triplet and rejection counts.
    """
    if config.paths.annotations is None:
        raise ValueError("config.paths.annotations is required for synthesis")
    out_path = Path(out_path) if out_path is not None else config.paths.output_corpus
    records = ingest_coco(config.paths.annotations)
    eligible = [record for record in records if len(record.objects) >= 2]
    flagged = len(records) - len(eligible)

    existing_ids, kept_lines = scan_corpus_ids(out_path)
    todo = [record for record in eligible if record.image_id not in existing_ids]
    skipped = len(eligible) - len(todo)

    template = load_template(config.template_id)
    cache = ResponseCache(config.paths.cache_dir)
    own_captioner = captioner is None
    captioner = captioner or build_captioner(config)
    own_client = llm_client is None
    llm_client = llm_client or build_llm_client(config, cache)
    dataset_captions = None
    if config.global_caption_source == "dataset" and config.paths.captions_file is not None:
        dataset_captions = load_dataset_captions(config.paths.captions_file)

    batches = [todo[i : i + config.batch_size] for i in range(0, len(todo), config.batch_size)]

    def process(batch):
        prepared = [prepare_record(record, config, captioner, dataset_captions) for record in batch]
        bundle = build_prompt(prepared, config.template_id, config.batch_cap)
        response = llm_client.complete(bundle)
        graphs = {graph.image_id: graph for graph in parse_response(response.text)}
        for graph_id in graphs:
            if graph_id not in bundle.image_ids:
                logger.warning("completion mentions unknown image %s; ignored", graph_id)
        entries = []
        missing = 0
        rejected = 0
        for record in prepared:
            graph = graphs.get(record.image_id)
            if graph is None:
                logger.warning("completion omitted image %s; skipping it", record.image_id)
                missing += 1
                continue
            report = validate(graph, record, config.rules)
            rejected += len(report.rejected)
            timestamp = response.created_at or utc_now_iso()
            entries.append(
                build_entry(
                    record, report.accepted, template, llm_client.model_name, timestamp, len(report.rejected)
                )
            )
        return entries, rejected, missing, bundle, response

    new_lines = []
    total_rejected = 0
    total_missing = 0
    total_triplets = 0
    responses_handle = None
    try:
        if responses_path is not None:
            responses_handle = Path(responses_path).open("w", encoding="utf-8")
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with out_path.open("a", encoding="utf-8") as out:
            with ThreadPoolExecutor(max_workers=config.llm.max_concurrency) as pool:
                futures = [pool.submit(process, batch) for batch in batches]
                for future in as_completed(futures):
                    entries, rejected, missing, bundle, response = future.result()
                    total_rejected += rejected
                    total_missing += missing
                    for entry in entries:
                        line = pseudo_label_line(entry)
                        out.write(line + "\n")
                        new_lines.append((entry.image_id, line))
                        total_triplets += len(entry.relationships)
                    out.flush()
                    if responses_handle is not None:
                        responses_handle.write(
                            json.dumps(
                                {"image_ids": list(bundle.image_ids), "text": response.text},
                                ensure_ascii=False,
                            )
                            + "\n"
                        )
    finally:
        if responses_handle is not None:
            responses_handle.close()
        if own_client:
            llm_client.close()
        if own_captioner and hasattr(captioner, "close"):
            captioner.close()

    _finalize_corpus(out_path, kept_lines + new_lines)
    return {
        "images_total": len(records),
        "flagged_few_objects": flagged,
        "skipped_existing": skipped,
        "synthesized": len(new_lines),
        "missing_in_response": total_missing,
        "triplets": total_triplets,
        "rejected": total_rejected,
        "corpus": str(out_path),
    }
