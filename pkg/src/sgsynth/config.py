"""Run configuration: one JSON file drives every CLI stage.

Relative paths resolve against the config file's directory. Secrets can come
from the environment (SGSYNTH_LLM_TOKEN / SGSYNTH_CAPTIONER_TOKEN), which
takes precedence over values in the file.
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from sgsynth.core import PipelineError
from sgsynth.graph import DEFAULT_RULES, ExclusivityRule
from sgsynth.llm import LlmEndpoint
from sgsynth.narrate import CaptionerEndpoint
from sgsynth.prompt import DEFAULT_BATCH_CAP, DEFAULT_TEMPLATE_ID

LLM_TOKEN_ENV = "SGSYNTH_LLM_TOKEN"
CAPTIONER_TOKEN_ENV = "SGSYNTH_CAPTIONER_TOKEN"


class ConfigError(PipelineError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.field_path = path


@dataclass(frozen=True)
class EvalSettings:
    ks: tuple = (20, 50, 100)
    iou_threshold: float = 0.5
    match_mode: str = "union"


@dataclass(frozen=True)
class PathSettings:
    annotations: Path | None = None
    cache_dir: Path = Path(".sgsynth-cache")
    output_corpus: Path = Path("corpus.jsonl")
    instructions: Path = Path("instructions.jsonl")
    captions_file: Path | None = None


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    n_max_rois: int = 16
    batch_size: int = 1
    template_id: str = DEFAULT_TEMPLATE_ID
    batch_cap: int = DEFAULT_BATCH_CAP
    uri_template: str = "{image_id}"
    global_caption_source: str = "service"  # or "dataset"
    captioner_mode: str = "mock"  # or "http"
    llm_mode: str = "mock"  # or "http"
    captioner: CaptionerEndpoint = CaptionerEndpoint(base_url="")
    llm: LlmEndpoint = LlmEndpoint(base_url="", model_name="mock")
    rules: tuple = DEFAULT_RULES
    paths: PathSettings = PathSettings()
    eval: EvalSettings = EvalSettings()


def _typed(raw, path, key, kind, default):
    value = raw.get(key, default)
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{path}.{key}", f"expected {kind.__name__}, got {value!r}")
    return value


def _parse_eval(raw):
    defaults = EvalSettings()
    ks_raw = raw.get("ks", list(defaults.ks))
    if (
        not isinstance(ks_raw, list)
        or not ks_raw
        or not all(isinstance(k, int) and not isinstance(k, bool) and k >= 1 for k in ks_raw)
    ):
        raise ConfigError("eval.ks", f"expected a non-empty list of positive integers, got {ks_raw!r}")
    iou_threshold = _typed(raw, "eval", "iou_threshold", float, defaults.iou_threshold)
    if not 0 < iou_threshold < 1:
        raise ConfigError("eval.iou_threshold", f"must be in (0, 1), got {iou_threshold}")
    match_mode = _typed(raw, "eval", "match_mode", str, defaults.match_mode)
    if match_mode not in ("union", "per_box"):
        raise ConfigError("eval.match_mode", f"must be 'union' or 'per_box', got {match_mode!r}")
    return EvalSettings(tuple(sorted(set(ks_raw))), iou_threshold, match_mode)


def _parse_rules(raw_rules):
    rules = []
    for i, raw in enumerate(raw_rules):
        path = f"rules[{i}]"
        if not isinstance(raw, dict):
            raise ConfigError(path, "each rule must be an object")
        try:
            rules.append(
                ExclusivityRule(
                    raw.get("predicate", ""),
                    raw.get("bound_role", ""),
                    raw.get("max_partners", 1),
                )
            )
        except (TypeError, ValueError) as error:
            raise ConfigError(path, str(error)) from error
    return tuple(rules)


def _parse_paths(raw, base):
    defaults = PathSettings()

    def resolve(key, default, must_exist=False):
        value = raw.get(key)
        if value is None:
            path = default
            if path is not None and not path.is_absolute():
                path = base / path
            return path
        if not isinstance(value, str) or not value:
            raise ConfigError(f"paths.{key}", f"expected a path string, got {value!r}")
        path = Path(value)
        if not path.is_absolute():
            path = base / path
        if must_exist and not path.exists():
            raise ConfigError(f"paths.{key}", f"path does not exist: {path}")
        return path

    return PathSettings(
        annotations=resolve("annotations", defaults.annotations, must_exist=True),
        cache_dir=resolve("cache_dir", defaults.cache_dir),
        output_corpus=resolve("output_corpus", defaults.output_corpus),
        instructions=resolve("instructions", defaults.instructions),
        captions_file=resolve("captions_file", defaults.captions_file, must_exist=True),
    )


def _parse_captioner(raw):
    mode = raw.get("mode", "http" if raw.get("base_url") else "mock")
    if mode not in ("mock", "http"):
        raise ConfigError("captioner.mode", f"must be 'mock' or 'http', got {mode!r}")
    try:
        endpoint = CaptionerEndpoint(
            base_url=_typed(raw, "captioner", "base_url", str, ""),
            timeout=_typed(raw, "captioner", "timeout", float, 30.0),
            max_concurrency=_typed(raw, "captioner", "max_concurrency", int, 4),
            auth_token=os.environ.get(CAPTIONER_TOKEN_ENV) or raw.get("auth_token"),
        )
    except ValueError as error:
        raise ConfigError("captioner", str(error)) from error
    if mode == "http" and not endpoint.base_url:
        raise ConfigError("captioner.base_url", "required when mode is 'http'")
    return mode, endpoint


def _parse_llm(raw):
    mode = raw.get("mode", "http" if raw.get("base_url") else "mock")
    if mode not in ("mock", "http"):
        raise ConfigError("llm.mode", f"must be 'mock' or 'http', got {mode!r}")
    try:
        endpoint = LlmEndpoint(
            base_url=_typed(raw, "llm", "base_url", str, ""),
            model_name=_typed(raw, "llm", "model_name", str, "mock"),
            temperature=_typed(raw, "llm", "temperature", float, 0.0),
            max_output_tokens=_typed(raw, "llm", "max_output_tokens", int, 2048),
            timeout=_typed(raw, "llm", "timeout", float, 60.0),
            max_retries=_typed(raw, "llm", "max_retries", int, 3),
            backoff_base=_typed(raw, "llm", "backoff_base", float, 0.5),
            max_concurrency=_typed(raw, "llm", "max_concurrency", int, 4),
            auth_token=os.environ.get(LLM_TOKEN_ENV) or raw.get("auth_token"),
        )
    except ValueError as error:
        raise ConfigError("llm", str(error)) from error
    if mode == "http" and not endpoint.base_url:
        raise ConfigError("llm.base_url", "required when mode is 'http'")
    return mode, endpoint


def load_config(path):
    """Parse and validate a config file, applying defaults (seed 0, n_max 16,
    ks [20, 50, 100], temperature 0) for anything not specified."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text("utf-8"))
    except FileNotFoundError as error:
        raise ConfigError(str(path), "config file not found") from error
    except ValueError as error:
        raise ConfigError(str(path), f"invalid JSON: {error}") from error
    if not isinstance(raw, dict):
        raise ConfigError("$", "config must be a JSON object")

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed", f"expected an integer, got {seed!r}")
    n_max_rois = raw.get("n_max_rois", 16)
    if isinstance(n_max_rois, bool) or not isinstance(n_max_rois, int) or n_max_rois < 1:
        raise ConfigError("n_max_rois", f"expected a positive integer, got {n_max_rois!r}")
    batch_cap = raw.get("batch_cap", DEFAULT_BATCH_CAP)
    if isinstance(batch_cap, bool) or not isinstance(batch_cap, int) or batch_cap < 1:
        raise ConfigError("batch_cap", f"expected a positive integer, got {batch_cap!r}")
    batch_size = raw.get("batch_size", 1)
    if isinstance(batch_size, bool) or not isinstance(batch_size, int) or not 1 <= batch_size <= batch_cap:
        raise ConfigError("batch_size", f"expected an integer in [1, {batch_cap}], got {batch_size!r}")
    template_id = raw.get("template_id", DEFAULT_TEMPLATE_ID)
    if not isinstance(template_id, str) or not template_id:
        raise ConfigError("template_id", f"expected a non-empty string, got {template_id!r}")
    uri_template = raw.get("uri_template", "{image_id}")
    if not isinstance(uri_template, str) or not uri_template:
        raise ConfigError("uri_template", f"expected a non-empty string, got {uri_template!r}")
    caption_source = raw.get("global_caption_source", "service")
    if caption_source not in ("service", "dataset"):
        raise ConfigError(
            "global_caption_source", f"must be 'service' or 'dataset', got {caption_source!r}"
        )

    captioner_mode, captioner = _parse_captioner(raw.get("captioner", {}))
    llm_mode, llm = _parse_llm(raw.get("llm", {}))
    rules = _parse_rules(raw["rules"]) if "rules" in raw else DEFAULT_RULES
    paths = _parse_paths(raw.get("paths", {}), path.parent)
    eval_settings = _parse_eval(raw.get("eval", {}))
    if caption_source == "dataset" and paths.captions_file is None:
        raise ConfigError("paths.captions_file", "required when global_caption_source is 'dataset'")

    return PipelineConfig(
        seed=seed,
        n_max_rois=n_max_rois,
        batch_size=batch_size,
        template_id=template_id,
        batch_cap=batch_cap,
        uri_template=uri_template,
        global_caption_source=caption_source,
        captioner_mode=captioner_mode,
        llm_mode=llm_mode,
        captioner=captioner,
        llm=llm,
        rules=rules,
        paths=paths,
        eval=eval_settings,
    )
