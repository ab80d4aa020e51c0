"""Declarative run configuration: one JSON file fully determines a
reproducible run.  A serialized copy plus its hash goes into every
output directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import CorpusParams, MixtureSpec, SyntheticLanguageSpec, default_language_specs
from .errors import InputError
from .model import ModelConfig
from .train import TrainRecipe


def default_config_dict() -> dict:
    """The default desk-scale run: 8-layer model, 4 synthetic languages,
    ~20.5M tokens, checkpoint every 50 steps (51 snapshots)."""
    specs = default_language_specs()
    return {
        "seed": 0,
        "out_dir": "runs/default",
        "languages": [s.to_dict() for s in specs],
        "mixture": {"L0": 0.5, "L1": 1 / 6, "L2": 1 / 6, "L3": 1 / 6},
        "model": ModelConfig().to_dict(),
        "recipe": TrainRecipe(
            peak_lr=3e-3, warmup_ratio=0.10, min_lr_ratio=0.10,
            betas=(0.9, 0.999), epsilon=1e-8, weight_decay=0.01,
            grad_clip_norm=1.0, total_steps=2500, batch_size=64,
            checkpoint_every=50, seed=0).to_dict(),
        "data": {
            "seq_len": 128,
            "tokenizer_vocab": 2046,
            "docs_per_lang": {"L0": 230000, "L1": 82000, "L2": 82000, "L3": 82000},
            "corpus": {
                "doc_words": [20, 60], "sentence_words": [4, 10],
                "quote_prob": 0.12, "dialog_prob": 0.06, "suffix_prob": 0.12,
                "parallel_fraction": 0.02, "parallel_concepts": [4, 8],
            },
        },
        "wlt": {
            "n_concepts": 125, "n_fewshot": 25,
            "pos_targets": {"noun": 40, "verb": 40, "adj": 25, "adv": 20},
            "target_copy_rate": 0.044, "n_shots": 5,
        },
        "analysis": {
            "eval_seed": 0,
            "lens_concepts": 12,
            "lens_every": 2,
            "influence_steps": 6,
            "influence_max_items": 16,
            "influence_languages": None,
            "ablate_every": 2,
            "ablations": [
                "scale groups=attn_v@0-2 factor=2.0",
                "scale groups=attn_v@0-2 factor=0.5",
                "swap donor=@final blocks=bottom,top",
            ],
            "stats_window_chars": 150,
        },
    }


#: keys whose dict values are data, not sections: they replace wholesale
_REPLACE_KEYS = {"mixture", "docs_per_lang", "pos_targets"}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if k not in _REPLACE_KEYS and isinstance(v, dict) and isinstance(base.get(k), dict):
            out[k] = _merge(base[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    raw: dict
    seed: int
    out_dir: Path
    specs: list
    mixture: MixtureSpec
    model: ModelConfig
    recipe: TrainRecipe
    seq_len: int
    tokenizer_vocab: int
    docs_per_lang: dict
    corpus_params: CorpusParams
    wlt: dict
    analysis: dict

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def save_copy(self, out_dir) -> None:
        out = dict(self.raw)
        out["config_hash"] = self.config_hash
        Path(out_dir, "run_config.json").write_text(
            json.dumps(out, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def parse_config(raw: dict, out_dir=None, seed=None) -> RunConfig:
    cfg = _merge(default_config_dict(), raw or {})
    if out_dir is not None:
        cfg["out_dir"] = str(out_dir)
    if seed is not None:
        cfg["seed"] = int(seed)
        cfg["recipe"]["seed"] = int(seed)
    try:
        specs = [SyntheticLanguageSpec.from_dict(d) for d in cfg["languages"]]
        mixture = MixtureSpec(dict(cfg["mixture"]))
        model = ModelConfig.from_dict(cfg["model"])
        recipe = TrainRecipe.from_dict(cfg["recipe"])
        data = cfg["data"]
        cp_raw = dict(data.get("corpus", {}))
        for key in ("doc_words", "sentence_words", "parallel_concepts"):
            if key in cp_raw:
                cp_raw[key] = tuple(cp_raw[key])
        corpus_params = CorpusParams(**cp_raw)
        docs = data["docs_per_lang"]
        if isinstance(docs, int):
            docs = {s.lang_id: docs for s in specs}
        docs = {str(k): int(v) for k, v in docs.items()}
        for s in specs:
            if s.lang_id not in docs:
                raise InputError(f"docs_per_lang missing language {s.lang_id!r}")
        seq_len = int(data["seq_len"])
        if seq_len > model.max_seq_len:
            raise InputError("data.seq_len exceeds model max_seq_len")
        tok_vocab = int(data["tokenizer_vocab"])
        if tok_vocab + 2 != model.vocab_size:
            raise InputError(
                f"tokenizer_vocab + 2 specials must equal model vocab_size "
                f"({tok_vocab} + 2 != {model.vocab_size})")
        lang_ids = {s.lang_id for s in specs}
        if set(mixture.probs) != lang_ids:
            raise InputError("mixture languages do not match the language specs")
        return RunConfig(raw=cfg, seed=int(cfg["seed"]), out_dir=Path(cfg["out_dir"]),
                         specs=specs, mixture=mixture, model=model, recipe=recipe,
                         seq_len=seq_len, tokenizer_vocab=tok_vocab,
                         docs_per_lang=docs, corpus_params=corpus_params,
                         wlt=dict(cfg["wlt"]), analysis=dict(cfg["analysis"]))
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"invalid run config: {e}") from e


def load_config(path, out_dir=None, seed=None) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"config file is not valid JSON: {e}") from e
    return parse_config(raw, out_dir=out_dir, seed=seed)
