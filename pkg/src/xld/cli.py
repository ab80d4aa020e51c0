"""The ``xld`` command line: train, eval, lens, influence, ablate,
stats, reproduce.

Exit codes: 0 ok, 2 config error, 3 missing inputs, 4 numeric failure.
Heavy imports happen after thread setup so --threads / XLD_THREADS can
still bound the BLAS pools.  Concurrent invocations on one output
directory are rejected via a lock file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4


class MissingInputs(Exception):
    pass


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xld", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("train", "generate data, train the model, write dense checkpoints"),
        ("eval", "word-translation + repetition metrics for every checkpoint"),
        ("lens", "layer-wise margin analysis over checkpoints"),
        ("influence", "update attribution onto parameter groups and data partitions"),
        ("ablate", "scaling/swap interventions with paired re-evaluation"),
        ("stats", "corpus counting and first-correct regression"),
        ("reproduce", "two-phase summary of a completed run"),
    ]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="run config JSON")
        sp.add_argument("--ckpt-glob", default=None, help="checkpoint file pattern")
        sp.add_argument("--out", default=None, help="override output directory")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: XLD_THREADS or all)")
    return p


def _setup_threads(n: int | None) -> None:
    if n is None:
        env = os.environ.get("XLD_THREADS", "").strip()
        n = int(env) if env else None
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMBA_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


@contextmanager
def _lock(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / ".xld.lock"
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        from .errors import InputError
        raise InputError(f"output directory {out_dir} is locked by another xld run "
                         f"(remove {path} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        path.unlink(missing_ok=True)


def _ckpt_paths(cfg, pattern=None) -> list:
    import re
    base = cfg.out_dir / "ckpts"
    paths = sorted(Path().glob(pattern)) if pattern else sorted(base.glob("ckpt_*.xld"))
    def step_of(p):
        m = re.search(r"ckpt_(\d+)", p.name)
        return int(m.group(1)) if m else 0
    paths = sorted(paths, key=step_of)
    if not paths:
        raise MissingInputs(f"no checkpoints match "
                            f"{pattern or str(base / 'ckpt_*.xld')!r}; run `xld train` first")
    return paths


def _artifacts(cfg):
    from .tokenizer import TokenizerModel
    from .wlt import load_wlt
    tok_path = cfg.out_dir / "tokenizer.json"
    wlt_path = cfg.out_dir / "wlt.jsonl"
    if not tok_path.exists() or not wlt_path.exists():
        raise MissingInputs(f"missing {tok_path.name} / {wlt_path.name} in {cfg.out_dir}; "
                            f"run `xld train` first")
    return TokenizerModel.load(tok_path), load_wlt(wlt_path)


def _say(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------- train

def cmd_train(cfg) -> int:
    import csv

    from .corpus import BatchSampler, generate_corpus, save_corpus
    from .svgplot import line_chart
    from .tokenizer import tokenize_documents, train_tokenizer
    from .train import train_loop
    from .wlt import save_wlt, synthesize_wlt

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    cfg.save_copy(out)

    _say(f"[train] synthesizing benchmark ({cfg.wlt['n_concepts']} concepts)")
    ds = synthesize_wlt(cfg.specs, cfg.seed, n_concepts=cfg.wlt["n_concepts"],
                        n_fewshot=cfg.wlt["n_fewshot"], pos_targets=cfg.wlt["pos_targets"],
                        target_copy_rate=cfg.wlt["target_copy_rate"])
    save_wlt(ds, out / "wlt.jsonl")

    _say(f"[train] generating corpus ({sum(cfg.docs_per_lang.values())} documents)")
    corpora = generate_corpus(cfg.specs, ds.concepts, cfg.docs_per_lang, cfg.seed,
                              cfg.corpus_params)
    save_corpus(corpora, out / "corpus")

    _say(f"[train] training tokenizer (vocab {cfg.tokenizer_vocab} + 2 specials)")
    tok = train_tokenizer(corpora, cfg.tokenizer_vocab)
    tok.save(out / "tokenizer.json")

    _say("[train] tokenizing corpus")
    doc_tokens = {lang: tokenize_documents(tok, docs) for lang, docs in corpora.items()}
    sampler = BatchSampler(doc_tokens, cfg.mixture, cfg.recipe.batch_size, cfg.seq_len,
                           cfg.seed, tok.bos_id)

    total = cfg.recipe.total_steps

    def progress(rec):
        if rec.step % 50 == 0 or rec.step == total - 1:
            _say(f"[train] step {rec.step}/{total} loss={rec.loss:.4f} lr={rec.lr:.2e}")

    paths, log = train_loop(cfg.model, cfg.recipe, sampler, out / "ckpts",
                            progress=progress)
    with open(out / "loss.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["step", "tokens_seen", "lr", "loss", "grad_norm"])
        for row in log:
            w.writerow([row["step"], row["tokens_seen"], f"{row['lr']:.6e}",
                        f"{row['loss']:.6f}", f"{row['grad_norm']:.6f}"])
    line_chart([r["tokens_seen"] for r in log], {"loss": [r["loss"] for r in log]},
               out / "loss_curve.svg", "training loss", "tokens seen", "loss")
    _say(f"[train] wrote {len(paths)} checkpoints to {out / 'ckpts'}")
    return EXIT_OK


# ----------------------------------------------------------------- eval

def cmd_eval(cfg, ckpt_glob=None) -> int:
    from .checkpoint import load_checkpoint
    from .evalkit import (LABELS, evaluate_checkpoint, save_metric_series,
                          write_records_jsonl, write_summary_csv)
    from .svgplot import heatmap, line_chart, stacked_area_chart

    tok, ds = _artifacts(cfg)
    paths = _ckpt_paths(cfg, ckpt_glob)
    out = cfg.out_dir / "eval"
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.analysis["eval_seed"]

    series, wlt_records, rep_records = [], [], []
    for p in paths:
        ckpt = load_checkpoint(p)
        metrics, wr, rr = evaluate_checkpoint(ckpt, tok, ds, seed=seed,
                                              n_shots=cfg.wlt["n_shots"])
        series.append(metrics)
        wlt_records.extend(wr)
        rep_records.extend(rr)
        _say(f"[eval] step {ckpt.step}: wlt={metrics.wlt['accuracy']:.3f} "
             f"repetition={metrics.repetition['accuracy']:.3f}")
    write_records_jsonl(wlt_records, out / "records_wlt.jsonl")
    write_records_jsonl(rep_records, out / "records_repetition.jsonl")
    write_summary_csv(wlt_records, out / "summary_wlt.csv")
    write_summary_csv(rep_records, out / "summary_repetition.csv")
    save_metric_series(series, out / "metrics.json")

    xs = [m.tokens_seen for m in series]
    stacked_area_chart(
        xs, {l: [m.wlt["label_distribution"][l] for m in series] for l in LABELS},
        out / "error_modes.svg", "output decomposition over training", "tokens seen")
    line_chart(xs, {"translation": [m.wlt["accuracy"] for m in series],
                    "repetition": [m.repetition["accuracy"] for m in series]},
               out / "accuracy.svg", "accuracy over training", "tokens seen", "accuracy")
    line_chart(xs, {b: [m.wlt["bucket_accuracy"][b] for m in series]
                    for b in ("exact", "partial", "none")},
               out / "bucket_accuracy.svg", "accuracy per token-overlap bucket",
               "tokens seen", "accuracy")

    final = series[-1]
    langs = list(ds.languages)
    matrix = [[final.wlt["direction_accuracy"].get(f"{a}>{b}") if a != b else None
               for b in langs] for a in langs]
    diag = [final.repetition["direction_accuracy"].get(f"{l}>{l}") for l in langs]
    heatmap(matrix, langs, langs, out / "direction_heatmap.svg",
            f"translation accuracy at step {final.step} (diagonal: repetition)",
            diverging=False, cell_text=True, diag_marks=diag)
    return EXIT_OK


# ----------------------------------------------------------------- lens

def _lens_concepts(cfg, ds):
    import numpy as np
    qids = sorted(ds.query_ids)
    n = min(int(cfg.analysis["lens_concepts"]), len(qids))
    rng = np.random.default_rng([cfg.analysis["eval_seed"], 7009])
    return sorted(qids[i] for i in rng.choice(len(qids), size=n, replace=False))


def cmd_lens(cfg, ckpt_glob=None) -> int:
    from .checkpoint import load_checkpoint
    from .lens import block_score_curves, margin_heatmap, write_heatmap_csv
    from .surgery import default_block_spec
    from .svgplot import heatmap as heat_svg
    from .svgplot import line_chart

    tok, ds = _artifacts(cfg)
    paths = _ckpt_paths(cfg, ckpt_glob)[::max(1, int(cfg.analysis["lens_every"]))]
    out = cfg.out_dir / "lens"
    out.mkdir(parents=True, exist_ok=True)
    cids = _lens_concepts(cfg, ds)
    ckpts = [load_checkpoint(p) for p in paths]
    _say(f"[lens] margin analysis: {len(ckpts)} checkpoints x {len(cids)} concepts")
    steps, tokens, grid, labels = margin_heatmap(ckpts, tok, ds, concept_ids=cids,
                                                 seed=cfg.analysis["eval_seed"],
                                                 n_shots=cfg.wlt["n_shots"])
    write_heatmap_csv(steps, tokens, grid, labels, out / "margin_heatmap.csv")
    heat_svg(grid.tolist(), [str(t) for t in tokens], labels,
             out / "margin_heatmap.svg",
             "margin change per layer transition (red: translation-promoting)")
    spec = default_block_spec(cfg.model.n_layers)
    _, _, curves = block_score_curves(ckpts, tok, ds, spec.ranges(), concept_ids=cids,
                                      seed=cfg.analysis["eval_seed"],
                                      n_shots=cfg.wlt["n_shots"])
    line_chart(tokens, curves, out / "block_curves.svg",
               "translation-over-copy margin per block", "tokens seen", "mean margin")
    return EXIT_OK


# ------------------------------------------------------------ influence

def cmd_influence(cfg, ckpt_glob=None) -> int:
    import numpy as np

    from .checkpoint import load_checkpoint
    from .corpus import Batch
    from .evalkit import eval_wlt, load_records_jsonl
    from .influence import (DataPartition, KIND_TRAIN, build_parallel_partition,
                            build_prediction_sets, capture_step_contributions, d_copy,
                            influence, select_copy_groups, write_influence_csv)
    from .train import per_sample_grads

    tok, ds = _artifacts(cfg)
    paths = _ckpt_paths(cfg, ckpt_glob)
    out = cfg.out_dir / "influence"
    out.mkdir(parents=True, exist_ok=True)

    with_batches = [p for p in paths
                    if (p.parent / p.name.replace("ckpt_", "batch_").replace(".xld", ".npz")).exists()]
    if not with_batches:
        raise MissingInputs("no checkpoints have saved next-step batches")
    n_steps = min(int(cfg.analysis["influence_steps"]), len(with_batches))
    sel = [with_batches[int(round(i * (len(with_batches) - 1) / max(1, n_steps - 1)))]
           for i in range(n_steps)]
    sel = sorted(set(sel), key=lambda p: p.name)

    records_path = cfg.out_dir / "eval" / "records_wlt.jsonl"
    final_ckpt = load_checkpoint(paths[-1])
    if records_path.exists():
        records = [r for r in load_records_jsonl(records_path)
                   if r.checkpoint_step == final_ckpt.step]
    else:
        _say("[influence] no eval records found; evaluating final checkpoint")
        records, _ = eval_wlt(final_ckpt, tok, ds, seed=cfg.analysis["eval_seed"],
                              n_shots=cfg.wlt["n_shots"])
    langs = cfg.analysis.get("influence_languages") or list(ds.languages)
    sets = build_prediction_sets(ds, records, tok, cfg.model.max_seq_len,
                                 languages=langs,
                                 max_items=cfg.analysis["influence_max_items"],
                                 seed=cfg.analysis["eval_seed"],
                                 n_shots=cfg.wlt["n_shots"])
    hard_ids = sorted({r.concept_id for r in records if not r.is_correct})
    parallel_concepts = [ds.concept(c) for c in hard_ids][:40]
    parallel = build_parallel_partition(parallel_concepts, langs, tok)
    _say(f"[influence] sets: B_WLT={len(sets['B_WLT'].items)} "
         f"B_copy={len(sets['B_copy'].items)} parallel={len(parallel.samples)}")

    tensors, dcopy_series = [], []
    for p in sel:
        ckpt = load_checkpoint(p)
        batch = Batch.load(p.parent / p.name.replace("ckpt_", "batch_").replace(".xld", ".npz"))
        grads = per_sample_grads(ckpt, batch)
        cap_train = capture_step_contributions(ckpt, batch, cfg.recipe,
                                               per_sample_grads=grads,
                                               keep_per_sample=False)
        t_wlt = influence(cap_train, sets["B_WLT"], ckpt)
        tensors.append(t_wlt)

        parts = [DataPartition(lang, [(batch.tokens[i], batch.loss_mask[i])
                                      for i in range(batch.tokens.shape[0])
                                      if batch.langs[i] == lang], KIND_TRAIN)
                 for lang in sorted(set(batch.langs))]
        cap_sim = capture_step_contributions(ckpt, parts + [parallel], cfg.recipe,
                                             keep_per_sample=False)
        t_copy = influence(cap_sim, sets["B_copy"], ckpt)
        t_translate = influence(cap_sim, sets["B_translate"], ckpt)
        dcopy_series.append((ckpt.step, d_copy(t_copy, t_translate)))
        _say(f"[influence] step {ckpt.step}: residual={t_wlt.residual:.3e}")

    write_influence_csv(tensors, out / "influence.csv")
    with open(out / "d_copy.csv", "w", encoding="utf-8") as f:
        f.write("step,group,d_copy\n")
        for step, values in dcopy_series:
            for g in sorted(values):
                f.write(f"{step},{g},{values[g]:.10e}\n")

    steps = [s for s, _ in dcopy_series]
    metrics_path = cfg.out_dir / "eval" / "metrics.json"
    boundary = steps[len(steps) // 2]
    if metrics_path.exists():
        from .evalkit import detect_phases, load_metric_series
        try:
            boundary = detect_phases(load_metric_series(metrics_path)).copy_peak_step
        except Exception:
            pass
    for mode, window, fname in [
        ("promoting", (steps[0], boundary), "selected_promoting.txt"),
        ("suppressing", (boundary + 1, steps[-1]), "selected_suppressing.txt"),
    ]:
        try:
            chosen, warn = select_copy_groups(dcopy_series, window, mode)
        except Exception:
            chosen, warn = [], True
        with open(out / fname, "w", encoding="utf-8") as f:
            f.write(f"# mode={mode} window={window[0]}-{window[1]}"
                    + (" WARNING: no signal\n" if warn else "\n"))
            for g in chosen:
                f.write(g + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- ablate

def cmd_ablate(cfg, ckpt_glob=None) -> int:
    import csv
    import re

    from .checkpoint import load_checkpoint
    from .surgery import ablation_sweep, parse_intervention
    from .svgplot import line_chart

    tok, ds = _artifacts(cfg)
    paths = _ckpt_paths(cfg, ckpt_glob)
    every = max(1, int(cfg.analysis["ablate_every"]))
    subset = paths[::every]
    if paths[-1] not in subset:
        subset.append(paths[-1])
    out_base = cfg.out_dir / "ablate"
    out_base.mkdir(parents=True, exist_ok=True)

    recipes = cfg.analysis["ablations"]
    for recipe_line in recipes:
        line = recipe_line.replace("@final", str(paths[-1]))
        iv = parse_intervention(line, cfg.model)
        slug = re.sub(r"[^a-zA-Z0-9_.@-]+", "_", recipe_line.replace("@final", "final"))[:80]
        out = out_base / slug
        out.mkdir(parents=True, exist_ok=True)
        _say(f"[ablate] {iv.describe()} over {len(subset)} checkpoints")
        ckpts = [load_checkpoint(p) for p in subset]
        rows = ablation_sweep(ckpts, iv, tok, ds, seed=cfg.analysis["eval_seed"],
                              n_shots=cfg.wlt["n_shots"])
        with open(out / "paired.csv", "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["step", "tokens_seen", "acc_original", "acc_ablated",
                        "copy_rate_original", "copy_rate_ablated",
                        "repetition_original", "repetition_ablated",
                        "jaccard_original", "jaccard_ablated", "jaccard_n"])
            for r in rows:
                co = r["original"]["label_distribution"]
                ca = r["ablated"]["label_distribution"]
                w.writerow([
                    r["step"], r["tokens_seen"],
                    f"{r['original']['accuracy']:.6f}", f"{r['ablated']['accuracy']:.6f}",
                    f"{co['err_source_copy'] + co['err_context_copy']:.6f}",
                    f"{ca['err_source_copy'] + ca['err_context_copy']:.6f}",
                    f"{r['original_repetition']['accuracy']:.6f}",
                    f"{r['ablated_repetition']['accuracy']:.6f}",
                    "" if r["jaccard_original"] is None else f"{r['jaccard_original']:.6f}",
                    "" if r["jaccard_ablated"] is None else f"{r['jaccard_ablated']:.6f}",
                    r["jaccard_n"]])
        xs = [r["tokens_seen"] for r in rows]
        series = {
            "accuracy (original)": [r["original"]["accuracy"] for r in rows],
            "accuracy (ablated)": [r["ablated"]["accuracy"] for r in rows],
            "copy errors (original)": [
                r["original"]["label_distribution"]["err_source_copy"]
                + r["original"]["label_distribution"]["err_context_copy"] for r in rows],
            "copy errors (ablated)": [
                r["ablated"]["label_distribution"]["err_source_copy"]
                + r["ablated"]["label_distribution"]["err_context_copy"] for r in rows],
        }
        line_chart(xs, series, out / "paired_curves.svg", iv.describe(),
                   "tokens seen", "rate",
                   dashed={"copy errors (original)", "copy errors (ablated)"})
    return EXIT_OK


# ----------------------------------------------------------------- stats

def cmd_stats(cfg, ckpt_glob=None) -> int:
    import json as _json

    from .corpus import BatchSampler, load_corpus
    from .errors import CorpusExhausted
    from .evalkit import load_records_jsonl
    from .stats import (StreamCounter, build_regression_inputs, first_correct_step,
                        shapley_r2, write_count_table_csv)
    from .tokenizer import TokenizerModel, tokenize_documents

    records_path = cfg.out_dir / "eval" / "records_wlt.jsonl"
    if not records_path.exists():
        raise MissingInputs(f"missing {records_path}; run `xld eval` first")
    tok, ds = _artifacts(cfg)
    corpus_dir = cfg.out_dir / "corpus"
    if not corpus_dir.exists():
        raise MissingInputs(f"missing corpus directory {corpus_dir}")
    out = cfg.out_dir / "stats"
    out.mkdir(parents=True, exist_ok=True)

    langs = [s.lang_id for s in cfg.specs]
    corpora = load_corpus(corpus_dir, langs)
    _say("[stats] replaying the training stream")
    doc_tokens = {lang: tokenize_documents(tok, docs) for lang, docs in corpora.items()}
    sampler = BatchSampler(doc_tokens, cfg.mixture, cfg.recipe.batch_size, cfg.seq_len,
                           cfg.seed, tok.bos_id, track_docs=True)
    boundaries = []
    consumed_upto = {}
    for step in range(cfg.recipe.total_steps):
        if step % cfg.recipe.cadence == 0:
            boundaries.append(step)
            consumed_upto[step] = len(sampler.consumed_log)
        try:
            sampler.next_batch()
        except CorpusExhausted:
            break
    final_step = cfg.recipe.total_steps
    boundaries.append(final_step)
    consumed_upto[final_step] = len(sampler.consumed_log)

    words_by_lang = {lang: set() for lang in langs}
    pairs = set()
    for cid in sorted(ds.query_ids):
        c = ds.concept(cid)
        for lang, form in c.forms.items():
            words_by_lang[lang].add(form)
        for (a, b), vs in c.valid_translations.items():
            for v in vs:
                words_by_lang[b].add(v)
                pairs.add((c.forms[a], v))
    counter = StreamCounter(words_by_lang, pairs,
                            int(cfg.analysis["stats_window_chars"]))
    _say(f"[stats] counting {len(counter.all_words)} words / {len(pairs)} pairs "
         f"over {len(sampler.consumed_log)} documents")
    log = sampler.consumed_log
    pos = 0
    for step in boundaries:
        upto = consumed_upto[step]
        while pos < upto:
            lang, idx = log[pos]
            counter.add_document(corpora[lang][idx], lang)
            pos += 1
        counter.snapshot(step)
    counter.table.validate_monotone()
    write_count_table_csv(counter.table, out / "counts.csv")

    records = load_records_jsonl(records_path)
    firsts = first_correct_step(records)
    tokens_per_step = cfg.recipe.batch_size * cfg.seq_len
    step_to_tokens = {s: s * tokens_per_step for s in boundaries}
    x, y, kept = build_regression_inputs(firsts, ds, counter.table, step_to_tokens)
    report = {"n_pairs_considered": len(firsts), "n_pairs_regressed": len(kept)}
    if len(y) >= 10:
        reg = shapley_r2(x, y, ["src_frequency", "tgt_frequency", "cooccurrence"])
        report.update(reg.to_dict())
        share = {k: (v / reg.r2_full if reg.r2_full else 0.0)
                 for k, v in reg.shapley.items()}
        report["shapley_share_of_r2"] = share
        _say(f"[stats] R2={reg.r2_full:.4f} shapley={share}")
    else:
        report["note"] = "fewer than 10 usable pairs; regression skipped"
        _say("[stats] too few usable pairs for the regression")
    (out / "regression.json").write_text(_json.dumps(report, indent=2, sort_keys=True) + "\n",
                                         encoding="utf-8")
    return EXIT_OK


# ------------------------------------------------------------- reproduce

def cmd_reproduce(cfg, ckpt_glob=None) -> int:
    from .evalkit import detect_phases, load_metric_series

    metrics_path = cfg.out_dir / "eval" / "metrics.json"
    if not metrics_path.exists():
        raise MissingInputs(f"missing {metrics_path}; run `xld eval` first")
    series = load_metric_series(metrics_path)
    report = detect_phases(series)
    by_step = {m.step: m for m in series}
    final = series[-1]
    lines = [
        f"config_hash: {cfg.config_hash}",
        f"checkpoints: {len(series)}",
        f"final_tokens_seen: {final.tokens_seen}",
        f"final_wlt_accuracy: {final.wlt['accuracy']:.4f}",
        f"final_repetition_accuracy: {final.repetition['accuracy']:.4f}",
        f"copy_error_peak_step: {report.copy_peak_step}"
        f" (tokens_seen {by_step[report.copy_peak_step].tokens_seen})",
    ]
    if report.first_no_overlap_success_step is None:
        lines.append("first_no_overlap_success_step: absent")
        lines.append("peak_precedes_no_overlap_success: undetermined")
    else:
        s = report.first_no_overlap_success_step
        lines.append(f"first_no_overlap_success_step: {s}"
                     f" (tokens_seen {by_step[s].tokens_seen})")
        lines.append("peak_precedes_no_overlap_success: "
                     + ("yes" if report.peak_precedes_success else "no"))
    text = "\n".join(lines) + "\n"
    (cfg.out_dir / "reproduce.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "lens": cmd_lens,
    "influence": cmd_influence,
    "ablate": cmd_ablate,
    "stats": cmd_stats,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    _setup_threads(args.threads)

    from .config import load_config
    from .errors import CorpusExhausted, FormatError, InputError, TrainingError

    try:
        cfg = load_config(args.config, out_dir=args.out, seed=args.seed)
    except (InputError, FormatError) as e:
        print(f"xld: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        with _lock(cfg.out_dir):
            fn = COMMANDS[args.command]
            if args.command == "train":
                return fn(cfg)
            return fn(cfg, args.ckpt_glob)
    except MissingInputs as e:
        print(f"xld: missing inputs: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (InputError, FormatError, CorpusExhausted) as e:
        print(f"xld: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingError, FloatingPointError) as e:
        print(f"xld: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
