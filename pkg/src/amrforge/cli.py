"""Command-line entry point for the AMR parsing workbench.

Subcommands cover the full workflow: synth (generate a synthetic corpus),
preprocess (corpus -> training pairs + wiki table), train (fft / lora /
fft_then_lora), parse (checkpoint + sentences -> AMR file), postprocess
(generated serializations -> AMR file), eval (nine-category report, with
optional bootstrap significance against a second prediction file), and
significance (standalone paired bootstrap).

Flag values override config-file values, which override defaults; every run
echoes its resolved configuration as JSON. The AMRFORGE_SEED environment
variable supplies the seed when neither a flag nor the config file does.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from amrforge.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from amrforge.corpus import CorpusError, generate_synthetic, load_corpus, save_corpus
from amrforge.graph import AmrError, format_block
from amrforge.linearize import (
    TASK_PREFIX,
    WikiTable,
    build_wiki_table,
    deserialize,
    make_pair,
    restore_wiki,
    strip_wiki,
    write_pairs,
)
from amrforge.model import ModelSpec, init_params
from amrforge.smatch import (
    CATEGORIES,
    bootstrap_significance,
    fine_grained,
    micro_score,
    smatch_counts,
)
from amrforge.training import (
    FFT,
    FFT_THEN_LORA,
    LORA,
    LoraSpec,
    TrainConfig,
    eval_split_counts,
    fft_then_lora,
    fit,
    lora_only,
    prepare_task,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

SIGNIFICANCE_LEVEL = 0.05


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _log(message):
    print(message, file=sys.stderr)


def _load_config_file(path):
    if not path:
        return {}
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def _resolve(args, config_file, defaults):
    """Flags beat config-file entries beat defaults. Missing seed falls back
    to AMRFORGE_SEED."""
    resolved = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
        elif key in config_file:
            resolved[key] = config_file[key]
        else:
            resolved[key] = default
    if "seed" in defaults and getattr(args, "seed", None) is None and "seed" not in config_file:
        env = os.environ.get("AMRFORGE_SEED")
        if env is not None:
            resolved["seed"] = int(env)
    return resolved


def _echo(command, resolved):
    print(json.dumps({"command": command, "config": resolved}, sort_keys=True))


def _read_lines(path):
    with open(path, encoding="utf-8") as handle:
        return [line.rstrip("\n") for line in handle if line.strip()]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args):
    cfg = _resolve(args, _load_config_file(args.config), {"n": 100, "seed": 0})
    _echo("synth", {**cfg, "out": args.out})
    pairs = generate_synthetic(cfg["seed"], cfg["n"])
    save_corpus(pairs, args.out)
    _log(f"wrote {len(pairs)} graphs to {args.out}")
    return EXIT_OK


def cmd_preprocess(args):
    cfg = _resolve(args, _load_config_file(args.config), {})
    _echo("preprocess", {"corpus": args.corpus, "out_pairs": args.out_pairs,
                         "out_wiki": args.out_wiki, **cfg})
    pairs, manifest = load_corpus(args.corpus)
    if not pairs:
        raise CorpusError(f"{args.corpus}: empty corpus")
    table = build_wiki_table([g for _, g in pairs])
    records = []
    for index, (sentence, graph) in enumerate(pairs):
        stripped, _ = strip_wiki(graph)
        pair_id = graph.metadata_value("id") or str(index)
        records.append((make_pair(sentence, stripped), pair_id))
    write_pairs(records, args.out_pairs)
    if args.out_wiki:
        table.save(args.out_wiki)
    _log(
        f"{manifest.sents} sentences, {manifest.tokens} tokens -> "
        f"{len(records)} pairs, {len(table)} wiki names"
    )
    return EXIT_OK


def _load_wiki(args):
    if getattr(args, "no_wiki", False):
        return None
    if getattr(args, "wiki_table", None):
        return WikiTable.load(args.wiki_table)
    return WikiTable()


def _graphs_to_file(graphs, sentences, out_path):
    # no ::id lines: prediction files align with gold by position
    blocks = []
    for index, graph in enumerate(graphs):
        metadata = [("snt", sentences[index])] if sentences is not None else []
        blocks.append(format_block(graph.with_metadata(metadata)))
    with open(out_path, "w", encoding="utf-8") as handle:
        handle.write("\n\n".join(blocks))
        if blocks:
            handle.write("\n")


def cmd_postprocess(args):
    cfg = _resolve(args, _load_config_file(args.config), {})
    _echo("postprocess", {"generated": args.generated, "out": args.out,
                          "no_wiki": bool(args.no_wiki), **cfg})
    lines = _read_lines(args.generated)
    table = _load_wiki(args)
    graphs = []
    for line in lines:
        graph = deserialize(line)
        if table is not None:
            graph = restore_wiki(graph, table)
        graphs.append(graph)
    _graphs_to_file(graphs, None, args.out)
    _log(f"deserialized {len(graphs)} graphs to {args.out}")
    return EXIT_OK


def cmd_parse(args):
    cfg = _resolve(args, _load_config_file(args.config), {"max_steps": 128, "seed": 0})
    _echo("parse", {"checkpoint": args.checkpoint, "sentences": args.sentences,
                    "out": args.out, "no_wiki": bool(args.no_wiki), **cfg})
    spec, tokenizer, params, _ = load_checkpoint(args.checkpoint)
    sentences = _read_lines(args.sentences)
    table = _load_wiki(args)
    graphs = []
    if sentences:
        from amrforge.model import greedy_decode_batch

        sources = [
            tokenizer.encode(TASK_PREFIX + line)[: spec.max_len] for line in sentences
        ]
        outputs = greedy_decode_batch(
            params, spec, sources, cfg["max_steps"],
            eos_id=tokenizer.eos_id, start_id=tokenizer.pad_id,
        )
        for ids in outputs:
            graph = deserialize(tokenizer.decode(ids))
            if table is not None:
                graph = restore_wiki(graph, table)
            graphs.append(graph)
    _graphs_to_file(graphs, sentences, args.out)
    _log(f"parsed {len(graphs)} sentences to {args.out}")
    return EXIT_OK


def _load_id_aligned(pred_path, gold_path):
    pred_pairs, _ = load_corpus(pred_path)
    gold_pairs, _ = load_corpus(gold_path)
    if len(pred_pairs) != len(gold_pairs):
        raise CorpusError(
            f"alignment mismatch: {len(pred_pairs)} predictions vs "
            f"{len(gold_pairs)} gold graphs"
        )
    for index, ((_, p), (_, g)) in enumerate(zip(pred_pairs, gold_pairs), start=1):
        pid, gid = p.metadata_value("id"), g.metadata_value("id")
        if pid is not None and gid is not None and pid != gid:
            raise CorpusError(f"alignment mismatch at graph #{index}: id {pid} vs {gid}")
    return [g for _, g in pred_pairs], [g for _, g in gold_pairs]


def cmd_eval(args):
    cfg = _resolve(args, _load_config_file(args.config), {
        "restarts": 4, "seed": 0, "resamples": 10_000, "workers": 1,
    })
    _echo("eval", {"pred": args.pred, "gold": args.gold,
                   "significance": args.significance, **cfg})
    preds, golds = _load_id_aligned(args.pred, args.gold)
    report = fine_grained(preds, golds, restarts=cfg["restarts"], seed=cfg["seed"],
                          workers=cfg["workers"])
    payload = {
        "smatch": report["Smatch"].to_dict(),
        "fine_grained": report.to_dict(),
    }
    if args.significance:
        other_preds, other_golds = _load_id_aligned(args.significance, args.gold)
        counts_a = report.counts["Smatch"]
        counts_b = smatch_counts(other_preds, other_golds,
                                 restarts=cfg["restarts"], seed=cfg["seed"],
                                 workers=cfg["workers"])
        p_value = bootstrap_significance(counts_a, counts_b,
                                         resamples=cfg["resamples"], seed=cfg["seed"])
        payload["significance"] = {
            "p_value": p_value,
            "resamples": cfg["resamples"],
            "seed": cfg["seed"],
            "significant": p_value <= SIGNIFICANCE_LEVEL,
            "verdict": (
                "significant at p<=0.05" if p_value <= SIGNIFICANCE_LEVEL
                else "not significant"
            ),
        }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_significance(args):
    cfg = _resolve(args, _load_config_file(args.config), {
        "restarts": 4, "seed": 0, "resamples": 10_000, "workers": 1,
    })
    _echo("significance", {"pred_a": args.pred_a, "pred_b": args.pred_b,
                           "gold": args.gold, **cfg})
    preds_a, golds = _load_id_aligned(args.pred_a, args.gold)
    preds_b, _ = _load_id_aligned(args.pred_b, args.gold)
    counts_a = smatch_counts(preds_a, golds, restarts=cfg["restarts"],
                             seed=cfg["seed"], workers=cfg["workers"])
    counts_b = smatch_counts(preds_b, golds, restarts=cfg["restarts"],
                             seed=cfg["seed"], workers=cfg["workers"])
    p_value = bootstrap_significance(counts_a, counts_b,
                                     resamples=cfg["resamples"], seed=cfg["seed"])
    payload = {
        "f1_a": micro_score(counts_a).f1,
        "f1_b": micro_score(counts_b).f1,
        "p_value": p_value,
        "resamples": cfg["resamples"],
        "seed": cfg["seed"],
        "significant": p_value <= SIGNIFICANCE_LEVEL,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


TRAIN_DEFAULTS = {
    "mode": FFT,
    "learning_rate": None,
    "lora_learning_rate": None,
    "batch_size": 8,
    "epochs": 5,
    "seed": 0,
    "max_source_len": 128,
    "max_target_len": 128,
    "vocab_size": 512,
    "n_layers": 2,
    "d_model": 64,
    "d_ff": 128,
    "d_kv": 16,
    "n_heads": 4,
    "lora_rank": 8,
    "lora_alpha": 32.0,
    "lora_epochs": None,
}


def cmd_train(args):
    cfg = _resolve(args, _load_config_file(args.config), TRAIN_DEFAULTS)
    _echo("train", {"train": args.train, "val": args.val, "test": args.test,
                    "run_dir": args.run_dir, **cfg})
    os.makedirs(args.run_dir, exist_ok=True)
    os.makedirs(os.path.join(args.run_dir, "checkpoints"), exist_ok=True)

    train_pairs, _ = load_corpus(args.train)
    val_pairs, _ = load_corpus(args.val)
    test_pairs, _ = load_corpus(args.test) if args.test else (val_pairs, None)

    mode = cfg["mode"]
    base_spec = ModelSpec(
        n_layers=cfg["n_layers"], d_model=cfg["d_model"], d_ff=cfg["d_ff"],
        d_kv=cfg["d_kv"], n_heads=cfg["n_heads"],
        max_len=max(cfg["max_source_len"], cfg["max_target_len"]),
    )
    config = TrainConfig(
        learning_rate=cfg["learning_rate"], batch_size=cfg["batch_size"],
        max_source_len=cfg["max_source_len"], max_target_len=cfg["max_target_len"],
        epochs=cfg["epochs"], seed=cfg["seed"],
        mode=FFT if mode == FFT_THEN_LORA else mode,
    )
    task = prepare_task(train_pairs, val_pairs, test_pairs, config,
                        base_spec, cfg["vocab_size"])

    with open(os.path.join(args.run_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump({"mode": mode, **cfg, "model": task.spec.to_dict()},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")

    metrics_path = os.path.join(args.run_dir, "metrics.jsonl")
    metrics_file = open(metrics_path, "w", encoding="utf-8")

    def log_stage(stage):
        def log(row):
            metrics_file.write(json.dumps({"stage": stage, **row}, sort_keys=True) + "\n")
            metrics_file.flush()
            _log(f"[{stage}] epoch {row['epoch']}: loss={row['loss']} "
                 f"val_smatch={row['val_smatch']:.4f}")
        return log

    lora_spec = LoraSpec(rank=cfg["lora_rank"], alpha=cfg["lora_alpha"])

    def save_ckpt(name, params, extra):
        path = os.path.join(args.run_dir, "checkpoints", name)
        save_checkpoint(path, task.spec, task.tokenizer, params, extra)
        return path

    if mode == FFT_THEN_LORA:
        lora_config = TrainConfig(
            learning_rate=cfg["lora_learning_rate"], batch_size=cfg["batch_size"],
            max_source_len=cfg["max_source_len"], max_target_len=cfg["max_target_len"],
            epochs=cfg["lora_epochs"] if cfg["lora_epochs"] is not None else cfg["epochs"],
            seed=cfg["seed"], mode=LORA,
        )
        outcome = fft_then_lora(task, config, lora_config=lora_config,
                                log=log_stage("fft"))
        best_spec = max(outcome.per_spec, key=lambda r: r["val_smatch"])
        best_path = save_ckpt("best.ckpt", best_spec["result"].best.params, {
            "mode": mode, "val_smatch": best_spec["result"].best.val_smatch,
        })
        report = dict(outcome.report)
    elif mode == LORA:
        result, test_counts = lora_only(task, replace(config, mode=LORA),
                                        lora_spec, log=log_stage("lora"))
        best_path = save_ckpt("best.ckpt", result.best.params, {
            "mode": mode, "val_smatch": result.best.val_smatch,
        })
        report = {
            "val_smatch": result.best.val_smatch,
            "test_smatch": micro_score(test_counts).f1,
        }
    else:
        params = init_params(task.spec, seed=config.seed)
        result = fit(params, task, config, log=log_stage("fft"))
        for ckpt in result.checkpoints:
            save_ckpt(f"epoch_{ckpt.epoch}.ckpt", ckpt.params,
                      {"epoch": ckpt.epoch, "val_smatch": ckpt.val_smatch})
        test_counts = eval_split_counts(result.best.params, task.spec,
                                        task.tokenizer, task.test, config)
        best_path = save_ckpt("best.ckpt", result.best.params, {
            "mode": mode, "epoch": result.best.epoch,
            "val_smatch": result.best.val_smatch,
        })
        report = {
            "best_epoch": result.best.epoch,
            "val_smatch": result.best.val_smatch,
            "test_smatch": micro_score(test_counts).f1,
        }
    metrics_file.close()

    report["model"] = mode
    report["corpus"] = args.train
    report["checkpoint"] = best_path
    with open(os.path.join(args.run_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="amrforge",
                     description="Desk-scale AMR parsing workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="corpus -> pair file + wiki table")
    add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-pairs", required=True)
    p.add_argument("--out-wiki")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("postprocess", help="generated serializations -> AMR file")
    add_common(p)
    p.add_argument("--generated", required=True,
                   help="file with one serialized graph per line")
    p.add_argument("--out", required=True)
    p.add_argument("--wiki-table")
    p.add_argument("--no-wiki", action="store_true",
                   help="skip wiki restoration entirely")
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("train", help="train a parser")
    add_common(p)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--mode", choices=(FFT, LORA, FFT_THEN_LORA))
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--lora-learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lora-epochs", type=int)
    p.add_argument("--max-source-len", type=int)
    p.add_argument("--max-target-len", type=int)
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--n-layers", type=int)
    p.add_argument("--d-model", type=int)
    p.add_argument("--d-ff", type=int)
    p.add_argument("--d-kv", type=int)
    p.add_argument("--n-heads", type=int)
    p.add_argument("--lora-rank", type=int)
    p.add_argument("--lora-alpha", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("parse", help="checkpoint + sentences -> AMR file")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sentences", required=True, help="one sentence per line")
    p.add_argument("--out", required=True)
    p.add_argument("--wiki-table")
    p.add_argument("--no-wiki", action="store_true")
    p.add_argument("--max-steps", type=int)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("eval", help="nine-category evaluation report")
    add_common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out")
    p.add_argument("--significance", metavar="PRED_B",
                   help="second prediction file; bootstrap test of pred vs it")
    p.add_argument("--resamples", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("significance", help="paired bootstrap between two systems")
    add_common(p)
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--resamples", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_significance)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as err:
        _log(f"usage error: {err}")
        return EXIT_USAGE
    except (CorpusError, AmrError, CheckpointError, FileNotFoundError,
            json.JSONDecodeError, ValueError) as err:
        _log(f"data error: {err}")
        return EXIT_DATA
    except Exception as err:  # pragma: no cover - internal failure path
        _log(f"internal error: {type(err).__name__}: {err}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
