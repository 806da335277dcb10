#!/usr/bin/env python3
"""Ponto de entrada: prepare, train, extract-topics, evaluate, coherence e predict.

Cada comando grava suas saídas num diretório de execução junto com o
snapshot da configuração resolvida (``config.txt``) e um manifesto JSON.
"""
import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

import joblib
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

import ntm
from coherence import coherence_report, report_frame
from config import RunConfig, resolve_config, write_config_snapshot
from corpus import (
    NTM_MIN_TOKEN_LENGTH,
    DatasetSplit,
    RawRecord,
    build_vocabulary,
    corpus_statistics,
    list_targets,
    make_cross_target_split,
    make_in_target_folds,
    normalize_target,
    read_corpus,
    to_examples,
    tokenize,
    vectorize_corpus,
    write_split_manifest,
)
from encoder import embedding_table
from evaluate_model import (
    TeamTrainer,
    ProtocolResult,
    ensure_dirs,
    evaluate_split,
    majority_predictor,
    oracle_predictor,
    run_protocol,
    run_variants,
)
from metrics import confusion, metric_report, save_confusion
from mutual import VARIANTS, TeamModel, fit_team
from predict import run_predict
from topics import extract_for_targets, load_embedding_file, write_topic_report

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "team.joblib"

# flag -> campo do RunConfig
CONFIG_FLAGS = [
    ("--data", "data_path", str, "TSV do corpus ou diretório com um TSV por alvo"),
    ("--output-dir", "output_dir", str, "Diretório de execução"),
    ("--vocab-size", "vocab_max_size", int, "Tamanho máximo do vocabulário do NTM"),
    ("--encoder-vocab-size", "encoder_vocab_max_size", int, "Tamanho máximo do vocabulário do encoder"),
    ("--num-topics", "num_topics", int, "Número de tópicos K"),
    ("--latent-dim", "ntm_latent_dim", int, "Dimensão latente do NTM"),
    ("--ntm-hidden-dim", "ntm_hidden_dim", int, "Camada oculta do NTM"),
    ("--lr-ntm", "ntm_learning_rate", float, "Taxa de aprendizado do NTM (Adam)"),
    ("--kl-warmup", "kl_warmup_epochs", int, "Épocas de aquecimento do termo KL"),
    ("--embed-dim", "embed_dim", int, "Dimensão dos embeddings do encoder"),
    ("--hidden-dim", "encoder_hidden_dim", int, "Largura de h"),
    ("--max-len", "max_len", int, "Comprimento máximo da entrada do encoder"),
    ("--lr-classifier", "classifier_learning_rate", float, "Taxa de aprendizado do classificador (AdamW)"),
    ("--weight-decay", "weight_decay", float, "Decaimento de peso do AdamW"),
    ("--top-n", "top_n", int, "Termos por tópico extraído"),
    ("--ratio-p", "ratio_p", float, "Fração p de termos usada no escore"),
    ("--embeddings", "embedding_path", str, "Arquivo de embeddings 'palavra v1 ... vd'"),
    ("--gamma", "gamma", float, "Peso da perda mútua"),
    ("--max-iterations", "max_iterations", int, "Iterações do treino alternado"),
    ("--ntm-epochs", "ntm_epochs_per_iteration", int, "Épocas do NTM por iteração"),
    ("--classifier-epochs", "classifier_epochs_per_iteration", int, "Épocas do classificador por iteração"),
    ("--batch-size", "batch_size", int, "Tamanho do lote"),
    ("--patience", "patience", int, "Paciência da parada antecipada"),
    ("--seed", "seed", int, "Semente"),
    ("--protocol", "protocol", str, "in_target ou cross_target"),
    ("--k-folds", "k_folds", int, "Número de dobras in-target"),
    ("--n-jobs", "n_jobs", int, "Processos paralelos para dobras/alvos"),
    ("--window", "npmi_window", int, "Janela deslizante do NPMI"),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Arquivo chave=valor com a configuração")
    parser.add_argument("--verbose", action="store_true", help="Log em nível DEBUG")
    for flag, dest, kind, help_text in CONFIG_FLAGS:
        parser.add_argument(flag, dest=dest, type=kind, default=None, help=help_text)
    parser.add_argument("--no-topics", dest="use_topics", action="store_false", default=None,
                        help="Não alimenta o encoder com tópicos extraídos (ablação -ET)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Mineração de argumentos guiada por tópicos")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="Vocabulário, cache BoW e partições")
    _add_config_flags(p)

    p = sub.add_parser("train", help="Treino alternado NTM + classificador")
    _add_config_flags(p)
    p.add_argument("--mode", choices=["in_target_fold", "cross_target"], default="in_target_fold")
    p.add_argument("--fold", type=int, default=0, help="Dobra usada no modo in_target_fold")
    p.add_argument("--held-out", help="Alvo retido no modo cross_target")

    p = sub.add_parser("extract-topics", help="Tópicos explicáveis por alvo a partir de um checkpoint")
    _add_config_flags(p)
    p.add_argument("--checkpoint", help="Checkpoint (padrão: <output-dir>/artifacts/team.joblib)")
    p.add_argument("--targets", help="Alvos separados por vírgula (padrão: todos do corpus)")

    p = sub.add_parser("evaluate", help="Protocolos in-target / cross-target")
    _add_config_flags(p)
    p.add_argument("--oracle", action="store_true", help="Preditor oráculo (autoteste do harness)")
    p.add_argument("--majority", action="store_true", help="Preditor da classe majoritária")
    p.add_argument("--ablation", choices=list(VARIANTS) + ["all"], help="Variante de ablação")
    p.add_argument("--topic-grid", help="Valores de K separados por vírgula, ex.: 10,20,30")
    p.add_argument("--checkpoint", help="Avalia um checkpoint no teste da partição em que foi treinado")

    p = sub.add_parser("coherence", help="NPMI dos tópicos exportados")
    _add_config_flags(p)
    p.add_argument("--topics", required=True, help="topic_word.tsv exportado pelo train")
    p.add_argument("--cutoffs", default="5,10,15,20", help="Cortes de palavras por tópico")

    p = sub.add_parser("predict", help="Classifica sentenças com um checkpoint")
    _add_config_flags(p)
    p.add_argument("--input", required=True, help="TSV com topic e sentence")
    p.add_argument("--output", help="TSV de saída (padrão: <output-dir>/outputs/predictions.tsv)")
    p.add_argument("--checkpoint", help="Checkpoint (padrão: <output-dir>/artifacts/team.joblib)")
    return parser


def _resolve(args: argparse.Namespace) -> RunConfig:
    overrides = {dest: getattr(args, dest) for _flag, dest, _kind, _help in CONFIG_FLAGS}
    overrides["use_topics"] = args.use_topics
    return resolve_config(args.config, overrides)


def _write_manifest(run_dir: str, name: str, content: Dict) -> str:
    path = os.path.join(run_dir, f"manifest_{name}.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(content, f, ensure_ascii=False, indent=2, sort_keys=True)
    return path


def _checkpoint_path(config: RunConfig, explicit: Optional[str]) -> str:
    return explicit or os.path.join(config.output_dir, "artifacts", CHECKPOINT_NAME)


# ======================================================================
# comandos
# ======================================================================


def cmd_prepare(config: RunConfig) -> Dict:
    dirs = ensure_dirs(config.output_dir)
    load = read_corpus(config.data_path)
    records = load.records
    if not records:
        raise ValueError(f"nenhum registro válido em {config.data_path}")

    vocab = build_vocabulary(records, config.vocab_max_size, min_token_length=NTM_MIN_TOKEN_LENGTH)
    vocab.save(os.path.join(dirs["artifacts"], "vocabulary.tsv"))
    bows = vectorize_corpus([tokenize(r.sentence, "ntm") for r in records], vocab)
    joblib.dump(bows, os.path.join(dirs["artifacts"], "bow_cache.joblib"))

    stats = corpus_statistics(records)
    stats.to_csv(os.path.join(dirs["reports"], "corpus_statistics.csv"))

    splits_dir = os.path.join(config.output_dir, "splits")
    os.makedirs(splits_dir, exist_ok=True)
    split_files: List[str] = []
    if config.protocol == "in_target":
        for i, split in enumerate(make_in_target_folds(to_examples(records), k=config.k_folds, seed=config.seed)):
            split_files.append(write_split_manifest(split, os.path.join(splits_dir, f"fold_{i}.jsonl")))
    else:
        for target in list_targets(records):
            split = make_cross_target_split(records, target)
            name = target.replace(" ", "_")
            split_files.append(write_split_manifest(split, os.path.join(splits_dir, f"target_{name}.jsonl")))

    label_counts = pd.Series([r.annotation for r in records]).value_counts().sort_index()
    manifest = {
        "command": "prepare",
        "data_path": config.data_path,
        "examples": len(records),
        "rejected": load.rejected,
        "labels": {k: int(v) for k, v in label_counts.items()},
        "targets": {t: int(sum(r.target_name == t for r in records)) for t in list_targets(records)},
        "vocab_size": vocab.size,
        "protocol": config.protocol,
        "splits": [os.path.basename(p) for p in split_files],
    }
    write_config_snapshot(config, os.path.join(config.output_dir, "config.txt"))
    _write_manifest(config.output_dir, "prepare", manifest)
    return manifest


def plot_history(history: pd.DataFrame, path: str) -> str:
    fig, axes = plt.subplots(1, 3, figsize=(14, 4))
    ntm_rows = history[history["phase"] == "ntm"]
    clf_rows = history[history["phase"] == "classifier"]
    axes[0].plot(range(1, len(ntm_rows) + 1), ntm_rows["elbo"].astype(float), marker="o")
    axes[0].set_title("NTM: -ELBO por documento")
    axes[1].plot(range(1, len(clf_rows) + 1), clf_rows["cross_entropy"].astype(float), marker="o", color="tab:orange")
    axes[1].set_title("Classificador: entropia cruzada")
    val = history.dropna(subset=["val_macro_f1"])
    axes[2].plot(val["iteration"], val["val_macro_f1"].astype(float), marker="o", color="tab:green")
    axes[2].set_title("Macro F1 de validação")
    for ax in axes:
        ax.set_xlabel("época / iteração")
    plt.tight_layout()
    plt.savefig(path, dpi=120)
    plt.close(fig)
    return path


def split_info_for(config: RunConfig, mode: str, fold: int, held_out: Optional[str]) -> Dict:
    if mode == "cross_target":
        if not held_out:
            raise ValueError("o modo cross_target exige --held-out")
        return {"mode": mode, "fold": None, "held_out": normalize_target(held_out),
                "k_folds": None, "seed": config.seed}
    return {"mode": mode, "fold": fold, "held_out": None, "k_folds": config.k_folds, "seed": config.seed}


def rebuild_split(records: Sequence[RawRecord], info: Dict) -> DatasetSplit:
    """Reconstrói a partição exata de um treino a partir do registro salvo."""
    if info["mode"] == "cross_target":
        return make_cross_target_split(records, info["held_out"])
    folds = make_in_target_folds(to_examples(records), k=info["k_folds"], seed=info["seed"])
    fold = info["fold"]
    if not 0 <= fold < len(folds):
        raise ValueError(f"dobra {fold} fora do intervalo [0, {len(folds)})")
    return folds[fold]


def cmd_train(config: RunConfig, mode: str = "in_target_fold", fold: int = 0,
              held_out: Optional[str] = None) -> Dict:
    dirs = ensure_dirs(config.output_dir)
    records = read_corpus(config.data_path).records
    info = split_info_for(config, mode, fold, held_out)
    split = rebuild_split(records, info)

    trainer_config = config.trainer_config()
    model = fit_team(split, trainer_config)
    model.split_info = info

    checkpoint = model.save(os.path.join(dirs["artifacts"], CHECKPOINT_NAME))
    history_path = os.path.join(dirs["outputs"], "history.csv")
    model.history.to_csv(history_path, index=False)
    plot_history(model.history, os.path.join(dirs["outputs"], "training_curve.png"))

    state = model.state
    write_topic_report(model.topics_for(sorted({ex.target for ex in split.train})),
                       os.path.join(dirs["outputs"], "topic_report.tsv"))
    ntm.export_topic_word_tsv(state.ntm, state.ntm_vocab, os.path.join(dirs["outputs"], "topic_word.tsv"))

    z = model.document_topics(split.train)
    df_z = pd.DataFrame(z, columns=[f"topic_{k}" for k in range(z.shape[1])])
    df_z.insert(0, "label", [ex.label for ex in split.train])
    df_z.insert(0, "target", [ex.target for ex in split.train])
    df_z.to_csv(os.path.join(dirs["outputs"], "topic_distributions.csv"), index=False)

    test_metrics = None
    if split.test:
        preds = model.predict(split.test)
        test_metrics = metric_report(confusion([ex.label for ex in split.test], preds)).as_dict()

    manifest = {
        "command": "train",
        "mode": mode,
        "fold": fold if mode == "in_target_fold" else None,
        "held_out": info["held_out"],
        "k_folds": info["k_folds"],
        "seed": info["seed"],
        "train_examples": len(split.train),
        "val_examples": len(split.val),
        "test_examples": len(split.test),
        "checkpoint": os.path.relpath(checkpoint, config.output_dir),
        "iterations": int(model.history["iteration"].max()) if len(model.history) else 0,
        "test_metrics": test_metrics,
    }
    write_config_snapshot(config, os.path.join(config.output_dir, "config.txt"))
    _write_manifest(config.output_dir, "train", manifest)
    return manifest


def cmd_extract_topics(config: RunConfig, checkpoint: Optional[str] = None,
                       targets: Optional[List[str]] = None) -> str:
    dirs = ensure_dirs(config.output_dir)
    model = TeamModel.load(_checkpoint_path(config, checkpoint))
    if not targets:
        targets = list_targets(read_corpus(config.data_path).records)
    targets = [normalize_target(t) for t in targets]

    state = model.state
    if config.embedding_path:
        embeddings = load_embedding_file(config.embedding_path)
    else:
        embeddings = embedding_table(state.encoder, state.encoder_vocab)
    extracted = extract_for_targets(state.ntm.topic_word.data, state.ntm_vocab, embeddings, targets,
                                    config.top_n, config.ratio_p)
    path = write_topic_report(extracted, os.path.join(dirs["outputs"], "topic_report.tsv"))
    write_config_snapshot(config, os.path.join(config.output_dir, "config.txt"))
    _write_manifest(config.output_dir, "extract_topics", {"command": "extract-topics", "targets": targets})
    return path


def cmd_evaluate(config: RunConfig, oracle: bool = False, majority: bool = False,
                 ablation: Optional[str] = None, topic_grid: Optional[List[int]] = None,
                 checkpoint: Optional[str] = None) -> pd.DataFrame:
    dirs = ensure_dirs(config.output_dir)
    records = read_corpus(config.data_path).records
    manifest: Dict = {"command": "evaluate", "protocol": config.protocol}

    if checkpoint:
        model = TeamModel.load(checkpoint)
        info = model.split_info
        if not info:
            raise ValueError(f"{checkpoint}: checkpoint sem registro da partição de treino; "
                             "rode novamente cli.py train")
        # só o teste da partição usada no treino
        split = rebuild_split(records, info)
        cross = info["mode"] == "cross_target"
        name = info["held_out"] if cross else str(info["fold"])
        run = evaluate_split(lambda _split, _seed: model, split, info["seed"], name)
        result = ProtocolResult(protocol="cross_target" if cross else "in_target", runs=[run])
        frame = result.to_frame()
        frame.to_csv(os.path.join(dirs["outputs"], "metrics_checkpoint.csv"), index=False)
        save_confusion(run.confusion, dirs["outputs"], "confusion_checkpoint")
        manifest.update(checkpoint=checkpoint, protocol=result.protocol, split=info, test_examples=run.test_size)
    elif ablation or topic_grid:
        variants = list(VARIANTS) if ablation in (None, "all") else [ablation]
        frame = run_variants(config.trainer_config(), records, config.protocol, variants=variants,
                             topic_grid=topic_grid or (), k=config.k_folds, seed=config.seed, n_jobs=config.n_jobs)
        frame.to_csv(os.path.join(dirs["outputs"], f"variants_{config.protocol}.csv"), index=False)
        manifest["variants"] = frame["variant"].tolist()
    else:
        if oracle:
            trainer = oracle_predictor
        elif majority:
            trainer = majority_predictor
        else:
            trainer = TeamTrainer(config.trainer_config())
        result = run_protocol(trainer, records, config.protocol, k=config.k_folds, seed=config.seed,
                              n_jobs=config.n_jobs)
        frame = result.to_frame()
        frame.to_csv(os.path.join(dirs["outputs"], f"metrics_{config.protocol}.csv"), index=False)
        save_confusion(result.total_confusion, dirs["outputs"], f"confusion_{config.protocol}")
        manifest["runs"] = [r.name for r in result.runs]
        manifest["predictor"] = "oracle" if oracle else "majority" if majority else "team"

    write_config_snapshot(config, os.path.join(config.output_dir, "config.txt"))
    _write_manifest(config.output_dir, "evaluate", manifest)
    return frame


def cmd_coherence(config: RunConfig, topics_path: str, cutoffs: List[int]) -> pd.DataFrame:
    dirs = ensure_dirs(config.output_dir)
    if not os.path.exists(topics_path):
        raise FileNotFoundError(f"Arquivo de tópicos não encontrado: {topics_path}. Rode antes: python cli.py train")
    topic_lists = ntm.read_topic_word_tsv(topics_path, top_n=max(cutoffs))
    docs = [tokenize(r.sentence, "ntm") for r in read_corpus(config.data_path).records]
    report = coherence_report(topic_lists, docs, window=config.npmi_window, cutoffs=cutoffs)
    frame = report_frame(report)
    frame.to_csv(os.path.join(dirs["outputs"], "coherence.csv"), index=False)
    if report.missing_words:
        logger.warning("%d palavras dos tópicos não aparecem no corpus", len(report.missing_words))
    write_config_snapshot(config, os.path.join(config.output_dir, "config.txt"))
    _write_manifest(config.output_dir, "coherence", {
        "command": "coherence", "topics": topics_path, "cutoffs": cutoffs,
        "missing_words": report.missing_words,
    })
    return frame


def _print_summary(frame: pd.DataFrame) -> None:
    with pd.option_context("display.float_format", "{:.4f}".format, "display.width", 120):
        print(frame.to_string(index=False))


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    try:
        config = _resolve(args)
        if args.command == "prepare":
            manifest = cmd_prepare(config)
            print(f"[OK] Preparação concluída: {manifest['examples']} exemplos, vocabulário {manifest['vocab_size']}")
        elif args.command == "train":
            manifest = cmd_train(config, args.mode, args.fold, args.held_out)
            print(f"[OK] Treino concluído. Checkpoint em: {os.path.join(config.output_dir, manifest['checkpoint'])}")
        elif args.command == "extract-topics":
            targets = [t for t in args.targets.split(",") if t.strip()] if args.targets else None
            path = cmd_extract_topics(config, args.checkpoint, targets)
            print(f"[OK] Tópicos extraídos em: {path}")
        elif args.command == "evaluate":
            grid = [int(k) for k in args.topic_grid.split(",")] if args.topic_grid else None
            frame = cmd_evaluate(config, args.oracle, args.majority, args.ablation, grid, args.checkpoint)
            _print_summary(frame)
            print(f"[OK] Avaliação concluída. Métricas em: {os.path.join(config.output_dir, 'outputs')}")
        elif args.command == "coherence":
            cutoffs = [int(c) for c in args.cutoffs.split(",")]
            frame = cmd_coherence(config, args.topics, cutoffs)
            _print_summary(frame)
            print(f"[OK] Coerência salva em: {os.path.join(config.output_dir, 'outputs', 'coherence.csv')}")
        elif args.command == "predict":
            output = args.output or os.path.join(config.output_dir, "outputs", "predictions.tsv")
            out = run_predict(args.input, output, _checkpoint_path(config, args.checkpoint))
            print(f"[OK] Predição salva em: {out}")
    except (FileNotFoundError, ValueError) as exc:
        print(f"[ERRO] {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
