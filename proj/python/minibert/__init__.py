"""Desk-scale BERT-style pretraining pipeline: tokenizer, corpus tools,
model bookkeeping and evaluation metrics backed by the C++ core."""

from ._core import (
    Encoding,
    MinibertError,
    ModelConfig,
    Vocabulary,
    auroc,
    build_pretrain_examples,
    confidence_interval,
    corpus_stats,
    decode,
    encode,
    entity_f1,
    extract_spans,
    load_vocab,
    lr_schedule,
    multilabel_f1,
    normalize,
    nsp_pair_count,
    param_count,
    pearson,
    spearman,
    split_sentences,
    strip_bio,
    synth_corpus,
    token_f1,
    train_wordpiece,
)

__all__ = [
    "Encoding",
    "MinibertError",
    "ModelConfig",
    "Vocabulary",
    "auroc",
    "build_pretrain_examples",
    "confidence_interval",
    "corpus_stats",
    "decode",
    "encode",
    "entity_f1",
    "extract_spans",
    "load_vocab",
    "lr_schedule",
    "multilabel_f1",
    "normalize",
    "nsp_pair_count",
    "param_count",
    "pearson",
    "spearman",
    "split_sentences",
    "strip_bio",
    "synth_corpus",
    "token_f1",
    "train_wordpiece",
]
