"""Hierarchy-aware multi-label classification toolkit for
persuasion-technique-annotated meme corpora."""

from .hierarchy import (
    HierarchyError,
    LabelHierarchy,
    UnknownLabelError,
    parse_hierarchy,
)
from .metrics import (
    BootstrapInterval,
    FlatScore,
    HierarchicalScore,
    bootstrap_ci,
    fbeta,
    flat_binary_score,
    hierarchical_score,
    per_class_hierarchical_diagnostics,
)
from .textmetrics import bleu4, rouge_l, score_caption_pairs, tokenize
from .corpus import (
    CorpusError,
    MemeInstance,
    dump_corpus,
    load_corpus,
    load_predictions,
    merge_captions,
    write_predictions,
)
from .baseline import (
    FeatureConfig,
    HierModel,
    TrainConfig,
    featurize,
    load_model,
    predict,
    predict_corpus,
    save_model,
    train,
    tune_thresholds,
)
from .captioner import (
    FALLBACK_PROMPT,
    PRIMARY_PROMPT,
    CaptionOutcome,
    PromptTemplate,
    ProviderConfig,
    caption_corpus,
    caption_instance,
    render_prompt,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "HierarchyError",
    "UnknownLabelError",
    "LabelHierarchy",
    "parse_hierarchy",
    "HierarchicalScore",
    "FlatScore",
    "BootstrapInterval",
    "fbeta",
    "hierarchical_score",
    "per_class_hierarchical_diagnostics",
    "flat_binary_score",
    "bootstrap_ci",
    "tokenize",
    "rouge_l",
    "bleu4",
    "score_caption_pairs",
    "CorpusError",
    "MemeInstance",
    "load_corpus",
    "dump_corpus",
    "merge_captions",
    "load_predictions",
    "write_predictions",
    "FeatureConfig",
    "TrainConfig",
    "HierModel",
    "featurize",
    "train",
    "predict",
    "predict_corpus",
    "tune_thresholds",
    "save_model",
    "load_model",
    "PromptTemplate",
    "PRIMARY_PROMPT",
    "FALLBACK_PROMPT",
    "render_prompt",
    "ProviderConfig",
    "CaptionOutcome",
    "caption_instance",
    "caption_corpus",
]
