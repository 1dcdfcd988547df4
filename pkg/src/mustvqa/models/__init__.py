"""Answer models: pointer-decoder and generative encoder-decoder families."""

from .base import load_estimator
from .pointer import PointerModelConfig, PointerVQA, pointer_scores, step_loss
from .seq2seq import Seq2SeqConfig, Seq2SeqVQA, quantize_box, sequence_loss

__all__ = [
    "PointerModelConfig", "PointerVQA", "Seq2SeqConfig", "Seq2SeqVQA", "load_estimator",
    "pointer_scores", "quantize_box", "sequence_loss", "step_loss",
]
