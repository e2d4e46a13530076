from .base import GenerativeBackend, finetune, pretrain, sequence_logprob
from .ngram import NgramConfig, NgramModel
from .neural import NeuralConfig, TinyNeuralLM, gradient_check
from .vocab import Corpus, Vocabulary, build_vocabulary

__all__ = [
    "Corpus",
    "GenerativeBackend",
    "NgramConfig",
    "NgramModel",
    "NeuralConfig",
    "TinyNeuralLM",
    "Vocabulary",
    "build_vocabulary",
    "finetune",
    "gradient_check",
    "pretrain",
    "sequence_logprob",
]
