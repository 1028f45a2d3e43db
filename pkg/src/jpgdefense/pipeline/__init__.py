from .chains import IDENTITY, Step, TransformChain, parse_chain, standard_chains
from .datasets import Dataset, DatasetError, load_dataset
from .evaluate import ChainSummary, EvalConfig, EvalError, EvalReport, evaluate, load_report, save_report
from .metrics import BoxStats, boxplot_stats
from .preprocess import PreprocessConfig, prepare_image, preprocess
from .report import emit_report

__all__ = [
    "IDENTITY", "BoxStats", "ChainSummary", "Dataset", "DatasetError", "EvalConfig", "EvalError", "EvalReport",
    "PreprocessConfig", "Step", "TransformChain", "boxplot_stats", "emit_report", "evaluate", "load_dataset",
    "load_report", "parse_chain", "prepare_image", "preprocess", "save_report", "standard_chains",
]
