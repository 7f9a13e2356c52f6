from citetrack.eval.consistency import description_consistency, majority_label
from citetrack.eval.datasets import (
    AnnotationError,
    Sequence,
    parse_sequence,
    read_results,
    write_results,
    write_sequence,
)
from citetrack.eval.metrics import (
    ao_sr,
    evaluate_boxes,
    normalized_precision,
    precision,
    success_auc,
)
from citetrack.eval.report import MetricReport
from citetrack.eval.robustness import run_plain, run_sre, run_tre
from citetrack.eval.synthetic import SyntheticSpec, generate_synthetic_sequence, generate_synthetic_set

__all__ = [
    "AnnotationError",
    "MetricReport",
    "Sequence",
    "SyntheticSpec",
    "ao_sr",
    "description_consistency",
    "evaluate_boxes",
    "generate_synthetic_sequence",
    "generate_synthetic_set",
    "majority_label",
    "normalized_precision",
    "parse_sequence",
    "precision",
    "read_results",
    "run_plain",
    "run_sre",
    "run_tre",
    "success_auc",
    "write_results",
    "write_sequence",
]
