"""Regional wildfire risk labelling, random-forest classification and explanation."""

from .exceptions import MissingArtifact, NumericError, ValidationError, WildfireGenomeError
from .forest import RiskForestClassifier
from .ice import IceResult, ice_pdp, make_grid
from .ingest import CellTable, load_cell_table, write_cell_table
from .labeler import CLASS_NAMES, CompositeRiskLabeler
from .metrics import MetricsReport, balanced_accuracy, confusion_matrix, macro_f1, qwk
from .synth import DriverSpec, RegionSpec, SynthConfig, generate
from .transfer import RegionModel, run_transfer_matrix
from .transforms import IndicatorTransformer, MedianIQRScaler
from .tree_shap import TreeExplainer

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES", "CellTable", "CompositeRiskLabeler", "DriverSpec", "IceResult",
    "IndicatorTransformer", "MedianIQRScaler", "MetricsReport", "MissingArtifact", "NumericError",
    "RegionModel", "RegionSpec", "RiskForestClassifier", "SynthConfig", "TreeExplainer",
    "ValidationError", "WildfireGenomeError", "balanced_accuracy", "confusion_matrix", "generate",
    "ice_pdp", "load_cell_table", "macro_f1", "make_grid", "qwk", "run_transfer_matrix",
    "write_cell_table",
]
