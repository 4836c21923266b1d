"""cellsentry: a spreadsheet model-audit toolkit."""

from cellsentry.model import (
    Cell,
    CellKind,
    CellRef,
    ModelFingerprint,
    NamedRange,
    RangeRef,
    Sheet,
    Workbook,
    WorkbookError,
    fingerprint_model,
    load_workbook,
    resolve_name,
    save_workbook,
)

__version__ = "0.1.0"

__all__ = [
    "Cell",
    "CellKind",
    "CellRef",
    "ModelFingerprint",
    "NamedRange",
    "RangeRef",
    "Sheet",
    "Workbook",
    "WorkbookError",
    "__version__",
    "fingerprint_model",
    "load_workbook",
    "resolve_name",
    "save_workbook",
]
