"""Pseudo-partial-likelihood estimation for proportional cause-specific
hazards with a missing-at-random cause of failure."""

from .analysis import FittedModel, fit
from .bands import Band, BandRequest
from .cif import CifCurve, predict_cif
from .data import Dataset, Schema, SubjectRecord, TermGrammar, load_dataset, write_dataset
from .estimation import CauseSpecificFit, fit_mpple
from .gof import GofResult, gof_test, residual_process
from .kernels import BACKEND
from .missingness import MissingnessFit, fit_cause_probability

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Band", "BandRequest", "CauseSpecificFit", "CifCurve", "Dataset",
    "FittedModel", "GofResult", "MissingnessFit", "Schema", "SubjectRecord",
    "TermGrammar", "fit", "fit_cause_probability", "fit_mpple", "gof_test",
    "load_dataset", "predict_cif", "residual_process", "write_dataset",
]
