"""Explainable weekly malnutrition-risk screening pipeline."""

__version__ = "0.1.0"

from .domain import Cohort, ingest_cohort, validate_cohort, write_cohort  # noqa: F401
from .featureng import FeatureMatrix, build_feature_matrix  # noqa: F401
from .models import ModelSpec, TrainedModel, fit_model, predict_proba, tree_structure  # noqa: F401
from .synthcohort import SyntheticCohortSpec, generate_cohort, trend_oracle  # noqa: F401
