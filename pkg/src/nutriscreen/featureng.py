"""Weekly feature engineering: raw cohort records to labeled feature rows.

Two dataset variants are produced: a 10-feature matrix (clinical +
macro-nutrient intakes) over all subjects, and a 14-feature matrix that
appends body-composition statistics for the subjects that have them.
"""
from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field

import numpy as np

from .domain import MACROS, Cohort, monday_of
from .errors import DataError

log = logging.getLogger(__name__)

BODY_FIELDS = ("fmi", "bmi", "bmr", "body_water_pct")

BODY_FEATURES = ("FMI", "BMI", "BMR", "Body Water")
CLINICAL_FEATURES = ("Age", "Sex", "Physical Activity", "MMSE", "Comorbidities", "Therapy")
INTAKE_FEATURES = ("Cereals", "Proteins", "Vegetables", "Fruit")

FEATURES_WITHOUT_BODY = CLINICAL_FEATURES + INTAKE_FEATURES
FEATURES_WITH_BODY = BODY_FEATURES + CLINICAL_FEATURES + INTAKE_FEATURES

SEX_VOCAB = ("F", "M")

_MACRO_TO_FEATURE = dict(zip(MACROS, INTAKE_FEATURES))


def column_roles(columns) -> dict:
    roles = {}
    for name in columns:
        if name == "Sex":
            roles[name] = "categorical"
        elif name == "Physical Activity":
            roles[name] = "boolean"
        else:
            roles[name] = "numeric"
    return roles


@dataclass
class WeeklyObservation:
    subject_id: str
    period_id: str
    week_index: int
    monday: dt.date
    features: dict
    label: str | None = None
    nutrition_observed: bool = True
    body_observed: bool = False


@dataclass
class FeatureMatrix:
    """Raw (pre-encoding) numeric view of the weekly observations.

    Sex is carried as 0/1 against SEX_VOCAB and expanded to one-hot columns
    by the preprocessing step, not here.
    """

    X: np.ndarray
    columns: list
    y: np.ndarray  # 1 = Risk, 0 = Normal
    subjects: list  # subject_id per row
    row_meta: list = field(default_factory=list)  # (subject, period, week_index)

    def __post_init__(self):
        if self.X.shape[0] != len(self.y) or self.X.shape[0] != len(self.subjects):
            raise DataError("feature matrix rows, labels, and subject index disagree")
        if self.X.shape[1] != len(self.columns):
            raise DataError("column names do not match matrix width")
        if not np.all(np.isfinite(self.X)):
            raise DataError("feature matrix contains missing or non-finite cells")

    @property
    def roles(self) -> dict:
        return column_roles(self.columns)

    def subject_row_counts(self) -> dict:
        counts: dict = {}
        for sid in self.subjects:
            counts[sid] = counts.get(sid, 0) + 1
        return counts

    def take(self, indices) -> "FeatureMatrix":
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureMatrix(
            X=self.X[indices],
            columns=list(self.columns),
            y=self.y[indices],
            subjects=[self.subjects[i] for i in indices],
            row_meta=[self.row_meta[i] for i in indices] if self.row_meta else [],
        )

    def to_csv(self, csv_path, manifest_path=None) -> None:
        import csv as _csv
        import json
        from .domain import _num

        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = _csv.writer(fh, lineterminator="\n")
            writer.writerow(["subject_id", "period_id", "week_index", *self.columns, "label"])
            for i in range(self.X.shape[0]):
                sid, pid, widx = self.row_meta[i] if self.row_meta else (self.subjects[i], "", 0)
                writer.writerow(
                    [sid, pid, widx]
                    + [_num(v) for v in self.X[i]]
                    + ["Risk" if self.y[i] == 1 else "Normal"]
                )
        if manifest_path is not None:
            manifest = {
                "feature_columns": list(self.columns),
                "roles": self.roles,
                "label_column": "label",
                "subject_column": "subject_id",
                "categorical_vocab": {"Sex": list(SEX_VOCAB)},
            }
            with open(manifest_path, "w", encoding="utf-8") as fh:
                json.dump(manifest, fh, sort_keys=True, indent=2)
                fh.write("\n")

    @classmethod
    def from_csv(cls, csv_path) -> "FeatureMatrix":
        import csv as _csv

        with open(csv_path, newline="", encoding="utf-8") as fh:
            reader = _csv.reader(fh)
            header = next(reader)
            columns = header[3:-1]
            rows, labels, subjects, meta = [], [], [], []
            for row in reader:
                subjects.append(row[0])
                meta.append((row[0], row[1], int(row[2])))
                rows.append([float(v) for v in row[3:-1]])
                labels.append(1 if row[-1] == "Risk" else 0)
        return cls(
            X=np.asarray(rows, dtype=np.float64),
            columns=columns,
            y=np.asarray(labels, dtype=np.int64),
            subjects=subjects,
            row_meta=meta,
        )


def compute_daily_intake(lunch, dinner, foods) -> dict | None:
    """Grams of each macro-nutrient consumed in one day (both meals).

    Returns None when either meal survey is missing (the day is invalid,
    not an error). Unknown food ids are errors.
    """
    if lunch is None or dinner is None:
        return None
    totals = dict.fromkeys(MACROS, 0.0)
    for record in (lunch, dinner):
        for food_id, fraction in record.items:
            entry = foods.get(food_id)
            if entry is None:
                raise DataError(f"unknown food_id {food_id} in survey of {record.subject_id}")
            grams = entry.nominal_portion_g * fraction
            for macro in MACROS:
                totals[macro] += grams * entry.composition.get(macro, 0.0)
    return totals


def aggregate_week(days, min_valid_days: int = 5) -> dict | None:
    """Mean daily intake over the week's valid days, or None when invalid.

    `days` holds one entry per monitoring day: an intake dict for valid
    days, None for invalid ones.
    """
    if not 1 <= min_valid_days <= 7:
        raise DataError(f"min_valid_days {min_valid_days} outside [1, 7]")
    valid = [d for d in days if d is not None]
    if len(valid) < min_valid_days:
        return None
    return {m: sum(d[m] for d in valid) / len(valid) for m in MACROS}


def aggregate_body_week(samples) -> dict | None:
    """Componentwise mean of the week's body samples, or None when absent."""
    samples = list(samples)
    if not samples:
        return None
    return {
        f: sum(getattr(s, f) for s in samples) / len(samples) for f in BODY_FIELDS
    }


def impute_missing_week(series) -> list:
    """Fill gaps with the mean of the nearest preceding and following
    observed values (one-sided gaps copy the single neighbor).

    Neighbors are always original observations, never imputed values; gaps
    with no observed neighbor stay None.
    """
    series = list(series)
    observed = [i for i, v in enumerate(series) if v is not None]
    if not observed:
        return series
    filled = list(series)
    for i, v in enumerate(series):
        if v is not None:
            continue
        prev_candidates = [j for j in observed if j < i]
        next_candidates = [j for j in observed if j > i]
        prev_j = prev_candidates[-1] if prev_candidates else None
        next_j = next_candidates[0] if next_candidates else None
        if prev_j is not None and next_j is not None:
            filled[i] = (series[prev_j] + series[next_j]) / 2.0
        elif prev_j is not None:
            filled[i] = series[prev_j]
        elif next_j is not None:
            filled[i] = series[next_j]
    return filled


def _assessment_lookup(assessments) -> dict:
    return {
        (a.subject_id, a.month_end_date.year, a.month_end_date.month): a
        for a in assessments
    }


def label_weeks(observations, assessments) -> list:
    """Attach the month-end assessment label to each weekly observation.

    The week's month is the month of its Monday. Weeks whose month has no
    assessment are dropped with a warning. Idempotent.
    """
    lookup = _assessment_lookup(assessments)
    labeled = []
    dropped = 0
    for obs in observations:
        key = (obs.subject_id, obs.monday.year, obs.monday.month)
        assessment = lookup.get(key)
        if assessment is None:
            dropped += 1
            continue
        obs.label = assessment.label
        labeled.append(obs)
    if dropped:
        log.warning("dropped %d weekly observations without a monthly assessment", dropped)
    return labeled


def weekly_observations(cohort: Cohort, min_valid_days: int = 5) -> list:
    """All labeled weekly observations with nutritional features imputed.

    Body features are attached where available (and imputed within the
    period), but rows are not restricted by body coverage here.
    """
    from .domain import subject_week_spans

    by_meal: dict = {}
    for rec in cohort.meals:
        by_meal[(rec.subject_id, rec.date, rec.meal)] = rec

    body_by_week: dict = {}
    for s in cohort.body_samples:
        period = cohort.period_of(s.timestamp.date())
        if period is None:
            continue
        key = (s.subject_id, period.period_id, period.week_index(s.timestamp.date()))
        body_by_week.setdefault(key, []).append(s)

    spans = subject_week_spans(cohort)
    periods = {p.period_id: p for p in cohort.periods}
    observations = []
    for (sid, pid), (lo, hi) in sorted(spans.items()):
        period = periods[pid]
        profile = cohort.profiles[sid]
        weeks = list(range(lo, hi + 1))

        weekly_intakes = []
        observed_flags = []
        for w in weeks:
            week_monday = monday_of(period.start_date) + dt.timedelta(weeks=w - 1)
            days = []
            for d in range(7):
                date = week_monday + dt.timedelta(days=d)
                lunch = by_meal.get((sid, date, "lunch"))
                dinner = by_meal.get((sid, date, "dinner"))
                days.append(compute_daily_intake(lunch, dinner, cohort.foods))
            intake = aggregate_week(days, min_valid_days)
            weekly_intakes.append(intake)
            observed_flags.append(intake is not None)

        imputed_per_macro = {
            m: impute_missing_week(
                [None if wk is None else wk[m] for wk in weekly_intakes]
            )
            for m in MACROS
        }

        body_weekly = [
            aggregate_body_week(body_by_week.get((sid, pid, w), [])) for w in weeks
        ]
        body_observed = [b is not None for b in body_weekly]
        body_imputed = {
            f: impute_missing_week(
                [None if b is None else b[f] for b in body_weekly]
            )
            for f in BODY_FIELDS
        }

        for k, w in enumerate(weeks):
            if imputed_per_macro[MACROS[0]][k] is None:
                continue  # unimputable nutritional week: row dropped
            features = {
                "Age": float(profile.age),
                "Sex": float(SEX_VOCAB.index(profile.sex)),
                "Physical Activity": 1.0 if profile.physical_activity else 0.0,
                "MMSE": float(profile.mmse),
                "Comorbidities": float(profile.comorbidities),
                "Therapy": float(profile.therapies),
            }
            for m in MACROS:
                features[_MACRO_TO_FEATURE[m]] = float(imputed_per_macro[m][k])
            has_body = body_imputed[BODY_FIELDS[0]][k] is not None
            if has_body:
                for f, name in zip(BODY_FIELDS, BODY_FEATURES):
                    features[name] = float(body_imputed[f][k])
            observations.append(
                WeeklyObservation(
                    subject_id=sid,
                    period_id=pid,
                    week_index=w,
                    monday=monday_of(period.start_date) + dt.timedelta(weeks=w - 1),
                    features=features,
                    nutrition_observed=observed_flags[k],
                    body_observed=has_body,
                )
            )
    return label_weeks(observations, cohort.assessments)


def build_feature_matrix(
    cohort: Cohort, with_body: bool, min_valid_days: int = 5
) -> FeatureMatrix:
    """Assemble the labeled weekly feature matrix for one dataset variant."""
    observations = weekly_observations(cohort, min_valid_days)
    if with_body:
        covered = cohort.subjects_with_body_data()
        observations = [
            o for o in observations
            if o.subject_id in covered and all(f in o.features for f in BODY_FEATURES)
        ]
        columns = list(FEATURES_WITH_BODY)
    else:
        columns = list(FEATURES_WITHOUT_BODY)
    if not observations:
        raise DataError("no labeled weekly observations; feature matrix is empty")
    X = np.array(
        [[o.features[c] for c in columns] for o in observations], dtype=np.float64
    )
    y = np.array([1 if o.label == "Risk" else 0 for o in observations], dtype=np.int64)
    return FeatureMatrix(
        X=X,
        columns=columns,
        y=y,
        subjects=[o.subject_id for o in observations],
        row_meta=[(o.subject_id, o.period_id, o.week_index) for o in observations],
    )
