"""Cohort data model, CSV ingestion, and structural validation.

A cohort bundles subject profiles, meal surveys, the food composition
table, body-composition samples, monthly assessments, and the trial-period
calendar. Cohorts are immutable after construction and safe to share
across workers.

File layout (UTF-8, '.' decimal separator, ISO-8601 dates):

    profiles.csv     subject_id,sex,age,physical_activity,mmse,comorbidities,therapies
    meals.csv        subject_id,date,meal,food_id,consumed_fraction
    foods.csv        food_id,nominal_portion_g,cereals,animal_proteins,vegetables,fruit
    bodycomp.csv     subject_id,timestamp,fmi,bmi,bmr,body_water_pct
    assessments.csv  subject_id,month_end_date,mna_score
    periods.csv      period_id,start_date,end_date

meals.csv is long format: one row per surveyed food item; the rows of a
(subject, date, meal) triple form that meal's record.
"""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError

CONSUMED_FRACTION_LEVELS = (0.0, 0.25, 0.5, 0.75, 1.0)
MEALS = ("lunch", "dinner")
MACROS = ("cereals", "animal_proteins", "vegetables", "fruit")
MNA_RISK_THRESHOLD = 23.5

TABLE_FILES = {
    "profiles": "profiles.csv",
    "meals": "meals.csv",
    "foods": "foods.csv",
    "bodycomp": "bodycomp.csv",
    "assessments": "assessments.csv",
    "periods": "periods.csv",
}


@dataclass(frozen=True)
class SubjectProfile:
    subject_id: str
    sex: str  # "F" | "M"
    age: int
    physical_activity: bool
    mmse: float  # 0..30, 0.5 steps
    comorbidities: int
    therapies: int

    def __post_init__(self):
        if self.sex not in ("F", "M"):
            raise DataError(f"sex must be F or M, got {self.sex!r}")
        if not 60 <= self.age <= 110:
            raise DataError(f"age {self.age} outside [60, 110] for {self.subject_id}")
        if not 0 <= self.mmse <= 30 or (self.mmse * 2) % 1 != 0:
            raise DataError(f"mmse {self.mmse} invalid for {self.subject_id}")
        if self.comorbidities < 0 or self.therapies < 0:
            raise DataError(f"negative counts for {self.subject_id}")


@dataclass(frozen=True)
class MealRecord:
    subject_id: str
    date: dt.date
    meal: str  # "lunch" | "dinner"
    items: tuple  # of (food_id, consumed_fraction)

    def __post_init__(self):
        if self.meal not in MEALS:
            raise DataError(f"meal must be lunch or dinner, got {self.meal!r}")
        for food_id, frac in self.items:
            if frac not in CONSUMED_FRACTION_LEVELS:
                raise DataError(
                    f"consumed_fraction {frac} for {food_id} not on the "
                    f"5-level scale {CONSUMED_FRACTION_LEVELS}"
                )


@dataclass(frozen=True)
class FoodCompositionEntry:
    food_id: str
    nominal_portion_g: float
    composition: dict  # macro -> fraction of portion mass

    def __post_init__(self):
        if self.nominal_portion_g <= 0:
            raise DataError(f"portion must be positive for {self.food_id}")
        total = sum(self.composition.get(m, 0.0) for m in MACROS)
        if total > 1.0 + 1e-9:
            raise DataError(f"composition fractions of {self.food_id} sum to {total} > 1")


@dataclass(frozen=True)
class BodyCompositionSample:
    subject_id: str
    timestamp: dt.datetime
    fmi: float
    bmi: float
    bmr: float
    body_water_pct: float

    def __post_init__(self):
        if min(self.fmi, self.bmi, self.bmr, self.body_water_pct) <= 0:
            raise DataError(f"non-positive body measurement for {self.subject_id}")
        if not 10 <= self.bmi <= 60:
            raise DataError(f"bmi {self.bmi} outside [10, 60] for {self.subject_id}")
        if not 0 < self.body_water_pct < 100:
            raise DataError(f"body water {self.body_water_pct} out of range")


@dataclass(frozen=True)
class MonthlyAssessment:
    subject_id: str
    month_end_date: dt.date
    mna_score: float

    def __post_init__(self):
        if not 0 <= self.mna_score <= 30 or (self.mna_score * 2) % 1 != 0:
            raise DataError(f"mna {self.mna_score} invalid for {self.subject_id}")

    @property
    def label(self) -> str:
        return "Risk" if self.mna_score <= MNA_RISK_THRESHOLD else "Normal"


@dataclass(frozen=True)
class TrialPeriod:
    period_id: str
    start_date: dt.date  # week indexing is Monday-aligned
    end_date: dt.date

    def __post_init__(self):
        if self.start_date > self.end_date:
            raise DataError(f"period {self.period_id} starts after it ends")

    @property
    def n_weeks(self) -> int:
        return (monday_of(self.end_date) - monday_of(self.start_date)).days // 7 + 1

    def contains(self, date: dt.date) -> bool:
        return self.start_date <= date <= self.end_date

    def week_index(self, date: dt.date) -> int:
        """1-based index of the ISO week of `date` within this period."""
        return (monday_of(date) - monday_of(self.start_date)).days // 7 + 1


def monday_of(date: dt.date) -> dt.date:
    return date - dt.timedelta(days=date.weekday())


@dataclass(frozen=True)
class Cohort:
    profiles: dict  # subject_id -> SubjectProfile
    meals: tuple  # of MealRecord
    foods: dict  # food_id -> FoodCompositionEntry
    body_samples: tuple  # of BodyCompositionSample
    assessments: tuple  # of MonthlyAssessment
    periods: tuple  # of TrialPeriod

    def __post_init__(self):
        ordered = sorted(self.periods, key=lambda p: p.start_date)
        for a, b in zip(ordered, ordered[1:]):
            if b.start_date <= a.end_date:
                raise DataError(f"periods {a.period_id} and {b.period_id} overlap")

    def period_of(self, date: dt.date):
        for p in self.periods:
            if p.contains(date):
                return p
        return None

    def subjects_with_body_data(self) -> set:
        return {s.subject_id for s in self.body_samples}

    def row_counts(self) -> dict:
        return {
            "profiles": len(self.profiles),
            "meals": len(self.meals),
            "foods": len(self.foods),
            "bodycomp": len(self.body_samples),
            "assessments": len(self.assessments),
            "periods": len(self.periods),
        }


@dataclass
class PeriodValidation:
    period_id: str
    n_subjects: int
    n_weeks: int
    observed_weeks: int
    invalid_nutritional_weeks: int
    missing_body_weeks: int
    body_weeks_expected: int

    @property
    def invalid_nutritional_pct(self) -> float:
        if self.observed_weeks == 0:
            return 0.0
        return 100.0 * self.invalid_nutritional_weeks / self.observed_weeks

    @property
    def missing_body_pct(self):
        if self.body_weeks_expected == 0:
            return None
        return 100.0 * self.missing_body_weeks / self.body_weeks_expected


@dataclass
class ValidationReport:
    periods: list  # of PeriodValidation
    flagged_periods: list  # period ids over the invalid-data threshold
    structural_errors: list
    row_counts: dict

    @property
    def ok(self) -> bool:
        return not self.structural_errors


def _parse_fraction(text: str, locator: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"consumed_fraction {text!r} is not a number", locator=locator)
    if value not in CONSUMED_FRACTION_LEVELS:
        raise DataError(
            f"consumed_fraction {value} not on the 5-level scale "
            f"{CONSUMED_FRACTION_LEVELS}",
            locator=locator,
        )
    return value


def _read_rows(path: Path, expected_header: list) -> list:
    if not path.exists():
        raise DataError(f"missing input table {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty")
        if header != expected_header:
            raise DataError(
                f"{path.name} header {header} does not match expected {expected_header}"
            )
        return list(reader)


def ingest_cohort(directory) -> Cohort:
    """Load and cross-reference the six cohort tables from `directory`.

    Rejects unresolved subject/food references, malformed fraction levels,
    and duplicate survey rows, naming the offending file row.
    """
    directory = Path(directory)

    rows = _read_rows(
        directory / TABLE_FILES["profiles"],
        ["subject_id", "sex", "age", "physical_activity", "mmse", "comorbidities", "therapies"],
    )
    profiles = {}
    for i, row in enumerate(rows, start=2):
        loc = f"profiles.csv:{i}"
        sid = row[0]
        if sid in profiles:
            raise DataError(f"duplicate subject_id {sid}", locator=loc)
        profiles[sid] = SubjectProfile(
            subject_id=sid,
            sex=row[1],
            age=int(row[2]),
            physical_activity=row[3].lower() in ("1", "true", "yes"),
            mmse=float(row[4]),
            comorbidities=int(row[5]),
            therapies=int(row[6]),
        )

    rows = _read_rows(
        directory / TABLE_FILES["foods"],
        ["food_id", "nominal_portion_g", "cereals", "animal_proteins", "vegetables", "fruit"],
    )
    foods = {}
    for i, row in enumerate(rows, start=2):
        loc = f"foods.csv:{i}"
        fid = row[0]
        if fid in foods:
            raise DataError(f"duplicate food_id {fid}", locator=loc)
        foods[fid] = FoodCompositionEntry(
            food_id=fid,
            nominal_portion_g=float(row[1]),
            composition={m: float(v) for m, v in zip(MACROS, row[2:6])},
        )

    rows = _read_rows(
        directory / TABLE_FILES["periods"], ["period_id", "start_date", "end_date"]
    )
    periods = tuple(
        TrialPeriod(r[0], dt.date.fromisoformat(r[1]), dt.date.fromisoformat(r[2]))
        for r in rows
    )

    rows = _read_rows(
        directory / TABLE_FILES["meals"],
        ["subject_id", "date", "meal", "food_id", "consumed_fraction"],
    )
    grouped: dict = {}
    seen_items = set()
    for i, row in enumerate(rows, start=2):
        loc = f"meals.csv:{i}"
        sid, date_s, meal, fid, frac_s = row
        if sid not in profiles:
            raise DataError(f"unresolved subject_id {sid}", locator=loc)
        if fid not in foods:
            raise DataError(f"unknown food_id {fid}", locator=loc)
        frac = _parse_fraction(frac_s, loc)
        date = dt.date.fromisoformat(date_s)
        key = (sid, date, meal, fid)
        if key in seen_items:
            raise DataError(
                f"duplicate survey row for {sid} {date_s} {meal} {fid}", locator=loc
            )
        seen_items.add(key)
        grouped.setdefault((sid, date, meal), []).append((fid, frac))
    meals = tuple(
        MealRecord(subject_id=sid, date=date, meal=meal, items=tuple(items))
        for (sid, date, meal), items in grouped.items()
    )

    rows = _read_rows(
        directory / TABLE_FILES["bodycomp"],
        ["subject_id", "timestamp", "fmi", "bmi", "bmr", "body_water_pct"],
    )
    body_samples = []
    for i, row in enumerate(rows, start=2):
        loc = f"bodycomp.csv:{i}"
        if row[0] not in profiles:
            raise DataError(f"unresolved subject_id {row[0]}", locator=loc)
        body_samples.append(
            BodyCompositionSample(
                subject_id=row[0],
                timestamp=dt.datetime.fromisoformat(row[1]),
                fmi=float(row[2]),
                bmi=float(row[3]),
                bmr=float(row[4]),
                body_water_pct=float(row[5]),
            )
        )

    rows = _read_rows(
        directory / TABLE_FILES["assessments"],
        ["subject_id", "month_end_date", "mna_score"],
    )
    assessments = []
    seen_assessments = set()
    for i, row in enumerate(rows, start=2):
        loc = f"assessments.csv:{i}"
        if row[0] not in profiles:
            raise DataError(f"unresolved subject_id {row[0]}", locator=loc)
        date = dt.date.fromisoformat(row[1])
        key = (row[0], date.year, date.month)
        if key in seen_assessments:
            raise DataError(f"duplicate assessment for {row[0]} {row[1]}", locator=loc)
        seen_assessments.add(key)
        assessments.append(
            MonthlyAssessment(subject_id=row[0], month_end_date=date, mna_score=float(row[2]))
        )

    return Cohort(
        profiles=profiles,
        meals=meals,
        foods=foods,
        body_samples=tuple(body_samples),
        assessments=tuple(assessments),
        periods=periods,
    )


def write_cohort(cohort: Cohort, directory) -> None:
    """Emit the six CSV tables; inverse of ingest_cohort up to row order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def dump(name, header, rows):
        with open(directory / TABLE_FILES[name], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)

    dump(
        "profiles",
        ["subject_id", "sex", "age", "physical_activity", "mmse", "comorbidities", "therapies"],
        [
            [p.subject_id, p.sex, p.age, str(p.physical_activity).lower(), _num(p.mmse),
             p.comorbidities, p.therapies]
            for p in sorted(cohort.profiles.values(), key=lambda p: p.subject_id)
        ],
    )
    dump(
        "foods",
        ["food_id", "nominal_portion_g", "cereals", "animal_proteins", "vegetables", "fruit"],
        [
            [f.food_id, _num(f.nominal_portion_g)] + [_num(f.composition.get(m, 0.0)) for m in MACROS]
            for f in sorted(cohort.foods.values(), key=lambda f: f.food_id)
        ],
    )
    dump(
        "periods",
        ["period_id", "start_date", "end_date"],
        [
            [p.period_id, p.start_date.isoformat(), p.end_date.isoformat()]
            for p in cohort.periods
        ],
    )
    meal_rows = []
    for rec in sorted(cohort.meals, key=lambda r: (r.subject_id, r.date, r.meal)):
        for fid, frac in rec.items:
            meal_rows.append(
                [rec.subject_id, rec.date.isoformat(), rec.meal, fid, _num(frac)]
            )
    dump("meals", ["subject_id", "date", "meal", "food_id", "consumed_fraction"], meal_rows)
    dump(
        "bodycomp",
        ["subject_id", "timestamp", "fmi", "bmi", "bmr", "body_water_pct"],
        [
            [s.subject_id, s.timestamp.isoformat(), _num(s.fmi), _num(s.bmi),
             _num(s.bmr), _num(s.body_water_pct)]
            for s in sorted(cohort.body_samples, key=lambda s: (s.subject_id, s.timestamp))
        ],
    )
    dump(
        "assessments",
        ["subject_id", "month_end_date", "mna_score"],
        [
            [a.subject_id, a.month_end_date.isoformat(), _num(a.mna_score)]
            for a in sorted(cohort.assessments, key=lambda a: (a.subject_id, a.month_end_date))
        ],
    )


def _num(x) -> str:
    """Shortest decimal form that round-trips a float."""
    return repr(float(x)) if not float(x).is_integer() else str(int(x))


def subject_week_spans(cohort: Cohort) -> dict:
    """Per (subject, period): the inclusive week-index span covered by surveys."""
    spans = {}
    for rec in cohort.meals:
        period = cohort.period_of(rec.date)
        if period is None:
            continue
        widx = period.week_index(rec.date)
        key = (rec.subject_id, period.period_id)
        lo, hi = spans.get(key, (widx, widx))
        spans[key] = (min(lo, widx), max(hi, widx))
    return spans


def valid_survey_days(cohort: Cohort) -> dict:
    """Per (subject, period, week_index): number of days with both meals surveyed."""
    by_day: dict = {}
    for rec in cohort.meals:
        by_day.setdefault((rec.subject_id, rec.date), set()).add(rec.meal)
    counts: dict = {}
    for (sid, date), meals_seen in by_day.items():
        if len(meals_seen) < 2:
            continue
        period = cohort.period_of(date)
        if period is None:
            continue
        key = (sid, period.period_id, period.week_index(date))
        counts[key] = counts.get(key, 0) + 1
    return counts


def validate_cohort(
    cohort: Cohort,
    min_valid_days: int = 5,
    exclusion_threshold: float = 0.50,
) -> ValidationReport:
    """Report per-period invalid-nutritional and missing-body percentages.

    A nutritional week is invalid when fewer than `min_valid_days` of its
    days have both meal surveys. Periods whose invalid fraction reaches
    `exclusion_threshold` are flagged for exclusion. Report-only: never
    raises on content.
    """
    structural = []
    for rec in cohort.meals:
        if cohort.period_of(rec.date) is None:
            structural.append(
                f"meal record {rec.subject_id} {rec.date.isoformat()} outside all trial periods"
            )
    for s in cohort.body_samples:
        if cohort.period_of(s.timestamp.date()) is None:
            structural.append(
                f"body sample {s.subject_id} {s.timestamp.isoformat()} outside all trial periods"
            )

    spans = subject_week_spans(cohort)
    day_counts = valid_survey_days(cohort)
    body_weeks = set()
    for s in cohort.body_samples:
        period = cohort.period_of(s.timestamp.date())
        if period is not None:
            body_weeks.add((s.subject_id, period.period_id, period.week_index(s.timestamp.date())))
    body_subjects_by_period: dict = {}
    for sid, pid, _ in body_weeks:
        body_subjects_by_period.setdefault(pid, set()).add(sid)

    period_reports = []
    flagged = []
    for period in cohort.periods:
        pid = period.period_id
        subs = sorted({sid for (sid, p) in spans if p == pid})
        observed = 0
        invalid = 0
        body_expected = 0
        body_missing = 0
        for sid in subs:
            lo, hi = spans[(sid, pid)]
            has_body = sid in body_subjects_by_period.get(pid, set())
            for w in range(lo, hi + 1):
                observed += 1
                if day_counts.get((sid, pid, w), 0) < min_valid_days:
                    invalid += 1
                if has_body:
                    body_expected += 1
                    if (sid, pid, w) not in body_weeks:
                        body_missing += 1
        rep = PeriodValidation(
            period_id=pid,
            n_subjects=len(subs),
            n_weeks=period.n_weeks,
            observed_weeks=observed,
            invalid_nutritional_weeks=invalid,
            missing_body_weeks=body_missing,
            body_weeks_expected=body_expected,
        )
        period_reports.append(rep)
        if observed > 0 and rep.invalid_nutritional_pct >= exclusion_threshold * 100.0:
            flagged.append(pid)

    return ValidationReport(
        periods=period_reports,
        flagged_periods=flagged,
        structural_errors=structural,
        row_counts=cohort.row_counts(),
    )
