import datetime as dt

import hypothesis
import numpy as np
import pytest

from nutriscreen.domain import (
    BodyCompositionSample,
    Cohort,
    FoodCompositionEntry,
    MealRecord,
    MonthlyAssessment,
    SubjectProfile,
    TrialPeriod,
)
from nutriscreen.featureng import build_feature_matrix
from nutriscreen.synthcohort import generate_cohort_with_truth

hypothesis.settings.register_profile(
    "suite", max_examples=25, deadline=None, derandomize=True
)
hypothesis.settings.load_profile("suite")


MONDAY = dt.date(2021, 1, 4)


def make_profile(sid="S01", **kw):
    defaults = dict(
        subject_id=sid, sex="F", age=80, physical_activity=True,
        mmse=27.0, comorbidities=3, therapies=4,
    )
    defaults.update(kw)
    return SubjectProfile(**defaults)


def make_foods():
    return {
        "veg80": FoodCompositionEntry("veg80", 80.0, {"vegetables": 1.0}),
        "pasta": FoodCompositionEntry("pasta", 100.0, {"cereals": 0.75}),
        "fish": FoodCompositionEntry("fish", 130.0, {"animal_proteins": 0.85}),
        "apple": FoodCompositionEntry("apple", 150.0, {"fruit": 1.0}),
    }


def full_week_meals(sid, monday, fraction=0.5, foods=("veg80", "pasta", "fish", "apple")):
    """Lunch + dinner every day of the week, constant consumption."""
    records = []
    for day in range(7):
        date = monday + dt.timedelta(days=day)
        for meal in ("lunch", "dinner"):
            records.append(
                MealRecord(
                    subject_id=sid, date=date, meal=meal,
                    items=tuple((f, fraction) for f in foods),
                )
            )
    return records


def tiny_cohort(n_weeks=6, subjects=("S01", "S02"), fraction=0.5):
    """Fully-surveyed cohort over one period with assessments each month."""
    period = TrialPeriod("P1", MONDAY, MONDAY + dt.timedelta(weeks=n_weeks) - dt.timedelta(days=1))
    profiles = {}
    meals = []
    assessments = []
    bodies = []
    for i, sid in enumerate(subjects):
        profiles[sid] = make_profile(sid, age=75 + i, sex="F" if i % 2 == 0 else "M")
        months = set()
        for w in range(n_weeks):
            monday = MONDAY + dt.timedelta(weeks=w)
            meals.extend(full_week_meals(sid, monday, fraction))
            months.add((monday.year, monday.month))
            bodies.append(
                BodyCompositionSample(
                    subject_id=sid,
                    timestamp=dt.datetime.combine(monday + dt.timedelta(days=2), dt.time(8)),
                    fmi=9.0 + i, bmi=24.0 + i, bmr=1400.0 + 10 * i, body_water_pct=52.0 - i,
                )
            )
        for year, month in sorted(months):
            nm = dt.date(year + month // 12, month % 12 + 1, 1)
            assessments.append(
                MonthlyAssessment(
                    subject_id=sid, month_end_date=nm - dt.timedelta(days=1),
                    mna_score=22.0 if i % 2 else 26.0,
                )
            )
    return Cohort(
        profiles=profiles, meals=tuple(meals), foods=make_foods(),
        body_samples=tuple(bodies), assessments=tuple(assessments), periods=(period,),
    )


@pytest.fixture(scope="session")
def cohort42():
    cohort, truth = generate_cohort_with_truth(seed=42)
    return cohort, truth


@pytest.fixture(scope="session")
def fm_nobody(cohort42):
    cohort, _ = cohort42
    return build_feature_matrix(cohort, with_body=False)


@pytest.fixture(scope="session")
def fm_body(cohort42):
    cohort, _ = cohort42
    return build_feature_matrix(cohort, with_body=True)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
