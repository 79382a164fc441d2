"""Seeded generator of cohorts shaped like the study population: weekly
meal surveys over separate trial periods, correlated body-composition
measurements, clinical profiles, and monthly risk labels drawn from a
logistic model over planted feature trends.

The generator doubles as the trend oracle for the attribution sign checks:
`trend_oracle` exposes the planted per-feature shapes, and
`generate_cohort_with_truth` additionally returns the internals the test
suite needs (planted intake means, subject scores, near-threshold subject
ids).
"""
from __future__ import annotations

import datetime as dt
import warnings
from dataclasses import dataclass

import numpy as np

from .domain import (
    BodyCompositionSample,
    Cohort,
    FoodCompositionEntry,
    MealRecord,
    MonthlyAssessment,
    SubjectProfile,
    TrialPeriod,
    monday_of,
)
from .util import rng_for

# menu rotation: (food_id, portion grams, dominant macro, fraction of mass)
_FOODS = (
    ("pasta", 100.0, "cereals", 0.75),
    ("rice", 80.0, "cereals", 0.80),
    ("bread", 50.0, "cereals", 0.55),
    ("chicken", 120.0, "animal_proteins", 0.90),
    ("fish", 130.0, "animal_proteins", 0.85),
    ("beef", 110.0, "animal_proteins", 0.90),
    ("mixed_salad", 80.0, "vegetables", 1.00),
    ("cooked_greens", 80.0, "vegetables", 1.00),
    ("apple", 150.0, "fruit", 1.00),
    ("banana", 120.0, "fruit", 1.00),
    ("orange", 160.0, "fruit", 1.00),
)
_CEREAL_IDS = ("pasta", "rice", "bread")
_PROTEIN_IDS = ("chicken", "fish", "beef")
_VEG_IDS = ("mixed_salad", "cooked_greens")
_FRUIT_IDS = ("apple", "banana", "orange")

# grams of each macro offered per day by the rotating two-meal menu
_DAILY_AVAILABLE = {"cereals": 0.0, "animal_proteins": 0.0, "vegetables": 0.0, "fruit": 0.0}
for _fid, _portion, _macro, _frac in _FOODS:
    reps = 2.0 / len(
        {"cereals": _CEREAL_IDS, "animal_proteins": _PROTEIN_IDS,
         "vegetables": _VEG_IDS, "fruit": _FRUIT_IDS}[_macro]
    )
    _DAILY_AVAILABLE[_macro] += _portion * _frac * reps

# planted intake centers/spreads in grams/day (fraction-of-available scale)
_INTAKE_MU = {"cereals": 0.62, "animal_proteins": 0.60, "vegetables": 0.60, "fruit": 0.62}
_INTAKE_SD = {"cereals": 0.08, "animal_proteins": 0.08, "vegetables": 0.12, "fruit": 0.08}

_BODY_FIELDS = ("fmi", "bmi", "body_water_pct", "bmr")
_BODY_CENTER = {"fmi": 9.5, "bmi": 24.5, "body_water_pct": 52.0, "bmr": 1450.0}
_BODY_SCALE = {"fmi": 2.4, "bmi": 4.2, "body_water_pct": 5.5, "bmr": 230.0}
_BODY_CLIP = {
    "fmi": (3.0, 18.5),
    "bmi": (14.0, 40.0),
    "body_water_pct": (33.0, 71.0),
    "bmr": (850.0, 2200.0),
}


@dataclass(frozen=True)
class SyntheticCohortSpec:
    n_subjects: int = 36
    period_weeks: tuple = (22, 13, 27)
    period_participation: tuple = (0.55, 0.60, 0.70)
    first_period_start: dt.date = dt.date(2021, 1, 4)  # a Monday
    period_gap_weeks: int = 6
    female_fraction: float = 0.77
    risk_prior: float = 0.33
    body_coverage: float = 0.70
    body_missing_rate: float = 0.14
    poor_week_rate: float = 0.06
    corr_bmi_fmi: float = 0.81
    corr_water_fmi: float = -0.91
    corr_water_bmi: float = -0.57
    corr_bmr_bmi: float = 0.47
    corr_bmr_fmi: float = 0.30
    corr_water_bmr: float = -0.35
    near_threshold_fraction: float = 0.10
    label_steepness: float = 4.0
    month_noise: float = 0.22
    month_state_share: float = 0.55

    def correlation_matrix(self) -> np.ndarray:
        # order: fmi, bmi, body_water_pct, bmr
        r = np.eye(4)
        r[0, 1] = r[1, 0] = self.corr_bmi_fmi
        r[0, 2] = r[2, 0] = self.corr_water_fmi
        r[1, 2] = r[2, 1] = self.corr_water_bmi
        r[1, 3] = r[3, 1] = self.corr_bmr_bmi
        r[0, 3] = r[3, 0] = self.corr_bmr_fmi
        r[2, 3] = r[3, 2] = self.corr_water_bmr
        return r


@dataclass
class TrendSpec:
    """Planted per-feature shapes: direction, breakpoints, and the score
    contribution as a callable for bin-sign oracles."""

    entries: dict

    def direction(self, feature: str) -> str:
        return self.entries[feature]["direction"]

    def shape(self, feature: str, values) -> np.ndarray:
        fn = self.entries[feature]["shape"]
        return np.asarray([fn(v) for v in np.asarray(values, dtype=np.float64)])


@dataclass
class GeneratorTruth:
    subject_scores: dict  # subject_id -> planted risk score
    intake_means: dict  # subject_id -> macro -> planted grams/day
    near_threshold_subjects: list
    label_threshold: float
    correlation_target: np.ndarray
    repaired: bool


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _g_bmi(b):
    return 2.30 * (2.0 * _sigmoid((20.0 - b) / 1.2) - 1.0)


def _g_fmi(f):
    return 1.00 * (2.0 * _sigmoid((9.0 - f) / 2.0) - 1.0)


def _g_water(w):
    return 1.20 * (2.0 * _sigmoid((w - 53.0) / 2.2) - 1.0)


def _g_mmse(m):
    if m < 18:
        return 0.35
    if m < 24:
        return 1.00
    return -0.28 - 0.07 * (m - 24.0)


def _g_age(a):
    if a < 85:
        return 0.035 * (a - 80.0)
    if a <= 90:
        return 0.175 - 0.08 * (a - 85.0)
    return -0.225 + 0.12 * (a - 90.0)


def _g_sex(is_female):
    return 0.25 if is_female else -0.80


def _g_pa(active):
    return -0.48 if active else 0.24


def _g_comorb(c):
    if c <= 4:
        return 0.14 * (c - 2.0)
    return 0.28 - 0.10 * (c - 4.0)


def _g_therapy(t):
    return 0.06 * (t - 4.0)


_VEG_CENTER = _DAILY_AVAILABLE["vegetables"] * _INTAKE_MU["vegetables"]
_VEG_SD = _DAILY_AVAILABLE["vegetables"] * _INTAKE_SD["vegetables"]
_PROT_CENTER = _DAILY_AVAILABLE["animal_proteins"] * _INTAKE_MU["animal_proteins"]
_PROT_SD = _DAILY_AVAILABLE["animal_proteins"] * _INTAKE_SD["animal_proteins"]
_CER_CENTER = _DAILY_AVAILABLE["cereals"] * _INTAKE_MU["cereals"]
_CER_SD = _DAILY_AVAILABLE["cereals"] * _INTAKE_SD["cereals"]
_FRUIT_CENTER = _DAILY_AVAILABLE["fruit"] * _INTAKE_MU["fruit"]
_FRUIT_SD = _DAILY_AVAILABLE["fruit"] * _INTAKE_SD["fruit"]


def _g_veg(v):
    return -1.25 * (v - _VEG_CENTER) / _VEG_SD


def _g_prot(p):
    return -0.35 * (p - _PROT_CENTER) / _PROT_SD


def _g_cereal(c):
    return 0.30 * ((c - _CER_CENTER) / (1.35 * _CER_SD)) ** 2 - 0.15


def _g_fruit(f):
    return -0.20 * (f - _FRUIT_CENTER) / _FRUIT_SD


def _g_interaction(bmi, veg):
    # compounding of underweight and low vegetable intake
    return 0.90 * _sigmoid((20.0 - bmi) / 2.0) * _sigmoid((_VEG_CENTER - 8.0 - veg) / 10.0)


def trend_oracle(spec: SyntheticCohortSpec | None = None) -> TrendSpec:
    """Machine-readable planted feature directions for sign checks."""
    return TrendSpec(
        entries={
            "BMI": {"direction": "-", "breakpoint": 20.0, "shape": _g_bmi},
            "FMI": {"direction": "-", "breakpoint": 9.0, "shape": _g_fmi},
            "Body Water": {"direction": "+", "breakpoint": 53.0, "shape": _g_water},
            "BMR": {"direction": "0", "shape": lambda v: 0.0},
            "MMSE": {"direction": "piecewise", "breakpoint": 24.0, "shape": _g_mmse},
            "Age": {"direction": "piecewise", "breakpoint": 85.0, "shape": _g_age},
            "Sex": {"direction": "categorical", "higher_risk": "F",
                    "shape": lambda v: _g_sex(v < 0.5)},
            "Physical Activity": {"direction": "-", "shape": lambda v: _g_pa(v >= 0.5)},
            "Comorbidities": {"direction": "piecewise", "breakpoint": 4.0, "shape": _g_comorb},
            "Therapy": {"direction": "+", "shape": _g_therapy},
            "Vegetables": {"direction": "-", "gap_grams": 30.0, "shape": _g_veg},
            "Proteins": {"direction": "-", "shape": _g_prot},
            "Cereals": {"direction": "piecewise", "breakpoint": _CER_CENTER, "shape": _g_cereal},
            "Fruit": {"direction": "-", "shape": _g_fruit},
        }
    )


def nearest_psd(matrix: np.ndarray):
    """Eigenvalue-clipped correlation repair; returns (matrix, repaired)."""
    vals, vecs = np.linalg.eigh(matrix)
    if vals.min() >= 1e-9:
        return matrix, False
    vals = np.clip(vals, 1e-6, None)
    repaired = vecs @ np.diag(vals) @ vecs.T
    scale = np.sqrt(np.diag(repaired))
    repaired = repaired / np.outer(scale, scale)
    np.fill_diagonal(repaired, 1.0)
    return repaired, True


def _color(z: np.ndarray, corr: np.ndarray, weights=None) -> np.ndarray:
    """Recolor standard normals so their (optionally weighted) sample
    correlation matches `corr` exactly.

    Empirical whitening removes the finite-sample correlation noise so the
    realized body statistics hit the targets regardless of cohort size;
    small draws fall back to plain Cholesky coloring.
    """
    chol = np.linalg.cholesky(corr)
    n = z.shape[0]
    if n <= 8:
        return z @ chol.T
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    wsum = w.sum()
    zc = z - (w[:, None] * z).sum(axis=0) / wsum
    cov = (zc * w[:, None]).T @ zc / wsum
    white = zc @ np.linalg.inv(np.linalg.cholesky(cov)).T
    return white @ chol.T


def _colored_normals(rng, n: int, corr: np.ndarray) -> np.ndarray:
    return _color(rng.standard_normal((n, 4)), corr)


def _menu_for(date: dt.date):
    i = date.toordinal()
    lunch = (
        _CEREAL_IDS[i % 3], _PROTEIN_IDS[i % 3], _VEG_IDS[i % 2], _FRUIT_IDS[i % 3],
    )
    dinner = (
        _CEREAL_IDS[(i + 1) % 3], _PROTEIN_IDS[(i + 2) % 3],
        _VEG_IDS[(i + 1) % 2], _FRUIT_IDS[(i + 2) % 3],
    )
    return lunch, dinner


def _build_periods(spec: SyntheticCohortSpec) -> tuple:
    periods = []
    start = spec.first_period_start
    for i, weeks in enumerate(spec.period_weeks):
        end = start + dt.timedelta(weeks=weeks) - dt.timedelta(days=1)
        periods.append(TrialPeriod(f"T{i + 1}", start, end))
        start = end + dt.timedelta(days=1 + 7 * spec.period_gap_weeks)
        start = monday_of(start + dt.timedelta(days=6))
    return tuple(periods)


def _subject_profile(sid, rng, spec) -> SubjectProfile:
    sex = "F" if rng.uniform() < spec.female_fraction else "M"
    age = int(np.clip(round(rng.normal(83, 6)), 65, 97))
    pa = bool(rng.uniform() < 0.45)
    mix = rng.uniform()
    if mix < 0.45:
        mmse = np.clip(rng.normal(26.5, 1.8), 24, 30)
    elif mix < 0.85:
        mmse = np.clip(rng.normal(21.0, 1.7), 18, 23.5)
    else:
        mmse = np.clip(rng.normal(15.0, 2.0), 8, 17.5)
    mmse = round(mmse * 2) / 2
    comorb = int(2 + rng.binomial(5, 0.4))
    therapy = int(min(comorb + rng.poisson(1.5), 12))
    return SubjectProfile(
        subject_id=sid, sex=sex, age=age, physical_activity=pa,
        mmse=float(mmse), comorbidities=comorb, therapies=therapy,
    )


def _subject_score(profile, body, intakes) -> float:
    return float(
        _g_bmi(body["bmi"])
        + _g_fmi(body["fmi"])
        + _g_water(body["body_water_pct"])
        + _g_mmse(profile.mmse)
        + _g_age(profile.age)
        + _g_sex(profile.sex == "F")
        + _g_pa(profile.physical_activity)
        + _g_comorb(profile.comorbidities)
        + _g_therapy(profile.therapies)
        + _g_veg(intakes["vegetables"])
        + _g_prot(intakes["animal_proteins"])
        + _g_cereal(intakes["cereals"])
        + _g_fruit(intakes["fruit"])
        + _g_interaction(body["bmi"], intakes["vegetables"])
    )


def generate_cohort(spec: SyntheticCohortSpec | None = None, seed: int = 0) -> Cohort:
    cohort, _truth = generate_cohort_with_truth(spec, seed)
    return cohort


def generate_cohort_with_truth(
    spec: SyntheticCohortSpec | None = None, seed: int = 0
):
    spec = spec or SyntheticCohortSpec()
    periods = _build_periods(spec)
    period_by_id = {p.period_id: p for p in periods}

    corr, repaired = nearest_psd(spec.correlation_matrix())
    if repaired:
        warnings.warn("correlation targets were not PSD; repaired by eigenvalue clipping")

    subject_ids = [f"S{i + 1:02d}" for i in range(spec.n_subjects)]
    raw_z = rng_for(seed, "bodybase").standard_normal((spec.n_subjects, 4))
    profiles = {}
    participation = {}
    body_covered = set()
    intake_means = {}
    fractions = {}

    for sid in subject_ids:
        rng = rng_for(seed, "subject", sid)
        profiles[sid] = _subject_profile(sid, rng, spec)
        joined = [
            p.period_id
            for p, frac in zip(periods, spec.period_participation)
            if rng.uniform() < frac
        ]
        if not joined:
            joined = [periods[-1].period_id]
        participation[sid] = joined
        if rng.uniform() < spec.body_coverage:
            body_covered.add(sid)
        fractions[sid] = {
            m: float(np.clip(rng.normal(_INTAKE_MU[m], _INTAKE_SD[m]), 0.08, 0.97))
            for m in _INTAKE_MU
        }
        intake_means[sid] = {
            m: fractions[sid][m] * _DAILY_AVAILABLE[m] for m in _INTAKE_MU
        }

    # months each subject is observed in (keyed by the week Mondays)
    subject_months = {}
    for sid in subject_ids:
        months = set()
        for pid in participation[sid]:
            p = period_by_id[pid]
            for w in range(p.n_weeks):
                monday = p.start_date + dt.timedelta(weeks=w)
                months.add((monday.year, monday.month))
        subject_months[sid] = sorted(months)

    # measurement slots come before the values so the covered subjects'
    # latents can be whitened with their slot counts as weights, making the
    # pooled sample correlation of the emitted measurements hit the targets
    slots = []
    for sid in sorted(body_covered):
        rng = rng_for(seed, "body", sid)
        for pid in participation[sid]:
            p = period_by_id[pid]
            for w in range(p.n_weeks):
                if rng.uniform() < spec.body_missing_rate:
                    continue
                n_meas = 1 + int(rng.uniform() < 0.4)
                for k in range(n_meas):
                    slots.append((sid, pid, w, k))
    slot_counts = {}
    for sid, _, _, _ in slots:
        slot_counts[sid] = slot_counts.get(sid, 0) + 1

    base_z = _color(raw_z, corr)
    covered_order = sorted(body_covered)
    if covered_order:
        rows = [subject_ids.index(sid) for sid in covered_order]
        weights = np.array([slot_counts.get(sid, 0) + 1e-9 for sid in covered_order])
        base_z[rows] = _color(raw_z[rows], corr, weights=weights)
    base_z_by_sid = {sid: base_z[i] for i, sid in enumerate(subject_ids)}

    # the subject's physiological state drifts month to month; weekly scale
    # measurements center on the month state, so body observation carries
    # genuine information about that month's risk
    month_keys = [
        (sid, key) for sid in subject_ids for key in subject_months[sid]
    ]
    month_eta = _colored_normals(rng_for(seed, "bodymonth"), len(month_keys), corr)
    share = spec.month_state_share
    month_z = {}
    for (sid, key), eta in zip(month_keys, month_eta):
        month_z[(sid, key)] = (
            np.sqrt(1.0 - share**2) * base_z_by_sid[sid] + share * eta
        )

    def margins_from_z(z):
        return {
            f: float(np.clip(_BODY_CENTER[f] + _BODY_SCALE[f] * z[k], *_BODY_CLIP[f]))
            for k, f in enumerate(_BODY_FIELDS)
        }

    body_base = {sid: margins_from_z(base_z_by_sid[sid]) for sid in subject_ids}

    def month_score(sid, key):
        body = margins_from_z(month_z[(sid, key)])
        return _subject_score(profiles[sid], body, intake_means[sid])

    scores = {
        sid: _subject_score(profiles[sid], body_base[sid], intake_means[sid])
        for sid in subject_ids
    }

    # near-threshold subjects: risky-looking but always assessed Normal
    k_nt = int(round(spec.near_threshold_fraction * spec.n_subjects))
    thr0 = float(np.quantile(list(scores.values()), 1.0 - spec.risk_prior))
    above = sorted(
        (s for s in subject_ids if scores[s] >= thr0), key=lambda s: scores[s]
    )
    near_threshold = above[:k_nt]

    # calibrate the logistic threshold so the expected risk share hits the prior
    month_score_by_key = {}
    for sid in subject_ids:
        rng = rng_for(seed, "months", sid)
        for key in subject_months[sid]:
            month_score_by_key[(sid, key)] = month_score(sid, key) + rng.normal(
                0.0, spec.month_noise
            )
    free_scores = np.array(
        [v for (sid, _), v in month_score_by_key.items() if sid not in near_threshold]
    )
    total_months = len(month_score_by_key)

    def expected_risk(thr):
        return float(
            _sigmoid(spec.label_steepness * (free_scores - thr)).sum() / total_months
        )

    lo, hi = free_scores.min() - 10.0, free_scores.max() + 10.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if expected_risk(mid) > spec.risk_prior:
            lo = mid
        else:
            hi = mid
    threshold = 0.5 * (lo + hi)

    # assessments
    assessments = []
    for sid in subject_ids:
        rng = rng_for(seed, "labels", sid)
        for (year, month) in subject_months[sid]:
            if sid in near_threshold:
                mna = float(rng.choice([24.0, 24.5, 25.0]))
            else:
                p_risk = float(
                    _sigmoid(
                        spec.label_steepness
                        * (month_score_by_key[(sid, (year, month))] - threshold)
                    )
                )
                if rng.uniform() < p_risk:
                    mna = float(rng.choice(np.arange(17.0, 24.0, 0.5)))
                else:
                    mna = float(rng.choice(np.arange(24.0, 30.5, 0.5)))
            next_month = dt.date(year + month // 12, month % 12 + 1, 1)
            assessments.append(
                MonthlyAssessment(
                    subject_id=sid,
                    month_end_date=next_month - dt.timedelta(days=1),
                    mna_score=mna,
                )
            )

    # meal surveys
    meals = []
    for sid in subject_ids:
        rng = rng_for(seed, "meals", sid)
        mu = fractions[sid]
        for pid in participation[sid]:
            p = period_by_id[pid]
            for w in range(p.n_weeks):
                monday = p.start_date + dt.timedelta(weeks=w)
                poor_week = rng.uniform() < spec.poor_week_rate
                day_miss = 0.55 if poor_week else 0.02
                for dday in range(7):
                    date = monday + dt.timedelta(days=dday)
                    if rng.uniform() < day_miss:
                        continue
                    appetite = rng.normal(0.0, 0.05)
                    lunch_menu, dinner_menu = _menu_for(date)
                    skip_lunch = rng.uniform() < 0.015
                    for meal, menu in (("lunch", lunch_menu), ("dinner", dinner_menu)):
                        if meal == "lunch" and skip_lunch:
                            continue
                        items = []
                        for fid in menu:
                            macro = next(m for f2, _, m, _ in _FOODS if f2 == fid)
                            p_item = float(np.clip(mu[macro] + appetite, 0.02, 0.98))
                            # stochastic rounding to the quarter scale keeps
                            # the mean at p_item with minimal variance
                            quarters = p_item * 4.0
                            low = np.floor(quarters)
                            frac = (low + (rng.uniform() < quarters - low)) / 4.0
                            items.append((fid, float(frac)))
                        meals.append(
                            MealRecord(subject_id=sid, date=date, meal=meal, items=tuple(items))
                        )

    # body samples from the pre-computed slots; weekly deviations are
    # colored jointly so the pooled sample correlation holds
    rho_week = 0.15
    eps = _colored_normals(rng_for(seed, "bodynoise"), len(slots), corr) if slots else np.zeros((0, 4))
    body_samples = []
    for (sid, pid, w, k), e in zip(slots, eps):
        p = period_by_id[pid]
        monday = p.start_date + dt.timedelta(weeks=w)
        mkey = (sid, (monday.year, monday.month))
        zw = np.sqrt(1 - rho_week**2) * month_z[mkey] + rho_week * e
        values = margins_from_z(zw)
        ts = dt.datetime.combine(
            monday + dt.timedelta(days=2 + 3 * k), dt.time(8, 30 if k else 0)
        )
        body_samples.append(
            BodyCompositionSample(
                subject_id=sid, timestamp=ts,
                fmi=values["fmi"], bmi=values["bmi"],
                bmr=values["bmr"], body_water_pct=values["body_water_pct"],
            )
        )

    foods = {
        fid: FoodCompositionEntry(
            food_id=fid, nominal_portion_g=portion, composition={macro: frac}
        )
        for fid, portion, macro, frac in _FOODS
    }

    cohort = Cohort(
        profiles=profiles,
        meals=tuple(meals),
        foods=foods,
        body_samples=tuple(body_samples),
        assessments=tuple(assessments),
        periods=periods,
    )
    truth = GeneratorTruth(
        subject_scores=scores,
        intake_means=intake_means,
        near_threshold_subjects=list(near_threshold),
        label_threshold=float(threshold),
        correlation_target=corr,
        repaired=repaired,
    )
    return cohort, truth
