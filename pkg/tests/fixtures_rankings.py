"""Frozen reference rankings for the two gradient-boosting models, one set
per dataset variant, with the expected agreement cells.

Expected cells are (exact, non_exact) per (model, method pair, K);
non_exact is None at K=1. They were derived by hand from the rankings with
the set/position definitions and are locked as integers.
"""

BODYFUL_RANKINGS = {
    "XGBoost": {
        "SHAP": ["BMI", "Physical Activity", "Age", "MMSE", "Sex"],
        "LIME": ["BMI", "Age", "MMSE", "Comorbidities", "BMR"],
        "MDI": ["Physical Activity", "Sex", "BMI", "MMSE", "Age"],
        "MDA": ["BMI", "Physical Activity", "Age", "MMSE", "FMI"],
    },
    "LightGBM": {
        "SHAP": ["BMI", "Physical Activity", "Sex", "Age", "MMSE"],
        "LIME": ["Physical Activity", "BMI", "Comorbidities", "Sex", "FMI"],
        "MDI": ["BMI", "FMI", "Age", "BMR", "MMSE"],
        "MDA": ["BMI", "Age", "Physical Activity", "MMSE", "Cereals"],
    },
}

NUTRITIONAL_RANKINGS = {
    "XGBoost": {
        "SHAP": ["MMSE", "Sex", "Age", "Comorbidities", "Vegetables"],
        "LIME": ["Sex", "Comorbidities", "Physical Activity", "MMSE", "Age"],
        "MDI": ["Sex", "MMSE", "Physical Activity", "Comorbidities", "Therapy"],
        "MDA": ["MMSE", "Age", "Sex", "Comorbidities", "Vegetables"],
    },
    "LightGBM": {
        "SHAP": ["MMSE", "Sex", "Comorbidities", "Age", "Vegetables"],
        "LIME": ["Comorbidities", "MMSE", "Age", "Vegetables", "Therapy"],
        "MDI": ["MMSE", "Age", "Vegetables", "Sex", "Therapy"],
        "MDA": ["MMSE", "Age", "Comorbidities", "Sex", "Vegetables"],
    },
}

# (model, method_a, method_b, K) -> (exact, non_exact)
BODYFUL_EXPECTED = {
    ("XGBoost", "SHAP", "LIME", 1): (1, None),
    ("XGBoost", "SHAP", "LIME", 3): (1, 2),
    ("XGBoost", "SHAP", "LIME", 5): (1, 3),
    ("XGBoost", "SHAP", "MDI", 1): (0, None),
    ("XGBoost", "SHAP", "MDI", 3): (0, 2),
    ("XGBoost", "SHAP", "MDI", 5): (1, 5),
    ("XGBoost", "SHAP", "MDA", 1): (1, None),
    ("XGBoost", "SHAP", "MDA", 3): (3, 3),
    ("XGBoost", "SHAP", "MDA", 5): (4, 4),
    ("XGBoost", "LIME", "MDI", 1): (0, None),
    ("XGBoost", "LIME", "MDI", 3): (0, 1),
    ("XGBoost", "LIME", "MDI", 5): (0, 3),
    ("XGBoost", "LIME", "MDA", 1): (1, None),
    ("XGBoost", "LIME", "MDA", 3): (1, 2),
    ("XGBoost", "LIME", "MDA", 5): (1, 3),
    ("XGBoost", "MDI", "MDA", 1): (0, None),
    ("XGBoost", "MDI", "MDA", 3): (0, 2),
    ("XGBoost", "MDI", "MDA", 5): (1, 4),
    ("LightGBM", "SHAP", "LIME", 1): (0, None),
    ("LightGBM", "SHAP", "LIME", 3): (0, 2),
    ("LightGBM", "SHAP", "LIME", 5): (0, 3),
    ("LightGBM", "SHAP", "MDI", 1): (1, None),
    ("LightGBM", "SHAP", "MDI", 3): (1, 1),
    ("LightGBM", "SHAP", "MDI", 5): (2, 3),
    ("LightGBM", "SHAP", "MDA", 1): (1, None),
    ("LightGBM", "SHAP", "MDA", 3): (1, 2),
    ("LightGBM", "SHAP", "MDA", 5): (1, 4),
    ("LightGBM", "LIME", "MDI", 1): (0, None),
    ("LightGBM", "LIME", "MDI", 3): (0, 1),
    ("LightGBM", "LIME", "MDI", 5): (0, 2),
    ("LightGBM", "LIME", "MDA", 1): (0, None),
    ("LightGBM", "LIME", "MDA", 3): (0, 2),
    ("LightGBM", "LIME", "MDA", 5): (0, 2),
    ("LightGBM", "MDI", "MDA", 1): (1, None),
    ("LightGBM", "MDI", "MDA", 3): (1, 2),
    ("LightGBM", "MDI", "MDA", 5): (1, 3),
}

NUTRITIONAL_EXPECTED = {
    ("XGBoost", "SHAP", "LIME", 1): (0, None),
    ("XGBoost", "SHAP", "LIME", 3): (0, 1),
    ("XGBoost", "SHAP", "LIME", 5): (0, 4),
    ("XGBoost", "SHAP", "MDI", 1): (0, None),
    ("XGBoost", "SHAP", "MDI", 3): (0, 2),
    ("XGBoost", "SHAP", "MDI", 5): (1, 3),
    ("XGBoost", "SHAP", "MDA", 1): (1, None),
    ("XGBoost", "SHAP", "MDA", 3): (1, 3),
    ("XGBoost", "SHAP", "MDA", 5): (3, 5),
    ("XGBoost", "LIME", "MDI", 1): (1, None),
    ("XGBoost", "LIME", "MDI", 3): (2, 2),
    ("XGBoost", "LIME", "MDI", 5): (2, 4),
    ("XGBoost", "LIME", "MDA", 1): (0, None),
    ("XGBoost", "LIME", "MDA", 3): (0, 1),
    ("XGBoost", "LIME", "MDA", 5): (0, 4),
    ("XGBoost", "MDI", "MDA", 1): (0, None),
    ("XGBoost", "MDI", "MDA", 3): (0, 2),
    ("XGBoost", "MDI", "MDA", 5): (1, 3),
    ("LightGBM", "SHAP", "LIME", 1): (0, None),
    ("LightGBM", "SHAP", "LIME", 3): (0, 2),
    ("LightGBM", "SHAP", "LIME", 5): (0, 4),
    ("LightGBM", "SHAP", "MDI", 1): (1, None),
    ("LightGBM", "SHAP", "MDI", 3): (1, 1),
    ("LightGBM", "SHAP", "MDI", 5): (1, 4),
    ("LightGBM", "SHAP", "MDA", 1): (1, None),
    ("LightGBM", "SHAP", "MDA", 3): (2, 2),
    ("LightGBM", "SHAP", "MDA", 5): (3, 5),
    ("LightGBM", "LIME", "MDI", 1): (0, None),
    ("LightGBM", "LIME", "MDI", 3): (0, 2),
    ("LightGBM", "LIME", "MDI", 5): (1, 4),
    ("LightGBM", "LIME", "MDA", 1): (0, None),
    ("LightGBM", "LIME", "MDA", 3): (0, 3),
    ("LightGBM", "LIME", "MDA", 5): (0, 4),
    ("LightGBM", "MDI", "MDA", 1): (1, None),
    ("LightGBM", "MDI", "MDA", 3): (2, 2),
    ("LightGBM", "MDI", "MDA", 5): (3, 4),
}
