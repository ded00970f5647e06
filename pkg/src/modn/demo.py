"""Bundled demo dataset: 3,192 pediatric outpatient consultations with acute
febrile illness, in the same CSV + schema-descriptor wire format as the public
trial export.

The generator is deterministic and emulates the shape of the real data:
question groups follow the consultation flow (registration, history, vitals,
exam, labs), exam/lab questions are only asked when an earlier answer
triggers them (so records cover hundreds of distinct feature sets), and the
eight diagnosis labels are driven by plausible structured rules on the latent
patient state.  It is synthetic stand-in data, not the trial export; point
``load_dataset`` at the real CSV/schema to use the original.
"""

from __future__ import annotations

import numpy as np

from .data import Answer, ConsultationRecord, DatasetTable, FeatureSchema

DEMO_RECORD_COUNT = 3192

_SCHEMA = [
    # registration
    FeatureSchema("age_months", "continuous", "Age in months", (), 0),
    FeatureSchema("weight_kg", "continuous", "Weight (kg)", (), 0),
    FeatureSchema("sex", "categorical", "Sex", ("female", "male"), 0),
    FeatureSchema("muac_mm", "continuous", "Mid-upper arm circumference (mm)", (), 0),
    # history
    FeatureSchema("fever_days", "continuous", "Days of fever", (), 1),
    FeatureSchema("cough", "binary", "Cough present?", (), 1),
    FeatureSchema("diarrhoea", "binary", "Diarrhoea present?", (), 1),
    FeatureSchema("vomiting", "binary", "Vomiting?", (), 1),
    FeatureSchema("convulsions", "binary", "Convulsions during this illness?", (), 1),
    FeatureSchema("lethargy", "binary", "Unusually lethargic?", (), 1),
    FeatureSchema("poor_feeding", "binary", "Feeding poorly?", (), 1),
    FeatureSchema("ear_pain", "binary", "Ear pain?", (), 1),
    FeatureSchema("dysuria", "binary", "Pain when passing urine?", (), 1),
    # vitals
    FeatureSchema("temp_c", "continuous", "Axillary temperature (C)", (), 2),
    FeatureSchema("resp_rate", "continuous", "Respiratory rate (/min)", (), 2),
    FeatureSchema("heart_rate", "continuous", "Heart rate (/min)", (), 2),
    FeatureSchema("spo2", "continuous", "Oxygen saturation (%)", (), 2),
    # examination (asked when triggered)
    FeatureSchema("chest_indrawing", "binary", "Lower chest wall indrawing?", (), 3),
    FeatureSchema("skin_pinch", "categorical", "Skin pinch returns", ("normal", "slow", "very_slow"), 3),
    FeatureSchema("pallor", "categorical", "Palmar pallor", ("none", "mild", "severe"), 3),
    FeatureSchema("throat_red", "binary", "Red/inflamed throat?", (), 3),
    FeatureSchema("ear_discharge", "binary", "Ear discharge seen?", (), 3),
    # point-of-care tests (ordered when indicated)
    FeatureSchema("malaria_rdt", "binary", "Malaria rapid test positive?", (), 4),
    FeatureSchema("haemoglobin", "continuous", "Haemoglobin (g/dL)", (), 4),
    FeatureSchema("urine_dipstick", "binary", "Urine dipstick leukocytes?", (), 4),
]

DEMO_TARGETS = [
    "pneumonia", "malaria", "anaemia", "urti",
    "gastroenteritis", "uti", "ear_infection", "fws",
]


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + np.exp(-z))


def make_demo_table(n_records: int = DEMO_RECORD_COUNT, seed: int = 20140601) -> DatasetTable:
    """Deterministic demo table; labels derive from the latent patient, the
    observed answers follow the questionnaire's branching."""
    rng = np.random.default_rng(seed)
    records = []
    for n in range(n_records):
        p: dict[str, object] = {}
        p["age_months"] = float(np.round(rng.uniform(2, 59), 1))
        p["sex"] = "female" if rng.random() < 0.5 else "male"
        p["weight_kg"] = float(np.round(2.5 + 0.21 * p["age_months"] + rng.normal(0, 1.2), 2))
        p["muac_mm"] = float(np.round(rng.normal(145, 14), 0))
        p["fever_days"] = float(min(14, max(0, np.round(rng.gamma(2.0, 1.2), 0))))
        p["cough"] = int(rng.random() < 0.45)
        p["diarrhoea"] = int(rng.random() < 0.25)
        p["vomiting"] = int(rng.random() < 0.2)
        p["convulsions"] = int(rng.random() < 0.04)
        p["lethargy"] = int(rng.random() < 0.15)
        p["poor_feeding"] = int(rng.random() < 0.2)
        p["ear_pain"] = int(rng.random() < 0.12)
        p["dysuria"] = int(rng.random() < 0.08)
        p["temp_c"] = float(np.round(rng.normal(38.1, 0.9), 1))
        p["resp_rate"] = float(np.round(rng.normal(34 + 14 * p["cough"] * rng.random(), 7), 0))
        p["heart_rate"] = float(np.round(rng.normal(125, 18), 0))
        p["spo2"] = float(np.round(np.minimum(100, rng.normal(97.5, 2.0)), 0))
        p["chest_indrawing"] = int(p["cough"] and rng.random() < 0.3)
        dehydrated = (p["diarrhoea"] or p["vomiting"]) and rng.random() < 0.4
        p["skin_pinch"] = ("very_slow" if dehydrated and rng.random() < 0.3
                           else "slow" if dehydrated else "normal")
        pr = rng.random()
        p["pallor"] = "severe" if pr < 0.05 else "mild" if pr < 0.22 else "none"
        p["throat_red"] = int(rng.random() < (0.35 if p["cough"] else 0.12))
        p["ear_discharge"] = int(p["ear_pain"] and rng.random() < 0.45)
        p["malaria_rdt"] = int(rng.random() < _sigmoid(-1.6 + 0.45 * (p["temp_c"] - 38.0)
                                                       + 0.25 * p["fever_days"]))
        p["haemoglobin"] = float(np.round(
            11.2 - 1.6 * (p["pallor"] == "mild") - 3.8 * (p["pallor"] == "severe")
            - 0.8 * p["malaria_rdt"] + rng.normal(0, 1.1), 1))
        p["urine_dipstick"] = int(rng.random() < (0.5 if p["dysuria"] else 0.06))

        fast_breathing = p["resp_rate"] > (50 if p["age_months"] < 12 else 40)
        scores = {
            "pneumonia": -2.6 + 2.2 * p["cough"] + 1.9 * p["chest_indrawing"]
                         + 1.6 * fast_breathing + 0.8 * (p["spo2"] < 92)
                         + 0.4 * (p["temp_c"] - 38.0),
            "malaria": -2.8 + 3.6 * p["malaria_rdt"] + 0.7 * p["lethargy"]
                       + 0.35 * (p["temp_c"] - 38.0) + 0.15 * p["fever_days"],
            "anaemia": -2.4 + 1.4 * (p["pallor"] == "mild") + 3.0 * (p["pallor"] == "severe")
                       + 1.8 * (p["haemoglobin"] < 9.3) + 0.5 * (p["muac_mm"] < 125),
            "urti": -2.2 + 1.7 * p["throat_red"] + 1.1 * p["cough"]
                    - 1.3 * p["chest_indrawing"] + 0.3 * (p["temp_c"] - 38.0),
            "gastroenteritis": -2.5 + 2.6 * p["diarrhoea"] + 1.1 * p["vomiting"]
                               + 1.2 * (p["skin_pinch"] != "normal"),
            "uti": -3.0 + 2.6 * p["dysuria"] + 2.4 * p["urine_dipstick"]
                   + 0.3 * (p["temp_c"] - 38.0) - 0.4 * p["cough"],
            "ear_infection": -2.9 + 2.8 * p["ear_pain"] + 2.0 * p["ear_discharge"],
        }
        labels = {t: int(rng.random() < _sigmoid(3.0 * scores[t])) for t in scores}
        labels["fws"] = int(p["temp_c"] >= 38.0 and not any(labels.values())
                            and rng.random() < 0.85)

        asked: dict[str, bool] = {f.feature_id: True for f in _SCHEMA}
        asked["muac_mm"] = p["age_months"] >= 6
        asked["chest_indrawing"] = bool(p["cough"])
        asked["skin_pinch"] = bool(p["diarrhoea"] or p["vomiting"])
        asked["throat_red"] = bool(p["cough"] or p["ear_pain"] or rng.random() < 0.3)
        asked["ear_discharge"] = bool(p["ear_pain"])
        asked["malaria_rdt"] = p["temp_c"] >= 37.5 or p["fever_days"] >= 2
        asked["haemoglobin"] = p["pallor"] != "none" or p["poor_feeding"] == 1
        asked["urine_dipstick"] = bool(p["dysuria"] or (p["temp_c"] >= 39.0 and rng.random() < 0.5))
        # a few routine items occasionally skipped at busy clinics
        for optional in ("spo2", "heart_rate", "weight_kg"):
            if rng.random() < 0.08:
                asked[optional] = False

        answers = [
            Answer(f.feature_id, p[f.feature_id], f.simultaneity_group)
            for f in _SCHEMA if asked[f.feature_id]
        ]
        records.append(ConsultationRecord(f"c{n:05d}", answers, labels))

    return DatasetTable(
        list(_SCHEMA), list(DEMO_TARGETS), records,
        provenance={"generator": "demo-pediatric-consultations", "seed": seed},
    )
