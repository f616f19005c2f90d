"""Longitudinal exam ingestion: flowchart exclusions, birth cohorts,
subject-record derivation, and the status census.

Input is one CSV row per subject-exam. Ages may be given directly
(``*_age`` columns) or as ISO dates (``*_date`` columns plus
``birth_date``), in which case ages are fractional years since birth.
Schema problems are collected into a rejects list, never dropped silently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .exceptions import ConfigError, RecordConflictError
from .records import SubjectRecord

CORE_COLUMNS = {
    "subject_id", "birth_year", "birth_date", "sex", "education",
    "exam_age", "exam_date", "cognitive_status",
    "death_age", "death_date", "last_contact_age", "last_contact_date",
    "onset_age", "onset_date", "death_review",
}

STATUSES = {"normal", "impaired-inconclusive", "dementia-diagnosed", ""}

EXCLUSION_STEPS = (
    "no_exam1_linkage",       # birth year missing / underivable
    "born_before_first_cohort",
    "born_after_last_cohort",
    "died_before_first_assessment_year",
    "died_before_min_age",
    "no_dementia_information",
    "dementia_before_min_age",
    "no_assessment_after_min_age",
)


@dataclass(frozen=True)
class RulesConfig:
    """Cohort bounds and inclusion rules for the flowchart."""

    cohorts: tuple = ((1915, 1924), (1925, 1934), (1935, 1944))
    first_assessment_year: int = 1975
    min_age: float = 60.0
    inconclusive_window_years: float = 4.0
    onset_handling: str = "exact"  # "exact" uses a supplied onset age; "interval" never does

    def __post_init__(self):
        cohorts = tuple(tuple(int(y) for y in c) for c in self.cohorts)
        object.__setattr__(self, "cohorts", cohorts)
        for lo, hi in cohorts:
            if lo > hi:
                raise ConfigError(f"cohort bounds reversed: {lo}-{hi}")
        for (_, hi), (lo2, _) in zip(cohorts, cohorts[1:]):
            if lo2 <= hi:
                raise ConfigError("cohorts must be disjoint and ordered")
        if self.onset_handling not in ("exact", "interval"):
            raise ConfigError(f"unknown onset_handling {self.onset_handling!r}")

    def cohort_label(self, index: int) -> str:
        lo, hi = self.cohorts[index]
        return f"{lo}-{hi}"

    @classmethod
    def from_json(cls, path) -> "RulesConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as err:
                raise ConfigError(
                    f"malformed JSON in {path} at line {err.lineno}, column {err.colno}: {err.msg}"
                ) from err
        try:
            return cls(**{k: tuple(map(tuple, v)) if k == "cohorts" else v
                          for k, v in data.items()})
        except TypeError as err:
            raise ConfigError(f"invalid rules config: {err}") from err


def assign_birth_cohort(birth_year, rules: RulesConfig | None = None):
    """Cohort index for a birth year, or None when outside every cohort."""
    rules = rules or RulesConfig()
    if birth_year is None or (isinstance(birth_year, float) and math.isnan(birth_year)):
        return None
    year = int(birth_year)
    for i, (lo, hi) in enumerate(rules.cohorts):
        if lo <= year <= hi:
            return i
    return None


@dataclass
class FlowchartReport:
    """Ordered exclusion counts plus per-cohort inclusion counts."""

    initial_n: int
    steps: dict
    cohort_sizes: dict

    def check_conservation(self):
        total = sum(self.steps.values()) + sum(self.cohort_sizes.values())
        if total != self.initial_n:
            raise AssertionError(
                f"flowchart does not conserve subjects: {self.initial_n} in, "
                f"{total} accounted for"
            )

    def to_frame(self) -> pd.DataFrame:
        rows = [{"step": "subjects_in", "count": self.initial_n}]
        rows += [{"step": f"excluded:{name}", "count": c} for name, c in self.steps.items()]
        rows += [{"step": f"included:cohort:{label}", "count": c}
                 for label, c in self.cohort_sizes.items()]
        return pd.DataFrame(rows)

    def to_text(self) -> str:
        lines = [f"Subjects in input: {self.initial_n}"]
        for name, count in self.steps.items():
            lines.append(f"  excluded ({name.replace('_', ' ')}): {count}")
        for label, count in self.cohort_sizes.items():
            lines.append(f"  included in cohort {label}: {count}")
        lines.append(f"Analysis sample: {sum(self.cohort_sizes.values())}")
        return "\n".join(lines)


def _to_float(value):
    if value is None:
        return None
    s = str(value).strip()
    if s == "" or s.lower() == "nan":
        return None
    return float(s)


def _dichotomize_education(value):
    """Low (0) up to 12 school years / high-school; high (1) for tertiary."""
    if value is None:
        return None
    s = str(value).strip().lower()
    if s in ("", "nan"):
        return None
    try:
        return 0.0 if float(s) <= 12.0 else 1.0
    except ValueError:
        pass
    if s in ("low", "highschool", "high-school", "high school", "primary", "secondary"):
        return 0.0
    if s in ("high", "college", "university", "tertiary", "degree", "academic"):
        return 1.0
    raise ValueError(f"unrecognized education value {value!r}")


def _encode_sex(value):
    if value is None:
        return None
    s = str(value).strip().lower()
    if s in ("", "nan"):
        return None
    if s in ("0", "m", "male", "man"):
        return 0.0
    if s in ("1", "f", "female", "woman"):
        return 1.0
    raise ValueError(f"unrecognized sex value {value!r}")


def load_exam_rows(path) -> pd.DataFrame:
    """Read an exam CSV, converting date columns to fractional ages."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if "subject_id" not in df.columns:
        raise ConfigError(f"{path}: missing required column 'subject_id'")
    date_mode = "exam_date" in df.columns
    if not date_mode and "exam_age" not in df.columns:
        raise ConfigError(f"{path}: need either 'exam_age' or 'exam_date' columns")
    if date_mode:
        if "birth_date" not in df.columns:
            raise ConfigError(f"{path}: date columns require 'birth_date'")
        birth = pd.to_datetime(df["birth_date"], errors="coerce")
        for stem in ("exam", "death", "last_contact", "onset"):
            col = f"{stem}_date"
            if col in df.columns:
                when = pd.to_datetime(df[col].replace("", pd.NaT), errors="coerce")
                age = (when - birth).dt.days / 365.25
                df[f"{stem}_age"] = age.map(lambda v: "" if pd.isna(v) else f"{v:.6f}")
        if "birth_year" not in df.columns:
            df["birth_year"] = birth.dt.year.map(lambda v: "" if pd.isna(v) else str(int(v)))
    return df


@dataclass
class SubjectBundle:
    """Parsed per-subject fields shared by the flowchart and derivation."""

    subject_id: str
    birth_year: int | None
    assessments: list          # (age, status) sorted
    death_age: float | None
    last_contact_age: float | None
    onset_age: float | None
    death_review: str
    covariates: dict
    row_ids: list


def _collect_subjects(df: pd.DataFrame, rejects: list) -> list[SubjectBundle]:
    extra_cols = [c for c in df.columns if c not in CORE_COLUMNS]
    bundles = []
    for sid, group in df.groupby("subject_id", sort=True):
        rows = group.to_dict(orient="index")
        row_ids = list(rows.keys())

        def first_value(col):
            if col not in df.columns:
                return None
            for rid in row_ids:
                v = str(rows[rid].get(col, "")).strip()
                if v not in ("", "nan"):
                    return v
            return None

        try:
            birth_raw = first_value("birth_year")
            birth_year = int(float(birth_raw)) if birth_raw is not None else None
            death_age = _to_float(first_value("death_age"))
            last_contact = _to_float(first_value("last_contact_age"))
            onset_age = _to_float(first_value("onset_age"))
            review = (first_value("death_review") or "").strip().lower()
            if review not in ("", "dementia", "no-dementia"):
                raise ValueError(f"unrecognized death_review {review!r}")
            covariates = {}
            sex = _encode_sex(first_value("sex"))
            if sex is not None:
                covariates["sex"] = sex
            edu = _dichotomize_education(first_value("education"))
            if edu is not None:
                covariates["education"] = edu
            for col in extra_cols:
                val = _to_float(first_value(col))
                if val is not None:
                    covariates[col] = val
            assessments = []
            for rid in row_ids:
                age = _to_float(rows[rid].get("exam_age"))
                status = str(rows[rid].get("cognitive_status", "")).strip().lower()
                if status not in STATUSES:
                    raise ValueError(f"unrecognized cognitive_status {status!r} (row {rid})")
                if age is None:
                    if status:
                        raise ValueError(f"assessment without an exam age (row {rid})")
                    continue
                assessments.append((age, status))
            assessments.sort(key=lambda p: p[0])
            for age, _ in assessments:
                if death_age is not None and age > death_age + 1e-9:
                    raise ValueError(f"exam at age {age} after death at {death_age}")
                if last_contact is not None and age > last_contact + 1e-9:
                    raise ValueError(f"exam at age {age} after last contact {last_contact}")
        except (ValueError, TypeError) as err:
            rejects.append({"subject_id": sid, "rows": row_ids, "reason": str(err)})
            continue
        bundles.append(SubjectBundle(str(sid), birth_year, assessments, death_age,
                                     last_contact, onset_age, review, covariates, row_ids))
    return bundles


def _first_diagnosis_age(bundle: SubjectBundle) -> float | None:
    """Earliest age the disease is known present: review onset, review at
    death, or the first diagnosed assessment."""
    candidates = [age for age, status in bundle.assessments if status == "dementia-diagnosed"]
    if bundle.onset_age is not None:
        candidates.append(bundle.onset_age)
    elif bundle.death_review == "dementia" and bundle.death_age is not None:
        candidates.append(bundle.death_age)
    return min(candidates) if candidates else None


def _exclusion_step(bundle: SubjectBundle, rules: RulesConfig) -> str | None:
    if bundle.birth_year is None:
        return "no_exam1_linkage"
    lo = rules.cohorts[0][0]
    hi = rules.cohorts[-1][1]
    if bundle.birth_year < lo:
        return "born_before_first_cohort"
    if bundle.birth_year > hi:
        return "born_after_last_cohort"
    if bundle.death_age is not None:
        death_year = bundle.birth_year + bundle.death_age
        if death_year < rules.first_assessment_year:
            return "died_before_first_assessment_year"
        if bundle.death_age < rules.min_age:
            return "died_before_min_age"
    if not any(status for _, status in bundle.assessments):
        return "no_dementia_information"
    diag = _first_diagnosis_age(bundle)
    if diag is not None and diag < rules.min_age:
        return "dementia_before_min_age"
    if not any(status == "normal" and age >= rules.min_age
               for age, status in bundle.assessments):
        return "no_assessment_after_min_age"
    return None


def apply_flowchart(df: pd.DataFrame, rules: RulesConfig | None = None,
                    rejects: list | None = None):
    """Run the fixed exclusion cascade; a subject leaves at its first
    matching step only. Returns (report, eligible bundles with cohort index).

    Conservation (input = exclusions + cohort sizes) is asserted on every run.
    """
    rules = rules or RulesConfig()
    own_rejects = rejects if rejects is not None else []
    bundles = _collect_subjects(df, own_rejects)
    steps = {name: 0 for name in EXCLUSION_STEPS}
    cohort_sizes = {rules.cohort_label(i): 0 for i in range(len(rules.cohorts))}
    eligible = []
    for bundle in bundles:
        step = _exclusion_step(bundle, rules)
        if step is not None:
            steps[step] += 1
            continue
        cohort = assign_birth_cohort(bundle.birth_year, rules)
        if cohort is None:  # unreachable given the bound checks above
            steps["no_exam1_linkage"] += 1
            continue
        cohort_sizes[rules.cohort_label(cohort)] += 1
        eligible.append((bundle, cohort))
    report = FlowchartReport(initial_n=len(bundles) + 0, steps=steps,
                             cohort_sizes=cohort_sizes)
    report.check_conservation()
    return report, eligible


def derive_subject_record(bundle: SubjectBundle, rules: RulesConfig | None = None
                          ) -> SubjectRecord:
    """Map one eligible subject's rows onto a SubjectRecord.

    Entry is the first disease-free assessment at or after the minimum
    age; L is the last disease-free assessment. A diagnosis becomes an
    exact onset when a review supplied the onset age (and the rules allow
    it), otherwise the interval (L, first-diagnosed-age].
    """
    rules = rules or RulesConfig()
    normals = [age for age, status in bundle.assessments if status == "normal"]
    entry_candidates = [a for a in normals if a >= rules.min_age]
    if not entry_candidates:
        raise RecordConflictError(bundle.subject_id,
                                  "no disease-free assessment after the minimum age",
                                  bundle.row_ids)
    entry = min(entry_candidates)
    diag = _first_diagnosis_age(bundle)
    healthy = [a for a in normals if diag is None or a < diag - 1e-9]
    if diag is not None and any(a > diag + 1e-9 for a in normals):
        raise RecordConflictError(
            bundle.subject_id,
            f"disease-free assessment after diagnosis at age {diag}",
            bundle.row_ids,
        )
    last_healthy = max(healthy) if healthy else entry
    last_assessed = max(age for age, status in bundle.assessments if status)

    onset_exact = None
    onset_interval = None
    if diag is not None:
        if bundle.onset_age is not None and rules.onset_handling == "exact":
            onset_exact = bundle.onset_age
        elif diag > last_healthy:
            onset_interval = (last_healthy, diag)
        else:  # diagnosis age at/below L can only come from a review onset
            onset_exact = diag
    conclusive = bundle.death_review == "no-dementia" and bundle.death_age is not None
    last_alive = bundle.last_contact_age
    if bundle.death_age is None and last_alive is None:
        last_alive = last_assessed
    return SubjectRecord(
        id=bundle.subject_id,
        entry_age=entry,
        last_healthy_age=last_healthy,
        onset_exact=onset_exact,
        onset_interval=onset_interval,
        death_age=bundle.death_age,
        last_alive_age=None if bundle.death_age is not None else last_alive,
        covariates=bundle.covariates,
        birth_year=bundle.birth_year,
        conclusive_at_death=conclusive,
        last_assessment_age=last_assessed,
    )


def build_records(df: pd.DataFrame, rules: RulesConfig | None = None):
    """Flowchart plus derivation: returns (report, records, cohort index
    per record, rejects). Derivation conflicts land in the rejects list."""
    rules = rules or RulesConfig()
    rejects: list = []
    report, eligible = apply_flowchart(df, rules, rejects)
    records, cohorts = [], []
    for bundle, cohort in eligible:
        try:
            rec = derive_subject_record(bundle, rules)
        except RecordConflictError as err:
            rejects.append({"subject_id": bundle.subject_id,
                            "rows": bundle.row_ids, "reason": str(err)})
            label = rules.cohort_label(cohort)
            report.cohort_sizes[label] -= 1
            report.steps.setdefault("derivation_conflict", 0)
            report.steps["derivation_conflict"] += 1
            continue
        records.append(rec)
        cohorts.append(cohort)
    report.check_conservation()
    return report, records, cohorts, rejects


# -- status census ------------------------------------------------------------

CENSUS_CATEGORIES = (
    "alive_dementia_free",
    "alive_dementia_inconclusive",
    "diagnosed_dementia",
    "death_without_dementia",
    "death_after_dementia_diagnosis",   # subgroup of diagnosed
    "death_dementia_inconclusive",
)


@dataclass
class CohortCensus:
    """Counts per cohort over the observation-status categories.

    The five non-subgroup categories partition each cohort; the
    death-after-diagnosis subgroup reports its share of diagnosed cases.
    """

    counts: dict          # label -> {category: count}
    cohort_sizes: dict    # label -> n

    def percentages(self) -> dict:
        out = {}
        for label, cats in self.counts.items():
            n = self.cohort_sizes[label]
            pct = {}
            for cat, count in cats.items():
                denom = cats["diagnosed_dementia"] if cat == "death_after_dementia_diagnosis" else n
                pct[cat] = round(100.0 * count / denom, 1) if denom else float("nan")
            out[label] = pct
        return out

    def check_partition(self):
        for label, cats in self.counts.items():
            main = sum(v for k, v in cats.items() if k != "death_after_dementia_diagnosis")
            if main != self.cohort_sizes[label]:
                raise AssertionError(
                    f"census categories do not partition cohort {label}: "
                    f"{main} vs {self.cohort_sizes[label]}"
                )

    def to_frame(self) -> pd.DataFrame:
        pct = self.percentages()
        rows = []
        labels = list(self.counts.keys())
        rows.append({"category": "n_subjects",
                     **{label: self.cohort_sizes[label] for label in labels}})
        for cat in CENSUS_CATEGORIES:
            row = {"category": cat}
            for label in labels:
                row[label] = self.counts[label][cat]
                row[f"{label}_pct"] = pct[label][cat]
            rows.append(row)
        return pd.DataFrame(rows)

    def to_text(self) -> str:
        pct = self.percentages()
        labels = list(self.counts.keys())
        width = max(len(c) for c in CENSUS_CATEGORIES) + 2
        lines = ["Status census (count, percent):"]
        header = " " * width + "  ".join(f"{label:>18}" for label in labels)
        lines.append(header)
        lines.append(" " * width + "  ".join(f"{self.cohort_sizes[l]:>18}" for l in labels))
        for cat in CENSUS_CATEGORIES:
            cells = []
            for label in labels:
                p = pct[label][cat]
                shown = "     -" if math.isnan(p) else f"{p:>5.1f}%"
                cells.append(f"{self.counts[label][cat]:>7} {shown}  ")
            note = "*" if cat == "death_after_dementia_diagnosis" else " "
            lines.append(f"{cat:<{width}}{note}" + "".join(cells))
        lines.append("* subgroup of diagnosed dementia cases; percent of diagnosed")
        return "\n".join(lines)


def status_census(records, cohorts, rules: RulesConfig | None = None,
                  horizon_year: int | None = None) -> CohortCensus:
    """Tabulate observation status per cohort at the study horizon.

    Alive undiagnosed subjects count as disease-free when their last
    assessment was disease-free and lies within the loss-to-follow-up
    window (default 4 years) of the horizon; otherwise they are
    inconclusive. Undiagnosed deaths split on the post-mortem review flag.
    """
    rules = rules or RulesConfig()
    if horizon_year is None:
        horizon_year = max(
            (rec.birth_year or 0) + math.ceil(rec.last_alive_age) for rec in records
        ) if records else 0
    labels = [rules.cohort_label(i) for i in range(len(rules.cohorts))]
    counts = {label: {cat: 0 for cat in CENSUS_CATEGORIES} for label in labels}
    sizes = {label: 0 for label in labels}
    for rec, cohort in zip(records, cohorts):
        label = labels[cohort]
        sizes[label] += 1
        cats = counts[label]
        if rec.diagnosed:
            cats["diagnosed_dementia"] += 1
            if rec.dead:
                cats["death_after_dementia_diagnosis"] += 1
        elif rec.dead:
            if rec.conclusive_at_death:
                cats["death_without_dementia"] += 1
            else:
                cats["death_dementia_inconclusive"] += 1
        else:
            assessed_year = (rec.birth_year or 0) + rec.last_assessment_age
            fresh = assessed_year >= horizon_year - rules.inconclusive_window_years
            healthy_last = rec.last_assessment_age <= rec.last_healthy_age + 1e-9
            if fresh and healthy_last:
                cats["alive_dementia_free"] += 1
            else:
                cats["alive_dementia_inconclusive"] += 1
    census = CohortCensus(counts=counts, cohort_sizes=sizes)
    census.check_partition()
    return census


def records_to_frame(records, cohorts=None, rules: RulesConfig | None = None) -> pd.DataFrame:
    """Flatten SubjectRecords for the records CSV artifact."""
    rules = rules or RulesConfig()
    rows = []
    for i, rec in enumerate(records):
        lo, hi = rec.onset_interval if rec.onset_interval else (None, None)
        row = {
            "subject_id": rec.id,
            "birth_year": rec.birth_year,
            "cohort": rules.cohort_label(cohorts[i]) if cohorts is not None else "",
            "entry_age": rec.entry_age,
            "last_healthy_age": rec.last_healthy_age,
            "onset_exact": rec.onset_exact,
            "onset_lo": lo,
            "onset_hi": hi,
            "death_age": rec.death_age,
            "last_alive_age": rec.last_alive_age,
            "last_assessment_age": rec.last_assessment_age,
            "conclusive_at_death": int(rec.conclusive_at_death),
        }
        row.update(rec.covariates)
        rows.append(row)
    return pd.DataFrame(rows)


RECORD_BASE_COLUMNS = {
    "subject_id", "birth_year", "cohort", "entry_age", "last_healthy_age",
    "onset_exact", "onset_lo", "onset_hi", "death_age", "last_alive_age",
    "last_assessment_age", "conclusive_at_death",
}


def records_from_frame(df: pd.DataFrame):
    """Inverse of :func:`records_to_frame`: (records, cohort labels)."""
    records, cohorts = [], []
    cov_cols = [c for c in df.columns if c not in RECORD_BASE_COLUMNS]
    for _, row in df.iterrows():
        def opt(name):
            v = row.get(name)
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else float(v)

        interval = None
        if opt("onset_lo") is not None and opt("onset_hi") is not None:
            interval = (opt("onset_lo"), opt("onset_hi"))
        covs = {}
        for c in cov_cols:
            v = row.get(c)
            if v is not None and not (isinstance(v, float) and math.isnan(v)):
                covs[c] = float(v)
        death = opt("death_age")
        records.append(SubjectRecord(
            id=str(row["subject_id"]),
            entry_age=float(row["entry_age"]),
            last_healthy_age=float(row["last_healthy_age"]),
            onset_exact=opt("onset_exact"),
            onset_interval=interval,
            death_age=death,
            last_alive_age=None if death is not None else opt("last_alive_age"),
            covariates=covs,
            birth_year=None if opt("birth_year") is None else int(opt("birth_year")),
            conclusive_at_death=bool(int(row.get("conclusive_at_death", 0))),
            last_assessment_age=opt("last_assessment_age"),
        ))
        cohorts.append(str(row.get("cohort", "")))
    return records, cohorts
