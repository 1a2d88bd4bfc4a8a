"""Report-file parsing and aggregation into binomial cells.

Report-level rows (one vaccine exposure, categorical covariates, a set of
adverse-event terms) are validated, filtered, and grouped by unique
covariate-and-vaccine combination.  Each group becomes one binomial cell
per term: ``n`` trials (reports) and ``y`` events (reports mentioning the
term).  Aggregation is lossless for the per-report Bernoulli likelihood,
and reports whose terms were all dropped by the vocabulary filter still
count as all-zero trials -- removing them would bias every log odds ratio.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ReportSchema:
    """Column mapping for a delimited reports file (header row required)."""

    report_id: str
    vaccine: str
    ae_list: str
    vaccine_map: dict[str, int]
    covariates: tuple[str, ...] = ()
    delimiter: str = ","
    ae_delimiter: str = ";"


@dataclass(frozen=True)
class ReportRecord:
    report_id: str
    vaccine: int  # 0 = control arm, 1 = target arm
    covariates: tuple[str, ...]
    ae_terms: frozenset[str]


@dataclass
class ParsedReports:
    records: list[ReportRecord]
    diagnostics: list[str]
    covariate_names: tuple[str, ...]


def parse_reports(path, schema):
    """Parse a delimited reports file into validated records.

    Malformed rows (bad vaccine code, wrong field count, empty term list)
    are skipped and reported with their line numbers in ``diagnostics``;
    a missing declared column is a configuration error and raises.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            warnings.warn(f"{path}: empty reports file")
            return ParsedReports([], [f"{path}: empty file"], tuple(schema.covariates))
        header = [h.strip() for h in header]
        positions = {}
        for name in (schema.report_id, schema.vaccine, schema.ae_list, *schema.covariates):
            if name not in header:
                raise ValueError(f"{path}: declared column {name!r} missing from header")
            positions[name] = header.index(name)

        records = []
        diagnostics = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                diagnostics.append(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
                continue
            code = row[positions[schema.vaccine]].strip()
            if code not in schema.vaccine_map:
                diagnostics.append(f"line {lineno}: unknown vaccine code {code!r}")
                continue
            terms = frozenset(
                t.strip()
                for t in row[positions[schema.ae_list]].split(schema.ae_delimiter)
                if t.strip()
            )
            if not terms:
                diagnostics.append(f"line {lineno}: no adverse-event terms")
                continue
            records.append(
                ReportRecord(
                    report_id=row[positions[schema.report_id]].strip(),
                    vaccine=int(schema.vaccine_map[code]),
                    covariates=tuple(row[positions[c]].strip() for c in schema.covariates),
                    ae_terms=terms,
                )
            )
    if not records:
        warnings.warn(f"{path}: no usable report rows")
    return ParsedReports(records, diagnostics, tuple(schema.covariates))


def parse_ontology(path, delimiter=","):
    """Parse a two-column (term id, group id) file into term -> group ids.

    Duplicate pairs are dropped silently; a term may appear under several
    groups.  An empty file yields an empty mapping (every term isolated)
    with a warning.
    """
    mapping: dict[str, set[str]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise ValueError(f"{path}: line {lineno}: expected two columns")
            term, group = row[0].strip(), row[1].strip()
            mapping.setdefault(term, set()).add(group)
    if not mapping:
        warnings.warn(f"{path}: empty ontology mapping; all terms will be isolated")
    return mapping


def bin_age(value, breaks):
    """Index of the half-open bin [breaks[i-1], breaks[i]) holding ``value``."""
    age = float(value)
    idx = 0
    for b in breaks:
        if age >= b:
            idx += 1
    return idx


@dataclass
class StratifiedCells:
    """Binomial sufficient statistics by covariate-and-vaccine stratum."""

    X: np.ndarray  # (S, 1+p) design rows: intercept + dummy-coded covariates
    V: np.ndarray  # (S,) vaccine arm, 0/1
    n: np.ndarray  # (S,) trials per stratum
    y: np.ndarray  # (S, J) events per stratum and term
    ae_vocabulary: list[str]
    strata_labels: list[tuple]  # (covariate levels ..., vaccine)
    design_columns: list[str]
    counts: dict = field(default_factory=dict)

    @property
    def n_strata(self):
        return self.X.shape[0]

    @property
    def n_terms(self):
        return len(self.ae_vocabulary)

    def validate(self):
        if np.any(self.y < 0) or np.any(self.y > self.n[:, None]):
            raise ValueError("event counts outside [0, n_s]")
        if len(set(self.strata_labels)) != len(self.strata_labels):
            raise ValueError("duplicate strata")


def filter_and_stratify(
    records,
    min_ae_count=0,
    age_breaks=None,
    age_index=None,
    exclusions=(),
    reference_levels=None,
    covariate_names=None,
):
    """Filter records and aggregate them into :class:`StratifiedCells`.

    Parameters
    ----------
    records : list of ReportRecord
    min_ae_count : int
        Drop terms mentioned on fewer than this many retained reports.
    age_breaks, age_index :
        When given, covariate ``age_index`` is numeric age and is replaced
        by its bin index under the ordered thresholds ``age_breaks``.
    exclusions : iterable of callables
        Predicates over the (pre-binning) record; any True drops it.
    reference_levels : dict
        Covariate name -> reference level for dummy coding; default is the
        lexicographically smallest observed level.
    covariate_names : sequence of str
        Names for labeling; defaults to c1..cp.

    Strata are ordered lexicographically by (covariate levels, vaccine) so
    results do not depend on input row order.
    """
    if min_ae_count < 0:
        raise ValueError("min_ae_count must be >= 0")
    kept = []
    n_excluded = 0
    for rec in records:
        if any(pred(rec) for pred in exclusions):
            n_excluded += 1
            continue
        kept.append(rec)

    if age_breaks is not None and age_index is not None:
        breaks = sorted(float(b) for b in age_breaks)
        binned = []
        for rec in kept:
            cov = list(rec.covariates)
            cov[age_index] = str(bin_age(cov[age_index], breaks))
            binned.append(
                ReportRecord(rec.report_id, rec.vaccine, tuple(cov), rec.ae_terms)
            )
        kept = binned

    totals: dict[str, int] = {}
    for rec in kept:
        for term in rec.ae_terms:
            totals[term] = totals.get(term, 0) + 1
    vocab = [t for t, c in totals.items() if c >= min_ae_count]
    if not vocab:
        raise ValueError("no adverse-event terms left after the count filter")
    vocab.sort(key=lambda t: (-totals[t], t))
    term_index = {t: j for j, t in enumerate(vocab)}

    n_cov = len(kept[0].covariates) if kept else 0
    if covariate_names is None:
        covariate_names = tuple(f"c{i + 1}" for i in range(n_cov))
    covariate_names = tuple(covariate_names)

    strata: dict[tuple, list[ReportRecord]] = {}
    for rec in kept:
        strata.setdefault((*rec.covariates, rec.vaccine), []).append(rec)
    labels = sorted(strata)

    levels = [sorted({lab[i] for lab in labels}) for i in range(n_cov)]
    reference_levels = reference_levels or {}
    dummy_cols = []
    for i, name in enumerate(covariate_names):
        ref = reference_levels.get(name, levels[i][0] if levels[i] else None)
        if ref is not None and ref not in levels[i]:
            raise ValueError(f"reference level {ref!r} never observed for {name!r}")
        dummy_cols.append([(i, lev) for lev in levels[i] if lev != ref])

    design_columns = ["intercept"] + [
        f"{covariate_names[i]}={lev}" for cols in dummy_cols for i, lev in cols
    ]

    s_count = len(labels)
    j_count = len(vocab)
    X = np.zeros((s_count, len(design_columns)))
    X[:, 0] = 1.0
    V = np.zeros(s_count)
    n = np.zeros(s_count, dtype=np.int64)
    y = np.zeros((s_count, j_count), dtype=np.int64)
    for s, lab in enumerate(labels):
        col = 1
        for cols in dummy_cols:
            for i, lev in cols:
                X[s, col] = 1.0 if lab[i] == lev else 0.0
                col += 1
        V[s] = float(lab[-1])
        members = strata[lab]
        n[s] = len(members)
        for rec in members:
            for term in rec.ae_terms:
                j = term_index.get(term)
                if j is not None:
                    y[s, j] += 1

    n_zero_modeled = sum(
        1 for rec in kept if not any(t in term_index for t in rec.ae_terms)
    )
    cells = StratifiedCells(
        X=X,
        V=V,
        n=n,
        y=y,
        ae_vocabulary=vocab,
        strata_labels=labels,
        design_columns=design_columns,
        counts={
            "retained": len(kept),
            "excluded": n_excluded,
            "terms_dropped": len(totals) - j_count,
            "zero_modeled_reports": n_zero_modeled,
        },
    )
    cells.validate()
    return cells
