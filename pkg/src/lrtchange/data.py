"""Feature-matrix files, standardization and the end-to-end detection report.

Input files are wide CSV: a header row, one row per consecutive day, one
column per feature, optionally led by a date column. Internally the data are
held as a q x n array (features by days).
"""

import csv
import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import competitors as comp
from .nullcov import CovarianceModel
from .pvalues import Budgets, asymp_pvalue, build_covariance, mc_pvalue
from .scan import ScanWindow, scan
from .simulate import SeedSpec
from . import mvn

METHODS = ("lrt-empirical", "lrt-firstorder", "lrt-asymptotic", "lrt-montecarlo",
           "hotelling", "mcusum")
_DATE_HEADERS = {"date", "day", "time", "timestamp"}


class InputError(ValueError):
    """Malformed or insufficient input data."""


@dataclass
class FeatureTable:
    values: np.ndarray  # q x n
    names: list
    dates: list = None

    @property
    def q(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path, min_rows: int = 2) -> FeatureTable:
    """Read a wide feature file.

    The first column is taken as dates when its header is a date-like name or
    its first value is not numeric. ISO dates must advance one day per row.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if len(rows) < 2:
        raise InputError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    has_dates = header[0].lower() in _DATE_HEADERS or not _is_number(body[0][0].strip())
    first = 1 if has_dates else 0
    names = header[first:]
    if not names:
        raise InputError(f"{path}: no feature columns")
    values = np.empty((len(body), len(names)))
    dates = [] if has_dates else None
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise InputError(f"{path}: row {i} has {len(row)} cells, expected {len(header)}")
        if has_dates:
            dates.append(row[0].strip())
        for j, cell in enumerate(row[first:]):
            cell = cell.strip()
            try:
                v = float(cell)
            except ValueError:
                v = None
            if v is None or not np.isfinite(v):
                what = "blank" if cell == "" else f"non-numeric value {cell!r}"
                raise InputError(f"{path}: row {i}, column {names[j]!r}: {what}")
            values[i - 2, j] = v
    if len(body) < min_rows:
        raise InputError(f"{path}: {len(body)} rows, need at least {min_rows}")
    if dates:
        _check_consecutive(path, dates)
    return FeatureTable(values.T.copy(), names, dates)


def _check_consecutive(path, dates):
    try:
        parsed = [dt.date.fromisoformat(d) for d in dates]
    except ValueError:
        # non-ISO labels: row order is taken as given
        return
    for i in range(1, len(parsed)):
        if (parsed[i] - parsed[i - 1]).days != 1:
            raise InputError(f"{path}: rows {i + 1} and {i + 2} are not consecutive days "
                             f"({dates[i - 1]} -> {dates[i]})")


def write_csv(fh, table: FeatureTable) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow((["date"] if table.dates else []) + list(table.names))
    for j in range(table.n):
        row = [repr(float(v)) for v in table.values[:, j]]
        writer.writerow(([table.dates[j]] if table.dates else []) + row)


def save_csv(path, table: FeatureTable) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        write_csv(fh, table)


def standardize(Y, baseline_end: int):
    """Divide each row by its sample standard deviation over days 1..baseline_end.

    Rows are not centred; the scan is location invariant. Returns the scaled
    matrix and the scales used.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = Y.shape[1]
    if not (2 <= baseline_end <= n):
        raise InputError(f"baseline_end={baseline_end} outside [2, {n}]")
    scales = Y[:, :baseline_end].std(axis=1, ddof=1)
    bad = np.flatnonzero(~(scales > 0))
    if bad.size:
        raise InputError(f"feature row(s) {bad.tolist()} have zero variance over the baseline")
    return Y / scales[:, None], scales


def _competitor_pvalue(method, stat, q, n, w, cfg, B, seed):
    sims = comp.null_statistics(method, q, n, w, cfg, B, seed)
    return float(np.mean(sims >= stat))


def detect(path, window: ScanWindow, methods=("lrt-empirical",), budgets: Budgets = Budgets(),
           seed: SeedSpec = SeedSpec(), kappa: float = 2.0, a_target: float = 0.0,
           baseline_end: int = None, whole_series: bool = False,
           cov: CovarianceModel = None) -> dict:
    """Load, standardize, scan and test one feature file; returns the report dict."""
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise InputError(f"unknown method(s): {sorted(unknown)}")
    table = load_csv(path, min_rows=window.m1 + 2)
    q, n = table.q, table.n
    if whole_series:
        baseline_end = n
    elif baseline_end is None:
        baseline_end = n - window.m1
    Y, scales = standardize(table.values, baseline_end)
    res = scan(Y, window)
    khat = res.khat

    pvals = {}
    details = {}
    for method in methods:
        sub = seed.child(METHODS.index(method) + 1)
        if method in ("lrt-empirical", "lrt-firstorder"):
            mode = "empirical" if method == "lrt-empirical" else "first_order"
            model = cov if (cov is not None and cov.provenance == mode) else \
                build_covariance(mode, q, n, window, budgets.cov_B, sub)
            if res.m_star == 1:
                pvals[method] = float(mvn.chisq_sf(res.q_stat, q))
            elif res.q_stat <= 0:
                pvals[method] = 1.0
            else:
                orth = mvn.mvn_orthant(model, res.q_star, budgets.tol, sub.child(1))
                pvals[method] = orth.complement
                details[method] = {"std_error": orth.std_error, "cov_B": model.details.get("B")}
        elif method == "lrt-asymptotic":
            pvals[method] = asymp_pvalue(res.q_stat, q, window.m0, window.m1) \
                if window.m0 >= 1 else None
            if window.m0 < 1:
                details[method] = "unavailable: needs m0 >= 1"
        elif method == "lrt-montecarlo":
            pvals[method] = mc_pvalue(res.q_stat, q, n, window, budgets.mc_B, sub)
            details[method] = {"B": budgets.mc_B}
        elif method == "hotelling":
            stat = comp.hotelling_scan(Y, window).statistic
            pvals[method] = _competitor_pvalue("hotelling", stat, q, n, window, None,
                                               budgets.mc_B, sub)
            details[method] = {"statistic": stat, "B": budgets.mc_B}
        else:
            cfg = comp.McusumConfig(kappa, a_target)
            stat = comp.mcusum_scan(Y, window, cfg).statistic
            pvals[method] = _competitor_pvalue("mcusum", stat, q, n, window, cfg,
                                               budgets.mc_B, sub)
            details[method] = {"statistic": stat, "B": budgets.mc_B, "kappa": kappa,
                               "a_target": a_target}

    raw = table.values
    report = {
        "file": str(path),
        "n": n,
        "q": q,
        "window": {"m0": window.m0, "m1": window.m1, "m_star": res.m_star},
        "q_stat": res.q_stat,
        "q_star": res.q_star,
        "khat": khat,
        "khat_date": table.dates[khat - 1] if table.dates else None,
        "days_before_end": n - khat,
        "p_values": pvals,
        "method_details": details,
        "feature_means": {
            name: {"pre": float(raw[i, :khat].mean()), "post": float(raw[i, khat:].mean())}
            for i, name in enumerate(table.names)
        },
        "standardization": {
            "baseline_end": baseline_end,
            "scales": dict(zip(table.names, map(float, scales))),
        },
        "z_by_offset": dict(zip(map(int, res.offsets), map(float, res.z))),
        "seed": {"master_seed": seed.master_seed, "stream_id": seed.stream_id},
        "budgets": {"cov_B": budgets.cov_B, "mc_B": budgets.mc_B, "tol": budgets.tol},
    }
    return report


def format_report(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def synthetic_table(q: int, n: int, seed: SeedSpec, k: int = None, delta: float = 0.0,
                    start_date: str = "2020-01-01") -> FeatureTable:
    """Null data, or data with a shift of ``delta`` in every feature after day ``k``."""
    from .simulate import AlternativeSpec, gen_alt, gen_null

    if k is None or delta == 0.0:
        Y = gen_null(q, n, seed)
    else:
        Y = gen_alt(q, n, AlternativeSpec(k, [delta] * q), seed)
    d0 = dt.date.fromisoformat(start_date)
    dates = [(d0 + dt.timedelta(days=j)).isoformat() for j in range(n)]
    return FeatureTable(Y, [f"feature{i + 1}" for i in range(q)], dates)
