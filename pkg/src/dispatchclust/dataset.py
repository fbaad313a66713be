"""Hourly panel ingestion, scaling, state discretization, and windowing.

Input CSVs carry a `timestamp` column, one generation column per unit
(MWh), and named covariate columns. Sub-hourly input is resampled to
hourly means; missing values stay explicit (NaN), they are never
zero-filled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

MODEL_COVARIATES = ("national_load", "res_generation", "gas_price")
ANALYSIS_COVARIATES = ("day_ahead_price", "heat_demand")

TECHNOLOGIES = ("combined_cycle", "gas_turbine", "steam")
OWNER_CLASSES = ("major_utility", "municipal_utility", "industry",
                 "other_utility")

ENTROPY_THRESHOLD_BITS = 0.3


class PanelLoadError(ValueError):
    """Structured ingestion failure naming the offending row or column."""


class DegenerateScaleError(ValueError):
    """Min-max scaling requested for a constant column."""


@dataclass
class HourlyPanel:
    """Aligned hourly series: per-unit generation plus market covariates."""

    timestamps: pd.DatetimeIndex
    generation: pd.DataFrame
    covariates: pd.DataFrame

    def __post_init__(self):
        diffs = np.diff(self.timestamps.asi8)
        if len(diffs) and not np.all(diffs == 3_600_000_000_000):
            raise PanelLoadError("panel timestamps are not uniformly hourly")

    @property
    def n_hours(self) -> int:
        return len(self.timestamps)

    @property
    def unit_ids(self) -> list[str]:
        return list(self.generation.columns)

    @property
    def weekday(self) -> np.ndarray:
        return self.timestamps.weekday.to_numpy()

    @property
    def hour(self) -> np.ndarray:
        return self.timestamps.hour.to_numpy()

    def covariate(self, name: str) -> np.ndarray:
        return self.covariates[name].to_numpy(dtype=float)


@dataclass
class LoadReport:
    rows_in: int
    hours_out: int
    resample_factor: int
    inserted_missing_hours: int
    missing_per_column: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "rows_in": self.rows_in,
            "hours_out": self.hours_out,
            "resample_factor": self.resample_factor,
            "inserted_missing_hours": self.inserted_missing_hours,
            "missing_per_column": dict(sorted(self.missing_per_column.items())),
        }


@dataclass
class UnitMeta:
    unit_id: str
    g_max: float
    age_years: float
    chp: bool
    technology: str
    owner_class: str
    market_oriented: bool
    coal_based_gas: bool

    def __post_init__(self):
        if not self.g_max > 0:
            raise ValueError(f"unit {self.unit_id}: g_max must be positive, "
                             f"got {self.g_max}")
        if self.technology not in TECHNOLOGIES:
            raise ValueError(f"unit {self.unit_id}: unknown technology "
                             f"{self.technology!r}")
        if self.owner_class not in OWNER_CLASSES:
            raise ValueError(f"unit {self.unit_id}: unknown owner class "
                             f"{self.owner_class!r}")


@dataclass
class StateSeries:
    """Discretized operating states: 0 off, 1 min-load, 2 full-load."""

    unit_id: str
    states: np.ndarray  # float array, NaN marks missing hours

    def __post_init__(self):
        valid = self.states[~np.isnan(self.states)]
        if valid.size and not np.isin(valid, (0.0, 1.0, 2.0)).all():
            raise ValueError(f"unit {self.unit_id}: states outside {{0,1,2}}")


def _parse_bool(raw, column, row):
    s = str(raw).strip().lower()
    if s in ("1", "true", "yes", "y"):
        return True
    if s in ("0", "false", "no", "n"):
        return False
    raise PanelLoadError(f"row {row}: cannot parse boolean {column}={raw!r}")


def load_unit_meta(path) -> dict[str, UnitMeta]:
    df = pd.read_csv(path, comment="#")
    required = ["unit_id", "g_max", "age_years", "chp", "technology",
                "owner_class", "market_oriented", "coal_based_gas"]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise PanelLoadError(f"metadata file misses columns: {missing}")
    units = {}
    for row, rec in enumerate(df.itertuples(index=False)):
        meta = UnitMeta(
            unit_id=str(rec.unit_id),
            g_max=float(rec.g_max),
            age_years=float(rec.age_years),
            chp=_parse_bool(rec.chp, "chp", row),
            technology=str(rec.technology),
            owner_class=str(rec.owner_class),
            market_oriented=_parse_bool(rec.market_oriented,
                                        "market_oriented", row),
            coal_based_gas=_parse_bool(rec.coal_based_gas,
                                       "coal_based_gas", row),
        )
        if meta.unit_id in units:
            raise PanelLoadError(f"duplicate unit_id {meta.unit_id!r} in metadata")
        units[meta.unit_id] = meta
    return units


def load_panel(path, schema: dict[str, str],
               neg_tolerance: float = 1e-6) -> tuple[HourlyPanel, LoadReport]:
    """Read, validate, and hourly-resample a panel CSV.

    schema maps covariate roles (national_load, res_generation, gas_price,
    day_ahead_price, optionally heat_demand) to column names; every
    remaining non-timestamp column is a unit id.
    """
    df = pd.read_csv(path, comment="#")
    if "timestamp" not in df.columns:
        raise PanelLoadError("missing required column 'timestamp'")

    for role in ("national_load", "res_generation", "gas_price",
                 "day_ahead_price"):
        col = schema.get(role)
        if col is None:
            raise PanelLoadError(f"schema does not name a column for {role!r}")
        if col not in df.columns:
            raise PanelLoadError(f"missing covariate column {col!r} ({role})")
    if "heat_demand" in schema and schema["heat_demand"] not in df.columns:
        raise PanelLoadError(
            f"missing covariate column {schema['heat_demand']!r} (heat_demand)")

    ts = pd.to_datetime(df["timestamp"], utc=True, errors="coerce",
                        format="ISO8601")
    bad = np.flatnonzero(ts.isna().to_numpy())
    if bad.size:
        raise PanelLoadError(f"row {bad[0]}: unparseable timestamp "
                             f"{df['timestamp'].iloc[bad[0]]!r}")
    dup = ts.duplicated()
    if dup.any():
        i = int(np.flatnonzero(dup.to_numpy())[0])
        raise PanelLoadError(f"row {i}: duplicated timestamp {ts.iloc[i]}")
    steps = ts.diff().dropna()
    nonmono = np.flatnonzero((steps <= pd.Timedelta(0)).to_numpy())
    if nonmono.size:
        i = int(nonmono[0]) + 1
        raise PanelLoadError(f"row {i}: non-monotone timestamp {ts.iloc[i]}")

    rows_in = len(df)
    cov_cols = [schema[r] for r in ("national_load", "res_generation",
                                    "gas_price", "day_ahead_price")]
    if "heat_demand" in schema:
        cov_cols.append(schema["heat_demand"])
    unit_cols = [c for c in df.columns if c != "timestamp" and c not in cov_cols]
    if not unit_cols:
        raise PanelLoadError("no unit generation columns found")

    values = df.drop(columns=["timestamp"]).apply(pd.to_numeric, errors="coerce")
    values.index = pd.DatetimeIndex(ts)

    # Sub-hourly input: mean per hour; an hour with any missing sub-row
    # stays missing (generation data are averages of power).
    step_ns = np.diff(ts.asi8)
    base = int(step_ns.min()) if len(step_ns) else 3_600_000_000_000
    hour_ns = 3_600_000_000_000
    if base > hour_ns:
        raise PanelLoadError("input is coarser than hourly")
    if hour_ns % base != 0:
        raise PanelLoadError(f"input step {base / 1e9:.0f}s does not divide "
                             "one hour")
    factor = hour_ns // base
    if factor > 1:
        grouped = values.groupby(values.index.floor("h"))
        counts = grouped.count()
        hourly = grouped.mean()
        hourly[counts < factor] = np.nan
    else:
        hourly = values

    full_index = pd.date_range(hourly.index[0], hourly.index[-1], freq="h",
                               tz="UTC")
    inserted = len(full_index) - len(hourly)
    hourly = hourly.reindex(full_index)

    gen = hourly[unit_cols]
    if np.isinf(gen.to_numpy()).any():
        raise PanelLoadError("non-finite generation value")
    too_negative = gen.lt(-neg_tolerance)
    if too_negative.any().any():
        col = too_negative.any(axis=0).idxmax()
        raise PanelLoadError(f"unit {col!r}: negative generation beyond "
                             f"tolerance {neg_tolerance}")
    gen = gen.clip(lower=0.0)

    covs = hourly[cov_cols].copy()
    covs.columns = [r for r in ("national_load", "res_generation", "gas_price",
                                "day_ahead_price", "heat_demand")
                    if r in schema or r != "heat_demand"][:len(cov_cols)]

    panel = HourlyPanel(timestamps=full_index, generation=gen, covariates=covs)
    report = LoadReport(
        rows_in=rows_in,
        hours_out=len(full_index),
        resample_factor=int(factor),
        inserted_missing_hours=int(inserted),
        missing_per_column={c: int(hourly[c].isna().sum())
                            for c in hourly.columns},
    )
    return panel, report


def minmax_scale(panel: HourlyPanel,
                 columns=MODEL_COVARIATES) -> tuple[HourlyPanel, dict]:
    """Scale the named covariate columns to [0, 1]; keeps scaler params."""
    covs = panel.covariates.copy()
    params = {}
    for col in columns:
        x = covs[col].to_numpy(dtype=float)
        lo = np.nanmin(x)
        hi = np.nanmax(x)
        if not hi > lo:
            raise DegenerateScaleError(f"column {col!r} is constant "
                                       f"(min == max == {lo})")
        covs[col] = (x - lo) / (hi - lo)
        params[col] = {"min": float(lo), "max": float(hi)}
    scaled = HourlyPanel(timestamps=panel.timestamps,
                         generation=panel.generation, covariates=covs)
    return scaled, params


def minmax_scale_series(x: np.ndarray) -> np.ndarray:
    """Per-series min-max over non-missing values (used by raw baselines)."""
    lo = np.nanmin(x)
    hi = np.nanmax(x)
    if not hi > lo:
        raise DegenerateScaleError(f"series is constant (min == max == {lo})")
    return (x - lo) / (hi - lo)


def discretize(generation: np.ndarray, g_max: float, unit_id: str = "",
               neg_tolerance: float = 1e-6) -> StateSeries:
    """Map MWh to states: 0 iff g <= g_max/3, 1 iff g <= 2 g_max/3, else 2."""
    if not g_max > 0:
        raise ValueError(f"unit {unit_id!r}: g_max must be positive")
    g = np.asarray(generation, dtype=float)
    if np.any(g < -neg_tolerance):
        raise ValueError(f"unit {unit_id!r}: negative generation beyond "
                         f"tolerance {neg_tolerance}")
    g = np.where(g < 0.0, 0.0, g)
    states = np.full(g.shape, np.nan)
    ok = ~np.isnan(g)
    states[ok & (g <= g_max / 3.0)] = 0.0
    states[ok & (g > g_max / 3.0) & (g <= 2.0 * g_max / 3.0)] = 1.0
    states[ok & (g > 2.0 * g_max / 3.0)] = 2.0
    return StateSeries(unit_id=unit_id, states=states)


def unit_entropy(states: StateSeries | np.ndarray) -> float:
    """Shannon entropy in bits of the state distribution, NaNs ignored."""
    x = states.states if isinstance(states, StateSeries) else np.asarray(states)
    valid = x[~np.isnan(x)]
    if valid.size == 0:
        raise ValueError("entropy undefined: series has no observed states")
    h = 0.0
    for k in (0.0, 1.0, 2.0):
        p = float(np.count_nonzero(valid == k)) / valid.size
        if p > 0.0:
            h -= p * np.log2(p)
    return h


def filter_units(states_by_unit: dict[str, StateSeries],
                 threshold: float = ENTROPY_THRESHOLD_BITS
                 ) -> tuple[list[str], dict[str, float]]:
    """Keep units whose state entropy reaches the threshold.

    Returns (retained unit ids, entropies of every excluded unit).
    """
    retained = []
    excluded = {}
    for unit_id, series in states_by_unit.items():
        h = unit_entropy(series)
        if h >= threshold:
            retained.append(unit_id)
        else:
            excluded[unit_id] = h
    return retained, excluded


@dataclass
class Subsequence:
    """One materialized training window (context + forecast)."""

    unit_index: int
    context_states: np.ndarray
    context_covariates: np.ndarray
    forecast_covariates: np.ndarray
    context_weekday: np.ndarray
    context_hour: np.ndarray
    forecast_weekday: np.ndarray
    forecast_hour: np.ndarray
    targets: np.ndarray


@dataclass
class SubsequenceSet:
    """All valid windows over a panel, stored as (unit_index, start) pairs."""

    unit_ids: list[str]
    states: np.ndarray       # (hours, units) float, NaN missing
    covariates: np.ndarray   # (hours, n_cov) scaled model covariates
    weekday: np.ndarray
    hour: np.ndarray
    windows: list[tuple[int, int]]
    context_hours: int
    forecast_hours: int
    n_dropped: int
    too_short: bool

    def __len__(self) -> int:
        return len(self.windows)

    def materialize(self, i: int) -> Subsequence:
        u, start = self.windows[i]
        c, f = self.context_hours, self.forecast_hours
        mid, end = start + c, start + c + f
        return Subsequence(
            unit_index=u,
            context_states=self.states[start:mid, u].astype(np.intp),
            context_covariates=self.covariates[start:mid],
            forecast_covariates=self.covariates[mid:end],
            context_weekday=self.weekday[start:mid],
            context_hour=self.hour[start:mid],
            forecast_weekday=self.weekday[mid:end],
            forecast_hour=self.hour[mid:end],
            targets=self.states[mid:end, u].astype(np.intp),
        )


def build_subsequences(panel: HourlyPanel,
                       states_by_unit: dict[str, StateSeries],
                       unit_ids: list[str] | None = None,
                       context_hours: int = 24, forecast_hours: int = 24,
                       step: int | None = None) -> SubsequenceSet:
    """Cut non-overlapping windows; windows touching missing data are dropped.

    Window starts are 0, step, 2*step, ...; step defaults to the window
    length (context + forecast) so windows never overlap.
    """
    if unit_ids is None:
        unit_ids = list(states_by_unit)
    window = context_hours + forecast_hours
    if step is None:
        step = window
    T = panel.n_hours
    states = np.column_stack([states_by_unit[u].states for u in unit_ids]) \
        if unit_ids else np.empty((T, 0))
    covs = panel.covariates.loc[:, list(MODEL_COVARIATES)].to_numpy(dtype=float)

    starts = list(range(0, T - window + 1, step))
    too_short = not starts
    cov_ok = ~np.isnan(covs).any(axis=1)

    windows = []
    dropped = 0
    for u in range(len(unit_ids)):
        good = ~np.isnan(states[:, u])
        for start in starts:
            sl = slice(start, start + window)
            if good[sl].all() and cov_ok[sl].all():
                windows.append((u, start))
            else:
                dropped += 1

    return SubsequenceSet(
        unit_ids=list(unit_ids),
        states=states,
        covariates=covs,
        weekday=panel.weekday,
        hour=panel.hour,
        windows=windows,
        context_hours=context_hours,
        forecast_hours=forecast_hours,
        n_dropped=dropped,
        too_short=too_short,
    )


@dataclass
class SplitDataset:
    """Disjoint train/validation/test index sets over subsequences."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int
    ratios: tuple[float, float, float] = (0.7, 0.2, 0.1)

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


def split(n_subsequences: int, ratios=(0.7, 0.2, 0.1), seed: int = 0
          ) -> SplitDataset:
    """Random 70/20/10 split (deterministic for a fixed seed)."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {ratios}")
    if n_subsequences < 10:
        raise ValueError(f"need at least 10 subsequences, got {n_subsequences}")
    perm = np.random.default_rng(seed).permutation(n_subsequences)
    n_train = round(ratios[0] * n_subsequences)
    n_val = round((ratios[0] + ratios[1]) * n_subsequences) - n_train
    return SplitDataset(
        train=perm[:n_train],
        validation=perm[n_train:n_train + n_val],
        test=perm[n_train + n_val:],
        seed=seed,
        ratios=tuple(ratios),
    )
