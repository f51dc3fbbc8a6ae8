"""Time scans, parameter-plane sweeps, variant comparisons and file output."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, PTQuantumError
from .gaussian import GaussianState, InitialState, state_at
from .model import SystemConfig, SystemKind, ep_geometry
from .quantifiers import (
    CLASSICAL_BELL,
    QUANTITIES,
    BellSearchConfig,
    bell_max,
    global_tau,
    local_tau,
    mean_photon,
    negativity,
    steering,
)

CSV_HEADER = (
    "gamma_over_eps",
    "kappa_over_eps",
    "kind",
    "quantity",
    "max_value",
    "t_at_max",
    "n_at_max",
    "v_max",
    "t_at_vmax",
)
COMPARE_HEADER = (
    "gamma_over_eps",
    "kappa_over_eps",
    "kind_a",
    "kind_b",
    "quantity",
    "value_a",
    "value_b",
    "comparison",
)
COMPARE_MODES = ("ratio", "difference", "bell_excess_ratio")
BELL_THRESHOLD = CLASSICAL_BELL + 1e-6
DEFAULT_THRESHOLD = 1e-6
BISECTION_STEPS = 30


def fmt(x) -> str:
    """Nine significant digits; empty for None."""
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if x == 0:
        return "0"
    return f"{x:.9g}"


# ---------------------------------------------------------------- time scans


@dataclass(frozen=True)
class TimeScanConfig:
    """Time grid of a scan; ``None`` fields are resolved from the system.

    Defaults: ``t_max = 20/eps`` and
    ``dt = min(0.01/eps, pi / (200 max(|Re mu|, eps)))``.
    """

    t_max: float | None = None
    dt: float | None = None
    early_stop_fraction: float = 0.05
    bell_stride: int = 10
    steering_formula: str = "default"

    def __post_init__(self):
        if not 0.0 <= self.early_stop_fraction < 1.0:
            raise ValueError("early_stop_fraction must lie in [0, 1)")
        if self.bell_stride < 1:
            raise ValueError("bell_stride must be >= 1")
        if self.t_max is not None and not self.t_max > 0:
            raise ValueError("t_max must be > 0")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be > 0")

    def grid(self, config: SystemConfig) -> np.ndarray:
        eps = config.epsilon
        t_max = self.t_max if self.t_max is not None else 20.0 / eps
        dt = self.dt
        if dt is None:
            re_mu = abs(ep_geometry(config).mu.real)
            dt = min(0.01 / eps, math.pi / (200.0 * max(re_mu, eps)))
        if not dt < t_max:
            raise ValueError(f"dt ({dt}) must be smaller than t_max ({t_max})")
        n = int(math.floor(t_max / dt + 1e-9))
        t = dt * np.arange(n + 1)
        if t[-1] < t_max - 1e-12 * t_max:
            t = np.append(t, t_max)
        return t


@dataclass(frozen=True)
class QuantityScan:
    max_value: float
    t_at_max: float
    n_at_max: float
    v_max: float
    t_at_vmax: float


@dataclass
class TimeScanResult:
    scans: dict  # quantity -> QuantityScan

    def __getitem__(self, quantity: str) -> QuantityScan:
        return self.scans[quantity]


def _check_quantities(quantities) -> tuple:
    if quantities is None:
        return QUANTITIES
    quantities = tuple(quantities)
    for q in quantities:
        if q not in QUANTITIES:
            raise ValueError(f"unknown quantity {q!r} (expected one of {', '.join(QUANTITIES)})")
    return tuple(q for q in QUANTITIES if q in quantities)


def series_values(
    state: GaussianState, quantities=QUANTITIES, steering_formula: str = "default"
) -> dict:
    """Vectorized non-Bell quantities over a time-series state."""
    out = {}
    for q in quantities:
        if q == "tau":
            out[q] = global_tau(state)
        elif q == "tau1":
            out[q] = local_tau(state, 1)
        elif q == "tau2":
            out[q] = local_tau(state, 2)
        elif q == "en":
            out[q] = negativity(state)
        elif q == "s12":
            out[q] = steering(state, "1->2", steering_formula)
        elif q == "s21":
            out[q] = steering(state, "2->1", steering_formula)
        elif q == "n":
            out[q] = mean_photon(state)
    return {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in out.items()}


def bell_series(state: GaussianState, indices, en, bell_cfg) -> np.ndarray:
    """Bell maxima at the given time indices (2 wherever the state is separable)."""
    vals = np.full(len(indices), CLASSICAL_BELL)
    for k, i in enumerate(indices):
        if en[i] > 0:
            vals[k] = bell_max(state.at(i), bell_cfg)[0]
    return vals


def time_series(
    config: SystemConfig,
    init: InitialState | None = None,
    scan: TimeScanConfig | None = None,
    bell_cfg: BellSearchConfig | None = None,
    with_bell: bool = True,
):
    """Every quantity at every grid time; returns ``(t, state, values)``."""
    scan = scan or TimeScanConfig()
    t = scan.grid(config)
    state = state_at(config, init, t)
    values = series_values(state, QUANTITIES, scan.steering_formula)
    if with_bell:
        values["bell"] = bell_series(state, range(len(t)), values["en"], bell_cfg)
    else:
        values["bell"] = np.full(len(t), np.nan)
    return t, state, values


def _speed(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    if len(t) < 2:
        return np.zeros_like(y)
    return np.gradient(y, t, edge_order=1)


def _first_peak(y: np.ndarray) -> int:
    """Index of the earliest sample that attains max(y) within its sampling resolution.

    A sampled peak misses the true one by at most about half the local
    second difference, so periodic maxima of equal height are resolved in
    favour of the first.
    """
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("non-finite values in a time series")
    top = float(np.max(y))
    if len(y) < 3:
        return int(np.argmax(y))
    d2 = np.zeros_like(y)
    d2[1:-1] = np.abs(y[2:] - 2.0 * y[1:-1] + y[:-2])
    tied = np.nonzero(y + 0.5 * d2 >= top)[0]
    return int(tied[0])


def _summarize(t, y, n_series) -> QuantityScan:
    """Maximum of ``y`` on ``t``, where it is first attained, and the maximal speed."""
    i = _first_peak(y)
    v = _speed(t, y)
    j = _first_peak(v)
    return QuantityScan(
        max_value=float(np.max(y)),
        t_at_max=float(t[i]),
        n_at_max=float(n_series[i]),
        v_max=float(np.max(v)),
        t_at_vmax=float(t[j]),
    )


def _bell_scan(config, state, t, en, scan: TimeScanConfig, bell_cfg):
    """Decimated Bell scan with early stop and fine refinement around the coarse argmax."""
    stride = scan.bell_stride
    coarse = list(range(0, len(t), stride))
    if coarse[-1] != len(t) - 1:
        coarse.append(len(t) - 1)
    re_mu = abs(ep_geometry(config).mu.real)
    window = 2.0 * math.pi / re_mu if (scan.early_stop_fraction > 0 and re_mu > 0) else math.inf

    idx, vals = [], []
    running, last_high = 0.0, 0.0
    for i in coarse:
        b = bell_series(state, [i], en, bell_cfg)[0]
        idx.append(i)
        vals.append(b)
        excess = b - CLASSICAL_BELL
        if excess > running:
            running = excess
        if excess >= scan.early_stop_fraction * running:
            last_high = t[i]
        if running > 0 and t[i] - last_high > window:
            break
    vals = np.array(vals)
    idx = np.array(idx)
    k = int(np.argmax(vals))
    if vals[k] > CLASSICAL_BELL:
        lo = idx[max(k - 1, 0)]
        hi = idx[min(k + 1, len(idx) - 1)]
        fine = [i for i in range(lo, hi + 1) if i not in set(idx.tolist())]
        if fine:
            fv = bell_series(state, fine, en, bell_cfg)
            idx = np.concatenate([idx, fine])
            vals = np.concatenate([vals, fv])
            order = np.argsort(idx, kind="stable")
            idx, vals = idx[order], vals[order]
    return idx, vals


def time_scan(
    config: SystemConfig,
    init: InitialState | None = None,
    scan: TimeScanConfig | None = None,
    bell_cfg: BellSearchConfig | None = None,
    quantities=None,
) -> TimeScanResult:
    """Maximum over time, its time and photon number, and the maximal growth speed.

    The Bell parameter is evaluated on every ``bell_stride``-th grid time,
    then on every grid time next to the coarse maximum; its speed uses the
    evaluated points only.
    """
    scan = scan or TimeScanConfig()
    quantities = _check_quantities(quantities)
    t = scan.grid(config)
    state = state_at(config, init, t)
    need = set(quantities) | {"n"}
    if "bell" in quantities:
        need.add("en")
    values = series_values(state, [q for q in QUANTITIES if q in need], scan.steering_formula)
    n_series = values["n"]
    scans = {}
    for q in quantities:
        if q == "bell":
            idx, vals = _bell_scan(config, state, t, values["en"], scan, bell_cfg)
            scans[q] = _summarize(t[idx], vals, n_series[idx])
        else:
            scans[q] = _summarize(t, values[q], n_series)
    return TimeScanResult(scans)


# ------------------------------------------------------------------- sweeps


def parse_range(text: str) -> tuple[float, float, int]:
    """``"a:b:n"`` -> (a, b, n); a single number is a one-point range."""
    parts = str(text).split(":")
    if len(parts) == 1:
        v = float(parts[0])
        return v, v, 1
    if len(parts) != 3:
        raise ValueError(f"range must look like a:b:n, got {text!r}")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    if n < 1:
        raise ValueError(f"range count must be >= 1, got {n}")
    if n > 1 and hi < lo:
        raise ValueError(f"range end {hi} is below its start {lo}")
    return lo, hi, n


def _axis(lo, hi, n) -> np.ndarray:
    return np.array([lo]) if n == 1 else np.linspace(lo, hi, n)


@dataclass(frozen=True)
class GridSpec:
    gamma_over_eps: tuple = (0.0, 1.0, 101)
    kappa_over_eps: tuple = (0.0, 1.0, 101)
    kind: SystemKind = SystemKind.STANDARD
    init: InitialState = field(default_factory=InitialState)
    scan: TimeScanConfig = field(default_factory=TimeScanConfig)
    bell_cfg: BellSearchConfig = field(default_factory=BellSearchConfig)
    epsilon: float = 1.0
    quantities: tuple = QUANTITIES
    # deep in the broken phase the states outgrow even the exact path; raise deliberately
    kappa_cap: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "kind", SystemKind.parse(self.kind))
        object.__setattr__(self, "quantities", _check_quantities(self.quantities))
        for name in ("gamma_over_eps", "kappa_over_eps"):
            lo, hi, n = getattr(self, name)
            if int(n) < 1:
                raise ValueError(f"{name} count must be >= 1")
            if lo < 0 or hi < 0:
                raise ValueError(f"{name} must be non-negative")
        if max(self.kappa_over_eps[:2]) > self.kappa_cap:
            raise ValueError(f"kappa/eps above the cap {self.kappa_cap:g}; raise kappa_cap to allow it")

    @property
    def gammas(self) -> np.ndarray:
        return _axis(*self.gamma_over_eps)

    @property
    def kappas(self) -> np.ndarray:
        return _axis(*self.kappa_over_eps)

    def cells(self) -> list[tuple[float, float]]:
        """``(gamma/eps, kappa/eps)`` in row-major order: kappa rows, gamma columns."""
        return [(float(g), float(k)) for k in self.kappas for g in self.gammas]

    def config(self, g: float, k: float) -> SystemConfig:
        return SystemConfig(kappa=k * self.epsilon, gamma=g * self.epsilon, kind=self.kind, epsilon=self.epsilon)


@dataclass
class SweepRecord:
    gamma_over_eps: float
    kappa_over_eps: float
    kind: str
    scans: dict  # quantity -> QuantityScan
    error: str | None = None


def _nan_scan() -> QuantityScan:
    nan = float("nan")
    return QuantityScan(nan, nan, nan, nan, nan)


def _run_cell(args) -> SweepRecord:
    spec, g, k = args
    try:
        res = time_scan(spec.config(g, k), spec.init, spec.scan, spec.bell_cfg, spec.quantities)
        return SweepRecord(g, k, spec.kind.value, res.scans)
    except (PTQuantumError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return SweepRecord(g, k, spec.kind.value, {q: _nan_scan() for q in spec.quantities}, str(exc))


def grid_sweep(spec: GridSpec, threads: int = 1) -> list[SweepRecord]:
    """One time scan per cell, returned in grid order for any ``threads``."""
    jobs = [(spec, g, k) for g, k in spec.cells()]
    if threads <= 1 or len(jobs) <= 1:
        return [_run_cell(j) for j in jobs]
    workers = min(threads, len(jobs))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


# --------------------------------------------------------------- comparison


@dataclass(frozen=True)
class CompareRow:
    gamma_over_eps: float
    kappa_over_eps: float
    kind_a: str
    kind_b: str
    quantity: str
    value_a: float
    value_b: float
    comparison: float | None


def _index(records) -> dict:
    out = {}
    for r in records:
        for q, s in r.scans.items():
            out[(fmt(r.gamma_over_eps), fmt(r.kappa_over_eps), q)] = (r, s.max_value)
    return out


def compare_sweeps(a, b, mode: str = "ratio") -> list[CompareRow]:
    """Cellwise comparison of max-over-time values of two sweeps on the same grid.

    Empty (``None``) comparisons mark zero denominators and nan inputs.
    """
    if mode not in COMPARE_MODES:
        raise ValueError(f"mode must be one of {', '.join(COMPARE_MODES)}")
    ia, ib = _index(a), _index(b)
    if set(ia) != set(ib):
        missing = sorted(set(ia) ^ set(ib))[:3]
        raise GridMismatch(f"sweeps cover different cells/quantities, e.g. {missing}")
    rows = []
    for key, (ra, va) in ia.items():
        q = key[2]
        if mode == "bell_excess_ratio" and q != "bell":
            continue
        rb, vb = ib[key]
        if math.isnan(va) or math.isnan(vb):
            comp = None
        elif mode == "difference":
            comp = va - vb
        elif mode == "ratio":
            comp = va / vb if vb != 0 else None
        else:
            den = vb - CLASSICAL_BELL
            comp = (va - CLASSICAL_BELL) / den if den != 0 else None
        rows.append(CompareRow(ra.gamma_over_eps, ra.kappa_over_eps, ra.kind, rb.kind, q, va, vb, comp))
    if mode == "bell_excess_ratio" and not rows:
        raise GridMismatch("bell_excess_ratio needs the bell quantity in both sweeps")
    return rows


# ------------------------------------------------------------------ boundary


def _max_over_time(spec: GridSpec, quantity: str, g: float, k: float) -> float:
    res = time_scan(spec.config(g, k), spec.init, spec.scan, spec.bell_cfg, (quantity,))
    return res[quantity].max_value


def boundary(spec: GridSpec, quantity: str, threshold: float | None = None) -> list[tuple[float, float]]:
    """Points ``(gamma/eps, kappa/eps)`` where the max-over-time quantity crosses ``threshold``.

    Each kappa row is scanned on the grid's gamma axis; every sign change is
    refined by bisection.  Rows without a crossing contribute nothing.
    """
    _check_quantities([quantity])
    if threshold is None:
        threshold = BELL_THRESHOLD if quantity == "bell" else DEFAULT_THRESHOLD
    gammas = spec.gammas
    points = []
    for k in spec.kappas:
        k = float(k)
        above = [_max_over_time(spec, quantity, float(g), k) > threshold for g in gammas]
        for i in range(len(gammas) - 1):
            if above[i] == above[i + 1]:
                continue
            lo, hi = float(gammas[i]), float(gammas[i + 1])
            lo_above = above[i]
            for _ in range(BISECTION_STEPS):
                mid = 0.5 * (lo + hi)
                if (_max_over_time(spec, quantity, mid, k) > threshold) == lo_above:
                    lo = mid
                else:
                    hi = mid
            points.append((0.5 * (lo + hi), k))
    return points


# --------------------------------------------------------------------- files


def record_rows(records) -> list[list[str]]:
    rows = []
    for r in records:
        for q in QUANTITIES:
            if q not in r.scans:
                continue
            s = r.scans[q]
            rows.append(
                [
                    fmt(r.gamma_over_eps),
                    fmt(r.kappa_over_eps),
                    r.kind,
                    q,
                    fmt(s.max_value),
                    fmt(s.t_at_max),
                    fmt(s.n_at_max),
                    fmt(s.v_max),
                    fmt(s.t_at_vmax),
                ]
            )
    return rows


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write_text(path, text: str):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _json_value(cell: str):
    if cell == "":
        return None
    try:
        return float(cell)
    except ValueError:
        return cell


def render(header, rows, fmt_name: str = "csv") -> str:
    if fmt_name == "csv":
        return _csv_text(header, rows)
    if fmt_name == "json":
        objs = [{h: _json_value(c) if h not in ("kind", "kind_a", "kind_b", "quantity") else c for h, c in zip(header, row)} for row in rows]
        return json.dumps(objs, indent=1) + "\n"
    raise ValueError(f"format must be csv or json, got {fmt_name!r}")


def write_records(records, path, format: str = "csv") -> None:
    """Write one row per (cell, quantity), sorted in grid order."""
    _write_text(path, render(CSV_HEADER, record_rows(records), format))


def compare_rows(rows: list[CompareRow]) -> list[list[str]]:
    return [
        [fmt(r.gamma_over_eps), fmt(r.kappa_over_eps), r.kind_a, r.kind_b, r.quantity, fmt(r.value_a), fmt(r.value_b), fmt(r.comparison)]
        for r in rows
    ]


def write_table(header, rows, path, format: str = "csv") -> None:
    _write_text(path, render(header, rows, format))


def _rows_from_file(path) -> list[dict]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    stripped = text.lstrip()
    if stripped.startswith("["):
        return [{k: fmt(v) if not isinstance(v, str) else v for k, v in obj.items()} for obj in json.loads(text)]
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_HEADER:
        raise ValueError(f"{path}: not a sweep file (header {reader.fieldnames})")
    return list(reader)


def read_records(path) -> list[SweepRecord]:
    """Inverse of :func:`write_records` (CSV or JSON, detected from content)."""
    records: dict = {}
    order = []
    for row in _rows_from_file(path):
        key = (row["gamma_over_eps"], row["kappa_over_eps"], row["kind"])
        if key not in records:
            records[key] = SweepRecord(float(key[0]), float(key[1]), key[2], {})
            order.append(key)
        records[key].scans[row["quantity"]] = QuantityScan(
            *(float(row[h]) for h in ("max_value", "t_at_max", "n_at_max", "v_max", "t_at_vmax"))
        )
    for rec in records.values():
        if all(math.isnan(s.max_value) for s in rec.scans.values()):
            rec.error = "error cell"
    return [records[k] for k in order]


__all__ = [
    "BISECTION_STEPS",
    "CSV_HEADER",
    "CompareRow",
    "GridSpec",
    "QuantityScan",
    "SweepRecord",
    "TimeScanConfig",
    "TimeScanResult",
    "boundary",
    "compare_sweeps",
    "grid_sweep",
    "parse_range",
    "read_records",
    "time_scan",
    "time_series",
    "write_records",
]
