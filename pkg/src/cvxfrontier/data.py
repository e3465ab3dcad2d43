"""Datasets, CSV ingestion, validation, and the synthetic benchmark generator."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "DgpConfig",
    "ValidationError",
    "load_csv",
    "write_csv",
    "generate_dgp",
    "validate",
]


class ValidationError(ValueError):
    """Raised when a dataset violates its invariants.

    Carries the full list of violations in ``violations`` so callers can
    report every problem at once instead of fixing them one by one.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValidationError([f"{name} must be 1- or 2-dimensional, got ndim={arr.ndim}"])
    return arr


@dataclass(frozen=True)
class Dataset:
    """Immutable observation matrices for one estimation problem.

    ``x`` is n-by-m (inputs), ``y`` is n-by-q (outputs; q=1 for everything
    except the directional-distance models). ``z`` (contextual variables)
    and ``b`` (undesirable outputs) are optional. Column names travel with
    each block so CSV output and reports stay self-describing.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None = None
    b: np.ndarray | None = None
    x_names: tuple[str, ...] = ()
    y_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()
    b_names: tuple[str, ...] = ()

    def __post_init__(self):
        x = _as_matrix(self.x, "x")
        y = _as_matrix(self.y, "y")
        z = None if self.z is None else _as_matrix(self.z, "z")
        b = None if self.b is None else _as_matrix(self.b, "b")
        for arr, name in ((x, "x"), (y, "y"), (z, "z"), (b, "b")):
            if arr is not None:
                arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "b", b)

        def default_names(prefix, k):
            return tuple(f"{prefix}{j + 1}" for j in range(k))

        object.__setattr__(self, "x_names", tuple(self.x_names) or default_names("x", x.shape[1]))
        object.__setattr__(self, "y_names", tuple(self.y_names) or default_names("y", y.shape[1]))
        if z is not None:
            object.__setattr__(self, "z_names", tuple(self.z_names) or default_names("z", z.shape[1]))
        if b is not None:
            object.__setattr__(self, "b_names", tuple(self.b_names) or default_names("b", b.shape[1]))

        problems = self._structural_problems()
        if problems:
            raise ValidationError(problems)

    def _structural_problems(self) -> list[str]:
        problems = []
        n = self.x.shape[0]
        if n < 1:
            problems.append("observation count must be at least 1")
        if self.x.shape[1] < 1:
            problems.append("at least one input column required")
        if self.y.shape[1] < 1:
            problems.append("at least one output column required")
        for arr, name in ((self.y, "y"), (self.z, "z"), (self.b, "b")):
            if arr is not None and arr.shape[0] != n:
                problems.append(f"row count mismatch: x has {n} rows, {name} has {arr.shape[0]}")
        for arr, name, names in (
            (self.x, "x", self.x_names),
            (self.y, "y", self.y_names),
            (self.z, "z", self.z_names),
            (self.b, "b", self.b_names),
        ):
            if arr is None:
                continue
            if len(names) != arr.shape[1]:
                problems.append(f"{name} has {arr.shape[1]} columns but {len(names)} names")
            bad = np.argwhere(~np.isfinite(arr))
            for row, col in bad[:20]:
                problems.append(f"non-finite value in {name} at row {row}, column {col}")
        return problems

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return self.y.shape[1]

    @property
    def r(self) -> int:
        return 0 if self.z is None else self.z.shape[1]

    @property
    def s(self) -> int:
        return 0 if self.b is None else self.b.shape[1]


@dataclass(frozen=True)
class DgpConfig:
    """Configuration of the two-input synthetic benchmark process.

    Inputs are drawn i.i.d. from U[input_low, input_high] (n-by-2, row
    major), then y_i = x_i1^0.4 * x_i2^0.4 + u_i with u_i ~ N(0, noise_sd^2).
    The stream discipline is fixed: all uniforms first, then all normals,
    from a PCG64 generator seeded with ``seed``, so equal configs produce
    bit-identical datasets on every platform.
    """

    n: int
    input_low: float = 1.0
    input_high: float = 10.0
    noise_sd: float = 0.7
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.n < 1:
            problems.append("n must be at least 1")
        if not self.input_low < self.input_high:
            problems.append("input_low must be strictly below input_high")
        if self.noise_sd < 0:
            problems.append("noise_sd must be nonnegative")
        if problems:
            raise ValidationError(problems)


def generate_dgp(cfg: DgpConfig) -> Dataset:
    """Generate the synthetic two-input benchmark dataset for ``cfg``."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    x = rng.uniform(cfg.input_low, cfg.input_high, size=(cfg.n, 2))
    u = rng.normal(0.0, cfg.noise_sd, size=cfg.n) if cfg.noise_sd > 0 else np.zeros(cfg.n)
    y = x[:, 0] ** 0.4 * x[:, 1] ** 0.4 + u
    return Dataset(x=x, y=y.reshape(-1, 1), x_names=("x1", "x2"), y_names=("y",))


def _parse_cell(raw: str, row: int, col_name: str, problems: list[str]) -> float:
    try:
        return float(raw)
    except ValueError:
        problems.append(f"non-numeric cell at row {row}, column '{col_name}': {raw!r}")
        return np.nan


def load_csv(
    path,
    x_select: list[str],
    y_select: list[str],
    z_select: list[str] | None = None,
    b_select: list[str] | None = None,
) -> Dataset:
    """Read a headed CSV file and project the selected columns into a Dataset.

    Column order follows the selection lists, unselected columns are
    dropped. Every selected name must appear exactly once in the header.
    All parse errors are aggregated into a single ValidationError.
    """
    x_select = list(x_select or [])
    y_select = list(y_select or [])
    z_select = list(z_select) if z_select else None
    b_select = list(b_select) if b_select else None
    if not x_select or not y_select:
        raise ValidationError(["x and y selections must both be non-empty"])

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError([f"{path}: file is empty, header row required"]) from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]

    problems = []
    positions: dict[str, int] = {}
    selected = x_select + y_select + (z_select or []) + (b_select or [])
    for name in selected:
        hits = [i for i, h in enumerate(header) if h == name]
        if len(hits) == 0:
            problems.append(f"unknown column name '{name}' (header: {', '.join(header)})")
        elif len(hits) > 1:
            problems.append(f"column name '{name}' appears {len(hits)} times in the header")
        else:
            positions[name] = hits[0]
    if problems:
        raise ValidationError(problems)
    if not rows:
        raise ValidationError([f"{path}: no data rows"])

    def block(names):
        out = np.empty((len(rows), len(names)))
        for i, row in enumerate(rows):
            for j, name in enumerate(names):
                pos = positions[name]
                raw = row[pos].strip() if pos < len(row) else ""
                out[i, j] = _parse_cell(raw, i, name, problems)
        return out

    x = block(x_select)
    y = block(y_select)
    z = block(z_select) if z_select else None
    b = block(b_select) if b_select else None
    if problems:
        raise ValidationError(problems)
    return Dataset(
        x=x, y=y, z=z, b=b,
        x_names=tuple(x_select), y_names=tuple(y_select),
        z_names=tuple(z_select or ()), b_names=tuple(b_select or ()),
    )


def write_csv(ds: Dataset, path) -> None:
    """Write all blocks of ``ds`` to a headed CSV file.

    Floats are written with shortest round-trip formatting, so
    ``load_csv(write_csv(ds))`` reproduces ``ds`` exactly.
    """
    names = list(ds.x_names) + list(ds.y_names) + list(ds.z_names) + list(ds.b_names)
    blocks = [ds.x, ds.y] + ([ds.z] if ds.z is not None else []) + ([ds.b] if ds.b is not None else [])
    data = np.hstack(blocks)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


def validate(
    ds: Dataset,
    *,
    require_positive_y: bool = False,
    require_z: bool = False,
    require_b: bool = False,
) -> None:
    """Check model-conditional requirements on top of the Dataset invariants.

    Raises ValidationError with an aggregated report; returns None when the
    dataset passes. ``require_positive_y`` guards the log-domain of the
    multiplicative models.
    """
    problems = ds._structural_problems()
    if require_z and ds.z is None:
        problems.append("model requires contextual variables but z block is absent")
    if require_b and ds.b is None:
        problems.append("model requires undesirable outputs but b block is absent")
    if require_positive_y:
        bad = np.argwhere(ds.y <= 0)
        for row, col in bad[:20]:
            problems.append(
                f"y must be strictly positive for multiplicative models; "
                f"y[{row}, {col}] = {ds.y[row, col]}"
            )
    if problems:
        raise ValidationError(problems)
