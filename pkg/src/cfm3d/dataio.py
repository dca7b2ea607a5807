"""Impact-measurement datasets: CSV parsing, filtering, train/test split, synthesis.

CSV schema (UTF-8, ``.`` decimal separator, LF or CRLF line endings)::

    label,distance_m,height_m,velocity_mps,force_n,repetition

Units are fixed: metres, metres per second, newtons.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, TextIO

import numpy as np

from cfm3d.errors import ContractError, DatasetError, ParseError, UnmatchedStateWarning

log = logging.getLogger(__name__)

HEADER = ("label", "distance_m", "height_m", "velocity_mps", "force_n", "repetition")
DEFAULT_TOLERANCE = 1e-6
DEVICE_LIMIT_N = 500.0


@dataclass(frozen=True)
class MeasurementSample:
    distance_m: float
    height_m: float
    velocity_mps: float
    force_n: float
    repetition: int = 1
    # Synthesis annotations (e.g. "out-of-domain"); not serialized, not compared.
    flags: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        for name in ("distance_m", "height_m", "velocity_mps", "force_n"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ContractError(f"{name} must be finite and > 0, got {value!r}")
        if self.repetition < 1:
            raise ContractError(f"repetition must be >= 1, got {self.repetition}")

    @property
    def state(self) -> tuple[float, float, float]:
        return (self.distance_m, self.height_m, self.velocity_mps)


@dataclass(frozen=True)
class MeasurementSet:
    samples: tuple[MeasurementSample, ...]
    label: str
    provenance: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def columns(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(d, h, v, force)`` as float arrays."""
        arr = np.array([(s.distance_m, s.height_m, s.velocity_mps, s.force_n) for s in self.samples], dtype=float)
        if arr.size == 0:
            arr = np.zeros((0, 4))
        return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]

    def states(self) -> list[tuple[float, float, float]]:
        """Distinct (d, h, v) states in first-seen order."""
        return list(dict.fromkeys(s.state for s in self.samples))

    def with_samples(self, samples: Iterable[MeasurementSample], note: str | None = None) -> MeasurementSet:
        prov = self.provenance + ((note,) if note else ())
        return MeasurementSet(tuple(samples), self.label, prov)


@dataclass(frozen=True)
class GridSpec:
    """Axis levels of a measurement grid. Any axis may be empty when unused."""

    distances_m: tuple[float, ...]
    heights_m: tuple[float, ...]
    velocities_mps: tuple[float, ...] = ()

    def __post_init__(self):
        for name in ("distances_m", "heights_m", "velocities_mps"):
            levels = tuple(float(x) for x in getattr(self, name))
            if any(b <= a for a, b in zip(levels, levels[1:])):
                raise ContractError(f"{name} must be strictly increasing: {levels}")
            object.__setattr__(self, name, levels)

    def states(self) -> list[tuple[float, float, float]]:
        if not (self.distances_m and self.heights_m and self.velocities_mps):
            raise ContractError("grid needs distance, height and velocity levels to enumerate states")
        return list(itertools.product(self.distances_m, self.heights_m, self.velocities_mps))

    def positions(self) -> list[tuple[float, float]]:
        return list(itertools.product(self.distances_m, self.heights_m))


def _parse_rows(source: TextIO | str) -> list[tuple[str, MeasurementSample]]:
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("empty file: no header row") from None
    header = [h.strip() for h in header]
    if tuple(header) != HEADER:
        raise ParseError(1, f"expected header {','.join(HEADER)}, got {','.join(header)}")
    rows = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(HEADER):
            raise ParseError(line, f"expected {len(HEADER)} columns, got {len(row)}")
        label = row[0].strip()
        try:
            d, h, v, f = (float(x) for x in row[1:5])
            rep = int(row[5])
        except ValueError as exc:
            raise ParseError(line, f"non-numeric field ({exc})") from None
        try:
            rows.append((label, MeasurementSample(d, h, v, f, rep)))
        except ContractError as exc:
            raise ParseError(line, str(exc)) from None
    if not rows:
        raise DatasetError("dataset contains no data rows")
    return rows


def parse_datasets(source: TextIO | str) -> dict[str, MeasurementSet]:
    """Parse a CSV stream into one :class:`MeasurementSet` per label (first-seen order)."""
    grouped: dict[str, list[MeasurementSample]] = {}
    for label, sample in _parse_rows(source):
        grouped.setdefault(label, []).append(sample)
    return {label: MeasurementSet(tuple(s), label, ("parsed",)) for label, s in grouped.items()}


def parse_dataset(source: TextIO | str) -> MeasurementSet:
    """Parse a single-label CSV stream. Multi-label files need :func:`parse_datasets`."""
    sets = parse_datasets(source)
    if len(sets) > 1:
        raise ContractError(f"file holds {len(sets)} labels ({', '.join(sets)}); use parse_datasets")
    return next(iter(sets.values()))


def serialize_dataset(sets: MeasurementSet | Iterable[MeasurementSet]) -> str:
    if isinstance(sets, MeasurementSet):
        sets = [sets]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for mset in sets:
        for s in mset.samples:
            writer.writerow([mset.label, repr(s.distance_m), repr(s.height_m), repr(s.velocity_mps),
                             repr(s.force_n), s.repetition])
    return buf.getvalue()


def filter_valid(mset: MeasurementSet, max_force_n: float = DEVICE_LIMIT_N) -> MeasurementSet:
    """Drop samples whose peak force exceeds ``max_force_n``.

    A force exactly at the limit is kept: only readings that *exceed* the
    device range are discarded.
    """
    if not max_force_n > 0:
        raise ContractError(f"max_force_n must be > 0, got {max_force_n}")
    kept = [s for s in mset.samples if s.force_n <= max_force_n]
    removed = len(mset) - len(kept)
    if not kept:
        raise DatasetError(f"all {len(mset)} samples of {mset.label!r} exceed {max_force_n} N")
    if removed:
        log.info("%s: removed %d of %d samples above %g N", mset.label, removed, len(mset), max_force_n)
    return mset.with_samples(kept, f"filter_valid(max_force_n={max_force_n:g}): removed {removed}")


def _matches(value: float, levels: tuple[float, ...], tol: float) -> bool:
    return any(abs(value - lv) <= tol for lv in levels)


def split_train_test(mset: MeasurementSet, train_grid: GridSpec,
                     tolerance: float = DEFAULT_TOLERANCE) -> tuple[MeasurementSet, MeasurementSet]:
    """Partition samples into those on the training grid and the rest.

    Training-grid states that match no sample raise an
    :class:`UnmatchedStateWarning` listing them.
    """
    if tolerance < 0:
        raise ContractError("tolerance must be >= 0")
    g = train_grid
    train, test = [], []
    for s in mset.samples:
        on_grid = (_matches(s.distance_m, g.distances_m, tolerance)
                   and _matches(s.height_m, g.heights_m, tolerance)
                   and _matches(s.velocity_mps, g.velocities_mps, tolerance))
        (train if on_grid else test).append(s)

    unmatched = [st for st in g.states()
                 if not any(all(abs(a - b) <= tolerance for a, b in zip(st, s.state)) for s in train)]
    if unmatched:
        warnings.warn(UnmatchedStateWarning(f"{len(unmatched)} training states without samples: {unmatched}"),
                      stacklevel=2)
    return (mset.with_samples(train, "split_train_test: train"),
            mset.with_samples(test, "split_train_test: test"))


def synthesize_dataset(model, grid: GridSpec, noise_sd_n: float = 0.0, repetitions: int = 1,
                       seed: int = 0, label: str | None = None) -> MeasurementSet:
    """Generate measurements from a force model on every grid state.

    Force is ``exp(linear predictor) + N(0, noise_sd_n)``; the noise is added in
    newtons, not in log space. Samples outside the model's fitted domain carry
    the ``"out-of-domain"`` flag.
    """
    if repetitions < 1:
        raise ContractError("repetitions must be >= 1")
    if noise_sd_n < 0:
        raise ContractError("noise_sd_n must be >= 0")
    rng = np.random.default_rng(seed)
    samples = []
    for d, h, v in grid.states():
        base = float(np.exp(model.linear_predictor(d, h, v)))
        flags = () if model.in_domain(d, h, v) else ("out-of-domain",)
        for rep in range(1, repetitions + 1):
            force = base + (rng.normal(0.0, noise_sd_n) if noise_sd_n > 0 else 0.0)
            extra = ()
            if force <= 0:
                force, extra = np.finfo(float).tiny, ("clipped",)
            samples.append(MeasurementSample(d, h, v, float(force), rep, flags + extra))
    note = f"synthesize_dataset(noise_sd_n={noise_sd_n:g}, repetitions={repetitions}, seed={seed})"
    return MeasurementSet(tuple(samples), label or model.label, (note,))


def slice_height(mset: MeasurementSet, height_m: float, tolerance: float = DEFAULT_TOLERANCE) -> MeasurementSet:
    return mset.with_samples((s for s in mset.samples if abs(s.height_m - height_m) <= tolerance),
                             f"slice_height({height_m:g})")


def distinct_levels(values: Iterable[float], tolerance: float = DEFAULT_TOLERANCE) -> list[float]:
    """Sorted distinct values, merging those closer than ``tolerance``."""
    out: list[float] = []
    for x in sorted(values):
        if not out or x - out[-1] > tolerance:
            out.append(x)
    return out


def replace_label(mset: MeasurementSet, label: str) -> MeasurementSet:
    return replace(mset, label=label)
