"""Quasi-fractal circular antenna array geometry.

The array is a ring of ``num_cells`` circular cells whose centers sit on a
circle of radius ``inter_radius`` in the transverse (x, y) plane; each cell
carries ``slots_per_cell`` logical element slots equally spaced on a circle
of radius ``inner_radius``.  Depending on the sharing case, slots of
different cells land on the same physical point and are merged into one
element, so the array can expose more logical slots than physical elements.

Sharing cases:

1. isolated cells, no shared elements
2. adjacent cells share one element (tangent cells)
3. adjacent cells share two elements (intersecting cells)
4. chain sharing across ``chain_cells`` adjacent cells, built best effort and
   validated against the target element count
5. every cell passes through the array center (cell radius equals the ring
   radius); all cells share the center and adjacent cells one more element

Every construction uses per-cell azimuth offsets of the form
``offset + n / num_cells`` (in turns), which keeps the n-fold rotational
symmetry of the slot grid: rotating the array by one cell step maps slot
(n, k) onto slot (n + 1, k).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import InfeasibleGeometry, LayoutSpecError

TWO_PI = 2.0 * math.pi

SHARING_CASES = (1, 2, 3, 4, 5)

# Offsets are searched over one slot period [0, 1/K) when no exact rational
# solution exists (shifting the offset by a full slot step only relabels
# slots).  The search mesh combines the rationals j/(4NK), which cover every
# alignment the exact solver could produce, with a uniform fill-in grid.
_FALLBACK_UNIFORM_POINTS = 64


@dataclass(frozen=True)
class LayoutSpec:
    """Parameters selecting one sharing case of the quasi-fractal array.

    ``chain_cells`` is only meaningful (and required) for case 4, where it
    gives the number of adjacent cells sharing a chain of elements.
    ``inner_radius`` may override the free cell radius of case 1; the other
    cases derive it from the sharing constraints.  ``dedup_tol`` is the
    coincidence distance below which two slots are merged into one element
    (default ``1e-9 * inter_radius``).
    """

    case_id: int
    num_cells: int
    slots_per_cell: int
    chain_cells: int | None = None
    inter_radius: float = 1.0
    inner_radius: float | None = None
    dedup_tol: float | None = None

    def __post_init__(self):
        if self.case_id not in SHARING_CASES:
            raise LayoutSpecError(f"case_id must be one of {SHARING_CASES}, got {self.case_id!r}")
        if not isinstance(self.num_cells, int) or self.num_cells < 1:
            raise LayoutSpecError(f"num_cells must be a positive integer, got {self.num_cells!r}")
        if not isinstance(self.slots_per_cell, int) or self.slots_per_cell < 3:
            raise LayoutSpecError(f"slots_per_cell must be an integer >= 3, got {self.slots_per_cell!r}")
        if self.case_id != 1 and self.num_cells < 2:
            raise LayoutSpecError(f"case {self.case_id} shares elements between cells and needs num_cells >= 2")
        if self.case_id == 4:
            m = self.chain_cells
            if m is None:
                raise LayoutSpecError("case 4 requires chain_cells")
            if not isinstance(m, int) or not 2 <= m < self.num_cells:
                raise LayoutSpecError(f"chain_cells must satisfy 2 <= chain_cells < num_cells, got {m!r}")
        elif self.chain_cells is not None:
            raise LayoutSpecError(f"chain_cells is only valid for case 4, got case {self.case_id}")
        if not (self.inter_radius > 0 and math.isfinite(self.inter_radius)):
            raise LayoutSpecError(f"inter_radius must be positive and finite, got {self.inter_radius!r}")
        if self.inner_radius is not None:
            if self.case_id != 1:
                raise LayoutSpecError("inner_radius can only be overridden for case 1; other cases derive it")
            if not (self.inner_radius > 0 and math.isfinite(self.inner_radius)):
                raise LayoutSpecError(f"inner_radius must be positive and finite, got {self.inner_radius!r}")
        if self.dedup_tol is not None and not (self.dedup_tol > 0 and math.isfinite(self.dedup_tol)):
            raise LayoutSpecError(f"dedup_tol must be positive and finite, got {self.dedup_tol!r}")

    @property
    def tol(self) -> float:
        """Coincidence tolerance in meters."""
        return self.dedup_tol if self.dedup_tol is not None else 1e-9 * self.inter_radius

    @property
    def num_slots(self) -> int:
        return self.num_cells * self.slots_per_cell


def element_count(spec: LayoutSpec) -> int:
    """Closed-form number of distinct physical elements for a sharing case."""
    n, k = spec.num_cells, spec.slots_per_cell
    if spec.case_id == 1:
        return n * k
    if spec.case_id == 2:
        return n * (k - 1)
    if spec.case_id == 3:
        return n * (k - 2)
    if spec.case_id == 4:
        count = n * (k - spec.chain_cells)
        if count <= 0:
            raise LayoutSpecError(
                f"chain_cells={spec.chain_cells} leaves no elements for slots_per_cell={k}"
            )
        return count
    return n * (k - 2) + 1


@dataclass(frozen=True, eq=False)
class ArrayLayout:
    """Deduplicated element positions plus the slot-to-element association.

    ``positions`` has shape (U, 3) in meters; ``slot_map`` has shape
    (num_cells, slots_per_cell) and maps logical slot (n, k) to a row of
    ``positions``.  ``center`` is the array center the rotational symmetry
    refers to (moves with rigid transforms).
    """

    spec: LayoutSpec
    inner_radius: float
    positions: np.ndarray
    slot_map: np.ndarray
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.positions.setflags(write=False)
        self.slot_map.setflags(write=False)

    @property
    def num_elements(self) -> int:
        return len(self.positions)

    @property
    def num_cells(self) -> int:
        return self.spec.num_cells

    @property
    def slots_per_cell(self) -> int:
        return self.spec.slots_per_cell

    def slot_positions(self) -> np.ndarray:
        """Positions indexed by logical slot, shape (num_cells, slots_per_cell, 3)."""
        return self.positions[self.slot_map]

    def element_multiplicity(self) -> np.ndarray:
        """Number of logical slots mapping onto each element."""
        return np.bincount(self.slot_map.ravel(), minlength=self.num_elements)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation about the array axis plus transverse/axial translation.

    The rotation is applied about the axis through the layout center before
    the translation, so ``t.inverse()`` undoes ``t`` exactly.
    """

    rotation: float = 0.0
    lateral_offset: tuple[float, float] = (0.0, 0.0)
    axial_offset: float = 0.0

    def __post_init__(self):
        values = (self.rotation, *self.lateral_offset, self.axial_offset)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"transform components must be finite, got {values}")

    def inverse(self) -> "RigidTransform":
        dx, dy = self.lateral_offset
        return RigidTransform(-self.rotation, (-dx, -dy), -self.axial_offset)

    @property
    def is_identity(self) -> bool:
        return self.rotation == 0.0 and self.lateral_offset == (0.0, 0.0) and self.axial_offset == 0.0


# ---------------------------------------------------------------------------
# construction


def _slot_grid(num_cells: int, slots_per_cell: int, inter_radius: float,
               inner_radius: float, offset_turns: float) -> np.ndarray:
    """Raw slot positions (num_cells, slots_per_cell, 3) before merging."""
    n = np.arange(num_cells, dtype=float)[:, None]
    k = np.arange(slots_per_cell, dtype=float)[None, :]
    cell_angle = TWO_PI * n / num_cells
    slot_angle = TWO_PI * (offset_turns + n / num_cells + k / slots_per_cell)
    x = inter_radius * np.cos(cell_angle) + inner_radius * np.cos(slot_angle)
    y = inter_radius * np.sin(cell_angle) + inner_radius * np.sin(slot_angle)
    out = np.zeros((num_cells, slots_per_cell, 3))
    out[..., 0] = x
    out[..., 1] = y
    return out


def _merge_slots(slots: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Merge coincident slots; the lowest slot index keeps the element."""
    flat = slots.reshape(-1, 3)
    d2 = np.sum((flat[:, None, :] - flat[None, :, :]) ** 2, axis=-1)
    close = d2 <= tol * tol
    rep = np.argmax(close, axis=1)  # first index within tolerance (<= own index)
    uniq, slot_map = np.unique(rep, return_inverse=True)
    return flat[uniq].copy(), slot_map.reshape(slots.shape[:2]).astype(np.int64)


def _exact_offset(case_id: int, num_cells: int, slots_per_cell: int,
                  step_count: int = 1) -> Fraction | None:
    """Rational azimuth offset (in turns) aligning the shared points, if any.

    Cases 2-4 need ``slots_per_cell * (num_cells + 2) / (2 * num_cells)`` to
    be an integer, case 5 the analogous expression with ``num_cells - 2``;
    both conditions are independent of the offset itself, so when they fail
    no offset can realize the sharing and ``None`` is returned.
    """
    n, k = num_cells, slots_per_cell
    if case_id == 2:
        if (Fraction(k, n) + Fraction(k, 2)).denominator != 1:
            return None
        return (Fraction(1, 2 * n) + Fraction(1, 4)) % 1
    if case_id in (3, 4):
        if (Fraction(k, n) + Fraction(k, 2)).denominator != 1:
            return None
        return (Fraction(1, 2 * n) + Fraction(1, 4) + Fraction(step_count, 2 * k)) % 1
    if case_id == 5:
        if Fraction(k * (n - 2), 2 * n).denominator != 1:
            return None
        return Fraction(1, 2)
    return Fraction(0)


def _fallback_offsets(num_cells: int, slots_per_cell: int) -> np.ndarray:
    """Search mesh over one slot period of the azimuth offset."""
    n, k = num_cells, slots_per_cell
    rational = np.arange(4 * n) / (4.0 * n * k)
    uniform = np.arange(_FALLBACK_UNIFORM_POINTS) / (_FALLBACK_UNIFORM_POINTS * k)
    return np.unique(np.concatenate([rational, uniform]))


def _first_pair_shared_counts(num_cells: int, slots_per_cell: int, inter_radius: float,
                              inner_radius: float, offsets: np.ndarray, tol: float) -> np.ndarray:
    """Shared-element count between cells 0 and 1 for each candidate offset."""
    k = np.arange(slots_per_cell) / slots_per_cell
    t0 = offsets[:, None] + k[None, :]
    t1 = offsets[:, None] + 1.0 / num_cells + k[None, :]
    c0 = np.array([inter_radius, 0.0])
    ang = TWO_PI / num_cells
    c1 = inter_radius * np.array([math.cos(ang), math.sin(ang)])
    p0 = c0 + inner_radius * np.stack([np.cos(TWO_PI * t0), np.sin(TWO_PI * t0)], axis=-1)
    p1 = c1 + inner_radius * np.stack([np.cos(TWO_PI * t1), np.sin(TWO_PI * t1)], axis=-1)
    d2 = np.sum((p0[:, :, None, :] - p1[:, None, :, :]) ** 2, axis=-1)
    return np.sum(d2 <= tol * tol, axis=(1, 2))


def _ring_distance(a: int, b: int, num_cells: int) -> int:
    d = abs(a - b) % num_cells
    return min(d, num_cells - d)


def _pairwise_shared(slot_map: np.ndarray) -> dict[tuple[int, int], int]:
    cells = [set(map(int, row)) for row in slot_map]
    counts = {}
    for a in range(len(cells)):
        for b in range(a + 1, len(cells)):
            counts[(a, b)] = len(cells[a] & cells[b])
    return counts


def _sharing_pattern_ok(case_id: int, slot_map: np.ndarray, num_cells: int) -> bool:
    if num_cells < 2:
        return True
    counts = _pairwise_shared(slot_map)
    if case_id == 1:
        return all(c == 0 for c in counts.values())
    if case_id in (2, 3):
        want = 1 if case_id == 2 else 2
        return all(
            c == (want if _ring_distance(a, b, num_cells) == 1 else 0)
            for (a, b), c in counts.items()
        )
    if case_id == 5:
        common = set(map(int, slot_map[0]))
        for row in slot_map[1:]:
            common &= set(map(int, row))
        if len(common) != 1:
            return False
        return all(
            c == (2 if _ring_distance(a, b, num_cells) == 1 else 1)
            for (a, b), c in counts.items()
        )
    # case 4: the count check is authoritative; require the sharing to be
    # uniform over ring distances so the symmetry is not accidental.
    by_distance: dict[int, set[int]] = {}
    for (a, b), c in counts.items():
        by_distance.setdefault(_ring_distance(a, b, num_cells), set()).add(c)
    return all(len(v) == 1 for v in by_distance.values())


def _candidate_builds(spec: LayoutSpec):
    """Yield (inner_radius, offset_turns) attempts in deterministic order."""
    n, k, big_r = spec.num_cells, spec.slots_per_cell, spec.inter_radius
    if spec.case_id == 1:
        r = spec.inner_radius if spec.inner_radius is not None else big_r / 4.0
        yield r, 0.0
        return
    if spec.case_id == 5:
        exact = _exact_offset(5, n, k)
        if exact is not None:
            yield big_r, float(exact)
        return
    if spec.case_id in (2, 3):
        if spec.case_id == 2:
            r = big_r * math.sin(math.pi / n)
        else:
            r = big_r * math.sin(math.pi / n) / math.cos(math.pi / k)
        radii_steps = [(r, 1)]
    else:  # case 4: scan chain step counts, smallest first
        radii_steps = []
        for step in range(1, k):
            c = math.cos(math.pi * step / k)
            if c <= 1e-12:
                break
            radii_steps.append((big_r * math.sin(math.pi / n) / c, step))
    for r, step in radii_steps:
        exact = _exact_offset(spec.case_id, n, k, step)
        if exact is not None:
            yield r, float(exact)
        offsets = _fallback_offsets(n, k)
        shared = _first_pair_shared_counts(n, k, big_r, r, offsets, spec.tol)
        for off in offsets[shared >= 1]:
            if exact is not None and abs(off - float(exact) % (1.0 / k)) < 1e-15:
                continue
            yield r, float(off)


def build_layout(spec: LayoutSpec) -> ArrayLayout:
    """Construct the deduplicated element layout realizing a sharing case.

    Raises :class:`InfeasibleGeometry` when no azimuth offset places the
    required shared points on the slot grids of all cells, or when the merge
    produces a different element count than the case formula (extra or
    missing coincidences).
    """
    expected = element_count(spec)
    tried = 0
    for inner_radius, offset in _candidate_builds(spec):
        tried += 1
        slots = _slot_grid(spec.num_cells, spec.slots_per_cell, spec.inter_radius,
                           inner_radius, offset)
        positions, slot_map = _merge_slots(slots, spec.tol)
        if len(positions) != expected:
            continue
        if not _sharing_pattern_ok(spec.case_id, slot_map, spec.num_cells):
            continue
        return ArrayLayout(spec=spec, inner_radius=inner_radius,
                           positions=positions, slot_map=slot_map)
    raise InfeasibleGeometry(
        f"case {spec.case_id} with num_cells={spec.num_cells}, "
        f"slots_per_cell={spec.slots_per_cell}"
        + (f", chain_cells={spec.chain_cells}" if spec.case_id == 4 else "")
        + f": no azimuth offset yields {expected} distinct elements with the "
        f"required sharing pattern ({tried} candidate placements tried)"
    )


# ---------------------------------------------------------------------------
# validation and transforms


@dataclass(frozen=True)
class LayoutCheck:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[LayoutCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> LayoutCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "measured": c.measured,
                 "threshold": c.threshold, "detail": c.detail}
                for c in self.checks
            ],
        }


def _rotate_about(points: np.ndarray, center: np.ndarray, angle: float) -> np.ndarray:
    rel = points - center
    c, s = math.cos(angle), math.sin(angle)
    out = rel.copy()
    out[..., 0] = c * rel[..., 0] - s * rel[..., 1]
    out[..., 1] = s * rel[..., 0] + c * rel[..., 1]
    return out + center


def validate_layout(layout: ArrayLayout) -> ValidationReport:
    """Measure every structural layout invariant; failures become report rows."""
    spec = layout.spec
    tol = spec.tol
    checks = []

    u = layout.num_elements
    sm = layout.slot_map
    in_range = bool(np.all((sm >= 0) & (sm < u)))
    referenced = len(np.unique(sm)) == u if in_range else False
    shape_ok = sm.shape == (spec.num_cells, spec.slots_per_cell)
    ok = in_range and referenced and shape_ok
    checks.append(LayoutCheck(
        "slot_map_total", ok, 0.0 if ok else 1.0, 0.5,
        "every slot maps to one element and every element is referenced"))

    if u >= 2:
        d = np.linalg.norm(layout.positions[:, None, :] - layout.positions[None, :, :], axis=-1)
        min_dist = float(np.min(d[np.triu_indices(u, k=1)]))
    else:
        min_dist = math.inf
    checks.append(LayoutCheck(
        "element_separation", min_dist > tol, min_dist, tol,
        "minimum pairwise element distance exceeds the merge tolerance"))

    center = np.asarray(layout.center)
    rotated = _rotate_about(layout.slot_positions(), center, TWO_PI / spec.num_cells)
    shifted = layout.slot_positions()[(np.arange(spec.num_cells) + 1) % spec.num_cells]
    sym_err = float(np.max(np.linalg.norm(rotated - shifted, axis=-1)))
    checks.append(LayoutCheck(
        "rotational_symmetry", sym_err <= tol, sym_err, tol,
        "rotating by one cell step maps slot (n,k) onto slot (n+1,k)"))

    expected = element_count(spec)
    checks.append(LayoutCheck(
        "element_count_formula", u == expected, float(u), float(expected),
        f"built element count matches the case-{spec.case_id} closed form"))

    if spec.case_id in (2, 3, 5):
        ok = _sharing_pattern_ok(spec.case_id, sm, spec.num_cells)
        checks.append(LayoutCheck(
            "sharing_pattern", ok, 0.0 if ok else 1.0, 0.5,
            "per-pair shared-element multiplicities match the sharing case"))

    return ValidationReport(tuple(checks))


def transform_layout(layout: ArrayLayout, t: RigidTransform) -> ArrayLayout:
    """Rigidly move a layout: rotate about its center axis, then translate."""
    positions = np.asarray(layout.positions, dtype=float).copy()
    center = np.asarray(layout.center, dtype=float)
    if t.rotation != 0.0:
        positions = _rotate_about(positions, center, t.rotation)
    dx, dy = t.lateral_offset
    if dx != 0.0 or dy != 0.0 or t.axial_offset != 0.0:
        shift = np.array([dx, dy, t.axial_offset])
        positions = positions + shift
        center = center + shift
    return replace(layout, positions=positions, center=(center[0], center[1], center[2]))


# ---------------------------------------------------------------------------
# export


def layout_to_dict(layout: ArrayLayout) -> dict:
    spec = layout.spec
    return {
        "spec": {
            "case_id": spec.case_id,
            "num_cells": spec.num_cells,
            "slots_per_cell": spec.slots_per_cell,
            "chain_cells": spec.chain_cells,
            "inter_radius_m": spec.inter_radius,
            "dedup_tol_m": spec.tol,
        },
        "inner_radius_m": layout.inner_radius,
        "element_count": layout.num_elements,
        "stream_slots": spec.num_slots,
        "center_m": list(layout.center),
        "positions_m": [[float(v) for v in p] for p in layout.positions],
        "slot_map": [
            [n, k, int(layout.slot_map[n, k])]
            for n in range(spec.num_cells)
            for k in range(spec.slots_per_cell)
        ],
        "units": "meters",
    }


def write_layout_json(layout: ArrayLayout, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(layout_to_dict(layout), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_layout_csv(layout: ArrayLayout, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["element_index", "x_m", "y_m", "z_m"])
        for i, p in enumerate(layout.positions):
            writer.writerow([i, repr(float(p[0])), repr(float(p[1])), repr(float(p[2]))])
