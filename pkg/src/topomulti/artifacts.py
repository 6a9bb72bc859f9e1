"""Run outputs: per-material PGM images, a combined color map, the iteration
history as CSV, and a legacy VTK file with one cell field per material."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .fem import StructuredGrid
from .interpolation import SchemeKind, volume_fractions

# element colors for the combined map, one per material index (cycled)
PALETTE = np.array([
    [230, 200, 40],
    [40, 190, 200],
    [210, 40, 40],
    [60, 90, 200],
    [80, 170, 60],
    [150, 70, 170],
    [240, 130, 30],
    [120, 120, 120],
], dtype=np.uint8)
BACKGROUND = np.array([255, 255, 255], dtype=np.uint8)


def to_gray(field) -> np.ndarray:
    return np.rint(np.clip(field, 0.0, 1.0) * 255).astype(np.uint8)


def write_pgm(path, image) -> None:
    """Binary (P5) 8-bit grayscale; ``image`` is (rows, cols) with row 0 on top."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    rows, cols = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    return np.frombuffer(parts[4][: rows * cols], dtype=np.uint8).reshape(rows, cols)


def write_ppm(path, image) -> None:
    image = np.ascontiguousarray(image, dtype=np.uint8)
    rows, cols, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def combined_map(fractions, grid: StructuredGrid) -> np.ndarray:
    """Color each element by its dominant material when that share exceeds 0.5."""
    fractions = np.asarray(fractions)
    winner = np.argmax(fractions, axis=1)
    solid = np.max(fractions, axis=1) > 0.5
    colors = np.where(solid[:, None], PALETTE[winner % len(PALETTE)], BACKGROUND)
    return np.stack([grid.to_image(colors[:, k]) for k in range(3)], axis=-1)


def history_header(nm: int) -> list[str]:
    return (
        ["iter", "compliance"]
        + [f"V_{i}" for i in range(1, nm + 1)]
        + [f"grayness_{i}" for i in range(1, nm + 1)]
        + ["change", "beta"]
    )


def _num(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return repr(float(v))


def write_history(path, history, nm: int) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(history_header(nm))
        for r in history:
            w.writerow([r.iteration, _num(r.compliance), *map(_num, r.volumes), *map(_num, r.grayness),
                        _num(r.change), _num(r.beta)])


def write_vtk(path, grid: StructuredGrid, fields: dict[str, np.ndarray]) -> None:
    """Legacy ASCII STRUCTURED_POINTS with cell scalars, y pointing up."""
    lines = [
        "# vtk DataFile Version 3.0",
        "topomulti design",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {grid.nelx + 1} {grid.nely + 1} 1",
        "ORIGIN 0 0 0",
        f"SPACING {grid.elem_size!r} {grid.elem_size!r} 1",
        f"CELL_DATA {grid.ne}",
    ]
    for name, values in fields.items():
        # VTK runs x fastest from the bottom row; images have row 0 on top
        ordered = grid.to_image(values)[::-1].ravel()
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{v:.10g}" for v in ordered)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def emit_artifacts(history, design, grid: StructuredGrid, outdir, scheme=SchemeKind.PNORM, vtk=True) -> list[Path]:
    """Write every run artifact into ``outdir`` and return the paths written.

    Images show each material's share of the element, which for the mapping
    scheme is the physical design variable itself.
    """
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        physical = design.physical if hasattr(design, "physical") else np.asarray(design)
        frac = volume_fractions(physical, scheme)
        nm = frac.shape[1]
        written = []
        for i in range(nm):
            path = outdir / f"material_{i + 1}.pgm"
            write_pgm(path, grid.to_image(to_gray(frac[:, i])))
            written.append(path)
        path = outdir / "combined.ppm"
        write_ppm(path, combined_map(frac, grid))
        written.append(path)
        path = outdir / "history.csv"
        write_history(path, history, nm)
        written.append(path)
        if vtk:
            path = outdir / "design.vtk"
            write_vtk(path, grid, {f"material_{i + 1}": frac[:, i] for i in range(nm)})
            written.append(path)
    except OSError as exc:
        raise OSError(f"cannot write artifacts to {outdir}: {exc}") from exc
    return written
