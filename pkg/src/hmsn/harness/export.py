"""Embedding/prototype CSV export and a deterministic Poincaré-disk SVG plot."""

from __future__ import annotations

import csv
import io

import numpy as np

from ..geometry import check_in_ball

# colour-blind friendly cycle (Okabe-Ito plus extras)
PALETTE = ("#0072B2", "#E69F00", "#009E73", "#CC79A7", "#56B4E9", "#D55E00", "#F0E442", "#000000",
           "#999999", "#882255", "#44AA99", "#117733", "#332288", "#AA4499", "#DDCC77", "#88CCEE")
PROTO_COLOUR = "#D00000"


class DimensionError(ValueError):
    pass


def _fmt(x: float) -> str:
    return repr(float(x))


def embeddings_csv(reps: np.ndarray, labels: np.ndarray) -> str:
    reps = np.asarray(reps, dtype=np.float64)
    d = reps.shape[1] if reps.ndim == 2 else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "label"] + [f"x{j}" for j in range(d)])
    for i, (r, y) in enumerate(zip(reps, labels)):
        w.writerow([i, int(y)] + [_fmt(v) for v in r])
    return buf.getvalue()


def prototypes_csv(vectors: np.ndarray) -> str:
    vectors = np.asarray(vectors, dtype=np.float64)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index"] + [f"x{j}" for j in range(vectors.shape[1])])
    for i, r in enumerate(vectors):
        w.writerow([i] + [_fmt(v) for v in r])
    return buf.getvalue()


def export_embeddings(reps: np.ndarray, labels: np.ndarray, out_path: str, ball: bool = False,
                      curvature: float = 1.0) -> str:
    """Write ``index,label,x0..`` rows; ``ball`` asserts every row lies inside the ball."""
    if ball and len(reps):
        check_in_ball(np.asarray(reps), curvature)
    with open(out_path, "w", newline="") as fh:
        fh.write(embeddings_csv(reps, labels))
    return out_path


def export_prototypes(vectors: np.ndarray, out_path: str) -> str:
    with open(out_path, "w", newline="") as fh:
        fh.write(prototypes_csv(vectors))
    return out_path


def _read_csv(path: str, skip: int) -> tuple[list[str], np.ndarray, list[int]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return [], np.zeros((0, 0)), []
    header, body = rows[0], rows[1:]
    coords = np.array([[float(v) for v in r[skip:]] for r in body], dtype=np.float64)
    if not body:
        coords = np.zeros((0, len(header) - skip))
    labels = [int(r[1]) for r in body] if skip == 2 else []
    return header, coords, labels


def render_disk(points: np.ndarray, labels, prototypes: np.ndarray | None = None, size: int = 480) -> str:
    """SVG text: dashed unit circle, class-coloured points, prototype crosses."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2) if len(points) else np.zeros((0, 2))
    half = size / 2.0
    radius = 0.45 * size

    def xy(p):
        # y axis points up in the disk, down in SVG
        return half + radius * p[0], half - radius * p[1]

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="#ffffff"/>',
        f'<circle cx="{half:.3f}" cy="{half:.3f}" r="{radius:.3f}" fill="none" stroke="#444444" '
        f'stroke-width="1.5" stroke-dasharray="6,4"/>',
    ]
    for p, y in zip(points, labels):
        cx, cy = xy(p)
        out.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="2.000" fill="{PALETTE[int(y) % len(PALETTE)]}" '
                   f'fill-opacity="0.8"/>')
    if prototypes is not None:
        for q in np.asarray(prototypes, dtype=np.float64).reshape(-1, 2):
            cx, cy = xy(q)
            out.append(f'<path d="M{cx - 4:.3f},{cy - 4:.3f} L{cx + 4:.3f},{cy + 4:.3f} '
                       f'M{cx - 4:.3f},{cy + 4:.3f} L{cx + 4:.3f},{cy - 4:.3f}" stroke="{PROTO_COLOUR}" '
                       f'stroke-width="2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_disk(embeddings_path: str, prototypes_path: str | None, out_path: str) -> str:
    header, pts, labels = _read_csv(embeddings_path, skip=2)
    d = len(header) - 2 if header else 2
    if d != 2:
        raise DimensionError(f"disk plots need 2-D embeddings, got d = {d}")
    protos = None
    if prototypes_path:
        ph, protos, _ = _read_csv(prototypes_path, skip=1)
        if ph and len(ph) - 1 != 2:
            raise DimensionError(f"disk plots need 2-D prototypes, got d = {len(ph) - 1}")
    with open(out_path, "w", newline="") as fh:
        fh.write(render_disk(pts, labels, protos))
    return out_path
