"""Regular-grid machinery shared by the pyramid, guidance, and solver stages.

Images are treated as flat vectors of rows*cols pixels in row-major order.
Border handling is mirror reflection without edge duplication everywhere, so
window statistics keep full support at every pixel and window counts stay
constant across the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError


def reflect_index(idx, n: int):
    """Map integer indices onto [0, n) by mirror reflection without edge repeat.

    Index -1 maps to 1, index n maps to n-2, and so on (period 2n-2).
    """
    idx = np.asarray(idx)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    j = np.abs(idx) % period
    return np.minimum(j, period - j)


def window_sum(img: np.ndarray, w: int) -> np.ndarray:
    """Sum over w x w reflect-padded windows along the last two axes.

    Exact for integer input (int64 accumulation, no float filter round-off).
    """
    if w % 2 != 1 or w < 1:
        raise InvalidConfigError(f"window size must be odd and positive, got {w}")
    rows, cols = img.shape[-2], img.shape[-1]
    if w > 2 * min(rows, cols):
        raise InvalidConfigError(
            f"window {w} exceeds twice the smallest grid side ({rows}x{cols})"
        )
    if w == 1:
        return img.copy()
    p = w // 2
    pad = [(0, 0)] * (img.ndim - 2) + [(p, p), (p, p)]
    a = np.pad(img, pad, mode="reflect")
    dtype = np.int64 if np.issubdtype(img.dtype, np.integer) else np.result_type(img.dtype, np.float64)
    integral = np.zeros(a.shape[:-2] + (a.shape[-2] + 1, a.shape[-1] + 1), dtype=dtype)
    integral[..., 1:, 1:] = a.astype(dtype).cumsum(axis=-2).cumsum(axis=-1)
    return (
        integral[..., w:, w:]
        - integral[..., :-w, w:]
        - integral[..., w:, :-w]
        + integral[..., :-w, :-w]
    )


def neighbor_table(rows: int, cols: int, w: int) -> np.ndarray:
    """Flat pixel index of each w x w window slot, (w*w, rows*cols).

    Slot order is row-major over window offsets; the center slot sits at
    index (w*w - 1) // 2.  Out-of-grid offsets reflect back inside, so border
    pixels see some neighbors more than once.
    """
    p = w // 2
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    rr = rr.ravel()
    cc = cc.ravel()
    out = np.empty((w * w, rows * cols), dtype=np.int64)
    slot = 0
    for dr in range(-p, p + 1):
        for dc in range(-p, p + 1):
            r = reflect_index(rr + dr, rows)
            c = reflect_index(cc + dc, cols)
            out[slot] = r * cols + c
            slot += 1
    return out


def lower_median(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Median with the lower middle element for even-length input.

    Integer-friendly: the result is always one of the input values.
    """
    a = np.sort(np.asarray(a), axis=axis)
    k = (a.shape[axis] - 1) // 2
    return np.take(a, k, axis=axis)


def weighted_median(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Exact minimizer of sum_i w_i |x - v_i| per column, (M, N) -> (N,).

    Ties resolve to the smallest minimizing value; the output is always one
    of the input values.
    """
    order = np.argsort(values, axis=0, kind="stable")
    v = np.take_along_axis(values, order, axis=0)
    w = np.take_along_axis(weights, order, axis=0)
    cw = np.cumsum(w, axis=0)
    half = 0.5 * cw[-1]
    idx = np.argmax(cw >= half[None, :], axis=0)
    return np.take_along_axis(v, idx[None, :], axis=0)[0]


@dataclass(frozen=True)
class PixelGraph:
    """Neighborhood structure of a regular grid with reflect borders.

    ``nbr[j, n]`` is the pixel seen by center n through window slot j.  The
    transpose tables answer the reverse question, which (center, slot) pairs
    reach pixel p, so penalties written from the center's viewpoint can be
    re-gathered exactly when the neighbor is the variable being updated.
    """

    rows: int
    cols: int
    window: int
    nbr: np.ndarray      # (w*w, N) int64
    t_pair: np.ndarray   # (maxc, N) flat (slot * N + center) pair index
    t_mask: np.ndarray   # (maxc, N) bool, False entries in t_pair are padding

    @property
    def n_pixels(self) -> int:
        return self.rows * self.cols

    @property
    def n_slots(self) -> int:
        return self.window * self.window

    def gather(self, field: np.ndarray) -> np.ndarray:
        """Neighbor values per (slot, pixel); field is (N, ...)."""
        return field[self.nbr]

    def scatter_sum(self, per_pair: np.ndarray) -> np.ndarray:
        """Sum per-(slot, center) values onto the pixel each pair points at.

        per_pair is (n_slots, N) or (n_slots, N, K); returns (N,) or (N, K).
        """
        targets = self.nbr.ravel()
        if per_pair.ndim == 2:
            return np.bincount(targets, weights=per_pair.ravel(), minlength=self.n_pixels)
        out = np.empty((self.n_pixels, per_pair.shape[2]))
        for k in range(per_pair.shape[2]):
            out[:, k] = np.bincount(
                targets, weights=per_pair[:, :, k].ravel(), minlength=self.n_pixels
            )
        return out

    def transpose_take(self, per_pair: np.ndarray, fill=0.0) -> np.ndarray:
        """Per-target table of contributing pair values, (maxc, N).

        Row c of column p holds per_pair at the c-th (center, slot) pair whose
        neighbor is p; padded positions hold ``fill``.
        """
        flat = per_pair.reshape(-1)
        out = flat[self.t_pair]
        return np.where(self.t_mask, out, fill)

    @property
    def t_source(self) -> np.ndarray:
        """Center pixel of each transpose-table pair, (maxc, N)."""
        return self.t_pair % self.n_pixels


def pixel_graph(rows: int, cols: int, w: int) -> PixelGraph:
    """Build the neighbor and transpose tables for a w x w neighborhood."""
    if w % 2 != 1 or w < 1:
        raise InvalidConfigError(f"neighborhood size must be odd and positive, got {w}")
    nbr = neighbor_table(rows, cols, w)
    n_pix = rows * cols
    targets = nbr.ravel()
    order = np.argsort(targets, kind="stable")
    counts = np.bincount(targets, minlength=n_pix)
    starts = np.concatenate(([0], np.cumsum(counts)))
    slot = np.arange(targets.size) - np.repeat(starts[:-1], counts)
    maxc = int(counts.max())
    t_pair = np.zeros((maxc, n_pix), dtype=np.int64)
    t_mask = np.zeros((maxc, n_pix), dtype=bool)
    t_pair[slot, targets[order]] = order
    t_mask[slot, targets[order]] = True
    return PixelGraph(rows=rows, cols=cols, window=w, nbr=nbr, t_pair=t_pair, t_mask=t_mask)
