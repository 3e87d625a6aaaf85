"""Recurrence plots and recurrence quantification over strategy logs.

A session's adaptive strategy values, sampled every tau time units,
form a multivariate time series; a recurrence matrix marks time pairs
whose state vectors lie within Euclidean distance epsilon, and the RQA
metrics summarize its line structure.
"""

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StateSeries:
    """State vectors over time: samples[t] is the N-dimensional system
    state at times[t]; tau is the sampling interval in time units."""

    samples: np.ndarray
    times: tuple
    tau: int

    def __init__(self, samples, times=None, tau: int = 1):
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2:
            raise ValueError("samples must be a T x N array of state vectors")
        if times is None:
            times = tuple(range(0, samples.shape[0] * tau, tau))
        times = tuple(times)
        if len(times) != samples.shape[0]:
            raise ValueError(f"{len(times)} timestamps for {samples.shape[0]} samples")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "tau", tau)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class RecurrenceMatrix:
    bits: np.ndarray  # T x T, 0/1, symmetric, Theiler band zeroed
    eps: float
    theiler_w: int


@dataclass(frozen=True)
class RqaMetrics:
    rr: float
    det: float
    lam: float
    l_mean: float
    l_max: int
    ent: float


def default_epsilon(series: StateSeries, frac: float = 0.1) -> float:
    """Common heuristic threshold: ``frac`` of the maximum pairwise
    distance observed in the series."""
    x = series.samples
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    return frac * math.sqrt(float(d2.max()))


def recurrence_matrix(series: StateSeries, eps: float,
                      theiler_w: int = 1) -> RecurrenceMatrix:
    """bits[i][j] = 1 iff dist(s_i, s_j) < eps and |i - j| >= theiler_w.

    theiler_w = 0 keeps everything including the line of identity;
    theiler_w = 1 (the default) excludes exactly that line.
    """
    if eps < 0:
        raise ValueError(f"threshold must be >= 0, got {eps}")
    if theiler_w < 0:
        raise ValueError(f"theiler_w must be >= 0, got {theiler_w}")
    x = series.samples
    t = x.shape[0]
    if t < 2:
        raise ValueError(f"need at least 2 samples, got {t}")
    dist = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2))
    bits = (dist < eps).astype(np.uint8)
    if theiler_w > 0:
        idx = np.arange(t)
        band = np.abs(idx[:, None] - idx[None, :]) < theiler_w
        bits[band] = 0
    return RecurrenceMatrix(bits=bits, eps=eps, theiler_w=theiler_w)


def rqa_metrics(m: RecurrenceMatrix, l_min: int = 2, v_min: int = 2) -> RqaMetrics:
    """Standard RQA statistics of the recurrence matrix's line structure.

    RR is recurrent points over admissible cells (|i - j| >= theiler_w).
    DET counts the fraction of recurrent points on diagonal runs of
    length >= l_min, LAM the same for vertical runs >= v_min.  Lines are
    scanned within admissible stretches only, truncated at the matrix
    border at their visible length; stretches structurally too short to
    ever host a qualifying run (visible length < l_min or < v_min) are
    left out of both numerator and denominator, so an all-ones matrix
    scores DET = LAM = 1 despite its border corners.  L_mean, L_max and
    ENT (Shannon entropy, natural log, of the run-length histogram)
    are over the qualifying diagonal runs.  Everything degrades to
    defined zeros when no recurrent points or runs exist.
    """
    if l_min < 2 or v_min < 2:
        raise ValueError("l_min and v_min must be >= 2")
    bits = m.bits
    t = bits.shape[0]
    w = m.theiler_w

    idx = np.arange(t)
    admissible = np.abs(idx[:, None] - idx[None, :]) >= w
    n_adm = int(admissible.sum())
    n_rec = int(bits[admissible].sum())
    rr = n_rec / n_adm if n_adm else 0.0

    det_num = det_den = 0
    lines = []
    for k in range(-(t - 1), t):
        if abs(k) < w:
            continue  # the whole diagonal sits inside the Theiler band
        length = t - abs(k)
        if length < l_min:
            continue
        diag = np.diagonal(bits, offset=k)
        det_den += int(diag.sum())
        for run in _runs(diag):
            if run >= l_min:
                det_num += run
                lines.append(run)
    det = det_num / det_den if det_den else 0.0
    l_max = max(lines) if lines else 0
    l_mean = sum(lines) / len(lines) if lines else 0.0
    ent = 0.0
    if lines:
        total = len(lines)
        hist = Counter(lines)
        # summed in sorted-length order so the float result does not
        # depend on which run length happened to appear first
        for length in sorted(hist):
            p = hist[length] / total
            ent -= p * math.log(p)

    lam_num = lam_den = 0
    for j in range(t):
        if w == 0:
            segments = [(0, t)]
        else:
            segments = [(0, j - w + 1), (j + w, t)]
        for lo, hi in segments:
            if hi - lo < v_min:
                continue
            col = bits[lo:hi, j]
            lam_den += int(col.sum())
            for run in _runs(col):
                if run >= v_min:
                    lam_num += run
    lam = lam_num / lam_den if lam_den else 0.0

    return RqaMetrics(rr=rr, det=det, lam=lam, l_mean=l_mean, l_max=l_max,
                      ent=ent)


def _runs(seq):
    """Lengths of maximal runs of ones."""
    out = []
    run = 0
    for v in seq:
        if v:
            run += 1
        elif run:
            out.append(run)
            run = 0
    if run:
        out.append(run)
    return out


def surrogate_shuffle(series: StateSeries, rng) -> StateSeries:
    """Time-shuffled surrogate: same multiset of state vectors in
    uniformly random order, on the original time grid.  Preserves RR
    for any threshold (pairwise distances are permutation-invariant)
    while destroying line structure."""
    order = list(range(len(series)))
    rng.shuffle(order)
    return StateSeries(series.samples[order], times=series.times,
                       tau=series.tau)


def write_pbm(m: RecurrenceMatrix, fileobj):
    """NetPBM P1 bitmap of the matrix, 1 = black = recurrent."""
    t = m.bits.shape[0]
    fileobj.write(f"P1\n{t} {t}\n")
    for row in m.bits:
        fileobj.write(" ".join("1" if v else "0" for v in row) + "\n")


def export_rqa(metrics: RqaMetrics, fileobj):
    """Single-row CSV: RR,DET,LAM,L_mean,L_max,ENT."""
    fileobj.write("RR,DET,LAM,L_mean,L_max,ENT\n")
    fileobj.write(f"{metrics.rr!r},{metrics.det!r},{metrics.lam!r},"
                  f"{metrics.l_mean!r},{metrics.l_max},{metrics.ent!r}\n")
