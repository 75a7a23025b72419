"""Image quality measures on complex 2D frames.

Real and imaginary parts are evaluated as two channels and the per-channel
values averaged. All measures are restricted to a centred region of interest.
SSIM uses a 7x7 Gaussian window (sigma 1.5, K1 0.01, K2 0.03) with the
dynamic range set to the peak ``max |gt|`` over the ROI, which is also the
PSNR peak.
"""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields

import numpy as np

PSNR_CAP = 99.0
WIN = 7
SIGMA = 1.5
K1, K2 = 0.01, 0.03
MS_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


@dataclass(frozen=True)
class MetricRecord:
    psnr: float
    nrmse: float
    ssim: float
    ms_ssim: float
    uqi: float

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def gaussian_window(size: int = WIN, sigma: float = SIGMA) -> np.ndarray:
    """Normalised 1D Gaussian taps."""
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-r ** 2 / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of a 2D image with ``g`` along both axes."""
    k = g.size
    v = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(v, k, axis=1) @ g


def _ssim_terms(a: np.ndarray, b: np.ndarray, data_range: float, k1=K1, k2=K2, win=WIN):
    """Mean luminance term and mean contrast-structure term (plus their product map)."""
    win = min(win, *a.shape)
    g = gaussian_window(win, SIGMA)
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    s_aa = _filter_valid(a * a, g) - mu_a * mu_a
    s_bb = _filter_valid(b * b, g) - mu_b * mu_b
    s_ab = _filter_valid(a * b, g) - mu_a * mu_b
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    lum = _ratio(2 * mu_a * mu_b + c1, mu_a * mu_a + mu_b * mu_b + c1)
    cs = _ratio(2 * s_ab + c2, s_aa + s_bb + c2)
    return lum, cs


def _ratio(num, den):
    # 0/0 only occurs for identical flat windows when the constants vanish
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / den
    return np.where(den == 0, 1.0, out)


def ssim(a: np.ndarray, b: np.ndarray, data_range: float) -> float:
    """Mean SSIM of two real 2D images."""
    lum, cs = _ssim_terms(a, b, data_range)
    return float(np.mean(lum * cs))


def uqi(a: np.ndarray, b: np.ndarray) -> float:
    """Universal quality index: SSIM without stabilising constants."""
    lum, cs = _ssim_terms(a, b, 1.0, k1=0.0, k2=0.0)
    return float(np.mean(lum * cs))


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
    img = img[:h, :w]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def ms_ssim(a: np.ndarray, b: np.ndarray, data_range: float, weights=MS_WEIGHTS) -> float:
    """Multi-scale SSIM with 2x2 average-pool downsampling between scales.

    When a scale is smaller than the 7x7 window the window shrinks to the image;
    scales below 1 pixel reuse the last valid one. Negative contrast terms are
    clipped at zero before exponentiation.
    """
    vals = []
    for j in range(len(weights)):
        lum, cs = _ssim_terms(a, b, data_range)
        last = j == len(weights) - 1
        vals.append(max(float(np.mean(lum * cs if last else cs)), 0.0))
        if not last and min(a.shape) >= 2:
            a, b = _downsample(a), _downsample(b)
    return float(np.prod([v ** w for v, w in zip(vals, weights)]))


def psnr(a: np.ndarray, b: np.ndarray, peak: float) -> float:
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(peak ** 2 / mse))


def center_roi(img: np.ndarray, roi_frac: float) -> np.ndarray:
    """Centred crop keeping ``roi_frac`` of each of the first two dims."""
    if not 0 < roi_frac <= 1:
        raise ValueError("roi_frac must lie in (0, 1]")
    out = img
    for ax in range(2):
        n = img.shape[ax]
        m = max(1, int(round(n * roi_frac)))
        start = (n - m) // 2
        out = np.take(out, np.arange(start, start + m), axis=ax)
    return out


def evaluate_frame(pred: np.ndarray, gt: np.ndarray, roi_frac: float = 0.5) -> MetricRecord:
    """All measures for one complex 2D frame."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise ValueError(f"expected two equal 2D frames, got {pred.shape} and {gt.shape}")
    p, g = center_roi(pred, roi_frac), center_roi(gt, roi_frac)
    if min(p.shape) < WIN:
        raise ValueError(f"ROI {p.shape} is smaller than the {WIN}x{WIN} SSIM window")
    peak = float(np.abs(g).max()) or 1.0
    gnorm = float(np.linalg.norm(g))
    err = float(np.linalg.norm(p - g))
    nrmse = err / gnorm if gnorm > 0 else (0.0 if err == 0 else np.inf)
    chans = [(np.asarray(c(p), np.float64), np.asarray(c(g), np.float64))
             for c in (np.real, np.imag)]
    return MetricRecord(
        psnr=float(np.mean([psnr(a, b, peak) for a, b in chans])),
        nrmse=nrmse,
        ssim=float(np.mean([ssim(a, b, peak) for a, b in chans])),
        ms_ssim=float(np.mean([ms_ssim(a, b, peak) for a, b in chans])),
        uqi=float(np.mean([uqi(a, b) for a, b in chans])),
    )


def evaluate_dataset(preds, gts, roi_frac: float = 0.5) -> MetricRecord:
    """Mean of :func:`evaluate_frame` over every frame of every (n_x, n_y, n_t) cine."""
    preds, gts = list(preds), list(gts)
    if not preds or len(preds) != len(gts):
        raise ValueError("need equally many predictions and references (at least one)")
    recs = []
    for p, g in zip(preds, gts):
        p, g = np.asarray(p), np.asarray(g)
        if p.ndim == 2:
            p, g = p[..., None], g[..., None]
        recs += [evaluate_frame(p[..., t], g[..., t], roi_frac) for t in range(p.shape[-1])]
    return MetricRecord(*np.mean([astuple(r) for r in recs], axis=0).tolist())


def write_report_csv(path, rows: dict[str, MetricRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method"] + MetricRecord.names())
        for name, rec in rows.items():
            w.writerow([name] + [f"{v:.6g}" for v in astuple(rec)])


def format_table(rows: dict[str, MetricRecord]) -> str:
    """Plain-text table with one row per method."""
    head = f"{'method':<12}" + "".join(f"{n.upper():>10}" for n in MetricRecord.names())
    lines = [head, "-" * len(head)]
    for name, r in rows.items():
        lines.append(f"{name:<12}{r.psnr:>10.4f}{r.nrmse:>10.4f}{r.ssim:>10.4f}"
                     f"{r.ms_ssim:>10.4f}{r.uqi:>10.4f}")
    return "\n".join(lines)
