"""Losses in the probability and potential domains.

The point loss regresses predicted potential energies onto the ground truth,
averaging over directions.  The line loss scores contour agreement: for each
(class, direction, integer level) it activates soft level-set memberships
``exp(-(energy - level)**mu)`` of both energy planes and compares them with a
normalized dice-style coefficient (EDC) that equals 1 exactly when the
prediction matches the ground truth.  Cross-entropy and plain dice operate in
the probability domain as baselines, and ``combine_losses`` forms the
weighted training total.

The membership activation is evaluated over the whole plane, which keeps the
line loss differentiable everywhere; the sorted equal-count line regions are
still available via :func:`build_line_regions` for diagnostics and
visualization.  All computation is float64 with fixed summation order, so
results are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Division safeguard for degenerate membership masses (levels with an
#: empty ground-truth line are already skipped before this can trigger).
EMPTY_LEVEL_EPS = 1e-12

#: Classes whose combined prediction + ground-truth mass is below this are
#: left out of the dice mean.
EMPTY_CLASS_EPS = 1e-12

#: Probabilities are clamped to at least this before the log in cross-entropy.
PROB_CLAMP = 1e-12

NORMS = ("l1", "l2")
REDUCTIONS = ("sum", "mean")


@dataclass(frozen=True)
class LossConfig:
    """Knobs shared by the potential-domain losses.

    mu_exp is the even exponent of the line-loss activation (odd exponents
    would break its symmetry around the level and are rejected).  lambda1
    and lambda2 weight the point and line terms in the combined loss.
    """

    norm: str = "l2"
    reduction: str = "mean"
    mu_exp: int = 10
    lambda1: float = 0.1
    lambda2: float = 0.01

    def __post_init__(self) -> None:
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.reduction not in REDUCTIONS:
            raise ValueError(f"reduction must be one of {REDUCTIONS}, got {self.reduction!r}")
        if not isinstance(self.mu_exp, int) or self.mu_exp < 2 or self.mu_exp % 2 != 0:
            raise ValueError(f"mu_exp must be an even integer >= 2, got {self.mu_exp!r}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass
class LossValue:
    """A scalar loss and, when available, its gradient w.r.t. the predicted input."""

    value: float
    gradient: np.ndarray | None = None


def _paired_energies(e_gt, e_pred) -> tuple[np.ndarray, np.ndarray]:
    gt = np.asarray(e_gt, dtype=np.float64)
    pred = np.asarray(e_pred, dtype=np.float64)
    if gt.shape != pred.shape:
        raise ValueError(f"energy shapes differ: {gt.shape} vs {pred.shape}")
    if gt.ndim != 4:
        raise ValueError(f"energies must have shape (|S|, classes, height, width), got {gt.shape}")
    return gt, pred


def point_loss(e_gt, e_pred, cfg: LossConfig) -> LossValue:
    """Direction-averaged L1/L2 regression between two potential-field sets.

    With delta = gt - pred, the sum reduction is (1/|S|) * sum |delta| (or
    delta**2); the mean reduction additionally divides by the per-direction
    element count.  The gradient w.r.t. the prediction is returned.
    """
    gt, pred = _paired_energies(e_gt, e_pred)
    delta = gt - pred
    scale = 1.0 / gt.shape[0]
    if cfg.reduction == "mean":
        scale /= delta[0].size
    if cfg.norm == "l1":
        value = float(np.abs(delta).sum() * scale)
        grad = -np.sign(delta) * scale
    else:
        value = float((delta * delta).sum() * scale)
        grad = -2.0 * scale * delta
    return LossValue(value, grad)


@dataclass
class LineRegions:
    """Level-set membership of one (class, direction) energy plane pair.

    Pixel indices are flat raster offsets.  ``levels[t]`` holds the
    ground-truth pixels with energy t+1; ``pred_levels[t]`` is the
    equal-count counterpart taken from the prediction in ascending energy
    order (ties broken by raster index), after skipping as many lowest
    pixels as the ground truth has zeros.  Exterior is energy 0, interior
    is energy radius + 1.
    """

    radius: int
    exterior: np.ndarray
    interior: np.ndarray
    levels: tuple[np.ndarray, ...]
    pred_exterior: np.ndarray
    pred_interior: np.ndarray
    pred_levels: tuple[np.ndarray, ...]


def build_line_regions(gt_plane, pred_plane, radius: int) -> LineRegions:
    """Slice two energy planes into matched equipotential line regions.

    The ground-truth plane must be integer-valued in [0, radius + 1].  The
    construction guarantees ``len(levels[t]) == len(pred_levels[t])`` for
    every level.
    """
    gt = np.asarray(gt_plane, dtype=np.float64)
    pred = np.asarray(pred_plane, dtype=np.float64)
    if gt.shape != pred.shape or gt.ndim != 2:
        raise ValueError(f"planes must be 2-D with equal shapes, got {gt.shape} vs {pred.shape}")
    rounded = np.rint(gt)
    if not np.array_equal(rounded, gt):
        raise ValueError("ground-truth energies must be integer-valued")
    if gt.size and (rounded.min() < 0 or rounded.max() > radius + 1):
        raise ValueError(f"ground-truth energies must lie in [0, {radius + 1}]")
    flat_gt = rounded.ravel().astype(np.int64)
    order = np.argsort(pred.ravel(), kind="stable")

    exterior = np.flatnonzero(flat_gt == 0)
    cursor = exterior.size
    pred_exterior = order[:cursor]
    levels = []
    pred_levels = []
    for tau in range(1, radius + 1):
        lv = np.flatnonzero(flat_gt == tau)
        levels.append(lv)
        pred_levels.append(order[cursor:cursor + lv.size])
        cursor += lv.size
    interior = np.flatnonzero(flat_gt == radius + 1)
    return LineRegions(
        radius=radius,
        exterior=exterior,
        interior=interior,
        levels=tuple(levels),
        pred_exterior=pred_exterior,
        pred_interior=order[cursor:],
        pred_levels=tuple(pred_levels),
    )


def _int_pow(x: np.ndarray, n: int) -> np.ndarray:
    """x**n for integer n >= 1 by squaring; much faster than np.power here."""
    result = None
    base = x
    while n:
        if n & 1:
            result = base.copy() if result is None else result * base
        n >>= 1
        if n:
            base = base * base
    return result


def _edc_terms(gt, pred, mu: int, radius: int, want_grad: bool):
    """Yield (direction, class, level, edc, grad_plane) per non-empty level.

    gt and pred are (|S|, K, H, W); edc is None for skipped (empty) levels.
    The gradient plane, when requested, is d(1 - edc)/d pred for that term.
    """
    n_dirs, n_classes = gt.shape[:2]
    for si in range(n_dirs):
        for ci in range(n_classes):
            g = gt[si, ci]
            p = pred[si, ci]
            for tau in range(1, radius + 1):
                if not (g == tau).any():
                    # No ground-truth line at this level: nothing to match
                    # (a class absent from a direction carries no contour).
                    yield si, ci, tau, None, None
                    continue
                d = np.exp(-_int_pow(g - tau, mu))
                mass = d.sum()
                if mass < EMPTY_LEVEL_EPS:
                    yield si, ci, tau, None, None
                    continue
                sq_mass = (d * d).sum()
                c_norm = mass / sq_mass
                dp = p - tau
                dp_pow = _int_pow(dp, mu - 1)
                d_hat = np.exp(-(dp_pow * dp))
                inter = (d * d_hat).sum()
                denom = mass + d_hat.sum()
                edc = 2.0 * c_norm * inter / denom
                grad = None
                if want_grad:
                    coeff = 2.0 * c_norm / (denom * denom)
                    grad = coeff * (d * denom - inter) * mu * dp_pow * d_hat
                yield si, ci, tau, edc, grad


def _check_line_inputs(e_gt, e_pred) -> tuple[np.ndarray, np.ndarray]:
    gt, pred = _paired_energies(e_gt, e_pred)
    if not np.array_equal(np.rint(gt), gt):
        raise ValueError("ground-truth energies must be integer-valued")
    return gt, pred


def equipotential_line_loss(e_gt, e_pred, cfg: LossConfig, radius: int) -> LossValue:
    """Accumulated (1 - EDC) over classes, directions, and levels 1..radius.

    Per term: d = exp(-(gt - level)**mu) and d_hat likewise on the
    prediction, both over the whole plane; EDC = 2 * C * sum(d * d_hat) /
    (sum d + sum d_hat) with C = sum(d) / sum(d * d), which calibrates a
    perfect match to score exactly 1.  EDC is capped at 1 (a sharper-than-
    ground-truth line is not a mismatch), so every term is nonnegative and
    capped terms contribute no gradient.  The accumulated total is divided
    by the direction count.  Levels whose ground-truth line is empty (no
    pixel at exactly that energy) are skipped.
    """
    gt, pred = _check_line_inputs(e_gt, e_pred)
    total = 0.0
    grad = np.zeros_like(pred)
    for si, ci, _tau, edc, term_grad in _edc_terms(gt, pred, cfg.mu_exp, radius, want_grad=True):
        if edc is None or edc >= 1.0:
            continue
        total += 1.0 - edc
        grad[si, ci] += term_grad
    scale = 1.0 / gt.shape[0]
    return LossValue(total * scale, grad * scale)


def equipotential_dice(e_gt, e_pred, cfg: LossConfig, radius: int) -> np.ndarray:
    """Per-(direction, class, level) EDC values in [0, 1]; NaN marks skipped levels."""
    gt, pred = _check_line_inputs(e_gt, e_pred)
    out = np.full((gt.shape[0], gt.shape[1], radius), np.nan)
    for si, ci, tau, edc, _ in _edc_terms(gt, pred, cfg.mu_exp, radius, want_grad=False):
        if edc is not None:
            out[si, ci, tau - 1] = min(edc, 1.0)
    return out


def cross_entropy_loss(pred, labels) -> LossValue:
    """Mean per-pixel negative log probability of the true class.

    Probabilities are clamped to PROB_CLAMP before the log; in the clamped
    region the gradient is zero (the clamp is flat there).
    """
    p = np.asarray(pred, dtype=np.float64)
    lab = np.asarray(labels)
    if p.ndim != 3 or lab.shape != p.shape[1:]:
        raise ValueError(f"prediction {p.shape} does not match label map {lab.shape}")
    k = p.shape[0]
    if lab.min() < 0 or lab.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    flat = p.reshape(k, -1)
    cols = np.arange(lab.size)
    picked = flat[lab.ravel(), cols]
    clamped = np.maximum(picked, PROB_CLAMP)
    n = lab.size
    value = float(-np.log(clamped).sum() / n)
    grad_flat = np.zeros_like(flat)
    grad_flat[lab.ravel(), cols] = np.where(picked > PROB_CLAMP, -1.0 / (n * clamped), 0.0)
    return LossValue(value, grad_flat.reshape(p.shape))


def dice_loss(pred, gt) -> LossValue:
    """One minus the class-mean soft dice coefficient; empty classes are skipped."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape or p.ndim != 3:
        raise ValueError(f"field shapes differ: {p.shape} vs {g.shape}")
    grad = np.zeros_like(p)
    coeff_sum = 0.0
    used = 0
    for c in range(p.shape[0]):
        den = p[c].sum() + g[c].sum()
        if den < EMPTY_CLASS_EPS:
            continue
        num = 2.0 * (p[c] * g[c]).sum()
        coeff_sum += num / den
        grad[c] = -(2.0 * g[c] * den - num) / (den * den)
        used += 1
    if used == 0:
        return LossValue(0.0, grad)
    return LossValue(1.0 - coeff_sum / used, grad / used)


def combine_losses(ce: LossValue, point: LossValue, line: LossValue, cfg: LossConfig) -> LossValue:
    """Weighted training total: ce + lambda1 * point + lambda2 * line.

    Gradients combine linearly when all three are present w.r.t. the same
    tensor; otherwise the combined gradient is None.
    """
    value = ce.value + cfg.lambda1 * point.value + cfg.lambda2 * line.value
    grads = (ce.gradient, point.gradient, line.gradient)
    if all(g is not None for g in grads) and len({g.shape for g in grads}) == 1:
        gradient = ce.gradient + cfg.lambda1 * point.gradient + cfg.lambda2 * line.gradient
    else:
        gradient = None
    return LossValue(value, gradient)
