"""Location-prior fusion over per-pixel type likelihoods and mask scoring.

The prior encodes seed placement: inside a plant's expected disk the prior
for its type ramps linearly from 2*alpha at the center down to alpha at the
disk edge, and is 1 (neutral) everywhere else. Fusing is an element-wise
product with the likelihood grid; labels come from the per-pixel argmax.
"""

import numpy as np

from .errors import (InvalidInputError, OutOfBoundsError,
                     ShapeMismatchError)
from .grids import (LikelihoodGrid, OccupancyGrid, SegmentationMask,
                    distance_grid_cm)

Placement = tuple[tuple[float, float], int, float]   # (center cm, type_id, R_k)


def build_occupancy_grid(placements: list[Placement],
                         shape: tuple[int, int], px_per_cm: float,
                         alpha: float = 5.0,
                         n_channels: int | None = None) -> OccupancyGrid:
    """Prior grid from plant placements.

    Each placement contributes alpha * (2 - r / R_k) at distance r <= R_k
    from its center, on its own type channel. Where same-type disks overlap
    a pixel keeps the maximum prior. All other cells stay 1.
    """
    if alpha <= 0:
        raise InvalidInputError("alpha must be > 0")
    h, w = shape
    if n_channels is None:
        n_channels = max(tid for _, tid, _ in placements) + 1 if placements else 1
    values = np.ones((h, w, n_channels), dtype=np.float32)
    for center, type_id, max_radius in placements:
        if max_radius <= 0:
            raise InvalidInputError(f"placement R_k must be > 0, got {max_radius}")
        if not 1 <= type_id < n_channels:
            raise InvalidInputError(f"placement type_id {type_id} out of range")
        x, y = center
        if not (0 <= x <= w / px_per_cm and 0 <= y <= h / px_per_cm):
            raise OutOfBoundsError(f"placement center {center} outside grid")
        dist = distance_grid_cm((h, w), center, px_per_cm)
        inside = dist <= max_radius
        prior = (alpha * (2.0 - dist / max_radius)).astype(np.float32)
        channel = values[:, :, type_id]
        channel[inside] = np.maximum(channel[inside], prior[inside])
    return OccupancyGrid(values, alpha=alpha, px_per_cm=px_per_cm)


def apply_prior(likelihoods: LikelihoodGrid,
                occupancy: OccupancyGrid) -> LikelihoodGrid:
    """Fused grid: element-wise product of likelihood and prior."""
    if likelihoods.values.shape != occupancy.values.shape:
        raise ShapeMismatchError(
            f"likelihood {likelihoods.values.shape} vs "
            f"occupancy {occupancy.values.shape}")
    return LikelihoodGrid(likelihoods.values * occupancy.values,
                          px_per_cm=likelihoods.px_per_cm)


def argmax_label(likelihoods: LikelihoodGrid) -> SegmentationMask:
    """Per-pixel index of the max channel; ties go to the lowest channel."""
    labels = np.argmax(likelihoods.values, axis=2).astype(np.int32)
    return SegmentationMask(labels, px_per_cm=likelihoods.px_per_cm)


def mean_iou(pred: SegmentationMask, truth: SegmentationMask,
             i_total: int) -> float:
    """Mean of per-label IoU over labels 0..i_total.

    A label absent from both masks (empty union) counts as 1.0: absence
    correctly predicted.
    """
    if pred.labels.shape != truth.labels.shape:
        raise ShapeMismatchError(
            f"pred {pred.labels.shape} vs truth {truth.labels.shape}")
    total = 0.0
    for label in range(i_total + 1):
        p = pred.labels == label
        t = truth.labels == label
        union = int(np.count_nonzero(p | t))
        if union == 0:
            total += 1.0
        else:
            total += int(np.count_nonzero(p & t)) / union
    return total / (i_total + 1)
