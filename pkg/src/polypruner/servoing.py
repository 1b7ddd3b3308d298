"""Closed-loop gantry localization over a prune point.

The on-board camera is simulated as a height-scaled crop of the global
overhead image. Each iteration localizes the latest capture inside a
search window of the global image by zero-mean normalized cross-correlation
over a sweep of template scales, then commands a capped step toward the
target. The loop ends on convergence, an iteration limit, or a localization
failure.
"""

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import ndimage, signal

from .errors import InvalidInputError, LocalizationFailed, OutOfBoundsError
from .grids import SegmentationMask


@dataclass(frozen=True)
class GantryPose:
    x: float
    y: float
    z: float = 40.0     # cm above soil


@dataclass(frozen=True)
class ServoConfig:
    step_cap: float = 4.0            # cm, max commanded move per iteration
    tolerance: float = 1.0           # cm, convergence distance to the target
    max_iterations: int = 6
    scale_set: tuple[float, ...] = tuple(
        round(0.80 + 0.05 * i, 2) for i in range(9))   # 0.80 .. 1.20
    search_radius: float = 16.0      # cm, allowed template-center offset
    min_score: float = 0.2           # below this, localization fails

    def __post_init__(self):
        if not self.step_cap > self.tolerance > 0:
            raise InvalidInputError("need step_cap > tolerance > 0")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")


@dataclass(frozen=True)
class CameraConfig:
    sensor_px: int | None = None     # captured side length; None = footprint
                                     # size at ref height (1:1 pixels there)
    ref_height_cm: float = 40.0      # height at which fov_half_cm applies
    fov_half_cm: float = 16.0        # half extent of the footprint at ref height
    noise_std: float = 0.0           # additive Gaussian pixel noise
    blur_sigma: float = 0.0          # Gaussian blur in px
    border_fill: float = 0.0         # value for out-of-bed crop regions
    seed: int = 0

    def effective_sensor_px(self, px_per_cm: float) -> int:
        if self.sensor_px is not None:
            return self.sensor_px
        return max(2, int(round(2 * self.fov_half_cm * px_per_cm)))


@dataclass(frozen=True)
class LocalizationResult:
    position: tuple[float, float]    # global (x, y) cm of the matched center
    scale: float
    score: float                     # best ZNCC over positions x scales


class ServoStatus(Enum):
    CONVERGED = "converged"
    ITERATION_LIMIT = "iteration_limit"
    LOCALIZATION_FAILED = "localization_failed"


@dataclass(frozen=True)
class ServoTraceRow:
    iteration: int
    pose_x: float
    pose_y: float
    localized_x: float
    localized_y: float
    scale: float
    score: float
    step_len_cm: float


@dataclass(frozen=True)
class ServoOutcome:
    status: ServoStatus
    pose: GantryPose | None
    iterations: int
    trace: tuple[ServoTraceRow, ...] = field(default=())

    @property
    def converged(self) -> bool:
        return self.status is ServoStatus.CONVERGED


# ---------------------------------------------------------------------------
# Simulated camera
# ---------------------------------------------------------------------------

def render_overhead_image(mask: SegmentationMask, seed: int = 0,
                          texture_amp: float = 0.25) -> np.ndarray:
    """Grayscale overhead image: label-dependent base levels plus seeded
    per-pixel texture so correlation has something to lock onto."""
    n = int(mask.labels.max()) + 1
    levels = 0.2 + 0.7 * (np.arange(n) / max(1, n - 1))
    img = levels[mask.labels]
    rng = np.random.default_rng(seed)
    img = img + rng.uniform(-texture_amp, texture_amp, size=img.shape)
    return np.clip(img, 0.0, 1.5)


def simulate_camera(global_image: np.ndarray, pose: GantryPose,
                    px_per_cm: float,
                    cfg: CameraConfig) -> tuple[np.ndarray, bool]:
    """Crop of the global image centered under the pose.

    The footprint scales linearly with height (pinhole model); the crop is
    resampled to ``sensor_px`` square. Returns (image, clipped) where
    clipped flags border fill from a crop reaching outside the image.
    """
    if pose.z <= 0:
        raise OutOfBoundsError("camera height must be positive")
    h, w = global_image.shape
    sensor_px = cfg.effective_sensor_px(px_per_cm)
    half_cm = cfg.fov_half_cm * pose.z / cfg.ref_height_cm
    side = max(2, int(round(2 * half_cm * px_per_cm)))
    c_row = int(round(pose.y * px_per_cm))
    c_col = int(round(pose.x * px_per_cm))
    r0, c0 = c_row - side // 2, c_col - side // 2
    crop = np.full((side, side), cfg.border_fill, dtype=float)
    rs, re = max(0, r0), min(h, r0 + side)
    cs, ce = max(0, c0), min(w, c0 + side)
    clipped = (rs, re, cs, ce) != (r0, r0 + side, c0, c0 + side)
    if re > rs and ce > cs:
        crop[rs - r0:re - r0, cs - c0:ce - c0] = global_image[rs:re, cs:ce]
    if side != sensor_px:
        crop = _resample_square(crop, sensor_px)
    if cfg.noise_std > 0:
        rng = np.random.default_rng(np.random.SeedSequence(
            (cfg.seed, c_row, c_col, int(round(pose.z * 100)))))
        crop = crop + rng.normal(0.0, cfg.noise_std, size=crop.shape)
    if cfg.blur_sigma > 0:
        crop = ndimage.gaussian_filter(crop, cfg.blur_sigma)
    return crop, clipped


def _resample_square(image: np.ndarray, side: int) -> np.ndarray:
    out = ndimage.zoom(image, side / image.shape[0], order=1)
    if out.shape[0] != side:    # zoom rounds; pad or trim the last line
        out = out[:side, :side]
        pad = side - out.shape[0]
        if pad > 0:
            out = np.pad(out, ((0, pad), (0, side - out.shape[1])), mode="edge")
    return out


class SimulatedCamera:
    """Capture handle binding a global image, scale, and camera settings."""

    def __init__(self, global_image: np.ndarray, px_per_cm: float,
                 cfg: CameraConfig | None = None):
        self.global_image = np.asarray(global_image, dtype=float)
        self.px_per_cm = px_per_cm
        self.cfg = cfg or CameraConfig()
        self.last_capture_clipped = False

    def capture(self, pose: GantryPose) -> np.ndarray:
        image, clipped = simulate_camera(self.global_image, pose,
                                         self.px_per_cm, self.cfg)
        self.last_capture_clipped = clipped
        return image


# ---------------------------------------------------------------------------
# Localization
# ---------------------------------------------------------------------------

def _zncc_map(window: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Zero-mean NCC of template against every valid placement in window.

    Zero-variance placements (either side) score 0.
    """
    t = template - template.mean()
    t_norm = math.sqrt(float((t * t).sum()))
    th, tw = template.shape
    out_shape = (window.shape[0] - th + 1, window.shape[1] - tw + 1)
    if t_norm == 0:
        return np.zeros(out_shape)
    num = signal.correlate(window, t, mode="valid")
    ones = np.ones((th, tw))
    win_sum = signal.correlate(window, ones, mode="valid")
    win_sq = signal.correlate(window * window, ones, mode="valid")
    var = np.maximum(0.0, win_sq - win_sum * win_sum / (th * tw))
    denom = np.sqrt(var) * t_norm
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(denom > 1e-12 * t_norm, num / denom, 0.0)
    return np.clip(np.nan_to_num(score, nan=0.0), -1.0, 1.0)


def localize(local_image: np.ndarray, global_image: np.ndarray,
             search_center: tuple[float, float], px_per_cm: float,
             cfg: ServoConfig) -> LocalizationResult:
    """Find the local image inside the global one.

    Sweeps the configured scale set, correlating the rescaled local image
    against placements whose centers lie within ``search_radius`` of
    ``search_center``. Ties break toward smaller row-major offsets and the
    smaller scale. Raises LocalizationFailed when the best score is below
    ``min_score`` or the local image has no variance.
    """
    local = np.asarray(local_image, dtype=float)
    glob = np.asarray(global_image, dtype=float)
    if float(local.std()) == 0.0:
        raise LocalizationFailed("local image has zero variance", score=0.0)
    h, w = glob.shape
    rad_px = cfg.search_radius * px_per_cm
    c_row = search_center[1] * px_per_cm
    c_col = search_center[0] * px_per_cm
    best: tuple[float, float, float, float] | None = None  # score, x, y, scale
    for scale in cfg.scale_set:
        tmpl = local if scale == 1.0 else ndimage.zoom(local, scale, order=1)
        th, tw = tmpl.shape
        if th >= h or tw >= w or th < 2 or tw < 2:
            continue
        r_lo = max(0, int(math.ceil(c_row - rad_px - th / 2)))
        r_hi = min(h - th, int(math.floor(c_row + rad_px - th / 2)))
        c_lo = max(0, int(math.ceil(c_col - rad_px - tw / 2)))
        c_hi = min(w - tw, int(math.floor(c_col + rad_px - tw / 2)))
        if r_hi < r_lo or c_hi < c_lo:
            continue
        window = glob[r_lo:r_hi + th, c_lo:c_hi + tw]
        scores = _zncc_map(window, tmpl)
        flat = int(np.argmax(scores))
        pr, pc = np.unravel_index(flat, scores.shape)
        score = float(scores[pr, pc])
        if best is None or score > best[0]:
            x = float(c_lo + pc + tw / 2) / px_per_cm
            y = float(r_lo + pr + th / 2) / px_per_cm
            best = (score, x, y, scale)
    if best is None:
        raise LocalizationFailed("no valid template placement", score=0.0)
    if best[0] < cfg.min_score:
        raise LocalizationFailed(
            f"best correlation {best[0]:.3f} below {cfg.min_score}",
            score=best[0])
    return LocalizationResult((best[1], best[2]), best[3], best[0])


def servo_step(current: tuple[float, float], target: tuple[float, float],
               step_cap: float) -> tuple[float, float]:
    """Move toward target, at most ``step_cap`` cm."""
    dx = target[0] - current[0]
    dy = target[1] - current[1]
    d = math.hypot(dx, dy)
    if d <= step_cap:
        return (target[0], target[1])
    return (current[0] + step_cap * dx / d, current[1] + step_cap * dy / d)


def servo_loop(camera: SimulatedCamera, global_image: np.ndarray,
               start: GantryPose, prune_point: tuple[float, float],
               cfg: ServoConfig,
               search_center: tuple[float, float] | None = None) -> ServoOutcome:
    """Iterate capture -> localize -> capped step until the localized
    position is within ``tolerance`` of the prune point.

    At most ``max_iterations`` captures are taken. The commanded move is
    computed from the localized position, so localization error translates
    into (bounded) pose error, exactly as on the physical gantry.
    """
    pose = start
    center = search_center if search_center is not None else (start.x, start.y)
    trace: list[ServoTraceRow] = []
    for iteration in range(1, cfg.max_iterations + 1):
        image = camera.capture(pose)
        try:
            loc = localize(image, global_image, center, camera.px_per_cm, cfg)
        except LocalizationFailed:
            return ServoOutcome(ServoStatus.LOCALIZATION_FAILED, None,
                                iteration, tuple(trace))
        err = math.dist(loc.position, prune_point)
        if err <= cfg.tolerance:
            trace.append(ServoTraceRow(iteration, pose.x, pose.y,
                                       loc.position[0], loc.position[1],
                                       loc.scale, loc.score, 0.0))
            return ServoOutcome(ServoStatus.CONVERGED, pose, iteration,
                                tuple(trace))
        nxt = servo_step(loc.position, prune_point, cfg.step_cap)
        dx = nxt[0] - loc.position[0]
        dy = nxt[1] - loc.position[1]
        trace.append(ServoTraceRow(iteration, pose.x, pose.y,
                                   loc.position[0], loc.position[1],
                                   loc.scale, loc.score, math.hypot(dx, dy)))
        pose = GantryPose(pose.x + dx, pose.y + dy, pose.z)
    return ServoOutcome(ServoStatus.ITERATION_LIMIT, pose,
                        cfg.max_iterations, tuple(trace))


def write_servo_trace_csv(path, rows: list[tuple[int, ServoTraceRow]]) -> None:
    """CSV export: (day, trace row) pairs from one or more servo runs."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["day", "iteration", "pose_x", "pose_y",
                         "localized_x", "localized_y", "scale", "score",
                         "step_len_cm"])
        for day, r in rows:
            writer.writerow([day, r.iteration,
                             f"{r.pose_x:.4f}", f"{r.pose_y:.4f}",
                             f"{r.localized_x:.4f}", f"{r.localized_y:.4f}",
                             f"{r.scale:.2f}", f"{r.score:.4f}",
                             f"{r.step_len_cm:.4f}"])
