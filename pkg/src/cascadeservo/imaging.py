"""Frame averaging, noise-level estimation and camera-pose selection.

Averaging N frames of independent zero-mean noise with standard deviation
sigma leaves noise of sigma/sqrt(N), so reaching a threshold sigma_thr takes
ceil((sigma/sigma_thr)^2) frames.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.signal import convolve2d

from .errors import (
    DimensionMismatch,
    EmptyCandidates,
    EmptyStack,
    ImageTooSmall,
    NonPositiveSigma,
    ParseError,
)
from .lti.trace import fmt_float


@dataclass(frozen=True, eq=False)
class Image:
    intensity: np.ndarray

    def __post_init__(self):
        a = np.array(self.intensity, dtype=float)
        if a.ndim != 2:
            raise DimensionMismatch("image intensity must be a 2-D matrix")
        if not np.all(np.isfinite(a)):
            raise ValueError("image contains non-finite values")
        a.setflags(write=False)
        object.__setattr__(self, "intensity", a)

    @property
    def height(self) -> int:
        return self.intensity.shape[0]

    @property
    def width(self) -> int:
        return self.intensity.shape[1]

    def __eq__(self, other):
        return isinstance(other, Image) and np.array_equal(self.intensity, other.intensity)


def average_stack(images: Sequence[Image]) -> Image:
    images = list(images)
    if not images:
        raise EmptyStack("no images to average")
    shape = images[0].intensity.shape
    for im in images[1:]:
        if im.intensity.shape != shape:
            raise DimensionMismatch(f"image of shape {im.intensity.shape} in a stack of {shape}")
    return Image(np.mean(np.stack([im.intensity for im in images]), axis=0))


def required_samples(sigma_est: float, sigma_threshold: float) -> int:
    """Frames needed so sigma_est/sqrt(N) <= sigma_threshold (exact on the given floats)."""
    if not (sigma_est > 0 and sigma_threshold > 0):
        raise NonPositiveSigma("noise levels must be positive")
    ratio = Fraction(sigma_est) / Fraction(sigma_threshold)
    return max(1, math.ceil(ratio * ratio))


@dataclass(frozen=True)
class AveragingPlan:
    sigma_est: float
    sigma_threshold: float

    @property
    def n_required(self) -> int:
        return required_samples(self.sigma_est, self.sigma_threshold)


# Second-difference kernel: annihilates planes, sum of squares 36.
_HIGHPASS = np.array([[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]])
_MAD_TO_SIGMA = 1.482602218505602  # 1 / Phi^-1(3/4)


def estimate_noise_mad(image: Image) -> float:
    """Robust sigma from the median absolute deviation of a high-pass residual."""
    a = image.intensity
    if a.shape[0] < 3 or a.shape[1] < 3:
        raise ImageTooSmall("need at least 3x3 pixels")
    r = convolve2d(a, _HIGHPASS, mode="valid")
    mad = float(np.median(np.abs(r - np.median(r))))
    return _MAD_TO_SIGMA * mad / math.sqrt(float(np.sum(_HIGHPASS ** 2)))


NoiseEstimator = Callable[[Image], float]


def estimate_noise(image: Image, estimator: NoiseEstimator = estimate_noise_mad) -> float:
    return estimator(image)


@dataclass(frozen=True)
class PoseCandidate:
    pose_id: int
    travel_cost: float
    sigma_at_pose: float

    def __post_init__(self):
        if not self.travel_cost >= 0:
            raise ValueError("travel cost must be non-negative")
        if not self.sigma_at_pose > 0:
            raise NonPositiveSigma("sigma at pose must be positive")


@dataclass(frozen=True)
class PoseChoice:
    candidate: PoseCandidate
    M: int
    cost: float
    costs: dict


def optimal_pose_search(candidates: Sequence[PoseCandidate], sigma_threshold: float,
                        weights: dict | None = None, per_image_cost: float = 1.0) -> PoseChoice:
    """Pick the pose minimizing travel plus imaging cost.

    J(c) = w_energy * travel_cost + w_time * per_image_cost * required_samples(sigma_c).
    Ties go to the lowest pose id.
    """
    candidates = list(candidates)
    if not candidates:
        raise EmptyCandidates("no candidate poses")
    w = {"w_time": 1.0, "w_energy": 1.0, **(weights or {})}
    costs = {}
    for c in candidates:
        m = required_samples(c.sigma_at_pose, sigma_threshold)
        costs[c.pose_id] = (w["w_energy"] * c.travel_cost + w["w_time"] * per_image_cost * m, m)
    best = min(candidates, key=lambda c: (costs[c.pose_id][0], c.pose_id))
    J, m = costs[best.pose_id]
    return PoseChoice(best, m, J, costs)


# --- I/O -----------------------------------------------------------------------

def _pgm_tokens(data: bytes):
    """Header tokens of a PGM file, skipping comments; returns (tokens, body offset)."""
    tokens, i, n = [], 0, len(data)
    while len(tokens) < 4:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
            j += 1
        if j == i:
            raise ParseError("truncated PGM header")
        tokens.append(data[i:j].decode("ascii"))
        i = j
    return tokens, i + 1


def write_pgm(image: Image, path, binary: bool = True, maxval: int | None = None) -> None:
    """Grey-map output; intensities must be non-negative integers."""
    a = image.intensity
    if np.any(a != np.round(a)) or np.any(a < 0):
        raise ValueError("PGM holds non-negative integers only; use write_matrix_csv")
    a = a.astype(np.int64)
    maxval = int(maxval if maxval is not None else max(1, int(a.max(initial=0))))
    if maxval > 65535 or a.max(initial=0) > maxval:
        raise ValueError("intensity exceeds PGM range")
    head = f"{'P5' if binary else 'P2'}\n{image.width} {image.height}\n{maxval}\n".encode()
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        body = a.astype(dtype).tobytes()
    else:
        body = "\n".join(" ".join(str(v) for v in row) for row in a).encode() + b"\n"
    Path(path).write_bytes(head + body)


def read_pgm(path) -> Image:
    data = Path(path).read_bytes()
    tokens, off = _pgm_tokens(data)
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P5":
        dtype = ">u2" if maxval > 255 else "u1"
        a = np.frombuffer(data[off:], dtype=dtype, count=w * h)
    elif magic == "P2":
        a = np.array(data[off:].split(), dtype=np.int64)
        if a.size != w * h:
            raise ParseError(f"expected {w * h} samples, found {a.size}")
    else:
        raise ParseError(f"unsupported PGM magic {magic!r}", line=1)
    return Image(a.reshape(h, w).astype(float))


def write_matrix_csv(image: Image, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in image.intensity:
        w.writerow([fmt_float(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_matrix_csv(path) -> Image:
    rows = []
    for lineno, row in enumerate(csv.reader(io.StringIO(Path(path).read_text())), 1):
        try:
            rows.append([float(v) for v in row])
        except ValueError as err:
            raise ParseError(str(err), line=lineno) from None
    if len({len(r) for r in rows}) > 1:
        raise ParseError("ragged matrix")
    return Image(np.array(rows))
