"""Hard-core particle layers: Matérn sampling, distance fields, hypothesis checks.

Particles are unit-radius disks whose centers live in the slab
R x (0, h); all lateral arithmetic is optionally periodic with the cell
width. Sampling is driven by counter-based Philox streams so that the
realization drawn for a given (master_seed, index) pair never depends on
execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import EmptyConfiguration, InvalidLayer

VALID_PROCESS_KINDS = ("matern2", "hardcore_poisson")


def substream(master_seed: int, index: int) -> np.random.Generator:
    """Independent RNG stream for sample `index` under `master_seed`.

    Philox keyed by the pair, so parallel samplers can draw realization j
    without consuming state from any other realization.
    """
    key = np.array([np.uint64(master_seed), np.uint64(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class LayerSpec:
    """Normalized slab hosting unit-radius particles.

    Parameters
    ----------
    h : float
        Slab height; centers live in [1+delta, h-1], so h > 2 is required.
    delta : float
        Minimal gap between particles and to the slab faces.
    width : float
        Lateral cell width.
    periodic : bool
        Whether lateral distances wrap modulo `width`.
    """

    h: float = 5.0
    delta: float = 0.05
    width: float = 50.0
    periodic: bool = True

    def __post_init__(self) -> None:
        if not self.h > 2.0:
            raise InvalidLayer(f"layer height h={self.h} must exceed 2 (unit-radius particles)")
        if self.delta < 0.0:
            raise InvalidLayer(f"gap delta={self.delta} must be >= 0")
        if not self.width > 2.0 * (1.0 + self.delta):
            raise InvalidLayer(f"width={self.width} must exceed 2*(1+delta)")

    @property
    def center_band(self) -> tuple[float, float]:
        """Admissible center heights [1+delta, h-1]."""
        return 1.0 + self.delta, self.h - 1.0

    @property
    def hardcore_distance(self) -> float:
        """Minimal center-to-center distance 2 + delta."""
        return 2.0 + self.delta


@dataclass(frozen=True)
class PointProcessParams:
    """Hard-core point process parameters.

    `rho` is the target area density of disks before thinning; the Poisson
    count parameter for a given layer is nu = rho * width * h / pi.
    """

    kind: str = "matern2"
    rho: float = 0.3

    def __post_init__(self) -> None:
        if self.kind not in VALID_PROCESS_KINDS:
            raise InvalidLayer(f"unknown process kind {self.kind!r}, expected one of {VALID_PROCESS_KINDS}")
        if not 0.0 <= self.rho < 1.0:
            raise InvalidLayer(f"density rho={self.rho} must lie in [0, 1)")

    def intensity(self, layer: LayerSpec) -> float:
        """Poisson parameter nu = rho * width * h / pi for unit disks."""
        return self.rho * layer.width * layer.h / math.pi


def lateral_delta(dx: np.ndarray | float, width: float, periodic: bool) -> np.ndarray | float:
    """Signed lateral separation, wrapped into [-width/2, width/2] if periodic."""
    if periodic:
        return dx - width * np.round(np.asarray(dx) / width)
    return dx


@dataclass(frozen=True)
class ParticleConfiguration:
    """A finite set of unit-disk centers in a slab with hard-core guarantees.

    Construction verifies the hard-core and containment invariants exactly
    and freezes the center array.
    """

    centers: np.ndarray
    layer: LayerSpec
    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        centers = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        lo, hi = self.layer.center_band
        if centers.size:
            if centers[:, 1].min() < lo or centers[:, 1].max() > hi:
                raise InvalidLayer("particle centers violate the containment band [1+delta, h-1]")
            if len(centers) > 1:
                dmin = self.min_pairwise_distance()
                if dmin < self.layer.hardcore_distance - 1e-12:
                    raise InvalidLayer(f"hard-core violation: min pairwise distance {dmin}")

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def is_empty(self) -> bool:
        return len(self.centers) == 0

    def min_pairwise_distance(self) -> float:
        """Minimal center-to-center distance in the configuration metric."""
        c = self.centers
        if len(c) < 2:
            return math.inf
        dx = lateral_delta(c[:, 0][:, None] - c[:, 0][None, :], self.layer.width, self.layer.periodic)
        dy = c[:, 1][:, None] - c[:, 1][None, :]
        d2 = dx * dx + dy * dy
        np.fill_diagonal(d2, np.inf)
        return float(np.sqrt(d2.min()))

    def translated(self, shift: float) -> "ParticleConfiguration":
        """Configuration with every lateral coordinate shifted by `shift`."""
        c = self.centers.copy()
        c[:, 0] = c[:, 0] + shift
        return ParticleConfiguration(c, self.layer, self.seed, self.stream)

    def to_csv(self, path) -> None:
        """Write centers as CSV rows `x_par,x_d` with a one-line header."""
        with open(path, "w", newline="\n") as fh:
            fh.write("x_par,x_d\n")
            for x, y in self.centers:
                fh.write(f"{float(x)!r},{float(y)!r}\n")


def _matern_keep_mask(points: np.ndarray, scores: np.ndarray, min_dist: float,
                      width: float, periodic: bool) -> np.ndarray:
    """Matérn type-II retention: drop any point conflicting with a lower score.

    Ties broken by index (lower index wins). Deletion is simultaneous with
    respect to the original point set.
    """
    n = len(points)
    if n == 0:
        return np.zeros(0, dtype=bool)
    dx = lateral_delta(points[:, 0][:, None] - points[:, 0][None, :], width, periodic)
    dy = points[:, 1][:, None] - points[:, 1][None, :]
    conflict = dx * dx + dy * dy < min_dist * min_dist
    np.fill_diagonal(conflict, False)
    idx = np.arange(n)
    beats = (scores[None, :] < scores[:, None]) | (
        (scores[None, :] == scores[:, None]) & (idx[None, :] < idx[:, None])
    )
    return ~np.any(conflict & beats, axis=1)


def _sequential_keep_mask(points: np.ndarray, min_dist: float,
                          width: float, periodic: bool) -> np.ndarray:
    """Index-order sequential inhibition (the hardcore_poisson kind)."""
    n = len(points)
    keep = np.zeros(n, dtype=bool)
    kept: list[int] = []
    for i in range(n):
        ok = True
        for j in kept:
            dx = lateral_delta(points[i, 0] - points[j, 0], width, periodic)
            dy = points[i, 1] - points[j, 1]
            if dx * dx + dy * dy < min_dist * min_dist:
                ok = False
                break
        if ok:
            keep[i] = True
            kept.append(i)
    return keep


def sample_matern(params: PointProcessParams, layer: LayerSpec, seed: int,
                  stream: int = 0) -> ParticleConfiguration:
    """Sample a hard-core configuration by Poisson placement plus thinning.

    Steps: draw N_p ~ Poisson(nu), place N_p centers uniformly in the
    admissible sub-slab [1+delta, h-1], assign i.i.d. uniform scores, and
    delete every center conflicting (distance < 2+delta, periodic lateral
    metric when the layer is periodic) with a strictly lower-scored center.
    Deterministic for fixed (seed, stream).
    """
    rng = substream(seed, stream)
    nu = params.intensity(layer)
    n_p = int(rng.poisson(nu)) if nu > 0 else 0
    lo, hi = layer.center_band
    x = rng.uniform(-layer.width / 2.0, layer.width / 2.0, size=n_p)
    y = rng.uniform(lo, hi, size=n_p)
    scores = rng.uniform(size=n_p)
    points = np.column_stack([x, y]) if n_p else np.zeros((0, 2))
    if params.kind == "matern2":
        keep = _matern_keep_mask(points, scores, layer.hardcore_distance,
                                 layer.width, layer.periodic)
    else:
        keep = _sequential_keep_mask(points, layer.hardcore_distance,
                                     layer.width, layer.periodic)
    return ParticleConfiguration(points[keep], layer, seed, stream)


def distance_field(config: ParticleConfiguration, y: Sequence[float]) -> float:
    """Distance from point y = (y_par, y_d) to the nearest particle center."""
    if config.is_empty:
        raise EmptyConfiguration("distance field is +inf for an empty configuration")
    c = config.centers
    dx = lateral_delta(y[0] - c[:, 0], config.layer.width, config.layer.periodic)
    dy = y[1] - c[:, 1]
    return float(np.sqrt(np.min(dx * dx + dy * dy)))


def weight_mu(config: ParticleConfiguration, y: Sequence[float], m: float) -> float:
    """Decay weight built from the nearest-center distance.

    Equals R(y)^(-m) inside the slab (y_d <= h) and
    (y_d^2 + R((y_par, h))^(2m))^(-1) above it. Requires m > 2d = 4; the two
    branches do not match at y_d = h (documented discontinuity of the model).
    """
    if m <= 4.0:
        raise ValueError(f"weight exponent m={m} must exceed 2d = 4")
    y_par, y_d = float(y[0]), float(y[1])
    if y_d <= config.layer.h:
        r = distance_field(config, (y_par, y_d))
        return r ** (-m)
    r_top = distance_field(config, (y_par, config.layer.h))
    return 1.0 / (y_d * y_d + r_top ** (2.0 * m))


@dataclass(frozen=True)
class HypothesisReport:
    """Empirical moment/maximum statistics of the nearest-center distance."""

    y_levels: np.ndarray
    mean_r_pow_m: np.ndarray
    max_r: np.ndarray
    m: float
    n_samples: int
    unbounded: bool


def check_hypotheses(params: PointProcessParams, layer: LayerSpec, n_samples: int,
                     m: float, master_seed: int = 0, n_lateral: int = 32,
                     y_levels: np.ndarray | None = None) -> HypothesisReport:
    """Monte-Carlo check of the distance-moment and boundedness hypotheses.

    For each height on a probe grid, reports the empirical mean of R^m over
    samples and lateral probe points and the empirical max of R. An empty
    realization flags the report as unbounded.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if y_levels is None:
        y_levels = np.linspace(0.0, layer.h, 11)
    y_levels = np.asarray(y_levels, dtype=float)
    probes = -layer.width / 2.0 + layer.width * np.arange(n_lateral) / n_lateral
    sum_rm = np.zeros(len(y_levels))
    max_r = np.zeros(len(y_levels))
    unbounded = False
    for j in range(n_samples):
        config = sample_matern(params, layer, master_seed, stream=j)
        if config.is_empty:
            unbounded = True
            continue
        for iy, yd in enumerate(y_levels):
            r = np.array([distance_field(config, (xp, yd)) for xp in probes])
            sum_rm[iy] += np.mean(r ** m)
            max_r[iy] = max(max_r[iy], r.max())
    denom = max(n_samples, 1)
    return HypothesisReport(y_levels, sum_rm / denom, max_r, m, n_samples, unbounded)


def birkhoff_average(configs: Iterable[ParticleConfiguration],
                     observable: Callable[[ParticleConfiguration, np.ndarray], np.ndarray],
                     window_widths: Sequence[float],
                     probe_spacing: float = 0.25) -> list[tuple[float, float]]:
    """Spatial window averages against the ensemble average.

    `observable(config, x_probes)` must be a stationary per-point functional
    returning one value per lateral probe. The ensemble average is estimated
    from the observable at the cell origin across the stream; the table rows
    are (width, mean |spatial average - ensemble average|).
    """
    configs = list(configs)
    if not configs:
        raise ValueError("need at least one configuration")
    origin = np.zeros(1)
    ensemble = float(np.mean([float(observable(c, origin)[0]) for c in configs]))
    table: list[tuple[float, float]] = []
    for w in window_widths:
        n_probe = max(2, int(round(w / probe_spacing)))
        probes = -w / 2.0 + w * (np.arange(n_probe) + 0.5) / n_probe
        discrepancies = [abs(float(np.mean(observable(c, probes))) - ensemble) for c in configs]
        table.append((float(w), float(np.mean(discrepancies))))
    return table
