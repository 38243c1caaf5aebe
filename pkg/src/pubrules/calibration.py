"""Calibrating prior variance, manipulation cost and attention cost from p-values.

Test statistics are normalized so the sampling variance is one.  The three
parameters come from separate moments of the corpus:

* ``cm`` from the share of statistics bunched just above the significance
  cutoff, after correcting for unpublished and pre-registered studies;
* ``eta2`` from an upper quantile of ``|t|``, which manipulation below the
  cutoff cannot move;
* ``ca`` so that the no-manipulation publication cutoff equals the chosen
  critical value.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from . import gaussian_kernel as gk
from ._errors import DomainError, InfeasibleError

log = logging.getLogger(__name__)

MIN_OBSERVATIONS = 1000
ROBUST_QUANTILE_FLOOR = 2.56


class Level(enum.Enum):
    FIVE_PCT = "five_pct"
    ONE_PCT = "one_pct"


LEVEL_CUTOFFS = {Level.FIVE_PCT: 1.96, Level.ONE_PCT: 2.56}
CM_SCALES = ("standard", "marginal", "folded")
DEFAULT_WINDOWS = {Level.FIVE_PCT: (1.95, 2.00), Level.ONE_PCT: (2.55, 2.60)}


@dataclass(frozen=True)
class PValueDataset:
    p_values: np.ndarray
    source: str = ""
    n_rejected: int = 0

    def __post_init__(self):
        p = np.asarray(self.p_values, dtype=float)
        if np.any(~((p > 0) & (p <= 1))):
            raise DomainError("p-values must lie in (0, 1]")
        object.__setattr__(self, "p_values", p)

    def __len__(self) -> int:
        return self.p_values.size


def read_pvalues(path, source: str | None = None) -> PValueDataset:
    """Read a delimited file with a ``p_value`` column.

    Rows that are not numbers in (0, 1] are counted in ``n_rejected``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        try:
            dialect = csv.Sniffer().sniff(sample, delimiters=",;\t ")
        except csv.Error:
            dialect = csv.excel
        reader = csv.DictReader(fh, dialect=dialect)
        if reader.fieldnames is None or "p_value" not in [f.strip() for f in reader.fieldnames]:
            raise DomainError(f"{path}: missing 'p_value' header")
        key = next(f for f in reader.fieldnames if f.strip() == "p_value")
        good, bad = [], 0
        for row in reader:
            try:
                p = float(row[key])
            except (TypeError, ValueError):
                bad += 1
                continue
            if 0.0 < p <= 1.0:
                good.append(p)
            else:
                bad += 1
    if bad:
        log.warning("%s: rejected %d malformed or out-of-range rows", path, bad)
    return PValueDataset(np.array(good), source=source or str(path), n_rejected=bad)


@dataclass(frozen=True)
class CalibrationConfig:
    level: Level = Level.FIVE_PCT
    cutoff: float | None = None
    bunch_window: tuple[float, float] | None = None
    unpublished_share: float = 0.36
    prereg_share: float = 0.27
    raw_bunch_share_override: float | None = None
    upper_quantile: float = 0.95
    # "approx" uses 2 for the 97.5% normal quantile, "exact" uses 1.959964...
    eta2_divisor: str = "approx"
    # Bunching equation variant; see estimate_cm.
    cm_scale: str = "standard"

    def __post_init__(self):
        if self.cutoff is None:
            object.__setattr__(self, "cutoff", LEVEL_CUTOFFS[self.level])
        if self.bunch_window is None:
            object.__setattr__(self, "bunch_window", DEFAULT_WINDOWS[self.level])
        lo, hi = self.bunch_window
        if not lo < self.cutoff <= hi:
            raise DomainError("bunch window must satisfy lo < cutoff <= hi")
        for name in ("unpublished_share", "prereg_share"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise DomainError(f"{name} must lie in [0, 1)")
        if self.raw_bunch_share_override is not None and not 0 <= self.raw_bunch_share_override <= 1:
            raise DomainError("raw bunch share must lie in [0, 1]")
        if self.eta2_divisor not in ("approx", "exact"):
            raise DomainError("eta2_divisor must be 'approx' or 'exact'")
        if self.cm_scale not in CM_SCALES:
            raise DomainError(f"cm_scale must be one of {CM_SCALES}")


def pvalues_to_tstats(data: PValueDataset) -> np.ndarray:
    """Two-sided inversion ``|t| = Phi^{-1}(1 - p/2)``."""
    return np.asarray(gk.two_sided_z(data.p_values), dtype=float)


def raw_bunch_share(tstats, cfg: CalibrationConfig) -> float:
    lo, hi = cfg.bunch_window
    t = np.asarray(tstats, dtype=float)
    return float(np.count_nonzero((t >= lo) & (t <= hi))) / t.size


def adjusted_bunch_share(cfg: CalibrationConfig, raw_share: float) -> float:
    if not 0.0 <= raw_share <= 1.0:
        raise DomainError("raw share must lie in [0, 1]")
    return float(raw_share * (1.0 - cfg.unpublished_share) / (1.0 - cfg.prereg_share))


def estimate_cm(cfg: CalibrationConfig, b: float, eta2: float | None = None) -> float:
    """Solve the bunching equation for ``cm`` by bisection on ``1/cm``.

    ``standard``: ``Phi(q) - Phi(q - 1/cm) = b``.
    ``marginal``: the same with statistics on the ``N(0, 1 + eta2)`` scale.
    ``folded``: ``P(q - 1/cm < |Y| < q) = b`` for ``Y ~ N(0, 1 + eta2)``, the
    share of all types that jump to the cutoff under a sharp threshold.
    """
    q = cfg.cutoff
    if cfg.cm_scale == "standard":
        scale, weight, floor = 1.0, 1.0, -math.inf
    else:
        if eta2 is None or not eta2 > 0:
            raise DomainError(f"cm_scale={cfg.cm_scale!r} needs a positive eta2")
        scale = math.sqrt(1.0 + eta2)
        weight, floor = (1.0, -math.inf) if cfg.cm_scale == "marginal" else (2.0, 0.0)
    if not b > 0:
        raise InfeasibleError("bunch share must be positive; zero bunching means cm = inf")
    top = gk.cdf(q / scale)
    reach = weight * (top - gk.cdf(floor / scale))
    if b >= reach:
        raise InfeasibleError(f"bunch share {b} is not below {reach}; no manipulation cost fits")

    def gap(width):
        return weight * (top - gk.cdf(max(q - width, floor) / scale)) - b

    width = optimize.bisect(gap, 0.0, q + 10.0, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500)
    return 1.0 / width


def robust_quantile_level(cfg: CalibrationConfig) -> float:
    """Quantile of observed ``|t|`` matching the population ``upper_quantile``.

    Unpublished studies are assumed insignificant, so the observed upper tail
    is inflated by ``1 / (1 - unpublished_share)``.
    """
    tail = 1.0 - cfg.upper_quantile
    gap = tail * cfg.unpublished_share / (1.0 - cfg.unpublished_share)
    return cfg.upper_quantile - gap


def nearest_rank(values, level: float) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    k = max(1, math.ceil(level * v.size))
    return float(v[k - 1])


def eta2_from_quantile(q_bar: float, cfg: CalibrationConfig | None = None) -> float:
    divisor = 2.0
    if cfg is not None and cfg.eta2_divisor == "exact":
        divisor = gk.quantile(0.5 + cfg.upper_quantile / 2.0)
    return (q_bar / divisor) ** 2 - 1.0


def estimate_eta2(tstats, cfg: CalibrationConfig) -> tuple[float, float]:
    """Return ``(eta2, quantile_used)`` from observed ``|t|`` statistics."""
    t = np.asarray(tstats, dtype=float)
    if t.size < MIN_OBSERVATIONS:
        raise DomainError(f"need at least {MIN_OBSERVATIONS} statistics, got {t.size}")
    q_bar = nearest_rank(np.abs(t), robust_quantile_level(cfg))
    if q_bar <= ROBUST_QUANTILE_FLOOR:
        warnings.warn(
            f"upper quantile {q_bar:.3f} is not above {ROBUST_QUANTILE_FLOOR}; "
            "the estimate may be contaminated by manipulation", RuntimeWarning, stacklevel=2)
    return eta2_from_quantile(q_bar, cfg), q_bar


def derive_ca(eta2: float, target_cutoff: float, s2: float = 1.0) -> float:
    """Attention cost whose no-manipulation cutoff equals ``target_cutoff``."""
    if not (eta2 > 0 and target_cutoff > 0):
        raise DomainError("eta2 and target cutoff must be positive")
    return (target_cutoff * eta2 / (s2 + eta2)) ** 2


@dataclass(frozen=True)
class CalibratedParams:
    eta2: float
    cm: float
    ca: float
    level: Level
    raw_share: float
    adjusted_b: float
    percentile_used: float
    quantile_value: float
    n_used: int
    n_rejected: int
    source: str = ""
    config: dict = field(default_factory=dict)

    def report(self) -> dict:
        out = asdict(self)
        out["level"] = self.level.value
        return out


def calibrate_pipeline(data: PValueDataset, cfg: CalibrationConfig) -> CalibratedParams:
    tstats = pvalues_to_tstats(data)
    raw = cfg.raw_bunch_share_override
    if raw is None:
        raw = raw_bunch_share(tstats, cfg)
    b = adjusted_bunch_share(cfg, raw)
    eta2, q_bar = estimate_eta2(tstats, cfg)
    if not eta2 > 0:
        raise InfeasibleError(f"upper quantile {q_bar} implies non-positive prior variance")
    cm = estimate_cm(cfg, b, eta2)
    cfg_dict = asdict(cfg)
    cfg_dict["level"] = cfg.level.value
    cfg_dict["bunch_window"] = list(cfg.bunch_window)
    return CalibratedParams(
        eta2=eta2,
        cm=cm,
        ca=derive_ca(eta2, cfg.cutoff),
        level=cfg.level,
        raw_share=raw,
        adjusted_b=float(b),
        percentile_used=float(robust_quantile_level(cfg)),
        quantile_value=q_bar,
        n_used=len(data),
        n_rejected=data.n_rejected,
        source=data.source,
        config=cfg_dict,
    )
