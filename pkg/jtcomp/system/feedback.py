"""Relative thresholding of the CSI feedback, CSI masking and backhaul accounting.

Each user reports the full channel of every BS whose long-term average power lies within
`threshold_db` of its strongest BS; those BSs form its cooperation set B_u. Long-term gains
(RSSI) of all links remain known at the coordination node.
"""
import dataclasses
import logging
import math

import numpy as np

from jtcomp.errors import DimensionError
from jtcomp.util.log import BraceMessage as __

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True, eq=False)
class CooperationMap:
    mask: np.ndarray
    threshold_db: float = math.inf

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise DimensionError("cooperation mask must be num_bs x num_users")
        if not mask.any(axis=0).all():
            raise ValueError("every user needs at least one serving BS")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def num_bs(self):
        return self.mask.shape[0]

    @property
    def num_users(self):
        return self.mask.shape[1]

    @property
    def serving_sets(self):
        """B_u for every user u."""
        return tuple(frozenset(np.flatnonzero(self.mask[:, u]).tolist()) for u in range(self.num_users))

    @property
    def served_sets(self):
        """U_b for every BS b."""
        return tuple(frozenset(np.flatnonzero(self.mask[b, :]).tolist()) for b in range(self.num_bs))

    @property
    def is_full(self):
        return bool(self.mask.all())

    @property
    def link_count(self):
        return int(self.mask.sum())

    def __eq__(self, other):
        return isinstance(other, CooperationMap) and np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash(self.mask.tobytes())


def full_cooperation(num_bs, num_users):
    return CooperationMap(np.ones((num_bs, num_users), dtype=bool), math.inf)


def relative_threshold(realization, threshold_db):
    """Serving sets from the long-term power N_T * lambda^2 of each link; links exactly at the threshold are kept."""
    if math.isnan(threshold_db) or threshold_db < 0:
        raise ValueError("threshold must be >= 0 dB or +inf, got {}".format(threshold_db))
    if math.isinf(threshold_db):
        return full_cooperation(realization.num_bs, realization.num_users)
    average_db = 10 * np.log10(realization.n_t * realization.lambda_sq)
    strongest_db = average_db.max(axis=0, keepdims=True)
    return CooperationMap(strongest_db - average_db <= threshold_db, float(threshold_db))


@dataclasses.dataclass(frozen=True, eq=False)
class MaskedCsi:
    """What the central coordination node knows: full channels of the fed-back links only
    (zero elsewhere), long-term gains of every link, and the link budget."""
    known: np.ndarray
    lambda_sq: np.ndarray
    coop: CooperationMap
    noise_power: float
    max_power: float
    weights: np.ndarray

    def __post_init__(self):
        for name in ("known", "lambda_sq", "weights"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_bs(self):
        return self.known.shape[0]

    @property
    def num_users(self):
        return self.known.shape[1]

    @property
    def n_t(self):
        return self.known.shape[2]

    def known_channels(self):
        """The fed-back channels as a {(b, u): h_bu} mapping."""
        return {(b, u): self.known[b, u] for b, u in zip(*np.nonzero(self.coop.mask))}

    def normalized(self):
        """Copy with the weakest link at unit gain and the per-antenna power folded into the channels.

        A precoder `v` designed for the copy (per-antenna power <= 1) maps back as `w = scale * v`.
        """
        amplitude_sq = float(np.min(self.lambda_sq))
        power = self.max_power
        scaled = dataclasses.replace(self, known=self.known * np.sqrt(power / amplitude_sq),
                                     lambda_sq=self.lambda_sq * power / amplitude_sq,
                                     noise_power=self.noise_power / amplitude_sq, max_power=1.0)
        return scaled, float(np.sqrt(power))


def mask_csi(realization, coop, weights=None):
    if (coop.num_bs, coop.num_users) != realization.lambda_sq.shape:
        raise DimensionError("cooperation map is {}x{}, realization has {} BSs and {} users".format(
            coop.num_bs, coop.num_users, realization.num_bs, realization.num_users))
    if weights is None:
        weights = np.ones(realization.num_users)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (realization.num_users,):
        raise DimensionError("expected one weight per user")
    known = np.where(coop.mask[:, :, None], realization.h, 0)
    logger.debug(__("Masked CSI: {} of {} links known (T={} dB)", coop.link_count, coop.mask.size,
                    coop.threshold_db))
    return MaskedCsi(known=known, lambda_sq=np.array(realization.lambda_sq), coop=coop,
                     noise_power=realization.noise_power, max_power=realization.max_power, weights=weights)


def backhaul_load(coop, n_t):
    """(CSI coefficients fed back, precoding weights generated); equal under efficient backhauling.

    Users report N_T coefficients per BS in B_u, each BS receives N_T weights per user in U_b.
    """
    csi = n_t * sum(len(serving) for serving in coop.serving_sets)
    weights = n_t * sum(len(served) for served in coop.served_sets)
    return csi, weights
