"""Training objective: symmetric contrastive, tethering and cosine alignment terms."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DegenerateInputError, DimensionError, NumericalError

MAX_LOGIT_SCALE = 100.0
INIT_LOG_SCALE = float(np.log(1.0 / 0.07))


class ContrastiveHead:
    """Learnable logit scale, optionally with a dense identity-initialised matrix.

    Logits are ``exp(log_scale) * Z_a W Z_b^T``; without ``dense`` the matrix
    is the identity and never materialised.
    """

    def __init__(self, dim, dense=False, log_scale=INIT_LOG_SCALE):
        self.dim = dim
        self.dense = dense
        self.params = {"head.log_scale": Tensor(np.array([log_scale]), name="head.log_scale")}
        if dense:
            self.params["head.W"] = Tensor(np.eye(dim), name="head.W")

    @property
    def log_scale(self):
        return self.params["head.log_scale"]

    @property
    def scale(self):
        return float(np.exp(self.log_scale.data[0]))

    def clamp(self):
        """Cap the effective scale at 100 after an optimiser update."""
        ls = self.log_scale.data
        np.minimum(ls, np.log(MAX_LOGIT_SCALE), out=ls)

    def logits(self, za, zb):
        s = ad.exp(self.log_scale)
        if self.dense:
            return (za @ self.params["head.W"] @ zb.T) * s
        return (za @ zb.T) * s


@dataclass
class LossWeights:
    lambda_distill: float = 0.4

    def __post_init__(self):
        if not np.isfinite(self.lambda_distill) or self.lambda_distill < 0:
            raise ConfigError(f"lambda_distill must be finite and >= 0, got {self.lambda_distill}")


@dataclass
class LossBreakdown:
    contrastive: float
    distill: float
    alignment: float
    total: float
    tensor: Tensor = field(default=None, repr=False, compare=False)

    def as_dict(self):
        return {"contrastive": self.contrastive, "distill": self.distill,
                "alignment": self.alignment, "total": self.total}


def _check_pair(a, b, what):
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shape mismatch {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise DimensionError(f"{what}: expected (N, d) batches, got {a.shape}")


def contrastive_loss(z_motion, z_text, head):
    """Symmetric cross-entropy over scaled similarity logits, pairs matched by row."""
    z_motion, z_text = ad.as_tensor(z_motion), ad.as_tensor(z_text)
    if z_motion.shape[0] != z_text.shape[0]:
        raise DimensionError(f"contrastive: batch sizes differ ({z_motion.shape[0]} vs {z_text.shape[0]})")
    _check_pair(z_motion, z_text, "contrastive")
    n = z_motion.shape[0]
    if n == 1:
        warnings.warn("contrastive loss on a single pair carries no signal", stacklevel=2)
    y = np.arange(n)
    ce_m = ad.cross_entropy_rows(head.logits(z_motion, z_text), y)
    ce_t = ad.cross_entropy_rows(head.logits(z_text, z_motion), y)
    return (ce_m + ce_t) * 0.5


def distill_loss(student, teacher):
    """Mean over rows of the squared Euclidean distance to the teacher."""
    student, teacher = ad.as_tensor(student), ad.as_tensor(teacher)
    _check_pair(student, teacher, "distill")
    diff = student - Tensor(teacher.data)
    return (diff * diff).sum(axis=1).mean()


def alignment_loss(z_motion, z_student):
    """One minus the mean row-wise cosine similarity."""
    z_motion, z_student = ad.as_tensor(z_motion), ad.as_tensor(z_student)
    _check_pair(z_motion, z_student, "alignment")
    for name, t in (("motion", z_motion), ("text", z_student)):
        norms = np.linalg.norm(t.data, axis=1)
        bad = np.flatnonzero(norms == 0.0)
        if bad.size:
            raise DegenerateInputError(f"alignment: {name} row {int(bad[0])} has zero norm")
    num = (z_motion * z_student).sum(axis=1)
    den = ad.sqrt((z_motion * z_motion).sum(axis=1)) * ad.sqrt((z_student * z_student).sum(axis=1))
    return 1.0 - (num / den).mean()


def total_loss(contrastive, distill, alignment, weights):
    """Weighted total; ``None`` drops a term. The tensor stays on the breakdown for ``backward``."""
    c = ad.as_tensor(contrastive)
    tensor = c
    values = {"contrastive": float(c.data), "distill": 0.0, "alignment": 0.0}
    if distill is not None:
        distill = ad.as_tensor(distill)
        values["distill"] = float(distill.data)
        tensor = tensor + distill * weights.lambda_distill
    if alignment is not None:
        alignment = ad.as_tensor(alignment)
        values["alignment"] = float(alignment.data)
        tensor = tensor + alignment
    for name, v in values.items():
        if not np.isfinite(v):
            raise NumericalError(f"{name} loss is not finite ({v})")
    return LossBreakdown(total=float(tensor.data), tensor=tensor, **values)
