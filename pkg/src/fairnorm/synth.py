"""Synthetic biased populations on the unit sphere.

The generator builds a hierarchy: near-orthogonal group centers, subject
centers scattered around them, and samples scattered around each subject, all
renormalized to unit length so cosine scoring and spherical clustering behave
as they do on real embeddings. The per-group `intra_noise` scale is the bias
knob: a noisier group gets lower genuine similarities and therefore a worse
false non-match rate at any shared threshold.

Noise magnitudes are expressed as approximate perturbation norms relative to
the unit-length signal: a Gaussian draw is scaled by `magnitude / sqrt(dim)`
per coordinate. A raw per-coordinate scale would make the perturbation norm
grow with sqrt(dim) and wipe out subject identity long before the bias
mechanism becomes observable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import EmbeddingDataset, Sample
from .errors import NumericError

DEFAULT_GROUP_DISPERSION = 0.3


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic biased population generator."""

    dim: int = 64
    n_groups: int = 2
    subjects_per_group: int = 100
    samples_per_subject: int = 4
    intra_noise: tuple[float, ...] = (0.1, 0.3)
    group_dispersion: float = DEFAULT_GROUP_DISPERSION
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.n_groups < 1:
            raise NumericError("dim and n_groups must be positive")
        if self.subjects_per_group < 1 or self.samples_per_subject < 1:
            raise NumericError("subject and sample counts must be positive")
        if len(self.intra_noise) != self.n_groups:
            raise NumericError(
                f"intra_noise has {len(self.intra_noise)} entries for {self.n_groups} groups"
            )
        if any(s <= 0 for s in self.intra_noise):
            raise NumericError("intra_noise scales must be positive")
        if self.group_dispersion <= 0:
            raise NumericError("group_dispersion must be positive")


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise NumericError("degenerate zero-norm draw")
    return v / norm


def generate(config: SynthConfig) -> EmbeddingDataset:
    """Deterministic-per-seed dataset with a 'group' attribute on every sample."""
    if config.n_groups > config.dim:
        raise NumericError(
            f"cannot orthonormalize {config.n_groups} group centers in dimension {config.dim}"
        )
    rng = np.random.default_rng(config.seed)
    raw = rng.normal(size=(config.dim, config.n_groups))
    q, _ = np.linalg.qr(raw)
    group_centers = q.T[: config.n_groups]

    scale = 1.0 / np.sqrt(config.dim)
    samples: list[Sample] = []
    for g in range(config.n_groups):
        noise = config.intra_noise[g] * scale
        for s in range(config.subjects_per_group):
            subject_id = f"g{g}_s{s:04d}"
            center = _unit(
                group_centers[g]
                + config.group_dispersion * scale * rng.normal(size=config.dim)
            )
            for m in range(config.samples_per_subject):
                vector = _unit(center + noise * rng.normal(size=config.dim))
                samples.append(
                    Sample(
                        sample_id=f"{subject_id}_i{m}",
                        subject_id=subject_id,
                        attributes={"group": str(g)},
                        vector=vector,
                    )
                )
    return EmbeddingDataset(dim=config.dim, samples=tuple(samples))
