"""Shared strategies and dataset builders for the test suite."""

import numpy as np
from hypothesis import strategies as st

from fairnorm.data import EmbeddingDataset, Sample

IDCHARS = "abcdefghijklmnopqrstuvwxyz0123456789_-"

id_token = st.text(alphabet=IDCHARS, min_size=1, max_size=8)

finite_floats = st.floats(
    min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False
)


@st.composite
def embedding_datasets(draw, min_rows=1, max_rows=12, min_dim=1, max_dim=6,
                       float32=False, min_subjects=1):
    dim = draw(st.integers(min_dim, max_dim))
    n = draw(st.integers(min_rows, max_rows))
    n_subjects = draw(st.integers(min(min_subjects, n), n))
    subject_pool = [f"subj{t}" for t in range(n_subjects)]
    samples = []
    for row in range(n):
        # spread subjects so each pool entry owns at least one sample
        subject = subject_pool[row % n_subjects]
        values = draw(st.lists(finite_floats, min_size=dim, max_size=dim))
        vec = np.array(values, dtype=np.float64)
        if float32:
            vec = vec.astype(np.float32).astype(np.float64)
        n_attrs = draw(st.integers(0, 2))
        attrs = {}
        for a in range(n_attrs):
            attrs[f"attr{a}"] = draw(id_token)
        samples.append(
            Sample(
                sample_id=f"row{row}_{draw(id_token)}",
                subject_id=subject,
                attributes=attrs,
                vector=vec,
            )
        )
    return EmbeddingDataset(dim=dim, samples=tuple(samples))


def make_dataset(vectors, subjects, attrs=None):
    """Quick dataset from plain lists; attrs is an optional per-sample dict list."""
    vectors = np.asarray(vectors, dtype=np.float64)
    samples = []
    for idx, (vec, subj) in enumerate(zip(vectors, subjects)):
        samples.append(
            Sample(
                sample_id=f"s{idx:04d}",
                subject_id=str(subj),
                attributes=attrs[idx] if attrs is not None else {},
                vector=np.asarray(vec, dtype=np.float64),
            )
        )
    return EmbeddingDataset(dim=vectors.shape[1], samples=tuple(samples))


def random_unit_dataset(rng, n=20, dim=4, n_subjects=6, attr_groups=None):
    """Random unit vectors with cyclic subject assignment, optional group labels."""
    vecs = rng.normal(size=(n, dim))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    subjects = [f"p{idx % n_subjects}" for idx in range(n)]
    attrs = None
    if attr_groups is not None:
        attrs = [{"group": str(idx % attr_groups)} for idx in range(n)]
    return make_dataset(vecs, subjects, attrs)
