"""
Test cases for 2D embedding projections.
"""
import numpy as np
import pandas as pd
import pytest

from forensics.explain.projection import Projection2D, ProjectionMethod, project_embeddings


def _two_clusters(n_per_cluster=20, dim=128, seed=0):
    r = np.random.default_rng(seed)
    a = r.normal(0.0, 1.0, size=(n_per_cluster, dim))
    b = r.normal(0.0, 1.0, size=(n_per_cluster, dim)) + 20.0
    return np.vstack([a, b]), ["A"] * n_per_cluster + ["B"] * n_per_cluster


def test_ten_points_give_ten_coordinates():
    embeddings = np.random.default_rng(0).normal(size=(10, 128))
    projection = project_embeddings(embeddings, [str(i % 2) for i in range(10)])
    assert projection.points.shape == (10, 2)
    assert len(projection) == 10


def test_same_seed_same_layout():
    embeddings, labels = _two_clusters()
    first = project_embeddings(embeddings, labels, seed=5)
    second = project_embeddings(embeddings, labels, seed=5)
    assert np.allclose(first.points, second.points)


def test_separated_clusters_stay_separated():
    embeddings, labels = _two_clusters()
    assert project_embeddings(embeddings, labels, seed=0).silhouette() > 0.5


def test_umap_layout():
    embeddings, labels = _two_clusters()
    projection = project_embeddings(embeddings, labels, ProjectionMethod.UMAP_STYLE, seed=0)
    assert projection.method is ProjectionMethod.UMAP_STYLE
    assert projection.silhouette() > 0.5


def test_identical_embeddings_are_jittered(caplog):
    projection = project_embeddings(np.ones((12, 8)), ["x"] * 12)
    assert np.all(np.isfinite(projection.points))
    assert "identical" in caplog.text


def test_input_validation():
    with pytest.raises(ValueError, match="at least 10"):
        project_embeddings(np.zeros((9, 4)), ["x"] * 9)
    with pytest.raises(ValueError):
        project_embeddings(np.zeros((12, 4)), ["x"] * 11)
    with pytest.raises(ValueError):
        Projection2D(np.zeros((3, 3)), ("a", "b", "c"), ProjectionMethod.TSNE_STYLE)


def test_exports(tmp_path):
    embeddings, labels = _two_clusters(n_per_cluster=6)
    projection = project_embeddings(embeddings, labels)
    frame = pd.read_csv(projection.save_csv(tmp_path / "projection.csv"))
    assert list(frame.columns) == ["x", "y", "label"]
    assert len(frame) == 12
    assert projection.save_png(tmp_path / "projection.png").exists()
