"""
2D projections of encoder embeddings (t-SNE or UMAP), exported as CSV and PNG.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import matplotlib
import numpy as np
import pandas as pd
import umap
from sklearn.manifold import TSNE
from sklearn.metrics import silhouette_score

from forensics.seeding import rng

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

MIN_POINTS = 10
MAX_PERPLEXITY = 30.0
UMAP_NEIGHBORS = 15
JITTER_SCALE = 1e-3


class ProjectionMethod(str, Enum):
    TSNE_STYLE = "TSNE_STYLE"
    UMAP_STYLE = "UMAP_STYLE"


@dataclass(frozen=True, eq=False)
class Projection2D:
    points: np.ndarray
    labels: tuple
    method: ProjectionMethod

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 2:
            raise ValueError(f"Projection points must be (M, 2), got {points.shape}")
        if len(self.labels) != len(points):
            raise ValueError(f"{len(self.labels)} labels for {len(points)} points")
        if not np.all(np.isfinite(points)):
            raise ValueError("Projection produced non-finite coordinates")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", tuple(str(label) for label in self.labels))

    def __len__(self):
        return len(self.points)

    def to_frame(self):
        return pd.DataFrame({"x": self.points[:, 0], "y": self.points[:, 1], "label": list(self.labels)})

    def save_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    def save_png(self, path, title=None):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = self.to_frame()
        fig, ax = plt.subplots(figsize=(5, 5), dpi=120)
        for label, group in frame.groupby("label"):
            ax.scatter(group["x"], group["y"], s=8, alpha=0.8, label=label)
        ax.set_title(title or self.method.value, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
        ax.legend(fontsize=7, markerscale=2)
        fig.tight_layout()
        fig.savefig(path, bbox_inches="tight", pad_inches=0.1)
        plt.close(fig)
        return path

    def silhouette(self):
        """Silhouette score of the 2D layout under its labels"""
        return float(silhouette_score(self.points, np.asarray(self.labels)))


def project_embeddings(embeddings, labels, method=ProjectionMethod.TSNE_STYLE, seed=0):
    """
    Args:
        embeddings: (M, D) array, M >= 10
        labels: length-M labels
        method: ProjectionMethod
        seed: Layout seed; the same seed gives the same layout

    Returns:
        Projection2D
    """
    method = ProjectionMethod(method)
    if hasattr(embeddings, "detach"):
        embeddings = embeddings.detach().cpu().numpy()
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"Embeddings must be (M, D), got shape {x.shape}")
    if len(x) < MIN_POINTS:
        raise ValueError(f"Projection needs at least {MIN_POINTS} points, got {len(x)}")
    if len(labels) != len(x):
        raise ValueError(f"{len(labels)} labels for {len(x)} embeddings")
    if np.ptp(x, axis=0).max() == 0.0:
        logger.warning("All %d embeddings are identical; adding jitter of scale %g", len(x), JITTER_SCALE)
        x = x + rng(seed, "projection-jitter").normal(scale=JITTER_SCALE, size=x.shape)

    random_state = int(seed) % (2 ** 32)
    if method is ProjectionMethod.TSNE_STYLE:
        perplexity = min(MAX_PERPLEXITY, (len(x) - 1) / 3.0)
        reducer = TSNE(n_components=2, perplexity=perplexity, learning_rate="auto", init="pca",
                       metric="euclidean", random_state=random_state)
    else:
        reducer = umap.UMAP(n_neighbors=min(UMAP_NEIGHBORS, len(x) - 1), min_dist=0.1, n_components=2,
                            metric="euclidean", random_state=random_state)
    points = reducer.fit_transform(x)
    return Projection2D(points, tuple(labels), method)
