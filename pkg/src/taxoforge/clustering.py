"""Grouping subtopic candidates and filtering them for type consistency.

Candidates are clustered twice: by semantic meaning (vectors from the
discriminative concept space) and by semantic type (mention-averaged
contextual signatures).  Crossing the two partitions gives an indicative
0/1 Topic-Type matrix; spectral co-clustering of that matrix plus a
consistency score keeps only subtopic groups whose members share types.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ClusteringError(ValueError):
    pass


# -- affinity propagation --------------------------------------------------------


def median_preference(similarity: np.ndarray) -> float:
    """Median off-diagonal similarity, the default exemplar preference."""
    n = similarity.shape[0]
    if n < 2:
        return 0.0
    off = similarity[~np.eye(n, dtype=bool)]
    return float(np.median(off))


def affinity_propagation(
    similarity: np.ndarray,
    damping: float = 0.9,
    max_iter: int = 500,
    convergence_iter: int = 15,
) -> tuple[np.ndarray, np.ndarray]:
    """Exemplar clustering by responsibility/availability message passing.

    ``similarity`` must be symmetric off the diagonal; the diagonal holds
    the per-point preference.  Updates are damped and fully deterministic.
    Convergence is declared when the exemplar set is stable for
    ``convergence_iter`` consecutive iterations.  Returns (exemplar_indices,
    labels) where labels[i] is the position of point i's exemplar in
    exemplar_indices.
    """
    S = np.asarray(similarity, dtype=np.float64)
    n = S.shape[0]
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ClusteringError("similarity matrix must be square")
    if not (0.5 <= damping < 1.0):
        raise ClusteringError("damping must lie in [0.5, 1)")
    if max_iter < 1:
        raise ClusteringError("max_iter must be >= 1")
    off = ~np.eye(n, dtype=bool)
    if not np.allclose(S[off], S.T[off], atol=1e-9):
        raise ClusteringError("similarity matrix must be symmetric")
    if n == 1:
        return np.array([0]), np.array([0])

    A = np.zeros((n, n))
    R = np.zeros((n, n))
    idx = np.arange(n)
    stable = 0
    last_exemplars: np.ndarray | None = None
    for _ in range(max_iter):
        # responsibilities: r(i,k) = s(i,k) - max_{k' != k} (a(i,k') + s(i,k'))
        AS = A + S
        first = np.argmax(AS, axis=1)
        best = AS[idx, first]
        AS[idx, first] = -np.inf
        second = AS.max(axis=1)
        Rnew = S - best[:, None]
        Rnew[idx, first] = S[idx, first] - second
        R = damping * R + (1 - damping) * Rnew

        # availabilities: a(i,k) = min(0, r(k,k) + sum_{i' not in {i,k}} max(0, r(i',k)))
        Rp = np.maximum(R, 0)
        Rp[idx, idx] = R[idx, idx]
        col = Rp.sum(axis=0)
        Anew = col[None, :] - Rp
        diag = Anew[idx, idx].copy()
        Anew = np.minimum(Anew, 0)
        Anew[idx, idx] = diag
        A = damping * A + (1 - damping) * Anew

        exemplars = np.nonzero(np.diag(A + R) > 0)[0]
        if last_exemplars is not None and np.array_equal(exemplars, last_exemplars):
            stable += 1
            if stable >= convergence_iter and exemplars.size:
                break
        else:
            stable = 0
        last_exemplars = exemplars

    exemplars = np.nonzero(np.diag(A + R) > 0)[0]
    if exemplars.size == 0:
        # fully symmetric inputs can leave no self-evidence winner; fall back
        # to the single best self-evidence point (first index on ties)
        exemplars = np.array([int(np.argmax(np.diag(A + R)))])
    labels = np.argmax(S[:, exemplars], axis=1)
    for k, ex in enumerate(exemplars):
        labels[ex] = k
    return exemplars, labels


def cosine_similarity_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    unit = vectors / norms
    sim = unit @ unit.T
    return (sim + sim.T) / 2.0


def ap_cluster_vectors(
    vectors: np.ndarray, damping: float = 0.9, max_iter: int = 500
) -> tuple[np.ndarray, np.ndarray]:
    """AP over cosine similarities with the median-preference default."""
    sim = cosine_similarity_matrix(vectors)
    np.fill_diagonal(sim, median_preference(sim))
    return affinity_propagation(sim, damping, max_iter)


# -- topic-type matrix -----------------------------------------------------------


@dataclass
class TopicTypeMatrix:
    """Indicative matrix: rows are type clusters, columns are meaning clusters.

    ``matrix[i, j]`` is 1 iff at least one candidate landed in type cluster
    i and meaning cluster j.  Column/row member lists keep the provenance;
    ``col_exemplars[j]`` names the candidate chosen as column j's exemplar.
    """

    matrix: np.ndarray
    col_exemplars: list[str]
    col_members: list[list[str]]
    row_members: list[list[str]]
    cell_members: dict[tuple[int, int], list[str]] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def to_tsv(self) -> str:
        """Debug export with provenance comments."""
        lines = [
            "# topic-type matrix: rows = type clusters, columns = meaning clusters"
        ]
        for j, (ex, members) in enumerate(zip(self.col_exemplars, self.col_members)):
            lines.append(f"# col {j} [{ex}]: {', '.join(members)}")
        for i, members in enumerate(self.row_members):
            lines.append(f"# row {i}: {', '.join(members)}")
        for row in self.matrix:
            lines.append("\t".join(str(int(x)) for x in row))
        return "\n".join(lines) + "\n"


def build_topic_type_matrix(
    candidates: list[str],
    meaning_vectors: np.ndarray,
    type_vectors: np.ndarray,
    damping: float = 0.9,
    max_iter: int = 500,
    min_grouping_pool: int = 1,
) -> TopicTypeMatrix:
    """Cross AP partitions of the two vector spaces into the 0/1 matrix.

    Meaning grouping exists to collapse variants of one subtopic into a
    column; pools below ``min_grouping_pool`` skip it and keep one column
    per candidate.  Callers working with tiny pools want that guard: for
    three points, median-preference AP can never emit the all-singleton
    partition, because the merge test compares a similarity against the
    median of the three similarities, which one of them always exceeds.
    """
    n = len(candidates)
    if meaning_vectors.shape[0] != n or type_vectors.shape[0] != n:
        raise ClusteringError("one meaning and one type vector per candidate required")
    if n == 0:
        raise ClusteringError("no candidates to cluster")
    if n < min_grouping_pool:
        m_ex = np.arange(n)
        m_labels = np.arange(n)
    else:
        m_ex, m_labels = ap_cluster_vectors(meaning_vectors, damping, max_iter)
    t_ex, t_labels = ap_cluster_vectors(type_vectors, damping, max_iter)
    matrix = np.zeros((len(t_ex), len(m_ex)), dtype=np.int8)
    cell_members: dict[tuple[int, int], list[str]] = {}
    for cand, mj, ti in zip(candidates, m_labels, t_labels):
        matrix[ti, mj] = 1
        cell_members.setdefault((int(ti), int(mj)), []).append(cand)
    col_members = [
        [candidates[i] for i in np.nonzero(m_labels == j)[0]] for j in range(len(m_ex))
    ]
    row_members = [
        [candidates[i] for i in np.nonzero(t_labels == i_)[0]] for i_ in range(len(t_ex))
    ]
    col_exemplars = [candidates[int(e)] for e in m_ex]
    return TopicTypeMatrix(matrix, col_exemplars, col_members, row_members, cell_members)


# -- spectral co-clustering -------------------------------------------------------


@dataclass
class BiclusterAssignment:
    row_labels: np.ndarray
    col_labels: np.ndarray
    k: int


def _kmeans(
    points: np.ndarray, k: int, rng: np.random.Generator, n_init: int = 10, iters: int = 100
) -> np.ndarray:
    """Seeded k-means with k-means++ starts; best of ``n_init`` restarts."""
    n = points.shape[0]
    best_labels = np.zeros(n, dtype=int)
    best_inertia = np.inf
    for _ in range(n_init):
        centers = np.empty((k, points.shape[1]))
        centers[0] = points[int(rng.integers(n))]
        d2 = ((points - centers[0]) ** 2).sum(axis=1)
        for c in range(1, k):
            total = d2.sum()
            if total <= 0:
                centers[c] = points[int(rng.integers(n))]
            else:
                centers[c] = points[int(rng.choice(n, p=d2 / total))]
            d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
        labels = np.zeros(n, dtype=int)
        for _ in range(iters):
            dists = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = dists.argmin(axis=1)
            for c in range(k):
                mask = new_labels == c
                if mask.any():
                    centers[c] = points[mask].mean(axis=0)
                else:
                    # re-seed an empty cluster on the farthest point
                    far = int(dists.min(axis=1).argmax())
                    centers[c] = points[far]
                    new_labels[far] = c
            if np.array_equal(new_labels, labels):
                labels = new_labels
                break
            labels = new_labels
        inertia = float(
            ((points - centers[labels]) ** 2).sum()
        )
        if inertia < best_inertia - 1e-12:
            best_inertia = inertia
            best_labels = labels.copy()
    return best_labels


def cocluster(matrix: np.ndarray, k: int, seed: int = 13) -> BiclusterAssignment:
    """Spectral co-clustering of an indicative matrix into k biclusters.

    Normalizes as D_r^{-1/2} M D_c^{-1/2} (empty rows/columns get unit
    degree), embeds rows and columns with the top k singular vector pairs,
    and k-means clusters the stacked embedding.  Deterministic per seed.

    The top k vectors (rather than the log2 k partitioning vectors of the
    classic recipe) are required for exact recovery of block-diagonal
    matrices: a matrix of k disjoint all-ones blocks has singular value 1
    with multiplicity k, and any smaller slice of that degenerate space can
    leave two blocks at the same embedding point.
    """
    M = np.asarray(matrix, dtype=np.float64)
    if M.ndim != 2:
        raise ClusteringError("matrix must be 2-d")
    if M.sum() == 0:
        raise ClusteringError("matrix has no nonzero entry")
    rows, cols = M.shape
    if k < 1 or k > min(rows, cols):
        raise ClusteringError(f"k={k} outside [1, min(rows, cols)]")
    if k == 1:
        return BiclusterAssignment(np.zeros(rows, dtype=int), np.zeros(cols, dtype=int), 1)

    dr = M.sum(axis=1)
    dc = M.sum(axis=0)
    dr[dr == 0] = 1.0
    dc[dc == 0] = 1.0
    Dr = 1.0 / np.sqrt(dr)
    Dc = 1.0 / np.sqrt(dc)
    An = Dr[:, None] * M * Dc[None, :]
    U, _, Vt = np.linalg.svd(An, full_matrices=False)
    hi = min(k, U.shape[1])
    row_emb = Dr[:, None] * U[:, :hi]
    col_emb = Dc[:, None] * Vt[:hi, :].T
    stacked = np.vstack([row_emb, col_emb])
    labels = _kmeans(stacked, k, np.random.default_rng(seed))
    return BiclusterAssignment(labels[:rows], labels[rows:], k)


def consistency(
    matrix: np.ndarray, assignment: BiclusterAssignment, cluster_id: int
) -> float | None:
    """Fill fraction of the bicluster's cells; None when the block is empty."""
    if cluster_id >= assignment.k:
        raise ClusteringError(f"cluster id {cluster_id} out of range")
    rows = np.nonzero(assignment.row_labels == cluster_id)[0]
    cols = np.nonzero(assignment.col_labels == cluster_id)[0]
    if rows.size == 0 or cols.size == 0:
        return None
    block = np.asarray(matrix)[np.ix_(rows, cols)]
    return float(block.sum()) / float(rows.size * cols.size)


def retained_clusters(
    matrix: np.ndarray, assignment: BiclusterAssignment, threshold: float = 0.5
) -> list[int]:
    """Bicluster ids whose consistency strictly exceeds the threshold."""
    kept = []
    for cid in range(assignment.k):
        score = consistency(matrix, assignment, cid)
        if score is not None and score > threshold:
            kept.append(cid)
    return kept


def default_bicluster_count(rows: int, cols: int) -> int:
    """Heuristic k when none is configured."""
    return max(1, min(rows, cols, 2 + cols // 3))
