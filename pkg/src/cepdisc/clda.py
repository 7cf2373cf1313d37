"""Linear discriminant analysis on cepstral vectors.

Within/between scatter moments of labeled cepstra, the generalized
eigenproblem solved by whitening, projection onto the discriminant
coordinates, the minimum-distance decision rule with a log-prior
correction, confusion-matrix evaluation, and leave-one-out selection of
the truncation length.
"""

import json

import numpy as np
from scipy.linalg import solve_triangular

from .cepstral import CepstraSet, CepstralVector, cepstra_from_replicates
from .core import ReplicateSet
from .errors import (ConditioningError, DomainError, InsufficientDataError,
                     ParseError)
from .spectral import EstimatorSpec

RIDGE_EPSILON = 1e-8


class MomentSummary:
    """First and second moments of labeled cepstra.

    within_means has one row per population; within_scatter is the
    prior-weighted pool of per-population scatters (biased 1/n_j
    divisors) plus an unconditional ridge that keeps it positive
    definite.
    """

    __slots__ = ("within_means", "overall_mean", "between_scatter",
                 "within_scatter", "priors", "counts", "source")

    def __init__(self, within_means, overall_mean, between_scatter,
                 within_scatter, priors, counts, source=""):
        self.within_means = np.asarray(within_means, dtype=float)
        self.overall_mean = np.asarray(overall_mean, dtype=float)
        self.between_scatter = np.asarray(between_scatter, dtype=float)
        self.within_scatter = np.asarray(within_scatter, dtype=float)
        self.priors = np.asarray(priors, dtype=float)
        self.counts = np.asarray(counts, dtype=int)
        self.source = str(source)
        j, length = self.within_means.shape
        if self.overall_mean.shape != (length,):
            raise DomainError("overall mean length does not match centroids")
        if self.between_scatter.shape != (length, length):
            raise DomainError("between scatter must be L x L")
        if self.within_scatter.shape != (length, length):
            raise DomainError("within scatter must be L x L")
        if self.priors.shape != (j,) or self.counts.shape != (j,):
            raise DomainError("one prior and count per population is required")

    @property
    def n_populations(self):
        return int(self.within_means.shape[0])

    @property
    def length(self):
        return int(self.within_means.shape[1])


class DiscriminantModel:
    """Fitted discriminant directions and projected centroids."""

    __slots__ = ("projections", "eigenvalues", "centroids", "priors", "config")

    def __init__(self, projections, eigenvalues, centroids, priors, config=None):
        self.projections = np.asarray(projections, dtype=float)
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.centroids = np.asarray(centroids, dtype=float)
        self.priors = np.asarray(priors, dtype=float)
        self.config = dict(config) if config else {}
        q = self.projections.shape[0]
        if self.eigenvalues.shape != (q,):
            raise DomainError("one eigenvalue per projection is required")
        if self.centroids.ndim != 2 or self.centroids.shape[1] != q:
            raise DomainError("projected centroids must have q columns")
        if self.priors.shape != (self.centroids.shape[0],):
            raise DomainError("one prior per population is required")

    @property
    def q(self):
        return int(self.projections.shape[0])

    @property
    def length(self):
        return int(self.projections.shape[1])

    @property
    def n_populations(self):
        return int(self.centroids.shape[0])


class ConfusionMatrix:
    """Column-normalized confusion proportions; columns are true labels."""

    __slots__ = ("matrix", "counts")

    def __init__(self, matrix, counts):
        self.matrix = np.asarray(matrix, dtype=float)
        self.counts = np.asarray(counts, dtype=int)
        j = self.counts.size
        if self.matrix.shape != (j, j):
            raise DomainError("confusion matrix must be square with one "
                              "column per population")

    @property
    def n_populations(self):
        return int(self.counts.size)

    def overall_rate(self):
        """Count-weighted mean of the diagonal proportions."""
        weights = self.counts / self.counts.sum()
        return float(np.sum(weights * np.diag(self.matrix)))


def _population_blocks(cepstra):
    """Row indices per population, after checking labels form 1..J."""
    labels = np.unique(cepstra.populations)
    if labels[0] != 1 or labels[-1] != labels.size:
        raise DomainError("population labels must form a contiguous 1..J "
                          "range, got %s" % labels.tolist())
    return [np.flatnonzero(cepstra.populations == j)
            for j in range(1, labels.size + 1)]


def compute_moments(cepstra):
    """Prior-weighted within/between scatter of a labeled CepstraSet."""
    if not isinstance(cepstra, CepstraSet):
        raise DomainError("compute_moments expects a CepstraSet")
    blocks = _population_blocks(cepstra)
    counts = np.array([b.size for b in blocks])
    if counts.min() < 2:
        raise InsufficientDataError(
            "every population needs at least 2 replicates; counts are %s"
            % counts.tolist())
    x = cepstra.coefficients
    length = x.shape[1]
    priors = counts / counts.sum()
    means = np.vstack([x[b].mean(axis=0) for b in blocks])
    overall = priors @ means
    between = np.zeros((length, length))
    within = np.zeros((length, length))
    for j, b in enumerate(blocks):
        d = means[j] - overall
        between += priors[j] * np.outer(d, d)
        r = x[b] - means[j]
        within += priors[j] * (r.T @ r) / b.size
    trace = float(np.trace(within))
    scale = trace / length if trace > 0.0 else 1.0
    within += RIDGE_EPSILON * scale * np.eye(length)
    return MomentSummary(means, overall, between, within, priors, counts,
                         cepstra.source)


def fit(moments, config=None):
    """Solve the generalized eigenproblem of (between, within) scatter.

    Whitening route: Cholesky within = C C', eigen-decompose the
    symmetric C^{-1} between C^{-T}, and map eigenvectors back through
    C^{-T}, which makes them within-orthonormal. Directions are sorted by
    descending eigenvalue and truncated at q = min(J-1, rank between,
    rank within).
    """
    if not isinstance(moments, MomentSummary):
        raise DomainError("fit expects a MomentSummary")
    j = moments.n_populations
    length = moments.length
    try:
        chol = np.linalg.cholesky(moments.within_scatter)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(
            "within scatter is not positive definite even after the ridge; "
            "the cepstra are degenerate") from exc
    half = solve_triangular(chol, moments.between_scatter, lower=True)
    whitened = solve_triangular(chol, half.T, lower=True)
    whitened = 0.5 * (whitened + whitened.T)
    eigvals, eigvecs = np.linalg.eigh(whitened)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    q = min(j - 1,
            int(np.linalg.matrix_rank(moments.between_scatter)),
            int(np.linalg.matrix_rank(moments.within_scatter)))
    back = solve_triangular(chol.T, eigvecs[:, :q], lower=False)
    projections = np.empty((q, length))
    for s in range(q):
        p = back[:, s]
        anchor = np.argmax(np.abs(p))
        projections[s] = -p if p[anchor] < 0 else p
    centroids = moments.within_means @ projections.T
    cfg = {"L": length, "source": moments.source}
    if config:
        cfg.update(config)
    return DiscriminantModel(projections, eigvals[:q], centroids,
                             moments.priors, cfg)


def _coefficient_row(cv, length, what):
    if isinstance(cv, CepstralVector):
        row = cv.coefficients
    else:
        row = np.asarray(cv, dtype=float)
    if row.shape != (length,):
        raise DomainError("%s expects %d coefficients, got shape %s"
                          % (what, length, row.shape))
    return row


def project(model, cv):
    """Discriminant coordinates of one cepstral vector."""
    row = _coefficient_row(cv, model.length, "project")
    return model.projections @ row


def classify(model, coords):
    """Label minimizing squared distance to a centroid minus 2 ln prior.

    Ties go to the smallest label.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.shape != (model.q,):
        raise DomainError("classify expects %d coordinates" % model.q)
    gaps = model.centroids - coords
    scores = np.sum(gaps * gaps, axis=1) - 2.0 * np.log(model.priors)
    return int(np.argmin(scores)) + 1


def predict_labels(model, cepstra):
    """Vectorized project-and-classify over the rows of a CepstraSet."""
    if cepstra.length != model.length:
        raise DomainError("model was fitted with L=%d but the cepstra have "
                          "L=%d" % (model.length, cepstra.length))
    coords = cepstra.coefficients @ model.projections.T
    sq = ((coords[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
    scores = sq - 2.0 * np.log(model.priors)[None, :]
    return np.argmin(scores, axis=1) + 1


def evaluate(model, test):
    """Column-normalized confusion matrix of a labeled test CepstraSet."""
    if not isinstance(test, CepstraSet):
        raise DomainError("evaluate expects a CepstraSet")
    j = model.n_populations
    labels = test.populations
    if labels.max() > j:
        raise DomainError("test labels exceed the model's %d populations" % j)
    counts = np.array([np.sum(labels == pop) for pop in range(1, j + 1)])
    if counts.min() < 1:
        raise DomainError("every population needs at least one test "
                          "replicate; counts are %s" % counts.tolist())
    predicted = predict_labels(model, test)
    matrix = np.zeros((j, j))
    for true, pred in zip(labels, predicted):
        matrix[pred - 1, true - 1] += 1.0
    matrix /= counts[None, :]
    return ConfusionMatrix(matrix, counts)


def loo_rate(cepstra):
    """Leave-one-out correct-classification rate of a labeled CepstraSet."""
    if not isinstance(cepstra, CepstraSet):
        raise DomainError("loo_rate expects a CepstraSet")
    n = len(cepstra)
    correct = 0
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        keep[i] = False
        reduced = CepstraSet(cepstra.coefficients[keep],
                             cepstra.populations[keep],
                             cepstra.indices[keep], cepstra.source)
        model = fit(compute_moments(reduced))
        label = classify(model, project(model, cepstra.coefficients[i]))
        correct += int(label == cepstra.populations[i])
        keep[i] = True
    return correct / n


def select_L(train, estimator, l_values):
    """Smallest truncation length maximizing the leave-one-out rate.

    Cepstra are estimated once at the largest requested length; shorter
    lengths reuse prefixes of the same coefficients. Returns the chosen
    length and the full (L, rate) table in ascending L.
    """
    if not isinstance(train, ReplicateSet):
        raise DomainError("select_L expects a ReplicateSet")
    if not isinstance(estimator, EstimatorSpec):
        raise DomainError("estimator must be an EstimatorSpec")
    lengths = sorted({int(l) for l in l_values})
    if not lengths:
        raise DomainError("no truncation lengths were given")
    if lengths[0] < 1:
        raise DomainError("truncation lengths must be at least 1")
    full = cepstra_from_replicates(train, estimator, lengths[-1])
    table = []
    for length in lengths:
        subset = CepstraSet(full.coefficients[:, :length], full.populations,
                            full.indices, full.source)
        table.append((length, loo_rate(subset)))
    best = max(table, key=lambda pair: pair[1])[1]
    chosen = next(length for length, rate in table if rate == best)
    return chosen, table


# ---------------------------------------------------------------------------
# serialization

def model_to_json(model):
    """Versioned JSON document for a DiscriminantModel (bit-exact floats)."""
    doc = {
        "format": "discriminant-model",
        "version": 1,
        "projections": [[float(v) for v in row] for row in model.projections],
        "eigenvalues": [float(v) for v in model.eigenvalues],
        "centroids": [[float(v) for v in row] for row in model.centroids],
        "priors": [float(v) for v in model.priors],
        "config": model.config,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def model_from_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("invalid model JSON: %s" % exc) from exc
    if not isinstance(doc, dict) or doc.get("format") != "discriminant-model":
        raise ParseError("not a discriminant-model document")
    if doc.get("version") != 1:
        raise ParseError("unsupported model version %r" % (doc.get("version"),))
    try:
        q = len(doc["eigenvalues"])
        projections = np.asarray(doc["projections"], dtype=float)
        if q == 0:
            projections = projections.reshape(0, int(doc["config"]["L"]))
        return DiscriminantModel(projections, doc["eigenvalues"],
                                 doc["centroids"], doc["priors"],
                                 doc.get("config"))
    except (KeyError, ValueError) as exc:
        raise ParseError("malformed discriminant-model document: %s" % exc) from exc


def confusion_to_csv(cm):
    """CSV with one row per true population: label, count, proportions."""
    j = cm.n_populations
    header = "true_population,count," + ",".join(
        "predicted_%d" % i for i in range(1, j + 1))
    lines = [header]
    for col in range(j):
        cells = ["%d" % (col + 1), "%d" % cm.counts[col]]
        cells += [repr(float(v)) for v in cm.matrix[:, col]]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def confusion_from_csv(text):
    lines = text.splitlines()
    if not lines or not lines[0].startswith("true_population,count,"):
        raise ParseError("not a confusion-matrix CSV")
    j = len(lines) - 1
    matrix = np.zeros((j, j))
    counts = np.zeros(j, dtype=int)
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != j + 2:
            raise ParseError("line %d: expected %d fields" % (lineno, j + 2))
        col = int(parts[0]) - 1
        counts[col] = int(parts[1])
        matrix[:, col] = [float(v) for v in parts[2:]]
    return ConfusionMatrix(matrix, counts)


def confusion_to_json(cm):
    doc = {
        "format": "confusion-matrix",
        "version": 1,
        "counts": cm.counts.tolist(),
        "matrix": [[float(v) for v in row] for row in cm.matrix],
        "overall_rate": cm.overall_rate(),
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def confusion_from_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError("invalid confusion-matrix JSON: %s" % exc) from exc
    if not isinstance(doc, dict) or doc.get("format") != "confusion-matrix":
        raise ParseError("not a confusion-matrix document")
    return ConfusionMatrix(doc["matrix"], doc["counts"])
