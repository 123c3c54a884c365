"""Image-to-robot position mapping.

Estimates the 3x3 matrix M in R = M @ I, where I stacks image points
(one column per observation, third row 1 or a depth value) and R stacks
the matching end-effector positions in meters.  Three estimators:

* ``ga_fit``  - genetic search over the nine entries of M under one of
  eight residual formulations (F1..F8),
* ``lr_fit``  - three independent per-axis lines via normal equations,
* ``pi_fit``  - closed form M = R I^T (I I^T)^-1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import RankDeficiencyError, SingularMatrixError, DegenerateAxisError
from .geometry import EEPosition, ImagePoint

GENE_COUNT = 9
_CROSSOVER_POINT = 4  # fixed single point, mirrors the midpoint of the 9-gene layout


@dataclass(frozen=True)
class ObservationSet:
    """Paired image/robot coordinates as 3 x n column matrices."""

    image: np.ndarray
    robot: np.ndarray

    def __post_init__(self):
        image = np.array(self.image, dtype=float)
        robot = np.array(self.robot, dtype=float)
        if image.ndim != 2 or robot.ndim != 2 or image.shape[0] != 3 or robot.shape[0] != 3:
            raise ValueError(f"expected 3 x n matrices, got {image.shape} and {robot.shape}")
        if image.shape[1] != robot.shape[1]:
            raise ValueError(f"column mismatch: {image.shape[1]} image vs {robot.shape[1]} robot")
        if image.shape[1] == 0:
            raise ValueError("observation set is empty")
        if not (np.isfinite(image).all() and np.isfinite(robot).all()):
            raise ValueError("observations contain non-finite entries")
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "robot", robot)

    @property
    def n(self) -> int:
        return self.image.shape[1]

    def subset(self, idx) -> "ObservationSet":
        return ObservationSet(self.image[:, idx], self.robot[:, idx])


@dataclass(frozen=True)
class MappingMatrix:
    """3x3 image->robot map."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"mapping matrix must be 3x3, got {m.shape}")
        if not np.isfinite(m).all():
            raise ValueError("mapping matrix has non-finite entries")
        object.__setattr__(self, "m", m)


@dataclass(frozen=True)
class Chromosome:
    """Nine genes, row-major entries of a candidate M."""

    genes: tuple

    def __post_init__(self):
        genes = tuple(float(g) for g in self.genes)
        if len(genes) != GENE_COUNT:
            raise ValueError(f"chromosome needs {GENE_COUNT} genes, got {len(genes)}")
        if not all(np.isfinite(genes)):
            raise ValueError("chromosome has non-finite genes")
        object.__setattr__(self, "genes", genes)

    def as_matrix(self) -> MappingMatrix:
        return MappingMatrix(np.array(self.genes).reshape(3, 3))


@dataclass(frozen=True)
class AxisLine:
    """One-variable line r = intercept + slope * i for a single axis."""

    slope: float
    intercept: float

    def __post_init__(self):
        if not (np.isfinite(self.slope) and np.isfinite(self.intercept)):
            raise ValueError("axis line has non-finite coefficients")


class FitnessKind(enum.Enum):
    F1 = 1  # R - M I
    F2 = 2  # M I - R
    F3 = 3  # R I+ - M
    F4 = 4  # M - R I+
    F5 = 5  # R+ M - I+
    F6 = 6  # I+ - R+ M
    F7 = 7  # M^-1 R - (I+)^T
    F8 = 8  # (I+)^T - M^-1 R


@dataclass(frozen=True)
class GAConfig:
    solutions_per_population: int = 8
    num_parents: int = 4
    generations: int = 5000
    gene_init_low: float = -4.0
    gene_init_high: float = 4.0
    mutation_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_parents < 1 or self.num_parents >= self.solutions_per_population:
            raise ValueError(
                f"need 1 <= num_parents < solutions_per_population, "
                f"got {self.num_parents} of {self.solutions_per_population}"
            )
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.gene_init_high <= self.gene_init_low:
            raise ValueError("empty gene init range")
        if self.mutation_scale <= 0:
            raise ValueError("mutation_scale must be positive")


def assemble_observations(points: Sequence[ImagePoint], positions: Sequence[EEPosition]) -> ObservationSet:
    """Stack paired points/positions into column matrices."""
    if len(points) != len(positions):
        raise ValueError(f"got {len(points)} image points but {len(positions)} positions")
    if not points:
        raise ValueError("no observations")
    image = np.array([[p.ix, p.iy, p.iz] for p in points], dtype=float).T
    robot = np.array([[r.rx, r.ry, r.rz] for r in positions], dtype=float).T
    return ObservationSet(image, robot)


def _checked_pinv(mat: np.ndarray, name: str) -> np.ndarray:
    rank = int(np.linalg.matrix_rank(mat))
    if rank < min(mat.shape):
        raise RankDeficiencyError(
            f"{name} matrix has rank {rank} < {min(mat.shape)}; pseudoinverse is ill-posed",
            rank=rank,
        )
    return np.linalg.pinv(mat)


def _inv3(m: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.inv(m)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"candidate M is singular: {exc}") from exc


class _FitnessContext:
    """Per-dataset precomputation shared by every chromosome evaluation."""

    def __init__(self, kind: FitnessKind, obs: ObservationSet):
        self.kind = kind
        self.image = obs.image
        self.robot = obs.robot
        if kind in (FitnessKind.F3, FitnessKind.F4, FitnessKind.F5, FitnessKind.F6,
                    FitnessKind.F7, FitnessKind.F8):
            self.pinv_image = _checked_pinv(obs.image, "image")
        if kind in (FitnessKind.F3, FitnessKind.F4):
            self.target = self.robot @ self.pinv_image
        if kind in (FitnessKind.F5, FitnessKind.F6):
            self.pinv_robot = _checked_pinv(obs.robot, "robot")

    def evaluate(self, genes: np.ndarray) -> float:
        M = genes.reshape(3, 3)
        k = self.kind
        if k is FitnessKind.F1:
            E = self.robot - M @ self.image
        elif k is FitnessKind.F2:
            E = M @ self.image - self.robot
        elif k is FitnessKind.F3:
            E = self.target - M
        elif k is FitnessKind.F4:
            E = M - self.target
        elif k is FitnessKind.F5:
            E = self.pinv_robot @ M - self.pinv_image
        elif k is FitnessKind.F6:
            E = self.pinv_image - self.pinv_robot @ M
        elif k is FitnessKind.F7:
            # (I+)^T = (I^T)+ so both sides are 3 x n
            E = _inv3(M) @ self.robot - self.pinv_image.T
        elif k is FitnessKind.F8:
            E = self.pinv_image.T - _inv3(M) @ self.robot
        else:  # pragma: no cover
            raise ValueError(f"unknown fitness kind {k!r}")
        return float(np.sum(E * E))


def _genes_array(chromosome) -> np.ndarray:
    if isinstance(chromosome, Chromosome):
        genes = np.array(chromosome.genes, dtype=float)
    else:
        genes = np.array(chromosome, dtype=float).reshape(-1)
    if genes.shape != (GENE_COUNT,):
        raise ValueError(f"chromosome needs {GENE_COUNT} genes, got shape {genes.shape}")
    if not np.isfinite(genes).all():
        raise ValueError("chromosome has non-finite genes")
    return genes


def fitness(kind: FitnessKind, chromosome, obs: ObservationSet) -> float:
    """Sum of squared entries of the chosen residual matrix."""
    return _FitnessContext(kind, obs).evaluate(_genes_array(chromosome))


def ga_fit(obs: ObservationSet, cfg: GAConfig = GAConfig(),
           kind: FitnessKind = FitnessKind.F3):
    """Genetic search over M. Returns (MappingMatrix, per-generation best fitness).

    Truncation selection keeps the ``num_parents`` best chromosomes
    unchanged, so the recorded best fitness never increases.  The final
    offspring generation is scored too; the best chromosome ever seen wins.
    """
    ctx = _FitnessContext(kind, obs)
    rng = np.random.default_rng(cfg.seed)
    pop = rng.uniform(cfg.gene_init_low, cfg.gene_init_high,
                      size=(cfg.solutions_per_population, GENE_COUNT))
    n_parents = cfg.num_parents
    n_offspring = cfg.solutions_per_population - n_parents
    history = []
    for _ in range(cfg.generations):
        scores = np.array([ctx.evaluate(genes) for genes in pop])
        order = np.argsort(scores, kind="stable")
        history.append(float(scores[order[0]]))
        parents = pop[order[:n_parents]]
        offspring = np.empty((n_offspring, GENE_COUNT))
        for k in range(n_offspring):
            offspring[k, :_CROSSOVER_POINT] = parents[k % n_parents, :_CROSSOVER_POINT]
            offspring[k, _CROSSOVER_POINT:] = parents[(k + 1) % n_parents, _CROSSOVER_POINT:]
        which_gene = rng.integers(0, GENE_COUNT, size=n_offspring)
        shift = rng.uniform(-cfg.mutation_scale, cfg.mutation_scale, size=n_offspring)
        offspring[np.arange(n_offspring), which_gene] += shift
        pop = np.vstack([parents, offspring])
    scores = np.array([ctx.evaluate(genes) for genes in pop])
    best = pop[int(np.argmin(scores))]
    return MappingMatrix(best.reshape(3, 3)), history


def lr_fit(obs: ObservationSet):
    """Per-axis least-squares lines from the closed-form normal equations.

    Pairs image-x with robot-x, image-y with robot-y, image-z with robot-z.
    """
    if obs.n < 2:
        raise ValueError("per-axis regression needs at least 2 observations")
    n = obs.n
    lines = []
    for axis, name in enumerate("xyz"):
        x = obs.image[axis]
        y = obs.robot[axis]
        sx = float(x.sum())
        sy = float(y.sum())
        sxx = float((x * x).sum())
        sxy = float((x * y).sum())
        denom = n * sxx - sx * sx
        # denom = n^2 * var(x); identical image coords cancel it exactly
        if abs(denom) <= 1e-12 * max(n * sxx, sx * sx, 1.0):
            raise DegenerateAxisError(name)
        slope = (n * sxy - sx * sy) / denom
        intercept = (sxx * sy - sx * sxy) / denom
        lines.append(AxisLine(slope, intercept))
    return tuple(lines)


def pi_fit(obs: ObservationSet) -> MappingMatrix:
    """Closed-form M = R I^T (I I^T)^-1 via an equilibrated 3x3 solve."""
    I = obs.image
    R = obs.robot
    rank = int(np.linalg.matrix_rank(I))
    if rank < 3:
        raise RankDeficiencyError(
            f"image matrix has rank {rank} < 3; need 3 independent image directions",
            rank=rank,
        )
    # Scale rows to unit norm before forming the Gram matrix; this keeps the
    # 3x3 system well conditioned when pixel and homogeneous rows differ by
    # orders of magnitude, and changes nothing algebraically.
    s = np.linalg.norm(I, axis=1)
    Iw = I / s[:, None]
    gram = Iw @ Iw.T
    rhs = R @ Iw.T
    M = np.linalg.solve(gram, rhs.T).T / s[None, :]
    return MappingMatrix(M)


def predict_position(model, point: ImagePoint) -> EEPosition:
    """Apply a fitted model (MappingMatrix or 3 AxisLines) to one image point."""
    if isinstance(model, MappingMatrix):
        r = model.m @ np.array([point.ix, point.iy, point.iz])
        return EEPosition(float(r[0]), float(r[1]), float(r[2]))
    lx, ly, lz = model
    return EEPosition(
        lx.intercept + lx.slope * point.ix,
        ly.intercept + ly.slope * point.iy,
        lz.intercept + lz.slope * point.iz,
    )


def predict_matrix(model, image: np.ndarray) -> np.ndarray:
    """Vectorized predict_position over a 3 x n image matrix."""
    image = np.asarray(image, dtype=float)
    if isinstance(model, MappingMatrix):
        return model.m @ image
    lx, ly, lz = model
    slopes = np.array([lx.slope, ly.slope, lz.slope])
    intercepts = np.array([lx.intercept, ly.intercept, lz.intercept])
    return intercepts[:, None] + slopes[:, None] * image


def rmse(predicted: Sequence[EEPosition], actual: Sequence[EEPosition]) -> float:
    """Root mean squared error over all 3n coordinates."""
    if len(predicted) != len(actual):
        raise ValueError(f"length mismatch: {len(predicted)} vs {len(actual)}")
    if not predicted:
        raise ValueError("empty position lists")
    p = np.array([[e.rx, e.ry, e.rz] for e in predicted])
    a = np.array([[e.rx, e.ry, e.rz] for e in actual])
    return float(np.sqrt(np.mean((p - a) ** 2)))


def rmse_columns(predicted: np.ndarray, actual: np.ndarray) -> float:
    """rmse for 3 x n column matrices."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape or predicted.ndim != 2 or predicted.shape[0] != 3:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {actual.shape}")
    if predicted.shape[1] == 0:
        raise ValueError("empty position matrices")
    return float(np.sqrt(np.mean((predicted - actual) ** 2)))
