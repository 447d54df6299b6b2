"""
Embedding Core Module
Embedding space, alignment scoring and the deterministic scene/text encoder oracle
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_DIMENSION = 512
DEFAULT_WINDOW = 16
DEFAULT_NOISE_ANGLE = 0.02

# Scores are 100 x cosine
SCORE_SCALE = 100.0
MERGE_SCORE = 73.5
TASK_THRESHOLD = 22.74

TERRAIN_KINDS = ('flat', 'grass', 'sand', 'water', 'mountain', 'wall')
ENTITY_KINDS = (
    'tree', 'cow', 'sheep', 'zombie_burning', 'house',
    'sugarcane', 'sugarcane_burst', 'spider',
)

# Item a task asks for -> visual kind the item is obtained from
TASK_SOURCES = {
    'water': 'water',
    'sand': 'sand',
    'dirt': 'flat',
    'seeds': 'grass',
    'log': 'tree',
    'leaves': 'tree',
    'beef': 'cow',
    'milk': 'cow',
    'wool': 'sheep',
}

PROMPT_ROLES = ('query', 'execute')


def make_embedding(values, dimension: Optional[int] = None) -> np.ndarray:
    """
    Build a unit-norm, read-only embedding.

    Args:
        values: Sequence of reals
        dimension (int): Expected dimension, checked when given

    Returns:
        np.ndarray: float64 vector of unit Euclidean norm
    """
    vec = np.array(values, dtype=np.float64).reshape(-1)
    if dimension is not None and vec.shape[0] != dimension:
        raise ValueError(f"Embedding dimension {vec.shape[0]} does not match space dimension {dimension}")
    norm = np.linalg.norm(vec)
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError("Cannot build an embedding from a zero or non-finite vector")
    vec = vec / norm
    vec.setflags(write=False)
    return vec


def alignment_score(a: np.ndarray, b: np.ndarray) -> float:
    """Task alignment score: 100 x cosine similarity of two unit embeddings."""
    if a.shape != b.shape:
        raise ValueError(f"Embedding dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    score = SCORE_SCALE * float(np.dot(a, b))
    return max(-SCORE_SCALE, min(SCORE_SCALE, score))


def alignment_scores(query: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Vectorized alignment_score of one query against the rows of a matrix."""
    if matrix.size == 0:
        return np.zeros(0, dtype=np.float64)
    if matrix.shape[1] != query.shape[0]:
        raise ValueError(f"Embedding dimension mismatch: {query.shape[0]} vs {matrix.shape[1]}")
    return np.clip(SCORE_SCALE * (matrix @ query), -SCORE_SCALE, SCORE_SCALE)


def stable_seed(*parts) -> int:
    """Seed derived from a SHA-256 digest, independent of PYTHONHASHSEED."""
    text = '|'.join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode('utf-8')).digest()[:8], 'little')


@dataclass(frozen=True)
class SceneDescriptor:
    """
    What the agent sees at one step.

    visible_entities holds (visual kind, (dx, dy)) pairs relative to the agent cell;
    terrain_summary holds sorted (terrain kind, cell count) pairs over the FoV.
    """
    visible_entities: FrozenSet[Tuple[str, Tuple[int, int]]]
    terrain_summary: Tuple[Tuple[str, int], ...]
    pose_bucket: int

    def kinds(self) -> FrozenSet[str]:
        """All visual kinds present in the descriptor."""
        entity_kinds = {kind for kind, _ in self.visible_entities}
        terrain_kinds = {kind for kind, count in self.terrain_summary if count > 0}
        return frozenset(entity_kinds | terrain_kinds)


@dataclass
class EncoderOracle:
    """
    Deterministic stand-in for a video/text encoder pair.

    Every registered visual kind and every task prompt gets one column of a seeded
    orthonormal basis, so distinct kinds score exactly 0 against each other.
    """
    seed: int = 0
    dimension: int = DEFAULT_DIMENSION
    noise_angle: float = DEFAULT_NOISE_ANGLE
    window: int = DEFAULT_WINDOW
    visual_kinds: Tuple[str, ...] = TERRAIN_KINDS + ENTITY_KINDS
    task_sources: Dict[str, str] = field(default_factory=lambda: dict(TASK_SOURCES))
    near_radius: float = 3.0
    entity_gain: float = 1.2

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if self.noise_angle < 0:
            raise ValueError(f"noise_angle must be >= 0, got {self.noise_angle}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        for task, source in self.task_sources.items():
            if source not in self.visual_kinds:
                raise ValueError(f"Task '{task}' maps to unregistered visual kind '{source}'")

        names = list(self.visual_kinds) + [f"prompt:{task}" for task in sorted(self.task_sources)]
        if len(names) > self.dimension:
            raise ValueError(
                f"dimension {self.dimension} too small for {len(names)} registered vectors"
            )
        rng = np.random.default_rng(stable_seed('oracle-basis', self.seed))
        gaussian = rng.standard_normal((self.dimension, len(names)))
        q, r = np.linalg.qr(gaussian)
        # Sign-fix so the basis is a deterministic function of the seed
        q = q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))
        self._basis = {}
        for i, name in enumerate(names):
            vec = np.ascontiguousarray(q[:, i])
            vec.setflags(write=False)
            self._basis[name] = vec
        self._descriptor_cache = {}
        logger.debug("Oracle ready: seed=%s D=%s kinds=%s", self.seed, self.dimension, len(names))

    def base(self, kind: str) -> np.ndarray:
        """Base embedding of a registered visual kind."""
        if kind not in self.visual_kinds:
            raise ValueError(f"Unknown visual kind '{kind}'")
        return self._basis[kind]

    def prompt(self, task_kind: str) -> np.ndarray:
        if task_kind not in self.task_sources:
            raise ValueError(f"Unknown task kind '{task_kind}'")
        return self._basis[f"prompt:{task_kind}"]

    def descriptor_vector(self, descriptor: SceneDescriptor) -> np.ndarray:
        """Unnormalized-then-normalized embedding of a single descriptor (cached)."""
        cached = self._descriptor_cache.get(descriptor)
        if cached is not None:
            return cached

        weights = {}
        total = sum(count for _, count in descriptor.terrain_summary)
        if total > 0:
            for kind, count in descriptor.terrain_summary:
                if count > 0:
                    weights[kind] = weights.get(kind, 0.0) + math.sqrt(count / total)
        for kind, (dx, dy) in sorted(descriptor.visible_entities):
            dist = math.hypot(dx, dy)
            salience = 1.0 if dist <= self.near_radius else self.near_radius / dist
            weights[kind] = max(weights.get(kind, 0.0), self.entity_gain * salience)

        if not weights:
            raise ValueError("Scene descriptor shows nothing")
        vec = np.zeros(self.dimension, dtype=np.float64)
        for kind in sorted(weights):
            vec += weights[kind] * self.base(kind)
        vec = make_embedding(vec)
        if len(self._descriptor_cache) > 200_000:
            self._descriptor_cache.clear()
        self._descriptor_cache[descriptor] = vec
        return vec

    def rotate(self, vec: np.ndarray, nonce) -> np.ndarray:
        """Rotate a unit vector by a seeded angle in [0, noise_angle]."""
        if self.noise_angle == 0.0:
            return vec
        rng = np.random.default_rng(stable_seed('oracle-noise', self.seed, nonce))
        direction = rng.standard_normal(self.dimension)
        direction -= np.dot(direction, vec) * vec
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            return vec
        direction /= norm
        angle = rng.uniform(0.0, self.noise_angle)
        return make_embedding(math.cos(angle) * vec + math.sin(angle) * direction)


def encode_scene(oracle: EncoderOracle, window: Sequence[SceneDescriptor], nonce=0) -> np.ndarray:
    """
    Encode an H-deep window of scene descriptors into one video embedding.

    Args:
        oracle (EncoderOracle): The encoder
        window: Non-empty sequence of at most H descriptors (the last H are used)
        nonce: Per-call noise key; the agent passes the clock

    Returns:
        np.ndarray: Unit embedding
    """
    if not window:
        raise ValueError("encode_scene needs a non-empty window")
    frames = list(window)[-oracle.window:]
    stacked = np.stack([oracle.descriptor_vector(d) for d in frames])
    pooled = make_embedding(stacked.mean(axis=0))
    return oracle.rotate(pooled, nonce)


def encode_task(oracle: EncoderOracle, task_kind: str, prompt_role: str = 'query') -> np.ndarray:
    """
    Encode a task prompt.

    The query role points at the visual kind the task's item comes from, so
    memory frames showing that kind align with it; the execute role mixes in the
    task's own prompt vector.
    """
    if prompt_role not in PROMPT_ROLES:
        raise ValueError(f"prompt_role must be one of {PROMPT_ROLES}, got '{prompt_role}'")
    if task_kind not in oracle.task_sources:
        raise ValueError(f"Unknown task kind '{task_kind}'")
    source = oracle.base(oracle.task_sources[task_kind])
    if prompt_role == 'query':
        return source
    return make_embedding(0.6 * source + 0.8 * oracle.prompt(task_kind))


def base_separation_ok(oracle: EncoderOracle, kinds: Optional[Iterable[str]] = None,
                       merge_score: float = MERGE_SCORE) -> bool:
    """True when every pair of base embeddings scores below the merge score."""
    names = list(kinds) if kinds is not None else list(oracle.visual_kinds)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if alignment_score(oracle.base(a), oracle.base(b)) >= merge_score:
                return False
    return True
