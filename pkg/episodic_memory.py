"""
Episodic Memory Module
FIFO, Place, Event and Place-Event memories with shared write / read / evict semantics
"""

import base64
import hashlib
import heapq
import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from clustering import dp_means, merge_clusters
from embedding_core import (
    MERGE_SCORE, SCORE_SCALE, TASK_THRESHOLD, alignment_scores, make_embedding, stable_seed,
)

logger = logging.getLogger(__name__)

VARIANTS = ('fifo', 'place', 'event', 'place_event', 'none')
READ_STRATEGIES = ('flat', 'place_first')
SNAPSHOT_SCHEMA = 'placemem.memory/1'


def normalize_yaw(yaw: float) -> float:
    """Map any angle in degrees into [-180, 180)."""
    if -180.0 <= yaw < 180.0:
        return float(yaw)
    wrapped = math.fmod(yaw + 180.0, 360.0)
    if wrapped < 0:
        wrapped += 360.0
    return wrapped - 180.0


def yaw_distance(a: float, b: float) -> float:
    return abs(normalize_yaw(a - b))


@dataclass(eq=False)
class ExperienceFrame:
    """One memory atom: embedding, pose and the step it was observed at."""
    embedding: np.ndarray
    x: float
    y: float
    yaw: float
    time: int
    pitch: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        self.yaw = normalize_yaw(self.yaw)

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)

    @property
    def pose(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.yaw)


@dataclass
class MemoryConfig:
    """Memory hyperparameters; validated on construction."""
    capacity: int = 20_000
    place_size: float = 6.0
    yaw_window: float = 60.0
    update_frequency: int = 100
    top_k: int = 30
    merge_score: float = MERGE_SCORE
    task_threshold: float = TASK_THRESHOLD
    search_buffer: bool = False
    read_strategy: str = 'flat'
    dp_init_clusters: int = 5
    dp_max_iters: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {self.capacity}")
        if self.place_size <= 0:
            raise ValueError(f"place_size must be > 0, got {self.place_size}")
        if not 0 < self.yaw_window < 180:
            raise ValueError(f"yaw_window must be in (0, 180), got {self.yaw_window}")
        bins = 360.0 / self.yaw_window
        if not math.isclose(bins, round(bins)):
            # yaw bins wrap at +-180 and would overlap otherwise
            raise ValueError(f"yaw_window must divide 360, got {self.yaw_window}")
        if self.update_frequency < 1:
            raise ValueError(f"update_frequency must be >= 1, got {self.update_frequency}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.read_strategy not in READ_STRATEGIES:
            raise ValueError(f"read_strategy must be one of {READ_STRATEGIES}, got '{self.read_strategy}'")

    @property
    def penalty(self) -> float:
        return 1.0 - self.merge_score / SCORE_SCALE


def place_key(pose, config: MemoryConfig, origin=(0.0, 0.0, 0.0)) -> Tuple[float, float, float]:
    """
    Snap a pose to its place cluster key.

    Cells of side C and yaw bins of width W are anchored at the origin pose;
    ranges are half-open, so a pose on a boundary belongs to the upper cell.

    Returns:
        tuple: (cell center x, cell center y, yaw bin center in [-180, 180))
    """
    x, y, yaw = pose[0], pose[1], pose[2]
    ox, oy, oyaw = origin
    c, w = config.place_size, config.yaw_window
    kx = ox + c * math.floor((x - ox + c / 2.0) / c)
    ky = oy + c * math.floor((y - oy + c / 2.0) / c)
    kyaw = normalize_yaw(w * math.floor((normalize_yaw(yaw - oyaw) + w / 2.0) / w) + oyaw)
    return (kx, ky, kyaw)


@dataclass
class Candidate:
    frame: ExperienceFrame
    score: float


@dataclass
class WriteReport:
    created_places: int = 0
    created_events: int = 0
    merged_events: int = 0
    clustered: bool = False
    evicted: Optional[ExperienceFrame] = None


class EventCluster:
    """A visually coherent, time-ordered group of frames with a running-sum center."""

    def __init__(self, creation: int, dimension: int):
        self.creation = creation
        self.frames = deque()
        self._sum = np.zeros(dimension, dtype=np.float64)
        self._center = None
        self._matrix = None

    def __len__(self):
        return len(self.frames)

    def add_frames(self, frames):
        for frame in frames:
            self.frames.append(frame)
            self._sum += frame.embedding
        self._center = None
        self._matrix = None

    def pop_oldest(self) -> ExperienceFrame:
        frame = self.frames.popleft()
        self._sum -= frame.embedding
        self._center = None
        self._matrix = None
        return frame

    @property
    def center(self) -> np.ndarray:
        if self._center is None:
            self._center = make_embedding(self._sum)
        return self._center

    def exact_center(self) -> np.ndarray:
        """Center recomputed from scratch (used to check running-sum drift)."""
        return make_embedding(np.sum([f.embedding for f in self.frames], axis=0))

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = np.stack([f.embedding for f in self.frames])
        return self._matrix


class PlaceCluster:
    """
    All frames whose pose falls in one C x C cell and one W-degree yaw bin.

    Place memory keeps frames directly (FIFO per place); Place-Event memory keeps
    event clusters plus a recency buffer and its timer.
    """

    def __init__(self, key, creation: int):
        self.key = key
        self.creation = creation
        self.frames = deque()
        self.events: List[EventCluster] = []
        self.buffer = deque()
        self.timer = 0
        self.center_frame: Optional[ExperienceFrame] = None

    @property
    def center_pose(self):
        return self.key

    @property
    def center_embedding(self) -> Optional[np.ndarray]:
        return None if self.center_frame is None else self.center_frame.embedding

    def __len__(self):
        return len(self.frames) + sum(len(e) for e in self.events) + len(self.buffer)

    def members(self) -> Iterator[ExperienceFrame]:
        yield from self.frames
        for event in self.events:
            yield from event.frames
        yield from self.buffer

    def _center_rank(self, frame):
        kx, ky, kyaw = self.key
        return (math.hypot(frame.x - kx, frame.y - ky), yaw_distance(frame.yaw, kyaw), frame.time)

    def offer_center(self, frame: ExperienceFrame):
        if self.center_frame is None or self._center_rank(frame) < self._center_rank(self.center_frame):
            self.center_frame = frame

    def refresh_center(self):
        self.center_frame = None
        for frame in self.members():
            self.offer_center(frame)

    def contains_pose(self, frame: ExperienceFrame, config: MemoryConfig) -> bool:
        kx, ky, kyaw = self.key
        half_c, half_w = config.place_size / 2.0, config.yaw_window / 2.0
        in_x = kx - half_c <= frame.x < kx + half_c
        in_y = ky - half_c <= frame.y < ky + half_c
        offset = normalize_yaw(frame.yaw - kyaw)
        return in_x and in_y and -half_w <= offset < half_w


class _LargestIndex:
    """Lazy max-heap over units keyed by (size desc, creation asc)."""

    def __init__(self):
        self._heap = []
        self._units = {}

    def track(self, unit):
        self._units[unit.creation] = unit
        self.touch(unit)

    def forget(self, unit):
        self._units.pop(unit.creation, None)

    def touch(self, unit):
        if len(unit) > 0:
            heapq.heappush(self._heap, (-len(unit), unit.creation))
        if len(self._heap) > 4 * len(self._units) + 64:
            self._heap = [(-len(u), c) for c, u in self._units.items() if len(u) > 0]
            heapq.heapify(self._heap)

    def largest(self):
        while self._heap:
            neg_size, creation = self._heap[0]
            unit = self._units.get(creation)
            if unit is None or len(unit) != -neg_size:
                heapq.heappop(self._heap)
                continue
            return unit
        return None


def _encode_vector(vec: np.ndarray) -> str:
    return base64.b64encode(np.asarray(vec, dtype='<f8').tobytes()).decode('ascii')


def _decode_vector(text: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(text), dtype='<f8').astype(np.float64)


def _digest(vec: np.ndarray) -> str:
    return hashlib.sha1(np.asarray(vec, dtype='<f8').tobytes()).hexdigest()[:12]


def _frame_record(frame: ExperienceFrame) -> dict:
    return {
        't': frame.time,
        'pose': [frame.x, frame.y, frame.yaw, frame.pitch, frame.z],
        'embedding': _encode_vector(frame.embedding),
        'digest': _digest(frame.embedding),
    }


def _frame_from_record(record: dict) -> ExperienceFrame:
    x, y, yaw, pitch, z = record['pose']
    vec = _decode_vector(record['embedding'])
    vec.setflags(write=False)
    return ExperienceFrame(embedding=vec, x=x, y=y, yaw=yaw, time=record['t'], pitch=pitch, z=z)


class EpisodicMemory:
    """
    Base class: write-order checking, capacity accounting and read bookkeeping.

    Subclasses implement _add, _evict, _read and the snapshot body.
    """
    variant = None

    def __init__(self, config: MemoryConfig, dimension: Optional[int] = None):
        self.config = config
        self.dimension = dimension
        self.origin = None
        self.writes = 0
        self.evictions = 0
        self.last_time = None
        self.last_cost = (0, 0)
        self._stored = 0
        self._next_creation = 0

    # -- public API ---------------------------------------------------------------

    def write(self, frame: ExperienceFrame) -> WriteReport:
        if self.last_time is not None and frame.time <= self.last_time:
            raise ValueError(f"Frame time {frame.time} is not after the last written time {self.last_time}")
        if self.dimension is None:
            self.dimension = int(frame.embedding.shape[0])
        elif frame.embedding.shape[0] != self.dimension:
            raise ValueError(f"Frame embedding dimension {frame.embedding.shape[0]} != {self.dimension}")
        if self.origin is None:
            self.origin = (frame.x, frame.y, frame.yaw)
        self.last_time = frame.time
        self.writes += 1

        report = self._add(frame)
        if self._stored > self.config.capacity:
            report.evicted = self._evict()
            self._stored -= 1
            self.evictions += 1
        return report

    def read(self, query: np.ndarray, top_k: Optional[int] = None,
             threshold: Optional[float] = None) -> List[Candidate]:
        """Frames scoring above the threshold, score-descending, most recent first on ties."""
        k = self.config.top_k if top_k is None else top_k
        h = self.config.task_threshold if threshold is None else threshold
        if k < 1:
            raise ValueError(f"top_k must be >= 1, got {k}")
        if self.dimension is not None and query.shape[0] != self.dimension:
            raise ValueError(f"Query dimension {query.shape[0]} != memory dimension {self.dimension}")
        clusters_scored, groups = self._read(query, k)
        frames_scored = 0
        candidates = []
        for frames, matrix in groups:
            if not frames:
                continue
            scores = alignment_scores(query, matrix)
            frames_scored += len(frames)
            for idx in np.flatnonzero(scores > h):
                candidates.append(Candidate(frames[idx], float(scores[idx])))
        self.last_cost = (clusters_scored, frames_scored)
        candidates.sort(key=lambda c: (-c.score, -c.frame.time))
        return candidates

    def query_cost(self) -> Tuple[int, int]:
        """(clusters scored, frames scored) by the last read."""
        return self.last_cost

    def __len__(self):
        return self._stored

    def frames(self) -> Iterator[ExperienceFrame]:
        """Every stored frame, clustered or buffered."""
        raise NotImplementedError

    def clustered_frames(self) -> Iterator[ExperienceFrame]:
        """Frames visible to read (recency buffers excluded)."""
        return self.frames()

    def cluster_count(self) -> int:
        return 0

    def stats(self) -> dict:
        buffered = len(self) - sum(1 for _ in self.clustered_frames())
        return {
            'variant': self.variant,
            'frames': len(self),
            'clusters': self.cluster_count(),
            'buffered': buffered,
            'writes': self.writes,
            'evictions': self.evictions,
        }

    # -- snapshot -----------------------------------------------------------------

    def to_document(self) -> dict:
        return {
            'schema': SNAPSHOT_SCHEMA,
            'variant': self.variant,
            'config': asdict(self.config),
            'dimension': self.dimension,
            'origin': list(self.origin) if self.origin is not None else None,
            'writes': self.writes,
            'evictions': self.evictions,
            'last_time': self.last_time,
            'last_cost': list(self.last_cost),
            'next_creation': self._next_creation,
            'body': self._body_document(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_document(), sort_keys=True, indent=1) + '\n'

    def _restore_common(self, doc: dict):
        self.dimension = doc['dimension']
        self.origin = tuple(doc['origin']) if doc['origin'] is not None else None
        self.writes = doc['writes']
        self.evictions = doc['evictions']
        self.last_time = doc['last_time']
        self.last_cost = tuple(doc['last_cost'])
        self._next_creation = doc['next_creation']

    # -- subclass hooks -----------------------------------------------------------

    def _add(self, frame: ExperienceFrame) -> WriteReport:
        raise NotImplementedError

    def _evict(self) -> ExperienceFrame:
        raise NotImplementedError

    def _read(self, query, k):
        raise NotImplementedError

    def _body_document(self) -> dict:
        raise NotImplementedError

    def _restore_body(self, body: dict):
        raise NotImplementedError

    def _creation(self) -> int:
        value = self._next_creation
        self._next_creation += 1
        return value

    def _cluster_batch(self, frames, existing: List[EventCluster], report: WriteReport) -> List[EventCluster]:
        """
        DP-Means + merge over a flushed buffer, then fold each resulting cluster into the
        first existing event cluster it aligns with, or add it as a new one.

        Returns:
            list: Event clusters whose membership changed (new ones included)
        """
        cfg = self.config
        result = dp_means([f.embedding for f in frames], penalty=cfg.penalty,
                          init_clusters=cfg.dp_init_clusters, max_iters=cfg.dp_max_iters,
                          seed=stable_seed('flush', cfg.seed, frames[-1].time))
        result = merge_clusters(result, cfg.merge_score)
        touched = []
        for u in range(result.num_clusters):
            members = [frames[i] for i in result.members(u)]
            center = result.centers[u]
            target = None
            for event in existing:
                if SCORE_SCALE * float(np.dot(center, event.center)) > cfg.merge_score:
                    target = event
                    break
            if target is None:
                target = EventCluster(self._creation(), self.dimension)
                existing.append(target)
                report.created_events += 1
            else:
                report.merged_events += 1
            target.add_frames(members)
            touched.append(target)
        report.clustered = True
        return touched


class NullMemory(EpisodicMemory):
    """Memoryless baseline: counts writes, keeps nothing."""
    variant = 'none'

    def _add(self, frame):
        return WriteReport()

    def _evict(self):
        return None

    def _read(self, query, k):
        return 0, []

    def frames(self):
        return iter(())

    def _body_document(self):
        return {}

    def _restore_body(self, body):
        pass


class FIFOMemory(EpisodicMemory):
    """Flat queue; the globally oldest frame goes first."""
    variant = 'fifo'

    def __init__(self, config, dimension=None):
        super().__init__(config, dimension)
        self.queue = deque()
        self._matrix = None

    def _add(self, frame):
        self.queue.append(frame)
        self._stored += 1
        self._matrix = None
        return WriteReport()

    def _evict(self):
        self._matrix = None
        return self.queue.popleft()

    def _read(self, query, k):
        if not self.queue:
            return 0, []
        if self._matrix is None:
            self._matrix = np.stack([f.embedding for f in self.queue])
        return 0, [(list(self.queue), self._matrix)]

    def frames(self):
        return iter(self.queue)

    def _body_document(self):
        return {'frames': [_frame_record(f) for f in self.queue]}

    def _restore_body(self, body):
        self.queue = deque(_frame_from_record(r) for r in body['frames'])
        self._stored = len(self.queue)


class PlaceMemory(EpisodicMemory):
    """Place clusters, each a FIFO; eviction hits the largest place."""
    variant = 'place'

    def __init__(self, config, dimension=None):
        super().__init__(config, dimension)
        self.places: Dict[tuple, PlaceCluster] = {}
        self._largest = _LargestIndex()

    def _place_for(self, frame, report):
        key = place_key(frame.pose, self.config, self.origin)
        place = self.places.get(key)
        if place is None:
            place = PlaceCluster(key, self._creation())
            self.places[key] = place
            self._largest.track(place)
            report.created_places += 1
        return place

    def _add(self, frame):
        report = WriteReport()
        place = self._place_for(frame, report)
        place.frames.append(frame)
        place.offer_center(frame)
        self._stored += 1
        self._largest.touch(place)
        return report

    def _remove_place_if_empty(self, place):
        if len(place) == 0:
            del self.places[place.key]
            self._largest.forget(place)

    def _evict(self):
        place = self._largest.largest()
        frame = place.frames.popleft()
        if frame is place.center_frame:
            place.refresh_center()
        self._largest.touch(place)
        self._remove_place_if_empty(place)
        return frame

    def _ordered_places(self) -> List[PlaceCluster]:
        return sorted(self.places.values(), key=lambda p: p.creation)

    def _read(self, query, k):
        places = [p for p in self._ordered_places() if p.frames]
        if not places:
            return 0, []
        centers = np.stack([p.center_embedding for p in places])
        scores = alignment_scores(query, centers)
        chosen = np.argsort(-scores, kind='stable')[:k]
        groups = []
        for idx in chosen:
            frames = list(places[idx].frames)
            groups.append((frames, np.stack([f.embedding for f in frames])))
        return len(places), groups

    def frames(self):
        for place in self._ordered_places():
            yield from place.frames

    def cluster_count(self):
        return len(self.places)

    def cluster_sizes(self) -> List[int]:
        return [len(p) for p in self._ordered_places()]

    def _body_document(self):
        return {'places': [{
            'creation': p.creation,
            'key': list(p.key),
            'center_t': p.center_frame.time if p.center_frame is not None else None,
            'frames': [_frame_record(f) for f in p.frames],
        } for p in self._ordered_places()]}

    def _restore_body(self, body):
        for record in body['places']:
            place = PlaceCluster(tuple(record['key']), record['creation'])
            place.frames = deque(_frame_from_record(r) for r in record['frames'])
            place.center_frame = next((f for f in place.frames if f.time == record['center_t']), None)
            self.places[place.key] = place
            self._largest.track(place)
            self._stored += len(place.frames)


class EventMemory(EpisodicMemory):
    """Global event clusters built from one recency buffer; pose is ignored."""
    variant = 'event'

    def __init__(self, config, dimension=None):
        super().__init__(config, dimension)
        self.events: List[EventCluster] = []
        self.buffer = deque()
        self.timer = 0
        self._largest = _LargestIndex()
        self._centers = None

    def _add(self, frame):
        report = WriteReport()
        self.buffer.append(frame)
        self.timer += 1
        self._stored += 1
        if self.timer >= self.config.update_frequency:
            before = len(self.events)
            touched = self._cluster_batch(list(self.buffer), self.events, report)
            for event in self.events[before:]:
                self._largest.track(event)
            for event in touched:
                self._largest.touch(event)
            self.buffer.clear()
            self.timer = 0
            self._centers = None
        return report

    def _evict(self):
        event = self._largest.largest()
        if event is None:
            # Nothing clustered yet: the buffer is the only unit left
            return self.buffer.popleft()
        frame = event.pop_oldest()
        self._largest.touch(event)
        if len(event) == 0:
            self.events.remove(event)
            self._largest.forget(event)
        self._centers = None
        return frame

    def _read(self, query, k):
        groups = []
        clusters_scored = 0
        if self.events:
            if self._centers is None:
                self._centers = np.stack([e.center for e in self.events])
            scores = alignment_scores(query, self._centers)
            clusters_scored = len(self.events)
            for idx in np.argsort(-scores, kind='stable')[:k]:
                event = self.events[idx]
                groups.append((list(event.frames), event.matrix()))
        if self.config.search_buffer and self.buffer:
            frames = list(self.buffer)
            groups.append((frames, np.stack([f.embedding for f in frames])))
        return clusters_scored, groups

    def frames(self):
        for event in self.events:
            yield from event.frames
        yield from self.buffer

    def clustered_frames(self):
        for event in self.events:
            yield from event.frames

    def cluster_count(self):
        return len(self.events)

    def cluster_sizes(self) -> List[int]:
        return [len(e) for e in self.events]

    def _body_document(self):
        return {
            'timer': self.timer,
            'buffer': [_frame_record(f) for f in self.buffer],
            'events': [{
                'creation': e.creation,
                'sum': _encode_vector(e._sum),
                'center_digest': _digest(e.center),
                'frames': [_frame_record(f) for f in e.frames],
            } for e in self.events],
        }

    def _restore_body(self, body):
        self.timer = body['timer']
        self.buffer = deque(_frame_from_record(r) for r in body['buffer'])
        for record in body['events']:
            event = _event_from_record(record, self.dimension)
            self.events.append(event)
            self._largest.track(event)
        self._stored = len(self.buffer) + sum(len(e) for e in self.events)


def _event_from_record(record, dimension) -> EventCluster:
    event = EventCluster(record['creation'], dimension)
    event.frames = deque(_frame_from_record(r) for r in record['frames'])
    event._sum = _decode_vector(record['sum']).copy()
    return event


class PlaceEventMemory(EpisodicMemory):
    """
    Place clusters, each with its own recency buffer, timer and event clusters.
    Eviction removes the oldest frame of the globally largest event cluster.
    """
    variant = 'place_event'

    def __init__(self, config, dimension=None):
        super().__init__(config, dimension)
        self.places: Dict[tuple, PlaceCluster] = {}
        self._event_place: Dict[int, PlaceCluster] = {}
        self._largest = _LargestIndex()
        self._largest_buffer = _LargestIndex()
        self._event_list = None
        self._centers = None

    def _place_for(self, frame, report):
        key = place_key(frame.pose, self.config, self.origin)
        place = self.places.get(key)
        if place is None:
            place = PlaceCluster(key, self._creation())
            self.places[key] = place
            report.created_places += 1
        return place

    def _add(self, frame):
        report = WriteReport()
        place = self._place_for(frame, report)
        place.buffer.append(frame)
        place.timer += 1
        place.offer_center(frame)
        self._stored += 1
        if place.timer >= self.config.update_frequency:
            before = len(place.events)
            touched = self._cluster_batch(list(place.buffer), place.events, report)
            for event in place.events[before:]:
                self._event_place[event.creation] = place
                self._largest.track(event)
            for event in touched:
                self._largest.touch(event)
            place.buffer.clear()
            place.timer = 0
            self._invalidate()
        self._touch_buffer(place)
        return report

    def _touch_buffer(self, place):
        buffer_unit = _BufferView(place)
        if len(buffer_unit) > 0:
            self._largest_buffer.track(buffer_unit)
        else:
            self._largest_buffer.forget(buffer_unit)

    def _invalidate(self):
        self._event_list = None
        self._centers = None

    def _evict(self):
        event = self._largest.largest()
        if event is None:
            view = self._largest_buffer.largest()
            place = view.place
            frame = place.buffer.popleft()
            self._touch_buffer(place)
        else:
            place = self._event_place[event.creation]
            frame = event.pop_oldest()
            self._largest.touch(event)
            if len(event) == 0:
                place.events.remove(event)
                self._largest.forget(event)
                del self._event_place[event.creation]
            self._invalidate()
        if frame is place.center_frame:
            place.refresh_center()
        if len(place) == 0:
            del self.places[place.key]
        return frame

    def _ordered_places(self) -> List[PlaceCluster]:
        return sorted(self.places.values(), key=lambda p: p.creation)

    def event_clusters(self) -> List[EventCluster]:
        if self._event_list is None:
            self._event_list = [e for p in self._ordered_places() for e in p.events]
        return self._event_list

    def _read(self, query, k):
        if self.config.read_strategy == 'place_first':
            clusters_scored, groups = self._read_place_first(query, k)
        else:
            clusters_scored, groups = self._read_flat(query, k)
        if self.config.search_buffer:
            for place in self._ordered_places():
                if place.buffer:
                    frames = list(place.buffer)
                    groups.append((frames, np.stack([f.embedding for f in frames])))
        return clusters_scored, groups

    def _read_flat(self, query, k):
        events = self.event_clusters()
        if not events:
            return 0, []
        if self._centers is None:
            self._centers = np.stack([e.center for e in events])
        scores = alignment_scores(query, self._centers)
        groups = []
        for idx in np.argsort(-scores, kind='stable')[:k]:
            groups.append((list(events[idx].frames), events[idx].matrix()))
        return len(events), groups

    def _read_place_first(self, query, k):
        places = [p for p in self._ordered_places() if p.events]
        if not places:
            return 0, []
        place_scores = alignment_scores(query, np.stack([p.center_embedding for p in places]))
        chosen_places = [places[i] for i in np.argsort(-place_scores, kind='stable')[:k]]
        events = [e for p in chosen_places for e in p.events]
        event_scores = alignment_scores(query, np.stack([e.center for e in events]))
        groups = []
        for idx in np.argsort(-event_scores, kind='stable')[:k]:
            groups.append((list(events[idx].frames), events[idx].matrix()))
        return len(places) + len(events), groups

    def frames(self):
        for place in self._ordered_places():
            yield from place.members()

    def clustered_frames(self):
        for place in self._ordered_places():
            for event in place.events:
                yield from event.frames

    def cluster_count(self):
        return len(self.event_clusters())

    def cluster_sizes(self) -> List[int]:
        return [len(e) for e in self.event_clusters()]

    def _body_document(self):
        return {'places': [{
            'creation': p.creation,
            'key': list(p.key),
            'timer': p.timer,
            'center_t': p.center_frame.time if p.center_frame is not None else None,
            'buffer': [_frame_record(f) for f in p.buffer],
            'events': [{
                'creation': e.creation,
                'sum': _encode_vector(e._sum),
                'center_digest': _digest(e.center),
                'frames': [_frame_record(f) for f in e.frames],
            } for e in p.events],
        } for p in self._ordered_places()]}

    def _restore_body(self, body):
        for record in body['places']:
            place = PlaceCluster(tuple(record['key']), record['creation'])
            place.timer = record['timer']
            place.buffer = deque(_frame_from_record(r) for r in record['buffer'])
            for event_record in record['events']:
                event = _event_from_record(event_record, self.dimension)
                place.events.append(event)
                self._event_place[event.creation] = place
                self._largest.track(event)
            place.center_frame = next((f for f in place.members() if f.time == record['center_t']), None)
            self.places[place.key] = place
            self._touch_buffer(place)
            self._stored += len(place)


class _BufferView:
    """Adapter so a place's recency buffer can sit in a _LargestIndex."""

    def __init__(self, place: PlaceCluster):
        self.place = place
        self.creation = place.creation

    def __len__(self):
        return len(self.place.buffer)


MEMORY_CLASSES = {
    'none': NullMemory,
    'fifo': FIFOMemory,
    'place': PlaceMemory,
    'event': EventMemory,
    'place_event': PlaceEventMemory,
}


def create_memory(variant: str, config: Optional[MemoryConfig] = None,
                  dimension: Optional[int] = None) -> EpisodicMemory:
    """Factory for the memory variants."""
    if variant not in MEMORY_CLASSES:
        raise ValueError(f"Unknown memory variant '{variant}', expected one of {VARIANTS}")
    return MEMORY_CLASSES[variant](config or MemoryConfig(), dimension)


def load_memory(document) -> EpisodicMemory:
    """Rebuild a memory from a snapshot document (dict or JSON text)."""
    doc = json.loads(document) if isinstance(document, str) else document
    if doc.get('schema') != SNAPSHOT_SCHEMA:
        raise ValueError(f"Unsupported snapshot schema '{doc.get('schema')}'")
    memory = create_memory(doc['variant'], MemoryConfig(**doc['config']))
    memory._restore_common(doc)
    memory._restore_body(doc['body'])
    return memory


# Operation-style entry points

def write(memory: EpisodicMemory, frame: ExperienceFrame) -> WriteReport:
    return memory.write(frame)


def read(memory: EpisodicMemory, query: np.ndarray, top_k: Optional[int] = None,
         threshold: Optional[float] = None) -> List[Candidate]:
    return memory.read(query, top_k, threshold)


def query_cost(memory: EpisodicMemory, top_k: Optional[int] = None) -> Tuple[int, int]:
    """Scoring counts of the last read; top_k is informational (the read fixed it)."""
    return memory.query_cost()
