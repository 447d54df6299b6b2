import numpy as np
import pytest

from conftest import frame, kind_vector, random_unit
from embedding_core import alignment_score, make_embedding
from episodic_memory import (
    VARIANTS, ExperienceFrame, MemoryConfig, create_memory, load_memory, normalize_yaw, place_key, query_cost,
    read, write,
)

STORING = ('fifo', 'place', 'event', 'place_event')


def jitter(oracle, kind, rng, scale=0.03):
    return make_embedding(oracle.base(kind) + scale * rng.standard_normal(oracle.dimension))


def fill(memory, oracle, rng, count, start=0, kinds=('water', 'sand', 'tree', 'cow')):
    """Write frames wandering over a 30 x 30 area with a few visual kinds."""
    for t in range(start, start + count):
        kind = kinds[(t // 7) % len(kinds)]
        x, y = float(rng.integers(30)), float(rng.integers(30))
        yaw = float(rng.choice([-135.0, -90.0, -45.0, 0.0, 45.0, 90.0, 135.0]))
        memory.write(frame(jitter(oracle, kind, rng), t, x, y, yaw))


def test_unknown_variant_rejected():
    with pytest.raises(ValueError):
        create_memory('lru')


def test_config_validation():
    with pytest.raises(ValueError):
        MemoryConfig(capacity=0)
    with pytest.raises(ValueError):
        MemoryConfig(yaw_window=180)
    with pytest.raises(ValueError, match="divide 360"):
        MemoryConfig(yaw_window=50)
    assert MemoryConfig(yaw_window=22.5).yaw_window == 22.5
    with pytest.raises(ValueError):
        MemoryConfig(read_strategy='random')


@pytest.mark.parametrize('variant', VARIANTS)
def test_write_times_must_increase(variant, oracle, small_config):
    memory = create_memory(variant, small_config)
    memory.write(frame(oracle.base('water'), 5))
    with pytest.raises(ValueError):
        memory.write(frame(oracle.base('water'), 5))


def test_write_rejects_other_dimension(oracle, rng, small_config):
    memory = create_memory('fifo', small_config, dimension=64)
    with pytest.raises(ValueError):
        memory.write(frame(random_unit(rng, 32), 0))


@pytest.mark.parametrize('variant', STORING)
def test_capacity_is_never_exceeded(variant, oracle, rng, small_config):
    memory = create_memory(variant, small_config)
    for t in range(200):
        fill(memory, oracle, rng, 1, start=t)
        assert len(memory) <= small_config.capacity
        assert len(memory) == sum(1 for _ in memory.frames())
    assert memory.writes == 200
    assert memory.evictions == 200 - len(memory)
    assert len(memory) == small_config.capacity


def test_fifo_evicts_globally_oldest(oracle, small_config):
    memory = create_memory('fifo', small_config)
    for t in range(60):
        memory.write(frame(oracle.base('water'), t))
    times = [f.time for f in memory.frames()]
    assert times == list(range(10, 60))
    read(memory, oracle.base('water'))
    assert query_cost(memory) == (0, 50)


def test_place_evicts_oldest_of_largest_place(oracle):
    memory = create_memory('place', MemoryConfig(capacity=5))
    for t in range(3):
        memory.write(frame(oracle.base('water'), t, 0.0, 0.0))
    for t in range(3, 6):
        report = memory.write(frame(oracle.base('sand'), t, 20.0, 20.0))
    assert report.evicted is not None and report.evicted.time == 0
    assert memory.cluster_count() == 2
    assert sorted(memory.cluster_sizes()) == [2, 3]


def test_place_read_scores_place_centers_first(oracle):
    memory = create_memory('place', MemoryConfig(top_k=1))
    for t in range(4):
        memory.write(frame(oracle.base('water'), t, 0.0, 0.0))
    for t in range(4, 8):
        memory.write(frame(oracle.base('sand'), t, 20.0, 20.0))
    hits = memory.read(oracle.base('sand'))
    assert [c.frame.time for c in hits] == [7, 6, 5, 4]
    assert memory.query_cost() == (2, 4)


def test_event_buffer_hidden_until_flush(oracle, small_config):
    memory = create_memory('event', small_config)
    for t in range(9):
        memory.write(frame(oracle.base('water'), t))
    assert memory.read(oracle.base('water')) == []
    report = memory.write(frame(oracle.base('water'), 9))
    assert report.clustered and report.created_events == 1
    assert len(memory.read(oracle.base('water'))) == 10


def test_event_search_buffer_option(oracle):
    memory = create_memory('event', MemoryConfig(update_frequency=10, search_buffer=True))
    for t in range(3):
        memory.write(frame(oracle.base('water'), t))
    assert len(memory.read(oracle.base('water'))) == 3


def test_event_flush_splits_kinds_and_merges_into_existing(oracle, rng, small_config):
    memory = create_memory('event', small_config)
    for t in range(10):
        memory.write(frame(jitter(oracle, 'water' if t < 5 else 'sand', rng), t))
    assert memory.cluster_count() == 2
    for t in range(10, 20):
        report = memory.write(frame(jitter(oracle, 'water', rng), t))
    assert report.merged_events == 1 and report.created_events == 0
    assert sorted(memory.cluster_sizes()) == [5, 15]


def test_place_event_buffers_per_place(oracle, rng, small_config):
    memory = create_memory('place_event', small_config)
    for t in range(10):
        memory.write(frame(jitter(oracle, 'water', rng), t, 0.0, 0.0))
    for t in range(10, 15):
        memory.write(frame(jitter(oracle, 'water', rng), t, 20.0, 20.0))
    assert memory.cluster_count() == 1
    assert memory.stats()['buffered'] == 5
    hits = memory.read(oracle.base('water'))
    assert {c.frame.time for c in hits} == set(range(10))


def test_place_event_evicts_from_oldest_largest_event(oracle):
    memory = create_memory('place_event', MemoryConfig(capacity=20, update_frequency=10))
    for t in range(10):
        memory.write(frame(oracle.base('water'), t, 0.0, 0.0))
    for t in range(10, 20):
        memory.write(frame(oracle.base('sand'), t, 20.0, 20.0))
    report = memory.write(frame(oracle.base('sand'), 20, 20.0, 20.0))
    # equal sizes: the earlier-created event loses its oldest frame
    assert report.evicted.time == 0
    assert len(memory) == 20


def test_place_event_evicts_buffers_before_anything_is_clustered(oracle):
    memory = create_memory('place_event', MemoryConfig(capacity=3, update_frequency=100))
    memory.write(frame(oracle.base('water'), 0, 0.0, 0.0))
    memory.write(frame(oracle.base('sand'), 1, 20.0, 20.0))
    memory.write(frame(oracle.base('sand'), 2, 20.0, 20.0))
    report = memory.write(frame(oracle.base('sand'), 3, 20.0, 20.0))
    assert report.evicted.time == 1
    assert len(memory) == 3


def test_running_center_matches_exact_center(oracle, rng):
    memory = create_memory('event', MemoryConfig(capacity=40, update_frequency=10))
    fill(memory, oracle, rng, 150)
    for event in memory.events:
        assert np.allclose(event.center, event.exact_center(), atol=1e-9)


def test_ties_break_toward_recent_frames(oracle):
    memory = create_memory('fifo')
    memory.write(frame(oracle.base('cow'), 1))
    memory.write(frame(oracle.base('cow'), 2))
    hits = memory.read(oracle.base('cow'))
    assert [c.frame.time for c in hits] == [2, 1]


def test_read_applies_threshold_strictly(oracle):
    memory = create_memory('fifo')
    memory.write(frame(oracle.base('tree'), 0))
    assert memory.read(oracle.base('water')) == []
    assert memory.read(oracle.base('tree'), threshold=100.0) == []
    with pytest.raises(ValueError):
        memory.read(oracle.base('tree'), top_k=0)


@pytest.mark.parametrize('variant', ['event', 'place_event'])
def test_full_top_k_read_matches_brute_force(variant, oracle, rng):
    memory = create_memory(variant, MemoryConfig(capacity=120, update_frequency=10))
    fill(memory, oracle, rng, 300)
    query = oracle.base('sand')
    hits = memory.read(query, top_k=10_000)
    expected = {id(f) for f in memory.clustered_frames() if alignment_score(query, f.embedding) > 22.74}
    assert {id(c.frame) for c in hits} == expected
    scores = [c.score for c in hits]
    assert scores == sorted(scores, reverse=True)


def test_place_first_read_ranks_places_then_events(oracle):
    flat = create_memory('place_event', MemoryConfig(capacity=500, update_frequency=10, top_k=2))
    first = create_memory('place_event', MemoryConfig(capacity=500, update_frequency=10, top_k=2,
                                                      read_strategy='place_first'))
    for t in range(400):
        place = t // 100
        kind = 'water' if place == 0 else ('sand', 'tree', 'cow')[t % 3]
        for memory in (flat, first):
            memory.write(frame(oracle.base(kind), t, 10.0 * place, 0.0))
    assert flat.cluster_count() == 10
    query = oracle.base('water')
    assert {c.frame.time for c in first.read(query)} == set(range(100))
    assert {c.frame.time for c in flat.read(query)} == set(range(100))
    # four places plus the events of the two best places
    assert first.query_cost()[0] == 8
    assert flat.query_cost()[0] == 10


def test_null_memory_counts_writes_only(oracle):
    memory = create_memory('none')
    for t in range(5):
        write(memory, frame(oracle.base('water'), t))
    assert len(memory) == 0
    assert memory.writes == 5
    assert memory.read(oracle.base('water')) == []


@pytest.mark.parametrize('variant', VARIANTS)
def test_snapshot_round_trips_byte_identically(variant, oracle, rng):
    memory = create_memory(variant, MemoryConfig(capacity=40, update_frequency=10))
    fill(memory, oracle, rng, 57)
    memory.read(oracle.base('water'))
    text = memory.to_json()
    restored = load_memory(text)
    assert restored.to_json() == text
    assert len(restored) == len(memory)
    query = oracle.base('tree')
    assert [(c.frame.time, round(c.score, 9)) for c in restored.read(query)] == \
        [(c.frame.time, round(c.score, 9)) for c in memory.read(query)]


def test_snapshot_restores_writable_state(oracle, rng):
    memory = create_memory('place_event', MemoryConfig(capacity=30, update_frequency=10))
    fill(memory, oracle, rng, 45)
    restored = load_memory(memory.to_json())
    fill(memory, oracle, np.random.default_rng(5), 20, start=45)
    fill(restored, oracle, np.random.default_rng(5), 20, start=45)
    assert restored.to_json() == memory.to_json()


def test_snapshot_schema_checked():
    with pytest.raises(ValueError):
        load_memory({'schema': 'other/1'})


def test_place_key_half_open_boundaries():
    config = MemoryConfig()
    assert place_key((3.0, 0.0, 0.0), config) == (6.0, 0.0, 0.0)
    assert place_key((2.999, 0.0, 0.0), config) == (0.0, 0.0, 0.0)
    assert place_key((0.0, 0.0, 30.0), config) == (0.0, 0.0, 60.0)
    assert place_key((0.0, 0.0, 29.9), config) == (0.0, 0.0, 0.0)
    assert place_key((0.0, 0.0, 179.0), config)[2] == -180.0


def test_yaw_normalization():
    assert normalize_yaw(180.0) == -180.0
    assert normalize_yaw(-190.0) == 170.0
    assert normalize_yaw(725.0) == 5.0
    assert ExperienceFrame(np.ones(1), 0.0, 0.0, 270.0, 0).yaw == -90.0


def burn_then_vanish(memory, oracle, writes=200):
    """Ten frames of a burning zombie, then the same spot without it."""
    burning = kind_vector(oracle, 'zombie_burning', 'grass')
    for t in range(writes):
        memory.write(frame(burning if t < 10 else oracle.base('grass'), t))


@pytest.mark.parametrize('variant', ['event', 'place_event'])
def test_event_memories_keep_a_vanished_event(variant, oracle):
    memory = create_memory(variant, MemoryConfig(capacity=30, update_frequency=10))
    burn_then_vanish(memory, oracle)
    assert memory.evictions == 170
    assert {f.time for f in memory.frames() if f.time < 10} == set(range(10))
    hits = memory.read(oracle.base('zombie_burning'))
    assert {c.frame.time for c in hits} == set(range(10))


def test_place_memory_loses_a_vanished_event(oracle):
    memory = create_memory('place', MemoryConfig(capacity=30, update_frequency=10))
    burn_then_vanish(memory, oracle)
    assert memory.cluster_count() == 1
    assert min(f.time for f in memory.frames()) == 170
    assert memory.read(oracle.base('zombie_burning')) == []


def twin_houses(memory, oracle, writes=200):
    """The same scene at two distant poses: 20 frames at the first, the rest at the second."""
    for t in range(writes):
        memory.write(frame(oracle.base('house'), t, 0.0 if t < 20 else 60.0, 0.0))


@pytest.mark.parametrize('variant', ['place', 'place_event'])
def test_place_memories_keep_both_twin_scenes(variant, oracle):
    memory = create_memory(variant, MemoryConfig(capacity=40, update_frequency=10))
    twin_houses(memory, oracle)
    xs = {f.x for f in memory.frames()}
    assert xs == {0.0, 60.0}
    assert len(memory) == 40


def test_event_memory_collapses_twin_scenes(oracle):
    memory = create_memory('event', MemoryConfig(capacity=40, update_frequency=10))
    twin_houses(memory, oracle)
    assert memory.cluster_count() == 1
    assert {f.x for f in memory.frames()} == {60.0}


@pytest.mark.parametrize('variant', ['place', 'place_event'])
def test_every_frame_lies_inside_its_place(variant, oracle, rng):
    config = MemoryConfig(capacity=80, update_frequency=10)
    memory = create_memory(variant, config)
    fill(memory, oracle, rng, 400)
    assert memory.places
    for place in memory.places.values():
        assert len(place) > 0
        for member in place.members():
            assert place.contains_pose(member, config)
            assert place_key(member.pose, config, memory.origin) == place.key


def eviction_target(memory):
    """Oldest frame of the largest unit (ties to the older unit), read off an unbounded copy."""
    if memory.variant == 'fifo':
        units = [list(memory.frames())]
    elif memory.variant == 'place':
        units = sorted(memory.places.values(), key=lambda p: p.creation)
        units = [list(p.frames) for p in units]
    elif memory.variant == 'event':
        units = [list(e.frames) for e in sorted(memory.events, key=lambda e: e.creation)]
        units = units or [list(memory.buffer)]
    else:
        places = sorted(memory.places.values(), key=lambda p: p.creation)
        events = sorted((e for p in places for e in p.events), key=lambda e: e.creation)
        units = [list(e.frames) for e in events] or [list(p.buffer) for p in places]
    largest = max(units, key=len)
    return min(largest, key=lambda f: f.time)


def wander(oracle, rng, t, side=12):
    kind = ('water', 'sand', 'tree', 'cow')[int(rng.integers(4))]
    yaw = float(rng.choice([-135.0, -90.0, -45.0, 0.0, 45.0, 90.0, 135.0, 180.0]))
    return frame(jitter(oracle, kind, rng, scale=0.1), t, float(rng.integers(side)), float(rng.integers(side)), yaw)


@pytest.mark.parametrize('seed', range(6))
@pytest.mark.parametrize('variant', STORING)
def test_eviction_always_takes_oldest_of_largest_unit(variant, seed, oracle):
    rng = np.random.default_rng(seed)
    memory = create_memory(variant, MemoryConfig(capacity=40, update_frequency=8, seed=seed))
    evicted = 0
    for t in range(160):
        incoming = wander(oracle, rng, t)
        doc = memory.to_document()
        doc['config']['capacity'] = 10 ** 9
        unbounded = load_memory(doc)
        unbounded.write(incoming)
        report = memory.write(incoming)
        if len(unbounded) > 40:
            assert report.evicted is not None
            assert report.evicted.time == eviction_target(unbounded).time
            evicted += 1
        else:
            assert report.evicted is None
    assert evicted == 120 == memory.evictions


def brute_force_read(memory, query, threshold=22.74):
    if memory.variant in ('event', 'place_event') and not memory.config.search_buffer:
        searchable = list(memory.clustered_frames())
    else:
        searchable = list(memory.frames())
    scored = [(alignment_score(query, f.embedding), f) for f in searchable]
    scored = [(s, f) for s, f in scored if s > threshold]
    return sorted(scored, key=lambda sf: (-sf[0], -sf[1].time))


@pytest.mark.parametrize('seed', range(8))
@pytest.mark.parametrize('variant, options', [
    ('none', {}),
    ('fifo', {}),
    ('place', {}),
    ('event', {}),
    ('event', {'search_buffer': True}),
    ('place_event', {}),
    ('place_event', {'search_buffer': True}),
    ('place_event', {'read_strategy': 'place_first'}),
])
def test_unbounded_read_matches_brute_force(variant, options, seed, oracle):
    rng = np.random.default_rng(100 + seed)
    memory = create_memory(variant, MemoryConfig(capacity=60, update_frequency=7, seed=seed, **options))
    for t in range(int(rng.integers(40, 140))):
        memory.write(wander(oracle, rng, t))
    queries = [oracle.base(k) for k in ('water', 'sand', 'tree', 'cow')]
    queries.append(kind_vector(oracle, 'water', 'tree', weights=[1.0, float(rng.random())]))
    for query in queries:
        hits = memory.read(query, top_k=10_000)
        expected = brute_force_read(memory, query)
        assert [c.frame.time for c in hits] == [f.time for _, f in expected]
        assert [c.score for c in hits] == pytest.approx([s for s, _ in expected])
