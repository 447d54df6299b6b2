import pytest

from embedding_core import EncoderOracle
from episodic_memory import MemoryConfig
from query_bench import BENCH_SIDE, bench_query, build_memory, synthetic_trajectory


def test_synthetic_trajectory_shape():
    oracle = EncoderOracle(seed=1, dimension=32)
    frames = synthetic_trajectory(200, oracle, seed=3)
    assert [f.time for f in frames] == list(range(200))
    assert all(0 <= f.x < BENCH_SIDE and 0 <= f.y < BENCH_SIDE for f in frames)
    again = synthetic_trajectory(200, oracle, seed=3)
    assert [(f.x, f.y, f.yaw) for f in frames] == [(f.x, f.y, f.yaw) for f in again]
    with pytest.raises(ValueError):
        synthetic_trajectory(0, oracle)


def test_build_memory_holds_every_frame():
    oracle = EncoderOracle(seed=1, dimension=32)
    frames = synthetic_trajectory(150, oracle)
    memory = build_memory('place_event', frames, 32, MemoryConfig(update_frequency=5))
    assert len(memory) == 150 and memory.evictions == 0
    assert memory.config.update_frequency == 5


def test_bench_query_counts():
    results = bench_query(variants=['fifo', 'place_event'], sizes=[400], queries=20, top_ks=[1, 30], warmup=2,
                          dimension=32, seed=1, config=MemoryConfig(update_frequency=5))
    assert [(r.variant, r.top_k) for r in results] == [
        ('fifo', 1), ('fifo', 30), ('place_event', 1), ('place_event', 30),
    ]
    for r in results:
        if r.variant == 'fifo':
            assert r.frames_scored == 400 and r.clusters_scored == 0
        else:
            assert r.cluster_count > 0
            assert r.clusters_scored == r.cluster_count
            assert r.total_scored <= r.cluster_count + r.top_k * r.max_cluster_size
            assert r.mean_cluster_size > 0
    place_event_k1 = results[2]
    assert place_event_k1.frames_scored <= place_event_k1.max_cluster_size


def test_bench_query_validates_counts():
    with pytest.raises(ValueError):
        bench_query(variants=['fifo'], sizes=[10], queries=0, dimension=32)
    with pytest.raises(ValueError):
        bench_query(variants=['fifo'], sizes=[10], warmup=-1, dimension=32)


def test_hierarchical_read_scores_a_fraction_of_fifo():
    # coarse places so every place flushes its buffer several times
    config = MemoryConfig(place_size=20.0, yaw_window=90.0)
    results = bench_query(variants=['fifo', 'place_event'], sizes=[20_000], queries=30, top_ks=[1], warmup=0,
                          dimension=32, seed=2, config=config)
    fifo, place_event = results
    assert fifo.total_scored == 20_000
    assert place_event.cluster_count > 0
    assert fifo.total_scored >= 10 * place_event.total_scored


@pytest.mark.slow
def test_hierarchical_read_is_ten_times_faster_than_fifo():
    results = bench_query(variants=['fifo', 'place_event'], sizes=[100_000], queries=200, top_ks=[1],
                          warmup=20, seed=0)
    fifo, place_event = results
    assert fifo.total_scored >= 10 * place_event.total_scored
    assert fifo.median_ms >= 10 * place_event.median_ms
