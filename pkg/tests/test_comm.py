import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from curvgrid.comm import (
    INT,
    REAL,
    CollectiveMismatchError,
    CommError,
    RankFailure,
    SimulatedCluster,
    run_ranks,
)

MODES = ["threads", "sequential"]


@pytest.mark.parametrize("mode", MODES)
def test_pair_swap(mode):
    def job(comm):
        send = [np.array([], dtype=np.int64)] * 2
        send[1 - comm.rank] = np.array([10 + comm.rank])
        return [r.tolist() for r in comm.all_to_all(send)]
    assert run_ranks(2, job, mode=mode) == [[[], [11]], [[10], []]]


@pytest.mark.parametrize("mode", MODES)
def test_silent_rank_receives_others(mode):
    def job(comm):
        send = [np.zeros(0, np.int64) if comm.rank == 0 else np.array([comm.rank, d]) for d in range(3)]
        return [r.tolist() for r in comm.all_to_all(send)]
    out = run_ranks(3, job, mode=mode)
    assert out[0] == [[], [1, 0], [2, 0]]
    assert out[2] == [[], [1, 2], [2, 2]]


def test_segment_lengths_follow_senders():
    def job(comm):
        flat = np.full(3 * (comm.rank + 1), comm.rank)
        out, lens = comm.alltoallv(flat, [comm.rank + 1] * 3)
        return out.tolist(), lens
    for out, lens in run_ranks(3, job):
        assert lens == [1, 2, 3]
        assert out == [0, 1, 1, 2, 2, 2]


def test_alltoallv_length_check():
    with pytest.raises(RankFailure) as info:
        run_ranks(2, lambda c: c.alltoallv(np.arange(3), [1, 1]))
    assert isinstance(info.value.error, CommError)


def test_fixed_width_records_and_reals():
    def job(comm):
        send = [np.array([[comm.rank, d, 7]]) for d in range(comm.size)]
        ints = comm.all_to_all(send, INT, "rows", width=3)
        reals = comm.allgather(np.array([comm.rank + 0.5]), REAL)
        return [a.shape for a in ints], [float(r[0]) for r in reals]
    shapes, reals = run_ranks(2, job)[1]
    assert shapes == [(1, 3), (1, 3)] and reals == [0.5, 1.5]


def test_wrong_dtype_rejected():
    with pytest.raises(RankFailure) as info:
        run_ranks(2, lambda c: c.all_to_all([np.array([0.5])] * 2, INT))
    assert "dtype" in str(info.value.error)


@pytest.mark.parametrize("mode", MODES)
def test_chain_neighbors(mode):
    nbrs = {0: [1], 1: [0, 2], 2: [1]}

    def job(comm):
        send = {q: np.array([comm.rank * 10 + q]) for q in nbrs[comm.rank]}
        got = comm.neighbor_all_to_all(send, nbrs[comm.rank])
        return {q: v.tolist() for q, v in got.items()}
    assert run_ranks(3, job, mode=mode) == [{1: [10]}, {0: [1], 2: [21]}, {1: [12]}]


def test_empty_neighbor_list():
    assert run_ranks(3, lambda c: c.neighbor_all_to_all({}, [])) == [{}, {}, {}]


def test_star_broadcast():
    def job(comm):
        if comm.rank == 0:
            return comm.neighbor_all_to_all({q: np.array([q * q, q]) for q in (1, 2, 3)}, [1, 2, 3])
        return comm.neighbor_all_to_all({}, [0])
    out = run_ranks(4, job)
    for q in (1, 2, 3):
        assert out[q][0].tolist() == [q * q, q]


def test_asymmetric_neighbors_rejected():
    nbrs = {0: [1], 1: [], 2: []}
    with pytest.raises(RankFailure) as info:
        run_ranks(3, lambda c: c.neighbor_all_to_all({}, nbrs[c.rank]))
    assert "asymmetric" in str(info.value.error)


def test_sending_to_non_neighbor_rejected():
    with pytest.raises(RankFailure):
        run_ranks(2, lambda c: c.neighbor_all_to_all({1 - c.rank: np.array([1])}, []))


@pytest.mark.parametrize("mode", MODES)
def test_mismatched_collectives_detected(mode):
    def job(comm):
        if comm.rank == 0:
            return comm.allgather(np.array([1]), INT, "first")
        return comm.allgather(np.array([1]), INT, "second")
    with pytest.raises(RankFailure) as info:
        run_ranks(2, job, mode=mode)
    assert isinstance(info.value.error, CollectiveMismatchError)


@pytest.mark.parametrize("mode", MODES)
def test_rank_leaving_early_detected(mode):
    def job(comm):
        if comm.rank == 1:
            return None
        comm.barrier()
    with pytest.raises(RankFailure) as info:
        run_ranks(3, job, mode=mode)
    assert isinstance(info.value.error, CommError)


def test_rank_exception_reported_with_rank():
    def job(comm):
        if comm.rank == 2:
            raise KeyError("boom")
        comm.barrier()
    with pytest.raises(RankFailure) as info:
        run_ranks(3, job)
    assert info.value.rank == 2 and isinstance(info.value.error, KeyError)


def test_cluster_reused_across_sessions():
    cl = SimulatedCluster(3)
    assert cl.run(lambda c: int(c.allreduce_sum([c.rank])[0])) == [3, 3, 3]
    assert cl.run(lambda c: c.exscan_sum([1]).tolist()) == [[0], [1], [2]]
    assert cl.run(lambda c: float(c.allreduce_max([c.rank * 1.5])[0])) == [3.0] * 3


def test_trace_lines():
    cl = SimulatedCluster(2, trace=True)
    cl.run(lambda c: c.all_to_all([np.array([1, 2])] * 2, INT, "demo"))
    assert sorted(cl.trace) == ["0 0 16 demo", "0 1 16 demo", "1 0 16 demo", "1 1 16 demo"]


def test_bad_cluster():
    with pytest.raises(ValueError):
        SimulatedCluster(0)
    with pytest.raises(ValueError):
        SimulatedCluster(2, mode="mpi")


def _random_exchange(comm, seed):
    rng = np.random.default_rng(seed * 100 + comm.rank)
    send = [rng.integers(0, 100, rng.integers(0, 5)) for _ in range(comm.size)]
    recv = comm.all_to_all(send)
    nbrs = [q for q in range(comm.size) if (q + comm.rank) % 2 == 1]
    nsend = {q: send[q] for q in nbrs}
    nrecv = comm.neighbor_all_to_all(nsend, nbrs)
    masked = [send[q] if q in nbrs else np.zeros(0, np.int64) for q in range(comm.size)]
    dense = comm.all_to_all(masked)
    return ([s.tolist() for s in send], [r.tolist() for r in recv],
            {q: v.tolist() for q, v in nrecv.items()}, [d.tolist() for d in dense])


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10**6))
def test_exchange_properties(size, seed):
    threaded = run_ranks(size, _random_exchange, seed, mode="threads")
    assert run_ranks(size, _random_exchange, seed, mode="sequential") == threaded
    for b in range(size):
        for a in range(size):
            # delivery in order, per sender segment
            assert threaded[b][1][a] == threaded[a][0][b]
        for q, v in threaded[b][2].items():
            assert v == threaded[b][3][q]
    sent = sum(len(x) for r in threaded for x in r[0])
    received = sum(len(x) for r in threaded for x in r[1])
    assert sent == received
