import pytest
from hypothesis import given, settings, strategies as st

from chapar.protocol import (
    BLACK,
    GREEN,
    KEY_QUANTUM,
    PrivateMessage,
    ProtocolError,
    SpotFullError,
    SpotKey,
    SpotRow,
    apply_arrival,
    apply_departure,
    from_wire,
    merge,
    new_row,
    observed_row,
    spot_key,
    to_wire,
)

# rows live on a small grid, so random messages share keys often
CENTERS = [(0.25 * i, 0.25 * j) for i in range(4) for j in range(3)]


@st.composite
def rows(draw):
    x, y = draw(st.sampled_from(CENTERS))
    cap = draw(st.integers(1, 5))
    dep = draw(st.integers(0, cap))
    return SpotRow(x, y, 0.0, cap, dep, cap - dep, draw(st.integers(0, 12)),
                   draw(st.integers(0, 200)), draw(st.sampled_from([BLACK, GREEN])))


messages = st.lists(rows(), max_size=8).map(PrivateMessage)

MANY = settings(max_examples=150)


def test_new_row_examples():
    r = new_row((1.0, 1.0), 900, GREEN, 40)
    assert (r.capacity, r.needed, r.deployed, r.hops, r.time) == (3, 3, 0, 0, 40)
    r = new_row((0, 0), 300, BLACK, 0)
    assert r.capacity == 1 and r.time == 0
    with pytest.raises(ProtocolError):
        new_row((0, 0), 0, GREEN, 5)


def test_new_row_thirty_cm_square_is_three_workers():
    # 0.3 m squared in cm² picks up float noise above 900
    assert new_row((0.75, 0.75), (0.3 * 100) ** 2, GREEN, 0).capacity == 3
    assert new_row((0.75, 0.75), 0.3 * 0.3 * 1e4, GREEN, 0).capacity == 3


def test_apply_arrival_examples():
    r = SpotRow(1.0, 1.0, 0.0, 3, 0, 3, 0, 40, GREEN)
    a = apply_arrival(r, 90)
    assert (a.deployed, a.needed, a.time, a.capacity) == (1, 2, 90, 3)
    last = apply_arrival(SpotRow(0, 0, 0, 1, 0, 1, 0, 0, BLACK), 7)
    assert (last.deployed, last.needed, last.time) == (1, 0, 7)
    with pytest.raises(SpotFullError):
        apply_arrival(SpotRow(0, 0, 0, 3, 3, 0, 0, 0, BLACK), 8)


def test_departure_undoes_arrival():
    r = new_row((0.5, 0.5), 900, GREEN, 3)
    back = apply_departure(apply_arrival(r, 5), 9)
    assert (back.deployed, back.needed, back.time) == (0, 3, 9)
    with pytest.raises(ProtocolError):
        apply_departure(r, 4)


def test_observed_row_clamps_count():
    r = new_row((0.5, 0.5), 900, GREEN, 3)
    full = observed_row(r, 7, 10)
    assert (full.deployed, full.needed, full.time) == (3, 0, 10)


def test_row_rejects_inconsistent_counts():
    with pytest.raises(ProtocolError):
        SpotRow(0, 0, 0, 3, 1, 1, 0, 0, GREEN)
    with pytest.raises(ProtocolError):
        SpotRow(0, 0, 0, 3, 4, -1, 0, 0, GREEN)
    with pytest.raises(ProtocolError):
        SpotRow(0, 0, 0, 3, 0, 3, -1, 0, GREEN)


def test_spot_key_examples():
    assert spot_key(1.00, 1.00) == SpotKey(20, 20)
    assert spot_key(1.01, 0.99) == SpotKey(20, 20)
    assert spot_key(0.0, 0.0) == SpotKey(0, 0)


@settings(max_examples=100)
@given(st.integers(0, 60), st.integers(0, 60),
       st.floats(-0.0249, 0.0249), st.floats(-0.0249, 0.0249))
def test_spot_key_tolerates_half_quantum_error(i, j, dx, dy):
    cx, cy = i * KEY_QUANTUM, j * KEY_QUANTUM
    assert spot_key(cx + dx, cy + dy) == spot_key(cx, cy)


def test_merge_examples():
    a = SpotRow(1.0, 1.0, 0.0, 3, 0, 3, 2, 40, GREEN)
    got = merge(PrivateMessage(), PrivateMessage([a]))
    assert got.get(a.key).hops == 3 and got.get(a.key).time == 40

    mine = SpotRow(1.0, 1.0, 0.0, 3, 1, 2, 0, 90, GREEN)
    old = SpotRow(1.0, 1.0, 0.0, 3, 0, 3, 4, 40, GREEN)
    kept = merge(PrivateMessage([mine]), PrivateMessage([old]))
    assert kept.get(mine.key) == mine


def test_merge_replaces_newer_and_bumps_hops():
    mine = SpotRow(1.0, 1.0, 0.0, 3, 0, 3, 0, 40, GREEN)
    newer = SpotRow(1.0, 1.0, 0.0, 3, 2, 1, 1, 60, GREEN)
    got = merge(PrivateMessage([mine]), PrivateMessage([newer])).get(mine.key)
    assert (got.deployed, got.time, got.hops) == (2, 60, 2)


def test_merge_tie_keeps_mine():
    mine = SpotRow(1.0, 1.0, 0.0, 3, 0, 3, 0, 40, GREEN)
    other = SpotRow(1.0, 1.0, 0.0, 3, 1, 2, 5, 40, GREEN)
    m = PrivateMessage([mine])
    assert merge(m, PrivateMessage([other])) is m


def test_merge_appends_in_sender_order():
    mine = PrivateMessage([SpotRow(0.5, 0.5, 0, 3, 0, 3, 0, 1, GREEN)])
    sender = PrivateMessage([SpotRow(2.0, 2.0, 0, 3, 0, 3, 0, 1, BLACK),
                             SpotRow(1.0, 1.0, 0, 3, 0, 3, 0, 1, GREEN)])
    got = merge(mine, sender)
    assert list(got.keys()) == [spot_key(0.5, 0.5), spot_key(2.0, 2.0), spot_key(1.0, 1.0)]


@settings(max_examples=100)
@given(st.lists(rows(), min_size=1, max_size=3).map(PrivateMessage))
def test_self_merge_changes_nothing(m):
    got = merge(m, m)
    for k in m.keys():
        assert got.get(k) == m.get(k)


@MANY
@given(messages, messages)
def test_merge_idempotent(m, r):
    once = merge(m, r)
    assert merge(once, r) == once


@MANY
@given(messages, messages)
def test_merge_key_union(m, r):
    assert set(merge(m, r).keys()) == set(m.keys()) | set(r.keys())


@MANY
@given(messages, st.lists(messages, max_size=4))
def test_merge_timestamps_never_decrease(m, received):
    cur = m
    for r in received:
        nxt = merge(cur, r)
        for k in cur.keys():
            assert nxt.get(k).time >= cur.get(k).time
        cur = nxt


@MANY
@given(messages, messages)
def test_merge_hop_increment(m, r):
    got = merge(m, r)
    for k in r.keys():
        if k not in m:
            assert got.get(k).hops == r.get(k).hops + 1
        elif r.get(k).time > m.get(k).time:
            assert got.get(k).hops == r.get(k).hops + 1
        else:
            assert got.get(k) == m.get(k)


@MANY
@given(messages, messages)
def test_merge_preserves_capacity_balance(m, r):
    for row in merge(m, r):
        assert row.needed + row.deployed == row.capacity


@settings(max_examples=100)
@given(messages)
def test_wire_round_trip(m):
    frame = to_wire(m)
    assert len(frame) == 16 and all(len(slot) == 10 for slot in frame)
    assert from_wire(frame) == m


def test_wire_layout():
    r = SpotRow(0.75, 2.25, 0.0, 3, 1, 2, 4, 77, GREEN)
    frame = to_wire(PrivateMessage([r]), slots=2)
    assert frame == [[1, 0.75, 2.25, 0.0, 3, 1, 2, 4, 77, GREEN], [0] * 10]


def test_wire_overflow_and_bad_slots():
    m = PrivateMessage([SpotRow(0.25 * i, 0, 0, 1, 0, 1, 0, 0, GREEN) for i in range(3)])
    with pytest.raises(ProtocolError):
        to_wire(m, slots=2)
    with pytest.raises(ProtocolError):
        from_wire([[1, 2, 3]])
    with pytest.raises(ProtocolError):
        from_wire([[0, 0, 0, 0, 1, 0, 0, 0, 0, 0]])
