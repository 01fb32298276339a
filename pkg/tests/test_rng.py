from app.utils.rng import Rng


def test_same_seed_same_stream():
    a, b = Rng(7), Rng(7)
    assert [a.uniform() for _ in range(10)] == [b.uniform() for _ in range(10)]
    assert a.poisson(3.0) == b.poisson(3.0)


def test_children_are_independent_of_parent_state():
    """A child stream depends only on the seed and its spawn key."""
    parent = Rng(7)
    before = parent.child(3).uniform()
    for _ in range(5_000):
        parent.uniform()
    after = parent.child(3).uniform()
    assert before == after
    assert parent.child(3).uniform() != parent.child(4).uniform()


def test_child_keys_nest():
    rng = Rng(11)
    assert rng.child(2).child(5).stream == (2, 5)
    assert [c.stream for c in rng.spawn(3)] == [(0,), (1,), (2,)]
    assert rng.describe() == {"seed": 11, "stream": []}


def test_draw_ranges():
    rng = Rng(12)
    values = [rng.uniform() for _ in range(10_000)]
    assert all(0.0 <= v < 1.0 for v in values)
    assert all(0 <= rng.integers(5) < 5 for _ in range(100))
    assert all(2.0 <= u < 3.0 for u in rng.uniforms(100, 2.0, 3.0))
    assert rng.exponential(2.0) >= 0.0
