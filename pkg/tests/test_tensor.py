import numpy as np
import pytest

from eccnet import tensor as T
from eccnet.errors import ContractError, DimensionError
from eccnet.tensor import Tape, Tensor, backward

from helpers import check_gradients, rel_err


def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal((a @ b).data, b.data)


def test_matmul_hand_case():
    out = Tensor([[1.0, 2.0]]) @ Tensor([[3.0], [4.0]])
    assert out.data.tolist() == [[11.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_matmul_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    a = Tensor(rng.uniform(-1, 1, (3, 3)), requires_grad=True)
    b = Tensor(rng.uniform(-1, 1, (3, 3)), requires_grad=True)
    worst = check_gradients(lambda: T.sum_all(a @ b), [a, b], max_probes=9)
    assert worst < 1e-6


def test_relu_forward_and_subgradient():
    x = Tensor([-1.0, 0.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = T.relu(x)
        loss = T.sum_all(y)
    assert y.data.tolist() == [0.0, 0.0, 2.0]
    grads = backward(tape, loss)
    assert grads[x].tolist() == [0.0, 0.0, 1.0]  # derivative 0 at exactly 0


def test_add_identity():
    x = Tensor([1.0, -2.0, 3.0])
    zero = Tensor(np.zeros(3))
    assert np.array_equal(T.add(x, zero).data, x.data)


def test_elementwise_rejects_row_broadcast():
    with pytest.raises(DimensionError):
        T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(3)))


def test_scalar_broadcast_add_mul():
    x = Tensor(np.asarray([[1.0, 2.0]]), requires_grad=True)
    c = Tensor(np.asarray(2.0), requires_grad=True)
    with Tape() as tape:
        loss = T.sum_all(T.mul(x, c))
    grads = backward(tape, loss)
    assert grads[x].tolist() == [[2.0, 2.0]]
    assert float(grads[c]) == pytest.approx(3.0)


def test_backward_sum_all_ones():
    x = Tensor(np.arange(6, dtype=float).reshape(2, 3), requires_grad=True)
    with Tape() as tape:
        loss = T.sum_all(x)
    grads = backward(tape, loss)
    assert np.array_equal(grads[x], np.ones((2, 3)))


def test_backward_elementwise_square():
    x = Tensor([1.0, -2.0], requires_grad=True)
    with Tape() as tape:
        loss = T.sum_all(T.mul(x, x))
    grads = backward(tape, loss)
    assert grads[x].tolist() == [2.0, -4.0]


def test_backward_requires_scalar_loss():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = T.relu(x)
    with pytest.raises(ContractError):
        backward(tape, y)


def test_untouched_tensors_absent_from_gradient_map():
    x = Tensor(np.ones(3), requires_grad=True)
    unused = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        loss = T.sum_all(x)
    grads = backward(tape, loss)
    assert x in grads and unused not in grads


def test_forward_determinism():
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, (20, 8))
    b = rng.uniform(-1, 1, (8, 5))
    r1 = (Tensor(a) @ Tensor(b)).data
    r2 = (Tensor(a) @ Tensor(b)).data
    assert np.array_equal(r1, r2)


def test_gather_rows_and_backward_accumulates():
    x = Tensor(np.arange(6, dtype=float).reshape(3, 2), requires_grad=True)
    idx = np.array([0, 0, 2])
    with Tape() as tape:
        loss = T.sum_all(T.gather_rows(x, idx))
    grads = backward(tape, loss)
    assert grads[x].tolist() == [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]]


def test_segment_sum_and_mean_with_empty_segment():
    x = Tensor(np.asarray([[1.0], [2.0], [4.0]]))
    starts = np.array([0, 2, 2])
    counts = np.array([2, 0, 1])
    assert T.segment_sum(x, starts, counts).data.ravel().tolist() == [3.0, 0.0, 4.0]
    assert T.segment_mean(x, starts, counts).data.ravel().tolist() == [1.5, 0.0, 4.0]


def test_segment_sum_trailing_empty_does_not_leak():
    x = Tensor(np.asarray([[1.0], [2.0]]))
    out = T.segment_sum(x, np.array([0, 2]), np.array([2, 0]))
    assert out.data.ravel().tolist() == [3.0, 0.0]


def test_segment_max_values_and_gradient_routing():
    x = Tensor(np.asarray([[1.0, 5.0], [3.0, 2.0], [0.0, 0.0]]), requires_grad=True)
    starts = np.array([0, 2])
    counts = np.array([2, 1])
    with Tape() as tape:
        y = T.segment_max(x, starts, counts)
        loss = T.sum_all(y)
    assert y.data.tolist() == [[3.0, 5.0], [0.0, 0.0]]
    grads = backward(tape, loss)
    assert grads[x].tolist() == [[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]


def test_edge_linear_matches_loop():
    rng = np.random.default_rng(5)
    theta = rng.uniform(-1, 1, (4, 3, 2))
    xs = rng.uniform(-1, 1, (4, 2))
    out = T.edge_linear(Tensor(xs), Tensor(theta)).data
    expected = np.stack([theta[e] @ xs[e] for e in range(4)])
    assert np.allclose(out, expected, atol=1e-14, rtol=0)


def test_grouped_edge_linear_matches_edge_linear():
    rng = np.random.default_rng(21)
    m, k, o, i = 40, 3, 4, 2
    ids = rng.integers(0, k, size=m)
    theta_k = rng.uniform(-1, 1, (k, o, i))
    xs = rng.uniform(-1, 1, (m, i))
    plan = T.GroupPlan(ids, k)
    grouped = T.grouped_edge_linear(Tensor(xs), Tensor(theta_k), plan).data
    dense = T.edge_linear(Tensor(xs), Tensor(theta_k[ids])).data
    assert np.allclose(grouped, dense, atol=1e-14, rtol=0)


def test_grouped_edge_linear_gradients():
    rng = np.random.default_rng(22)
    m, k = 20, 3
    ids = rng.integers(0, k, size=m)
    plan = T.GroupPlan(ids, k)
    theta = Tensor(rng.uniform(-1, 1, (k, 3, 2)), requires_grad=True)
    xs = Tensor(rng.uniform(-1, 1, (m, 2)), requires_grad=True)
    w = Tensor(rng.uniform(-1, 1, (m, 3)))
    worst = check_gradients(
        lambda: T.sum_all(T.mul(T.grouped_edge_linear(xs, theta, plan), w)),
        [theta, xs], max_probes=10)
    assert worst < 1e-4


def test_grouped_edge_linear_empty_group():
    # group 1 has no rows; its matrix must receive a zero gradient
    ids = np.array([0, 0, 2])
    plan = T.GroupPlan(ids, 3)
    theta = Tensor(np.ones((3, 1, 1)), requires_grad=True)
    xs = Tensor(np.asarray([[1.0], [2.0], [3.0]]))
    with Tape() as tape:
        loss = T.sum_all(T.grouped_edge_linear(xs, theta, plan))
    grads = backward(tape, loss)
    assert grads[theta].ravel().tolist() == [3.0, 0.0, 3.0]


def test_edge_linear_gradients():
    rng = np.random.default_rng(7)
    theta = Tensor(rng.uniform(-1, 1, (5, 2, 3)), requires_grad=True)
    xs = Tensor(rng.uniform(-1, 1, (5, 3)), requires_grad=True)
    w = Tensor(rng.uniform(-1, 1, (5, 2)))
    worst = check_gradients(
        lambda: T.sum_all(T.mul(T.edge_linear(xs, theta), w)), [theta, xs])
    assert worst < 1e-4


def test_scale_rows_gradients():
    rng = np.random.default_rng(11)
    x = Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
    s = Tensor(rng.uniform(0.5, 2.0, (4, 1)), requires_grad=True)
    worst = check_gradients(lambda: T.sum_all(T.scale_rows(x, s)), [x, s])
    assert worst < 1e-4


def test_nested_tape_rejected():
    with Tape():
        with pytest.raises(ContractError):
            with Tape():
                pass


@pytest.mark.parametrize("seed", range(5))
def test_random_op_chain_gradients(seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
    w = Tensor(rng.uniform(-1, 1, (3, 3)), requires_grad=True)
    b = Tensor(rng.uniform(-1, 1, 3), requires_grad=True)

    def loss():
        h = T.relu(T.add_bias(a @ w, b))
        return T.sum_all(T.mul(h, h))

    worst = check_gradients(loss, [a, w, b], max_probes=12)
    assert worst < 1e-4, f"seed {seed}: rel err {worst}"


def test_gradient_rel_err_metric_sane():
    assert rel_err(1.0, 1.0 + 1e-9) < 1e-8


def test_dead_branch_does_not_corrupt_gradients():
    # a recorded intermediate that never reaches the loss must stay inert,
    # even after garbage collection and heavy allocation churn
    import gc

    x = Tensor(np.asarray([[1.0, 2.0]]), requires_grad=True)
    with Tape() as tape:
        dead = T.relu(x)
        del dead
        gc.collect()
        churn = [Tensor(np.zeros(3)) for _ in range(2000)]
        del churn
        loss = T.sum_all(T.mul(x, x))
    grads = backward(tape, loss)
    assert grads[x].tolist() == [[2.0, 4.0]]


def test_concurrent_tapes_on_disjoint_data():
    import threading

    results = {}

    def job(seed):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.uniform(-1, 1, (30, 30)), requires_grad=True)
        with Tape() as tape:
            loss = T.sum_all(T.mul(x, x))
        grads = backward(tape, loss)
        results[seed] = np.array_equal(grads[x], 2 * x.data)

    threads = [threading.Thread(target=job, args=(s,)) for s in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(results.values()) and len(results) == 4
