import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbgraph.dataio import erdos_renyi, grid_graph
from fbgraph.design import frequency_response, manual_coefficients
from fbgraph.engine import (
    ChebyshevCoefficients,
    FilterError,
    apply_chebyshev,
    apply_feedback_looped,
    apply_operator_form,
    arma_solve_dense,
    chebyshev_basis,
    initial_error_bound,
    read_signal,
    required_iterations,
    write_signal,
)
from fbgraph.experiments import contraction_on_spectrum, oracle_check
from fbgraph.graph import build_graph, chebyshev_operator, scaled_normalized_laplacian
from fbgraph.spectral import eigendecompose, exact_filter

from conftest import designed
from strategies import graphs


def test_identity_filter(c4, rng):
    op = scaled_normalized_laplacian(c4)
    x = rng.standard_normal(4)
    run = apply_feedback_looped(op, manual_coefficients([0.0], [1.0]), x)
    np.testing.assert_array_equal(run.signal, x)
    assert run.iterations == 1 and run.final_delta == 0.0


def test_one_hop_feedforward(c4, rng):
    op = scaled_normalized_laplacian(c4)
    x = rng.standard_normal(4)
    run = apply_feedback_looped(op, manual_coefficients([0.0], [0.0, 1.0]), x)
    np.testing.assert_allclose(run.signal, op.dense() @ x, atol=1e-15)


def test_c4_matches_oracle_at_half_gamma(c4, rng):
    op = scaled_normalized_laplacian(c4)
    dec = eigendecompose(op)
    c = designed(5, 3, 0.5, 0.5)
    x = rng.standard_normal(4)
    run = apply_feedback_looped(op, c, x, t_max=100, tol=1e-10)
    want = exact_filter(dec, lambda lam: frequency_response(c, lam), x)
    assert np.linalg.norm(run.signal - want) <= 1e-6 * np.linalg.norm(want)


def test_c4_gamma_09_needs_predicted_iterations(c4, rng):
    # at gamma = 0.9 the contraction on C4 is about 0.89, so 100 steps leave
    # ~1e-5 of the initial error; the predicted count gets within tolerance
    op = scaled_normalized_laplacian(c4)
    c = designed(5, 3, 0.9, 0.5)
    x = rng.standard_normal(4)
    chk = oracle_check(op, c, x, tol=1e-12)
    assert not chk.excluded and chk.t_max > 100
    assert chk.rel_error <= 1e-6


def test_operator_form_examples(two_node, c4, rng):
    op = scaled_normalized_laplacian(two_node)
    p_apply, _ = apply_operator_form(op, manual_coefficients([1.0], [1.0]), np.eye(2)[:, :1])
    np.testing.assert_allclose(p_apply(np.array([1.0, 0.0])), [0.0, 0.5], atol=1e-8)
    x = rng.standard_normal((2, 3))
    _, qx = apply_operator_form(op, manual_coefficients([0.3], [1.0, 0.0, 0.0]), x)
    np.testing.assert_array_equal(qx, x)


def test_operator_form_matches_dense_powers(c4, rng):
    op = scaled_normalized_laplacian(c4)
    c = manual_coefficients(rng.uniform(-0.2, 0.2, 5), rng.standard_normal(4))
    x = rng.standard_normal((4, 2))
    lap = op.dense()
    pw = [np.linalg.matrix_power(lap, j) for j in range(6)]
    p_dense = -sum(c.psi[j - 1] * pw[j] for j in range(1, 6))
    q_dense = sum(c.phi[j] * pw[j] for j in range(4))
    p_apply, qx = apply_operator_form(op, c, x)
    np.testing.assert_allclose(p_apply(x), p_dense @ x, atol=1e-12)
    np.testing.assert_allclose(qx, q_dense @ x, atol=1e-12)


def test_chebyshev_examples(c4, rng):
    op = chebyshev_operator(c4)
    x = rng.standard_normal(4)
    np.testing.assert_array_equal(apply_chebyshev(op, ChebyshevCoefficients([1.0, 0.0, 0.0]), x), x)
    np.testing.assert_allclose(apply_chebyshev(op, ChebyshevCoefficients([0.0, 1.0]), x), op.dense() @ x, atol=1e-15)
    theta = rng.standard_normal(4)
    dec = eigendecompose(op)
    want = exact_filter(dec, lambda lam: np.polynomial.chebyshev.chebval(lam, theta), x)
    np.testing.assert_allclose(apply_chebyshev(op, ChebyshevCoefficients(theta), x), want, atol=1e-12)
    basis = chebyshev_basis(op, x, 4)
    np.testing.assert_allclose(sum(t * b for t, b in zip(theta, basis)), want, atol=1e-12)


def test_chebyshev_cost(c4):
    op = chebyshev_operator(c4)
    apply_chebyshev(op, ChebyshevCoefficients(np.ones(5)), np.ones(4))
    assert op.counter.count == 4
    with pytest.raises(ValueError):
        ChebyshevCoefficients([])


def test_required_iterations_examples():
    c = manual_coefficients([0.1], [1.0], gamma=0.5)
    assert required_iterations(c, 0.5**3 * 7.0, c0=7.0) == 3
    tiny = manual_coefficients([1e-12], [1.0], gamma=1e-12)
    assert required_iterations(tiny, 1e-6) == 1
    with pytest.raises(ValueError):
        required_iterations(manual_coefficients([0.1], [1.0], gamma=1.0), 1e-6)
    with pytest.raises(ValueError):
        required_iterations(c, 0.0)


def test_required_iterations_predicts_early_stop(rng):
    g = grid_graph(15, 15)
    op = scaled_normalized_laplacian(g)
    c = designed(5, 3, 0.9, 0.5)
    x = rng.standard_normal(g.n)
    t_pred = required_iterations(c, 1e-6, initial_error_bound(op, c, x))
    run = apply_feedback_looped(op, c, x, t_max=10 * t_pred, tol=1e-6)
    assert run.iterations <= t_pred
    assert abs(run.iterations - t_pred) <= 0.2 * t_pred


def test_required_iterations_is_sufficient(rng):
    g = erdos_renyi(60, 0.1, seed=3)
    op = scaled_normalized_laplacian(g)
    c = designed(5, 3, 0.9, 0.5)
    x = rng.standard_normal(g.n)
    t_pred = required_iterations(c, 1e-8, initial_error_bound(op, c, x))
    run = apply_feedback_looped(op, c, x, t_max=t_pred, tol=1e-8)
    assert run.final_delta <= 1e-8


def test_matvec_count_is_tp_plus_q(rng):
    g = erdos_renyi(40, 0.2, seed=1)
    for p, q in [(1, 1), (3, 2), (5, 3), (9, 4)]:
        op = scaled_normalized_laplacian(g)
        c = designed(p, q, 0.9, 0.5)
        run = apply_feedback_looped(op, c, rng.standard_normal((g.n, 3)), t_max=17, tol=0.0)
        assert op.counter.count == run.iterations * p + q


def test_blow_up_reports_iteration(c4):
    op = scaled_normalized_laplacian(c4, "bound2")
    bad = manual_coefficients([-400.0], [1.0], gamma=0.5)
    with pytest.raises(FilterError, match="iteration"):
        apply_feedback_looped(op, bad, np.ones(4), t_max=1000, tol=0.0)


def test_strict_stability(c4):
    op = scaled_normalized_laplacian(c4)
    with pytest.raises(FilterError, match="spectral radius"):
        apply_feedback_looped(op, manual_coefficients([3.0], [1.0], gamma=0.5), np.ones(4), strict_stability=True)
    apply_feedback_looped(op, designed(5, 3, 0.9, 0.5), np.ones(4), strict_stability=True)


def test_rejects_bad_input(c4):
    op = scaled_normalized_laplacian(c4)
    c = designed(1, 1, 0.5, 0.5)
    with pytest.raises(ValueError):
        apply_feedback_looped(op, c, np.ones(4), t_max=0)
    with pytest.raises(ValueError, match="dimension"):
        apply_feedback_looped(op, c, np.ones(5))


@given(graphs(max_n=50, connected=True), st.sampled_from([(1, 1, 0.5), (3, 2, 0.9), (5, 3, 0.5), (5, 3, 0.9)]))
def test_fixed_point_is_dense_solve(g, pqg):
    op = scaled_normalized_laplacian(g)
    c = designed(*pqg, 0.5)
    x = np.cos(np.arange(g.n) * 1.3)
    dec = eigendecompose(op)
    if contraction_on_spectrum(c, dec.eigenvalues) >= 1.0:
        return
    run = apply_feedback_looped(op, c, x, t_max=3000, tol=1e-13)
    want = arma_solve_dense(op, c, x)
    assert np.linalg.norm(run.signal - want) <= 1e-6 * max(np.linalg.norm(want), 1e-300)


@given(graphs(max_n=50), st.sampled_from([(1, 1, 0.5), (3, 2, 0.9), (5, 3, 0.9), (9, 4, 0.9)]))
def test_contraction_ratio(g, pqg):
    op = scaled_normalized_laplacian(g)
    c = designed(*pqg, 0.5)
    hist = []
    run = apply_feedback_looped(op, c, np.sin(np.arange(g.n) + 0.5), t_max=60, tol=0.0, history=hist)
    floor = 1e-9 * np.linalg.norm(run.signal)
    for t in range(1, len(hist)):
        if hist[t - 1] > floor:
            assert hist[t] <= c.gamma * hist[t - 1] * (1 + 1e-6)


@given(graphs(max_n=40), st.floats(-5, 5), st.floats(-5, 5))
def test_linearity(g, a, b):
    op = scaled_normalized_laplacian(g)
    c = designed(5, 3, 0.9, 0.5)
    x = np.cos(np.arange(g.n))
    y = np.sin(np.arange(g.n))
    run = lambda v: apply_feedback_looped(op, c, v, t_max=30, tol=0.0).signal  # noqa: E731
    np.testing.assert_allclose(run(a * x + b * y), a * run(x) + b * run(y), atol=1e-9 * (1 + abs(a) + abs(b)))


def test_multichannel_is_columnwise(rng):
    g = erdos_renyi(30, 0.2, seed=5)
    op = scaled_normalized_laplacian(g)
    c = designed(3, 2, 0.9, 0.5)
    x = rng.standard_normal((30, 3))
    block = apply_feedback_looped(op, c, x, t_max=25, tol=0.0).signal
    for j in range(3):
        col = apply_feedback_looped(op, c, x[:, j], t_max=25, tol=0.0).signal
        np.testing.assert_allclose(block[:, j], col, atol=1e-14)


@pytest.mark.parametrize("suffix,binary", [(".txt", None), (".bin", None), (".dat", True)])
def test_signal_round_trip(tmp_path, rng, suffix, binary):
    x = rng.standard_normal((7, 3)) * 10.0 ** rng.integers(-200, 200, (7, 3))
    path = tmp_path / f"s{suffix}"
    write_signal(x, path, binary=binary)
    np.testing.assert_array_equal(read_signal(path), x)
    write_signal(x[:, 0], path, binary=binary)
    assert read_signal(path).shape == (7, 1)


def test_signal_binary_layout(tmp_path):
    path = tmp_path / "s.bin"
    write_signal(np.array([[1.0, 2.0]]), path)
    raw = path.read_bytes()
    assert raw[:4] == b"DFSG" and len(raw) == 16 + 16
    assert int.from_bytes(raw[4:8], "little") == 1 and int.from_bytes(raw[8:12], "little") == 2


def test_signal_errors(tmp_path):
    path = tmp_path / "s.txt"
    path.write_text("2 2\n1 2\n3\n")
    with pytest.raises(ValueError, match=":3"):
        read_signal(path)
    path.write_text("oops\n")
    with pytest.raises(ValueError, match="header"):
        read_signal(path)
    path = tmp_path / "t.bin"
    path.write_bytes(b"DFSG" + (2).to_bytes(4, "little") * 2 + bytes(4) + bytes(8))
    with pytest.raises(ValueError, match="expected 2x2"):
        read_signal(path)


def test_oracle_excludes_non_contracting(c4):
    op = scaled_normalized_laplacian(c4)
    chk = oracle_check(op, manual_coefficients([3.0], [1.0], gamma=0.5), np.ones(4), t_max=10)
    assert chk.excluded and chk.contraction >= 1.0


def test_two_node_single_edge_graph_filter():
    g = build_graph([(0, 1)])
    op = scaled_normalized_laplacian(g)
    c = designed(5, 3, 0.9, 0.5)
    chk = oracle_check(op, c, np.array([1.0, -2.0]))
    assert chk.rel_error <= 1e-8 and chk.matvecs == chk.expected_matvecs
