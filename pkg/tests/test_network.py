import copy
import dataclasses
import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import dense_admittance

from opf_pursuit import CaseFormatError, ValidationError, parse_case, validate_network
from opf_pursuit.network import (
    Generator,
    build_admittance,
    build_constant_matrices,
    build_matrices,
    model_from_dict,
    model_to_dict,
    quad_form_trace,
    synth_case,
)


def _case(lines, buses=(1,), gens=(), rho0=1.0, theta0=0.0):
    return {
        "baseMVA": 100.0,
        "slack": {"rho0": rho0, "theta0": theta0},
        "buses": [{"id": b, "vmin": 0.9, "vmax": 1.1} for b in buses],
        "lines": [dict(zip(("from", "to", "r", "x", "b_shunt"), ln)) for ln in lines],
        "generators": [
            {"bus": b, "c": 1.0, "d": 1.0, "s_rating": 50.0, "p_av_max": 40.0} for b in gens
        ],
    }


def test_parse_two_bus(two_bus):
    assert two_bus.N == 2
    assert two_bus.NG == 1
    assert len(two_bus.lines) == 2
    assert two_bus.source_hash and len(two_bus.source_hash) == 64


def test_bounds_stored_exactly(two_bus):
    assert two_bus.vmin.tolist() == [0.95, 0.95]
    assert two_bus.vmax.tolist() == [1.05, 1.05]


def test_per_unit_conversion(two_bus, two_bus_case):
    base = two_bus_case["baseMVA"]
    assert two_bus.pl[0] == two_bus_case["buses"][0]["pl"] / base
    g = two_bus_case["generators"][0]
    assert two_bus.generators[0].s_rating == g["s_rating"] / base


def test_unknown_bus_is_validation_error(tmp_path):
    case = _case([(0, 1, 0.01, 0.1, 0.0), (1, 99, 0.01, 0.1, 0.0)], buses=(1, 2, 3, 4, 5))
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(case))
    with pytest.raises(ValidationError) as exc:
        parse_case(path)
    assert "99" in str(exc.value)


def test_syntax_error_has_location(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "baseMVA": 100,\n  "slack": {\n}}}')
    with pytest.raises(CaseFormatError) as exc:
        parse_case(path)
    assert f"{path}:4:" in str(exc.value)


def test_bad_field_names_location():
    case = _case([(0, 1, 0.01, 0.1, 0.0)])
    case["buses"][0]["vmin"] = "low"
    with pytest.raises(CaseFormatError) as exc:
        model_from_dict(case)
    assert "buses[0]" in str(exc.value)


def test_round_trip(five_bus):
    again = model_from_dict(model_to_dict(five_bus))
    assert again.bus_ids == five_bus.bus_ids
    np.testing.assert_allclose(again.pl, five_bus.pl, rtol=1e-15)
    for a, b in zip(again.lines, five_bus.lines):
        assert abs(a.series - b.series) < 1e-12 * abs(b.series)


def test_validate_connected(two_bus, five_bus):
    assert validate_network(two_bus) == []
    assert validate_network(five_bus) == []


def test_validate_disconnected(five_bus):
    broken = dataclasses.replace(five_bus, lines=five_bus.lines[:1])
    assert validate_network(broken) == ["graph not connected"]


def test_validate_zero_rating(two_bus):
    g = two_bus.generators[0]
    broken = dataclasses.replace(two_bus, generators=(dataclasses.replace(g, s_rating=0.0),))
    problems = validate_network(broken)
    assert len(problems) == 1 and "rating" in problems[0]


def test_validate_bad_voltage_bounds(two_bus):
    broken = dataclasses.replace(two_bus, vmin=np.array([1.1, 0.95]))
    assert any("vmin" in p for p in validate_network(broken))


def test_single_line_admittance():
    case = _case([(0, 1, 0.1, 0.2, 0.0)])
    y = build_admittance(model_from_dict(case), include_slack=True).toarray()
    s = 1.0 / complex(0.1, 0.2)
    np.testing.assert_allclose(y, [[s, -s], [-s, s]], rtol=1e-15)


def test_single_line_with_shunt():
    case = _case([(0, 1, 0.1, 0.2, 0.3)])
    y = build_admittance(model_from_dict(case), include_slack=True).toarray()
    s = 1.0 / complex(0.1, 0.2)
    assert y[0, 0] == pytest.approx(s + 0.15j, rel=1e-15)
    assert y[1, 1] == pytest.approx(s + 0.15j, rel=1e-15)
    assert y[0, 1] == pytest.approx(-s, rel=1e-15)


def test_ring_matches_hand_assembly():
    case = _case(
        [(0, 1, 0.01, 0.05, 0.02), (1, 2, 0.02, 0.07, 0.0), (2, 0, 0.03, 0.11, 0.04)],
        buses=(1, 2),
    )
    dense, _ = dense_admittance(case)
    y = build_admittance(model_from_dict(case), include_slack=True).toarray()
    np.testing.assert_allclose(y, dense, rtol=1e-14, atol=1e-14)
    reduced = build_admittance(model_from_dict(case)).toarray()
    np.testing.assert_allclose(reduced, dense[:2, :2], rtol=1e-14)


def _dense_eq5_6(y, i):
    n = y.shape[0]
    e = np.zeros((n, n))
    e[i, i] = 1.0
    yi = e @ y
    Y = 0.5 * np.block([
        [np.real(yi + yi.T), np.imag(yi.T - yi)],
        [np.imag(yi - yi.T), np.real(yi + yi.T)],
    ])
    Yb = -0.5 * np.block([
        [np.imag(yi + yi.T), np.real(yi - yi.T)],
        [np.real(yi.T - yi), np.imag(yi + yi.T)],
    ])
    return Y, Yb


def test_constant_matrices_two_bus_dense_oracle():
    s = 1 - 2j
    y = np.array([[s, -s], [-s, s]])
    for i in range(2):
        M, Y, Yb = build_constant_matrices(sp.csr_matrix(y), i)
        Yd, Ybd = _dense_eq5_6(y, i)
        np.testing.assert_allclose(Y.toarray(), Yd, atol=1e-15)
        np.testing.assert_allclose(Yb.toarray(), Ybd, atol=1e-15)
        assert abs(Yb - Yb.T).max() == 0


def test_M_structure(five_bus):
    y = build_admittance(five_bus)
    n = y.shape[0]
    for i in range(n):
        M = build_constant_matrices(y, i)[0].toarray()
        expected = np.zeros((2 * n, 2 * n))
        expected[i, i] = expected[i + n, i + n] = 1.0
        assert np.array_equal(M, expected)
        assert np.trace(M) == 2


def test_real_admittance_blocks_vanish():
    y = sp.csr_matrix(np.array([[3.0, -1.0, -2.0], [-1.0, 1.0, 0.0], [-2.0, 0.0, 2.0]]))
    for i in range(3):
        Yb = build_constant_matrices(y, i)[2].toarray()
        assert np.all(Yb[:3, :3] == 0) and np.all(Yb[3:, 3:] == 0)


def test_constant_matrices_index_error(two_bus):
    with pytest.raises(IndexError):
        build_constant_matrices(build_admittance(two_bus), 2)


def test_pattern_and_symmetry(five_bus):
    y = build_admittance(five_bus)
    n = y.shape[0]
    nbrs = five_bus.neighbors()
    for i in range(n):
        allowed = {i} | {j for j in nbrs[i] if j < n}
        allowed = allowed | {j + n for j in allowed}
        for A in build_constant_matrices(y, i)[1:]:
            assert abs(A - A.T).max() == 0
            r, c = A.nonzero()
            assert set(r) <= allowed and set(c) <= allowed


def test_quad_form_trace_M(five_bus):
    mats = build_matrices(five_bus, "folded")
    rng = np.random.default_rng(0)
    x = rng.normal(size=2 * five_bus.N)
    for i, M in enumerate(mats.M):
        assert quad_form_trace(M, x) == pytest.approx(x[i] ** 2 + x[i + five_bus.N] ** 2, rel=1e-15)
    assert quad_form_trace(mats.Y[0], np.zeros(2 * five_bus.N)) == 0.0


def test_quad_form_dimension_mismatch(two_bus):
    mats = build_matrices(two_bus)
    with pytest.raises(ValueError):
        quad_form_trace(mats.Y[0], np.zeros(3))


def test_sum_of_M_is_identity(five_bus):
    mats = build_matrices(five_bus, "folded")
    total = sum(M.toarray() for M in mats.M)
    assert np.array_equal(total, np.eye(2 * five_bus.N))


def test_sparse_vs_dense_forms_100_vectors(five_bus):
    rng = np.random.default_rng(1)
    for mode in ("embedded", "folded"):
        mats = build_matrices(five_bus, mode)
        dense = [A.toarray() for A in mats.Y + mats.Ybar + mats.M]
        for _ in range(100):
            x = rng.normal(size=2 * mats.n)
            for A, D in zip(mats.Y + mats.Ybar + mats.M, dense):
                ref = x @ D @ x
                assert abs(quad_form_trace(A, x) - ref) <= 1e-12 * max(1.0, abs(ref))


@pytest.mark.parametrize("mode", ["embedded", "folded"])
def test_forms_equal_complex_power_flow(five_bus_case, five_bus, mode):
    Yfull, _ = dense_admittance(five_bus_case)
    mats = build_matrices(five_bus, mode)
    N, n = five_bus.N, mats.n
    v0 = five_bus.slack_voltage
    rng = np.random.default_rng(2)
    for _ in range(50):
        V = np.empty(N + 1, dtype=complex)
        V[:N] = rng.normal(1.0, 0.1, N) + 1j * rng.normal(0.0, 0.1, N)
        V[N] = v0
        S = (V * np.conj(Yfull @ V))[:N]
        x = np.zeros(2 * n)
        x[:N], x[n:n + N] = V[:N].real, V[:N].imag
        if n == N + 1:
            x[N], x[2 * N + 1] = v0.real, v0.imag
        F = mats.forms(x)
        np.testing.assert_allclose(F[:N], S.real, atol=1e-10)
        np.testing.assert_allclose(F[N:2 * N], S.imag, atol=1e-10)
        np.testing.assert_allclose(F[2 * N:], np.abs(V[:N]) ** 2, atol=1e-12)


def test_p_is_max_row_nonzeros(five_bus):
    y = build_admittance(five_bus).toarray()
    assert build_matrices(five_bus).p == max(np.count_nonzero(row) for row in y)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=40), st.integers(min_value=0, max_value=2**31))
def test_synth_case_is_valid(n_bus, seed):
    n_gen = n_bus // 3
    model = model_from_dict(synth_case(n_bus, n_gen, seed=seed))
    assert model.N == n_bus and model.NG == n_gen
    assert validate_network(model) == []


def test_slack_may_not_be_listed():
    case = _case([(0, 1, 0.01, 0.1, 0.0)], buses=(0, 1))
    with pytest.raises(ValidationError):
        model_from_dict(case)


def test_duplicate_generator_bus(two_bus):
    g = two_bus.generators[0]
    broken = dataclasses.replace(two_bus, generators=(g, Generator(g.bus, 1.0, 1.0, 1.0, 1.0)))
    assert "at most one generator per bus" in validate_network(broken)


def test_input_case_untouched(two_bus_case):
    before = copy.deepcopy(two_bus_case)
    model_from_dict(two_bus_case)
    assert two_bus_case == before
