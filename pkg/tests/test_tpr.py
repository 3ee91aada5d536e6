import numpy as np
import pytest

from crosscap.errors import ContractError
from crosscap.tpr import (
    BoundRepresentation,
    bind,
    format_report,
    interference_report,
    make_role_basis,
    retrieval_errors,
    unbind,
)


def test_orthonormal_basis_gram_is_identity():
    basis = make_role_basis(3, 3, "orthonormal", seed=0)
    gram = basis.gram()
    assert np.abs(gram - np.eye(3)).max() < 1e-10


def test_orthonormal_requires_enough_dimensions():
    with pytest.raises(ContractError):
        make_role_basis(2, 1, "orthonormal", seed=0)


def test_random_basis_gram_matches_dot_products():
    basis = make_role_basis(8, 4, "random", seed=1)
    gram = basis.gram()
    for i in range(8):
        for j in range(8):
            assert gram[i, j] == pytest.approx(float(basis.roles[i] @ basis.roles[j]))
    off = gram - np.diag(np.diag(gram))
    assert np.abs(off).max() > 0.0  # non-orthogonal by construction


def test_bind_zero_filler_leaves_store_unchanged():
    rep = BoundRepresentation.empty(2, 2)
    out = bind(rep, [0.0, 0.0], [1.0, 0.0])
    assert np.array_equal(out.store, np.zeros((2, 2)))
    assert out.steps == 1


def test_single_outer_product():
    rep = bind(BoundRepresentation.empty(2, 2), [1.0, 0.0], [0.0, 1.0])
    assert np.array_equal(rep.store, [[0.0, 1.0], [0.0, 0.0]])


def test_sequential_binds_equal_batch_sum():
    rng = np.random.default_rng(2)
    fillers = rng.normal(size=(5, 3))
    roles = rng.normal(size=(5, 4))
    rep = BoundRepresentation.empty(3, 4)
    for c, p in zip(fillers, roles):
        rep = bind(rep, c, p)
    batch = sum(np.outer(c, p) for c, p in zip(fillers, roles))
    assert np.abs(rep.store - batch).max() < 1e-12
    assert rep.steps == 5


def test_bind_order_does_not_matter():
    rng = np.random.default_rng(3)
    c1, c2 = rng.normal(size=(2, 3))
    p1, p2 = rng.normal(size=(2, 4))
    r0 = BoundRepresentation.empty(3, 4)
    ab = bind(bind(r0, c1, p1), c2, p2).store
    ba = bind(bind(r0, c2, p2), c1, p1).store
    assert np.abs(ab - ba).max() < 1e-12


def test_unbind_exact_with_orthonormal_roles():
    basis = make_role_basis(4, 6, "orthonormal", seed=4)
    rng = np.random.default_rng(5)
    fillers = rng.normal(size=(4, 3))
    rep = BoundRepresentation.empty(3, 6)
    for c, p in zip(fillers, basis.roles):
        rep = bind(rep, c, p)
    for c, p in zip(fillers, basis.roles):
        assert np.abs(unbind(rep, p) - c).max() < 1e-10


def test_unbind_orthogonal_role_gives_zero():
    basis = make_role_basis(2, 4, "orthonormal", seed=6)
    rep = bind(BoundRepresentation.empty(3, 4), [1.0, 2.0, 3.0], basis.roles[0])
    assert np.abs(unbind(rep, basis.roles[1])).max() < 1e-10


def test_interference_matches_brute_force_crosstalk():
    # retrieval error for role i must equal || sum_{j != i} c_j (p_j . p_i) ||
    basis = make_role_basis(6, 5, "random", seed=7)
    rng = np.random.default_rng(8)
    fillers = rng.normal(size=(6, 4))
    errs = retrieval_errors(basis, fillers)
    for i in range(6):
        crosstalk = np.zeros(4)
        for j in range(6):
            if j != i:
                crosstalk += fillers[j] * float(basis.roles[j] @ basis.roles[i])
        # p_i . p_i = 1 for unit roles, so the self term cancels exactly
        drift = fillers[i] * (float(basis.roles[i] @ basis.roles[i]) - 1.0)
        assert abs(errs[i] - np.linalg.norm(crosstalk + drift)) < 1e-10


def test_report_orthonormal_error_tiny():
    rows = interference_report(4, [4, 8], trials=5, seed=9)
    for r in rows:
        if r["mode"] == "orthonormal":
            assert r["max_err"] < 1e-9


def test_report_single_role_random_is_exact():
    rows = interference_report(1, [3], trials=5, seed=10)
    for r in rows:
        assert r["max_err"] < 1e-9


def test_report_error_decreases_with_role_dim():
    rows = interference_report(8, [8, 64], trials=100, seed=11)
    random_rows = {r["dim"]: r for r in rows if r["mode"] == "random"}
    assert random_rows[64]["mean_err"] < random_rows[8]["mean_err"]


def test_report_requires_trials():
    with pytest.raises(ContractError):
        interference_report(2, [4], trials=0, seed=0)


def test_format_report_columns():
    rows = interference_report(2, [4], trials=2, seed=12)
    text = format_report(rows)
    header, *body = text.splitlines()
    assert header.split() == ["mode", "T", "dim", "mean_err", "max_err"]
    assert len(body) == len(rows)
