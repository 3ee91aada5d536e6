"""Role/filler binding algebra: sum-of-outer-products sequence encodings.

A sequence of content ("filler") vectors is stored as the running sum of
outer products with positional ("role") vectors; retrieval multiplies the
store by a role. With orthonormal roles retrieval is exact; with random
unit roles it degrades by the cross-talk of the non-orthogonal roles,
which interference_report quantifies. Pure numpy, no autodiff: this is an
algebra lab, the learned counterparts live in the attention module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass
class RoleBasis:
    """Ordered role vectors p_1..p_T, shape (T, role_dim), one per row."""

    roles: np.ndarray
    orthonormal: bool

    @property
    def count(self):
        return self.roles.shape[0]

    @property
    def dim(self):
        return self.roles.shape[1]

    def gram(self):
        return self.roles @ self.roles.T


def make_role_basis(count, role_dim, mode, seed):
    """Build positional role vectors.

    mode "orthonormal": Gram-Schmidt (with one re-orthogonalization pass)
    over seeded Gaussian vectors; requires role_dim >= count.
    mode "random": unit-normalized Gaussian vectors, any count.
    """
    if count < 1 or role_dim < 1:
        raise ContractError(f"role basis needs positive sizes, got T={count}, dim={role_dim}")
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(count, role_dim))
    if mode == "orthonormal":
        if role_dim < count:
            raise ContractError(
                f"orthonormal basis impossible: role_dim {role_dim} < T {count}")
        basis = np.zeros((count, role_dim))
        for i in range(count):
            v = raw[i]
            for _ in range(2):  # second pass keeps off-diagonals near 1e-16
                for j in range(i):
                    v = v - (basis[j] @ v) * basis[j]
            norm = np.linalg.norm(v)
            if norm < 1e-12:
                raise ContractError("degenerate random draw during orthonormalization")
            basis[i] = v / norm
        return RoleBasis(roles=basis, orthonormal=True)
    if mode == "random":
        basis = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        return RoleBasis(roles=basis, orthonormal=False)
    raise ContractError(f"unknown role basis mode '{mode}'")


@dataclass
class BoundRepresentation:
    """Running sum of filler (x) role outer products, shape (filler_dim, role_dim)."""

    store: np.ndarray
    steps: int = 0

    @classmethod
    def empty(cls, filler_dim, role_dim):
        # the additive identity: binding starts from the zero matrix
        return cls(store=np.zeros((filler_dim, role_dim)), steps=0)


def bind(rep, filler, role):
    """Add one filler/role pair: new store = store + filler role^T."""
    filler = np.asarray(filler, dtype=float)
    role = np.asarray(role, dtype=float)
    if filler.shape != (rep.store.shape[0],):
        raise ContractError(
            f"filler dim {filler.shape} does not match store {rep.store.shape}")
    if role.shape != (rep.store.shape[1],):
        raise ContractError(
            f"role dim {role.shape} does not match store {rep.store.shape}")
    return BoundRepresentation(store=rep.store + np.outer(filler, role),
                               steps=rep.steps + 1)


def unbind(rep, role):
    """Retrieve the filler estimate for a role: store @ role."""
    role = np.asarray(role, dtype=float)
    if role.shape != (rep.store.shape[1],):
        raise ContractError(
            f"role dim {role.shape} does not match store {rep.store.shape}")
    return rep.store @ role


def retrieval_errors(basis, fillers):
    """L2 error of unbinding each filler after binding the whole sequence."""
    fillers = np.asarray(fillers, dtype=float)
    rep = BoundRepresentation.empty(fillers.shape[1], basis.dim)
    for c, p in zip(fillers, basis.roles):
        rep = bind(rep, c, p)
    return np.array([np.linalg.norm(unbind(rep, p) - c)
                     for c, p in zip(fillers, basis.roles)])


def interference_report(count, role_dims, trials, seed, filler_dim=16):
    """Mean/max retrieval error per (mode, role_dim) over seeded trials.

    filler_dim stays fixed while role_dim varies so the error trend
    isolates role cross-talk from filler magnitude. Returns a list of
    dicts with keys mode, T, dim, mean_err, max_err.
    """
    if trials < 1:
        raise ContractError("interference_report needs trials >= 1")
    if isinstance(role_dims, int):
        role_dims = [role_dims]
    rows = []
    for mode in ("orthonormal", "random"):
        for dim in role_dims:
            if mode == "orthonormal" and dim < count:
                continue
            errs = []
            for trial in range(trials):
                trial_seed = seed + 1000003 * trial
                basis = make_role_basis(count, dim, mode, trial_seed)
                rng = np.random.default_rng(trial_seed + 1)
                fillers = rng.normal(size=(count, filler_dim))
                errs.append(retrieval_errors(basis, fillers))
            errs = np.concatenate(errs)
            rows.append({
                "mode": mode,
                "T": count,
                "dim": dim,
                "mean_err": float(errs.mean()),
                "max_err": float(errs.max()),
            })
    return rows


def format_report(rows):
    lines = ["mode T dim mean_err max_err"]
    for r in rows:
        lines.append(f"{r['mode']} {r['T']} {r['dim']} {r['mean_err']:.6e} {r['max_err']:.6e}")
    return "\n".join(lines)
