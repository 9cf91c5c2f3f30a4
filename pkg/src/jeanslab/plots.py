"""Figure rendering for the CLI report paths (PNG files next to the CSVs).

Figures are diagnostic companions to the delimited output; nothing in the
verification suite depends on them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .params import DerivedConstants, OdeData, curve_F, curve_L
from .reference import Trajectory

__all__ = ["fig_k_scan", "fig_reference", "fig_aux", "fig_pde_norms", "fig_fuchsian"]


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def fig_k_scan(path, ks, lams) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    lams = np.asarray(lams)
    for i, label in enumerate(["lambda1", "lambda2", "lambda3"]):
        ax.plot(ks, lams[:, i], label=label)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("k")
    ax.set_ylabel("limit eigenvalues")
    ax.legend(frameon=False)
    _save(fig, path)


def fig_reference(path, traj: Trajectory, dc: DerivedConstants, d: OdeData) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    t = traj.t
    ax.semilogy(t, traj.y, label="1+f")
    lower = np.exp(dc.cC * t ** ((dc.abar + dc.triangle) / 2.0) + dc.cD / t)
    ax.semilogy(t, lower, "--", label="exp lower bound")
    mask = t < dc.t_star
    if mask.any():
        ax.semilogy(t[mask], 1.0 / curve_F(t[mask], dc), ":", label="reciprocal upper bound")
    L = curve_L(t, dc, d)
    ok = L > 0
    ax.semilogy(t[ok], L[ok] ** (1.0 / dc.cbar), "-.", label="power-law bound")
    ax.axvline(dc.t_star, color="gray", lw=0.7)
    ax.set_xlabel("t")
    ax.set_ylabel("1 + f")
    ax.legend(frameon=False, fontsize=8)
    _save(fig, path)


def fig_aux(path, traj: Trajectory) -> None:
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
    axes[0].semilogy(traj.t, traj.g)
    axes[0].set_ylabel("g")
    axes[1].plot(traj.t, traj.chi)
    axes[1].axhline(traj.chi_limit, color="gray", lw=0.7)
    axes[1].set_ylabel("chi")
    axes[2].semilogy(traj.t, traj.xi)
    axes[2].set_ylabel("xi")
    for ax in axes:
        ax.set_xlabel("t")
    _save(fig, path)


def fig_pde_norms(path, records) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    t = [r.t for r in records]
    ax.semilogy(t, [max(r.hs_ratio_rho, 1e-300) for r in records], label="Hs(rho/f - 1)")
    ax.semilogy(t, [max(r.hs_ratio_rho_t, 1e-300) for r in records], label="Hs(rho_t/f0 - 1)")
    ax.semilogy(t, [max(r.sup_ratio_rho, 1e-300) for r in records], label="sup(rho/f - 1)")
    ax.set_xlabel("t")
    ax.set_ylabel("relative deviation norms")
    ax.legend(frameon=False, fontsize=8)
    _save(fig, path)


def fig_fuchsian(path, energy_records, condv_samples) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    ntau = [-r.tau for r in energy_records]
    axes[0].loglog(ntau, [max(r.hs_norm, 1e-300) for r in energy_records], label="Hs norm")
    bounds = [r.bound for r in energy_records]
    if all(np.isfinite(b) for b in bounds):
        axes[0].loglog(ntau, [max(b, 1e-300) for b in bounds], "--", label="energy envelope")
    axes[0].set_xlabel("-tau")
    axes[0].invert_xaxis()
    axes[0].legend(frameon=False, fontsize=8)
    if condv_samples:
        axes[1].semilogx([-s.tau for s in condv_samples], [s.margin for s in condv_samples])
        axes[1].axhline(0.0, color="k", lw=0.6)
        axes[1].set_xlabel("-tau")
        axes[1].set_ylabel("eigenvalue-band margin")
        axes[1].invert_xaxis()
    _save(fig, path)
