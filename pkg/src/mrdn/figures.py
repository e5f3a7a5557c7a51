"""Matplotlib renderings written next to each delimited report file."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_loss_figure(history: dict[str, list[float]], path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    iters = range(len(history["loss_total"]))
    ax.plot(iters, history["loss_total"], label="total", lw=1.2)
    for key, label in (("loss_l1", "l1"), ("loss_feat", "feature"),
                       ("loss_adv", "adversarial"), ("d_loss", "discriminator")):
        vals = history.get(key)
        if vals and any(v != 0.0 for v in vals):
            ax.plot(iters, vals, label=label, lw=0.8, alpha=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(loc="upper right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_eval_figure(reports, mean_row, path) -> None:
    ids = [r.image_id for r in reports]
    x = range(len(ids))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(max(7, 0.5 * len(ids) + 4), 4))
    ax1.bar(x, [r.psnr_db for r in reports], color="#4878cf")
    ax1.axhline(mean_row.psnr_db, color="k", ls="--", lw=1, label="mean")
    ax1.set_xticks(list(x), ids, rotation=60, ha="right", fontsize=7)
    ax1.set_ylabel("PSNR (dB)")
    ax1.legend(fontsize=8)
    ax2.bar(x, [r.rmse for r in reports], color="#d65f5f")
    ax2.axhline(mean_row.rmse, color="k", ls="--", lw=1, label="mean")
    for bound in (11.5, 12.5):  # track boundaries
        ax2.axhline(bound, color="gray", ls=":", lw=0.8)
    ax2.set_xticks(list(x), ids, rotation=60, ha="right", fontsize=7)
    ax2.set_ylabel("RMSE")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_curve_figure(rows, path) -> None:
    """rows: (alpha, rmse, P_mean-or-None) tuples."""
    alphas = [r[0] for r in rows]
    rmses = [r[1] for r in rows]
    ps = [r[2] for r in rows]
    have_p = all(p is not None for p in ps) and rows
    fig, axes = plt.subplots(1, 2 if have_p else 1, figsize=(9 if have_p else 5, 4))
    ax1 = axes[0] if have_p else axes
    ax1.plot(alphas, rmses, "o-", color="#4878cf")
    ax1.set_xlabel("blend alpha")
    ax1.set_ylabel("mean RMSE")
    ax1.grid(alpha=0.3)
    if have_p:
        axes[1].plot(rmses, ps, "o-", color="#d65f5f")
        axes[1].set_xlabel("mean RMSE")
        axes[1].set_ylabel("mean perceptual score")
        axes[1].grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
