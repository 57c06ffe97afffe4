"""Optional PNG figures for convergence tables (requires matplotlib)."""
from pathlib import Path

from .errors import NORMS

LABELS = dict(e_L2_u="||u - u_h||_0", e_L2_curl="||curl(u - u_h)||_0",
              e_energy="energy", e_h1h_curl="discrete H1 of curl", e_grad_p="||grad(p - p_h)||_0")


def plot_convergence(table, out_dir, name):
    """Log-log error-vs-h plot with reference slopes; returns the written paths."""
    try:
        import matplotlib
    except ImportError as exc:
        raise RuntimeError("--figures needs matplotlib (pip install 'artifact[plot]')") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h = [r.h for r in table.rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for key in NORMS:
        ax.loglog(h, [getattr(r, key) for r in table.rows], "o-", label=LABELS[key])
    for slope in sorted(set(table.expected.values())):
        ref = [h[-1] ** slope * (x / h[-1]) ** slope for x in h]
        scale = getattr(table.rows[-1], "e_L2_u") / ref[-1]
        ax.loglog(h, [scale * v for v in ref], ":", color="gray", linewidth=0.8)
        ax.annotate(f"h^{slope}", (h[0], scale * ref[0]), fontsize=8, color="gray")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    path = out_dir / f"convergence_{name}.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return [path]
