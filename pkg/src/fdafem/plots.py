"""Optional figures rendered from the written CSV files (requires matplotlib)."""

from pathlib import Path

from .report import read_csv


def plot_run(out_dir, experiment):
    """Render PNG figures next to the CSV of a finished run; returns their paths."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise RuntimeError("plots need matplotlib (pip install fdafem[plots])") from exc
    out = Path(out_dir)
    if experiment == "conditioning":
        rows = read_csv(out / "conditioning.csv")
        fig, ax = plt.subplots(figsize=(5, 4))
        ns = [r["n_sigma"] for r in rows]
        ax.loglog(ns, [r["kappa_S"] for r in rows], "o-", label="kappa(S)")
        ax.loglog(ns, [r["kappa_MinvS"] for r in rows], "s-", label="kappa(M^-1 S)")
        ax.set_xlabel("#sigma")
        ax.legend()
        path = out / "conditioning.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        return (path,)
    rows = read_csv(out / "uzawa.csv")
    K = max(r["j"] for r in rows)
    last = [r for r in rows if r["j"] == K]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 4))
    nt = [r["n_tri"] for r in last]
    ns = [r["n_sigma"] for r in last]
    for key in ("e_u", "E_inner"):
        a1.loglog(nt, [r[key] for r in last], "o-", label=key)
    a1.set_xlabel("#tau")
    for key in ("e_lambda", "E_outer", "E_Uzawa"):
        a2.loglog(ns, [r[key] for r in last], "o-", label=key)
    a2.set_xlabel("#sigma")
    for a in (a1, a2):
        a.legend()
    path = out / "errors.png"
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return (path,)
