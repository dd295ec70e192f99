"""Figure rendering for run reports. Headless: writes files, never shows."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def save_bounds_figure(trace, out_path, p_reference=None):
    """Step plot of the certified bracket against evaluation count.

    trace is a sequence of rows with n / lower / upper attributes, one row
    per change of the bounds. The band between the curves is the certified
    gap; p_reference, when given, is drawn as a dashed line.
    """
    ns = [row.n for row in trace]
    lows = [row.lower for row in trace]
    highs = [row.upper for row in trace]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.step(ns, lows, where="post", label="certified lower", color="tab:blue")
    ax.step(ns, highs, where="post", label="certified upper", color="tab:red")
    ax.fill_between(ns, lows, highs, step="post", alpha=0.15, color="tab:gray")
    if p_reference is not None:
        ax.axhline(p_reference, linestyle="--", linewidth=1.0, color="black",
                   label="reference p")
    ax.set_xlabel("evaluations of g")
    ax.set_ylabel("probability")
    ax.set_title("certified bounds vs evaluation budget")
    if all(v > 0 for v in lows[1:]) and len(ns) > 2:
        ax.set_yscale("log")
        # the initial lower bound of 0 cannot sit on a log axis
        ax.set_ylim(bottom=min(v for v in lows if v > 0) / 4)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def save_estimate_figure(report, out_path, bounds=None):
    """Point estimates with their confidence whiskers.

    Shows p_lower_hat and p_upper_hat with the joint interval [m, M] as
    error bars, and optionally the deterministic bounds for comparison.
    """
    lo_hat = report.lower.estimate
    hi_hat = report.upper.estimate
    m, big_m = report.ci
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.errorbar(
        [0], [lo_hat], yerr=[[max(lo_hat - m, 0.0)], [0.0]],
        fmt="o", capsize=6, color="tab:blue", label="lower estimate",
    )
    ax.errorbar(
        [1], [hi_hat], yerr=[[0.0], [max(big_m - hi_hat, 0.0)]],
        fmt="o", capsize=6, color="tab:red", label="upper estimate",
    )
    if bounds is not None:
        ax.axhline(bounds.lower, linestyle=":", color="tab:blue", linewidth=1.0)
        ax.axhline(bounds.upper, linestyle=":", color="tab:red", linewidth=1.0)
    ax.set_xticks([0, 1])
    ax.set_xticklabels(["p_n^-", "p_n^+"])
    ax.set_xlim(-0.6, 1.6)
    ax.set_ylabel("probability")
    ax.set_title(f"splitting estimates, N={report.n}, alpha={report.alpha:g}")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
