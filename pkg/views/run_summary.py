import pandas as pd
import streamlit as st

from helpers import load_run_summary

# (label, key in metrics["totals"], format)
TOTAL_FIELDS = [
    ("Recall@k", "recall", "{:.4f}"),
    ("Distance computations", "distance_computations", "{:,}"),
    ("Total visits", "total_visits", "{:,}"),
    ("Discarded visits", "discarded_visits", "{:,}"),
    ("Retained visits", "retained_visits", "{:,}"),
    ("Discarded ratio", "discarded_ratio", "{:.2%}"),
    ("Iterations per query", "iterations_mean", "{:.2f}"),
    ("Comm bytes", "comm_bytes", "{:,}"),
]


def totals_table(metrics):
    """Display rows for a run's totals; missing or null values show as '-'."""
    totals = metrics.get("totals", {})
    rows = []
    for label, key, fmt in TOTAL_FIELDS:
        value = totals.get(key)
        rows.append({"metric": label, "value": "-" if value is None else fmt.format(value)})
    return pd.DataFrame(rows, columns=["metric", "value"])


def config_table(manifest):
    config = manifest.get("config") or {}
    return pd.DataFrame(
        [{"setting": k, "value": "-" if v is None else str(v)} for k, v in sorted(config.items())],
        columns=["setting", "value"],
    )


def show_run_summary(run):
    st.title(f"🔎 Run Summary — {run}")
    summary = load_run_summary(run)
    manifest, metrics = summary["manifest"], summary["metrics"]

    if not manifest and not metrics:
        st.warning("This run has neither a manifest nor a metrics file.")
        return

    if manifest:
        st.caption(
            f"{manifest.get('command', '?')} · seed {manifest.get('seed')} · "
            f"index {manifest.get('index_checksum') or 'n/a'} · {manifest.get('created', '')}"
        )

    # =========================
    # Totals
    # =========================
    if metrics:
        st.markdown(f"### 📊 Totals ({metrics.get('mode', '?')})")
        recall = metrics.get("totals", {}).get("recall")
        if recall is None:
            st.info("No ground truth was given for this run, so recall is unknown.")
        st.table(totals_table(metrics))
        wall = metrics.get("timing", {}).get("wall_time_s")
        if wall is not None:
            st.caption(f"Wall time: {wall:.3f}s")

        ratio = metrics.get("totals", {}).get("discarded_ratio")
        if ratio is not None:
            st.progress(min(max(float(ratio), 0.0), 1.0))
            st.caption("Share of scored nodes that never made it into the final queue.")
    else:
        st.info("No metrics file for this run (a bench run keeps its results in sweep.csv).")

    # =========================
    # Config echo
    # =========================
    st.markdown("### ⚙️ Configuration")
    if manifest.get("config"):
        with st.expander("Show settings"):
            st.table(config_table(manifest))
    else:
        st.info("Manifest has no config echo.")
