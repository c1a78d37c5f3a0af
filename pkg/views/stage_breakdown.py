import pandas as pd
import streamlit as st

from helpers import load_run_data, METRICS

STAGE_COLUMNS = ["iterations_mean", "ghost_iterations_mean", "distance_computations", "inserted_counts", "comm_bytes"]


def stage_table(metrics):
    """One row per pipeline stage from the metrics file's per-stage lists."""
    stages = metrics.get("stages") or {}
    n = max((len(stages.get(c) or []) for c in STAGE_COLUMNS), default=0)
    frame = pd.DataFrame({c: pd.Series(stages.get(c) or [], dtype=float) for c in STAGE_COLUMNS}).reindex(range(n))
    frame.index.name = "stage"
    return frame


def show_stage_breakdown(run):
    """Per-stage costs of one run."""
    st.title(f"🧱 Stage Breakdown — {run}")

    metrics = load_run_data(run, METRICS)
    table = stage_table(metrics)
    if table.empty:
        st.info("This run has no per-stage data.")
        return

    st.dataframe(table, use_container_width=True)

    for column, label in [("iterations_mean", "Mean iterations"), ("distance_computations", "Distance computations")]:
        st.markdown(f"### {label} per stage")
        st.bar_chart(table[column])

    links = metrics.get("links") or []
    if any(links):
        st.markdown("### 🔗 Bytes forwarded per ring link")
        st.bar_chart(pd.Series(links, name="bytes"))
    else:
        st.caption("No inter-shard traffic in this run.")
