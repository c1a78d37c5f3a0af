# views/leaderboard.py

import pandas as pd
import streamlit as st

from helpers import get_all_runs, load_run_summary

RANK_COLUMNS = ["run", "mode", "recall", "distance_computations", "discarded_ratio", "comm_bytes"]


def rank_runs(summaries):
    """Rank by recall (desc) then distance computations (asc); runs without
    metrics are left out, runs without recall sort last."""
    rows = []
    for summary in summaries:
        metrics = summary.get("metrics") or {}
        totals = metrics.get("totals")
        if not totals:
            continue
        rows.append({
            "run": summary["name"],
            "mode": metrics.get("mode", "?"),
            "recall": totals.get("recall"),
            "distance_computations": totals.get("distance_computations"),
            "discarded_ratio": totals.get("discarded_ratio"),
            "comm_bytes": totals.get("comm_bytes"),
        })
    frame = pd.DataFrame(rows, columns=RANK_COLUMNS)
    if frame.empty:
        return frame
    frame["recall"] = frame["recall"].astype(float)
    frame = frame.sort_values(
        ["recall", "distance_computations", "run"], ascending=[False, True, True], na_position="last"
    ).reset_index(drop=True)
    frame.index = frame.index + 1
    frame.index.name = "rank"
    return frame


def show_leaderboard(current_run=None):
    st.title("🏆 Run Comparison")

    ranked = rank_runs([load_run_summary(run) for run in get_all_runs()])
    if ranked.empty:
        st.info("No runs with metrics yet. Once a search run finishes, it will show up here.")
        return

    # =========================
    # Top runs
    # =========================
    st.subheader("🥇 Best Recall")
    icons = ["🥇", "🥈", "🥉"]
    for rank, row in ranked.head(3).iterrows():
        recall = "n/a" if pd.isna(row["recall"]) else f"{row['recall']:.4f}"
        label = f"**{row['run']}** — recall {recall}, {int(row['distance_computations']):,} distance computations"
        if current_run and row["run"] == current_run:
            label = f"⭐ {label}"
        st.markdown(f"{icons[rank - 1]} {label}")

    # =========================
    # Full table
    # =========================
    st.markdown("---")
    st.subheader("🔍 All Runs")
    st.dataframe(ranked, use_container_width=True)
