import os

import streamlit as st

from helpers import sweep_path
from metrics import budget_for_recall, plot_sweep, read_sweep_csv


def load_sweep(run):
    """The run's sweep frame, or None if it has no sweep file."""
    path = sweep_path(run)
    if not os.path.exists(path):
        return None
    return read_sweep_csv(path)


def show_sweep_chart(run):
    st.title(f"📈 Recall Sweep — {run}")

    try:
        frame = load_sweep(run)
    except ValueError as exc:
        st.warning(str(exc))
        return
    if frame is None or frame.empty:
        st.info("No sweep for this run. Produce one with `python cli.py bench --out runs/<name>`.")
        return

    st.pyplot(plot_sweep(frame, title=run))

    target = st.slider("Target recall", min_value=0.5, max_value=1.0, value=0.9, step=0.01)
    budget = budget_for_recall(frame, target)
    if budget is None:
        st.info(f"No budget in this sweep reaches recall {target:.2f}.")
    else:
        st.success(f"🎯 Recall {target:.2f} first reached at max_iter = **{budget}**")

    st.dataframe(frame, use_container_width=True)
