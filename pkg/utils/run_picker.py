import streamlit as st
from helpers import get_all_runs, runs_dir


def pick_run():
    """Sidebar run selection. Returns the run name, or None when there is nothing to show."""
    st.sidebar.title("📂 Runs")
    st.sidebar.caption(f"Reading from `{runs_dir()}` (set PW_RUNS to change)")

    runs = get_all_runs()
    if not runs:
        st.warning("No runs found yet. Write one with `python cli.py search --out runs/<name>`.")
        return None

    choice = st.sidebar.selectbox("Select Run:", runs, index=0)
    return choice.strip() if choice else None
