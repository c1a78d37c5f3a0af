import sys, os
sys.path.append(os.path.dirname(__file__))

import streamlit as st
from utils.run_picker import pick_run
from views.run_summary import show_run_summary
from views.stage_breakdown import show_stage_breakdown
from views.sweep_chart import show_sweep_chart
from views.leaderboard import show_leaderboard

# --- Streamlit Page Setup ---
st.set_page_config(page_title="PathWeave Runs", page_icon="🧭", layout="wide")

# --- Run Selection ---
run = pick_run()

if not run:
    st.stop()

st.session_state["run"] = run

# --- Sidebar Navigation ---
st.sidebar.title("🧭 PathWeave")
view_mode = st.sidebar.radio(
    "Choose View",
    ["Run Summary", "Stage Breakdown", "Recall Sweep", "Run Comparison"]
)

# --- Main Views ---
if view_mode == "Run Summary":
    show_run_summary(run)

elif view_mode == "Stage Breakdown":
    show_stage_breakdown(run)

elif view_mode == "Recall Sweep":
    show_sweep_chart(run)

elif view_mode == "Run Comparison":
    show_leaderboard(run)

else:
    st.error("Unknown view selected. Please reload the page.")
