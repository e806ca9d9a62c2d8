"""
Streamlit dashboard for evaluation results.

Run with ``streamlit run src/ui/dashboard.py``.
"""

import os
import sys
from typing import Dict

import streamlit as st
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Add the src directory to the path
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from backend import file_store
from backend.errors import DialMeterError
from backend.metrics import MetricsReport, ReadingPair, pairs_frame
from ui.charts import error_kind_figure, magnitude_figure, position_error_figure, tolerance_figure


def initialize_session_state():
    """Initialize session state variables."""
    if 'report' not in st.session_state:
        st.session_state.report = None
    if 'pairs' not in st.session_state:
        st.session_state.pairs = []
    if 'load_error' not in st.session_state:
        st.session_state.load_error = None


def load_files(report_path: str, pred_path: str, gt_path: str):
    """Load the report and, when both are given, the pair files behind it."""
    try:
        st.session_state.report = file_store.read_report(report_path)
        pairs = []
        if pred_path and gt_path:
            predictions = {p.image_id: p for p in file_store.parse_predictions(pred_path)}
            for gt in file_store.parse_ground_truth(gt_path):
                prediction = predictions.get(gt.image_id)
                if prediction is not None and prediction.digits:
                    pairs.append(ReadingPair(prediction.digits, gt.reading))
        st.session_state.pairs = pairs
        st.session_state.load_error = None
    except DialMeterError as e:
        st.session_state.load_error = f"{e.kind}: {e}"


def display_headline(report: MetricsReport):
    """Display the headline metrics."""
    st.markdown("### 📊 Recognition")

    col1, col2, col3, col4 = st.columns(4)

    with col1:
        st.metric("Meters", report.n_meters)

    with col2:
        st.metric("MRR", f"{report.mrr:.2%}")

    with col3:
        st.metric("DRR", f"{report.drr:.2%}")

    with col4:
        st.metric("MAE (kWh)", f"{report.mae:.2f}")

    if report.cost is not None:
        st.caption(f"Mean billing error per meter: {report.cost:.2f}")


def display_config(config: Dict):
    if config:
        with st.expander("⚙️ Run configuration"):
            st.json(config)


def display_pairs():
    """Display the per-meter table, wrong readings first."""
    pairs = st.session_state.pairs
    if not pairs:
        return
    st.markdown("### 🔍 Per-meter results")
    frame = pairs_frame(pairs).sort_values(['exact', 'levenshtein'], ascending=[True, False], kind='stable')
    only_wrong = st.checkbox("Show wrong readings only", value=True)
    if only_wrong:
        frame = frame[~frame['exact']]
    st.dataframe(frame, use_container_width=True, hide_index=True)


def main():
    """Dashboard entry point."""
    st.set_page_config(
        page_title="Dial Meter Evaluation",
        page_icon="⏱️",
        layout="wide",
        initial_sidebar_state="expanded"
    )

    initialize_session_state()

    st.title("⏱️ Dial Meter Evaluation")
    st.markdown("---")

    with st.sidebar:
        st.header("📁 Files")
        report_path = st.text_input("Report (JSON)", value="report.json")
        pred_path = st.text_input("Predictions (JSONL)", value="")
        gt_path = st.text_input("Ground truth (JSONL)", value="")
        if st.button("📥 Load", use_container_width=True):
            load_files(report_path, pred_path, gt_path)
            st.rerun()

    if st.session_state.load_error:
        st.error(f"Failed to load files: {st.session_state.load_error}")

    report = st.session_state.report
    if report is None:
        st.info("Load a report written by `evaluate` to get started.")
        return

    display_headline(report)
    display_config(report.config)

    col1, col2 = st.columns(2)
    with col1:
        st.plotly_chart(position_error_figure(report), use_container_width=True)
        st.plotly_chart(tolerance_figure(report), use_container_width=True)
    with col2:
        st.plotly_chart(magnitude_figure(report), use_container_width=True)
        st.plotly_chart(error_kind_figure(report), use_container_width=True)

    display_pairs()


if __name__ == "__main__":
    main()
