from __future__ import annotations

import os
from typing import Any, Dict, List, Optional

import pandas as pd
import streamlit as st
from dotenv import load_dotenv

from gnnanatomy.data_io import MEASURE_FILE, gap_frame, grid_frame, load_measure, table1_frame
from gnnanatomy.errors import GnnAnatomyError
from gnnanatomy.measures import architecture_order, gap_grids, jaccard_grid
from gnnanatomy.store import DEFAULT_WORKDIR, list_datasets, workspace_paths


load_dotenv()
st.set_page_config(page_title="GNN 데이터셋 해부", layout="wide")


# --- Session State ---
if "workdir" not in st.session_state:
    st.session_state.workdir = os.getenv("GNNANATOMY_WORKDIR", DEFAULT_WORKDIR)
if "active_dataset" not in st.session_state:
    st.session_state.active_dataset = None


def _fmt(df: pd.DataFrame) -> Any:
    # CSV와 같은 소수점 3자리, 빈 값은 공백
    return df.style.format("{:.3f}", na_rep="", subset=df.select_dtypes("float").columns)


@st.cache_data(show_spinner=False)
def _load_measures(workdir: str, ids: tuple) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for dataset in ids:
        path = os.path.join(workspace_paths(workdir, dataset)["measure"], MEASURE_FILE)
        if not os.path.exists(path):
            continue
        out[dataset] = load_measure(path)
    return out


def render_sidebar(entries: List[Dict[str, Any]]) -> Optional[str]:
    st.sidebar.subheader("데이터셋")
    if not entries:
        st.sidebar.info("등록된 데이터셋이 없습니다. `python -m gnnanatomy pipeline`을 먼저 실행하세요.")
        return None
    ids = [e["id"] for e in entries]
    current = st.session_state.active_dataset if st.session_state.active_dataset in ids else ids[0]
    st.session_state.active_dataset = st.sidebar.radio(
        "상세 보기", ids, index=ids.index(current), key="dataset_radio"
    )
    return st.session_state.active_dataset


def render_overview(measures: Dict[str, Any]) -> None:
    reports = [m[0] for m in measures.values()]
    st.subheader("📊 요약 표: 특징/엣지만으로 풀 수 있는 비율")
    st.dataframe(_fmt(table1_frame(reports)), hide_index=True, use_container_width=True)

    st.subheader("🧩 GaP")
    grids = gap_grids(reports)
    names = {"feature_retention": "특징 유지율", "edge_retention": "엣지 유지율", "additional": "추가 해결률"}
    cols = st.columns(3)
    for col, (key, title) in zip(cols, names.items()):
        with col:
            st.caption(title)
            st.dataframe(_fmt(grid_frame(grids[key], [r.dataset_name for r in reports])), use_container_width=True)

    st.subheader("🔗 Jaccard (데이터셋 통합)")
    sets: Dict[str, Dict[str, Any]] = {}
    for dataset, (_, _, _, gnn) in measures.items():
        for arch, s in gnn.items():
            sets.setdefault(arch, {})[dataset] = s
    shared = {a: v for a, v in sets.items() if len(v) == len(measures)}
    if shared:
        grid = jaccard_grid(shared)
        st.dataframe(_fmt(grid_frame(grid, architecture_order(grid))), use_container_width=True)
    else:
        st.info("모든 데이터셋에서 측정된 아키텍처가 없습니다.")


def render_dataset(dataset: str, measure: Any) -> None:
    report, s_f, s_e, gnn = measure
    st.subheader(f"🔍 {dataset}")
    c1, c2, c3, c4 = st.columns(4)
    c1.metric("예측 수 |P|", report.universe_size)
    c2.metric("특징만", len(s_f))
    c3.metric("엣지만", len(s_e))
    c4.metric("최고 GNN", report.best_architecture or "-")
    if report.selected_edge_propagation:
        st.caption(f"엣지 전용 모델 전파 방식: {report.selected_edge_propagation} · alpha={report.alpha} · runs={report.n_runs}")

    st.dataframe(_fmt(gap_frame(report)), use_container_width=True)
    sizes = pd.DataFrame(
        [
            {
                "model": s.model_name,
                "solvable": len(s),
                "critical_count": s.critical_count,
                "ratio": s.ratio,
                "mean_accuracy": s.mean_accuracy,
            }
            for s in [s_f, s_e] + [gnn[a] for a in architecture_order(gnn)]
        ]
    )
    st.dataframe(_fmt(sizes), hide_index=True, use_container_width=True)


def main() -> None:
    st.sidebar.title("GNN 데이터셋 해부")
    workdir = st.sidebar.text_input("워크스페이스", value=st.session_state.workdir)
    st.session_state.workdir = workdir
    st.sidebar.markdown("---")
    try:
        entries = list_datasets(workdir)
        measures = _load_measures(workdir, tuple(e["id"] for e in entries))
    except GnnAnatomyError as exc:
        st.error(f"워크스페이스를 읽을 수 없습니다: {exc}")
        return
    active = render_sidebar(entries)
    if not measures:
        st.title("GNN 데이터셋 해부")
        st.info("표시할 측정 결과가 없습니다.")
        return
    render_overview(measures)
    st.markdown("---")
    if active in measures:
        render_dataset(active, measures[active])


main()
