"""Acceptance gate: seven end-to-end criteria, one pass/fail line each.

Each criterion prints ``[PASS]``/``[FAIL] criterion N: <label>`` so a full
run reads as a checklist. Every check is deterministic; the two timed
criteria assert wall-clock budgets on top of correctness.
"""

import json
import random
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

import marco
from marco.cli import main as cli_main
from marco.config import load_config
from marco.eda.anomalies import (
    aggressor_anomalies,
    anomaly_identity,
    compare_timing_tables,
    missing_clock_edges,
    rc_mismatch_pairs,
    slowest_stage_constraints,
)
from marco.eda.fixtures import (
    AGGRESSOR_RC_THRESHOLD,
    FOCUS_PATHS,
    FOCUS_STAGES,
    RC_RATIO_THRESHOLD,
    SLOWEST_TOP_K,
    XTALK_THRESHOLD,
    generate_fixture_set,
    parse_manifest,
    render_score_report,
    score_trace,
)
from marco.eda.report import parse_timing_report
from marco.engine import run, run_baseline
from marco.errors import GraphError
from marco.gateway import (
    ChatMessage,
    CompletionRequest,
    ToolCallRequest,
    canonical_hash,
)
from marco.graph import (
    ExpansionRequest,
    TaskEdge,
    TaskGraph,
    TaskNode,
    apply_expansion,
    ready_frontier,
    validate_graph,
)
from marco.knowledge import Document, KnowledgeBase, retrieve

from oracles import (
    anomaly_key,
    has_execution_cycle,
    is_linear_extension,
    oracle_aggressor_rc,
    oracle_missing_clock,
    oracle_rc_pairs,
    oracle_slowest,
    oracle_table_mismatch,
    oracle_xtalk_constraint,
    random_dag,
    random_report,
    tfidf_rank,
)

DATA = Path(marco.__file__).resolve().parent / "data"
TIMING_DEBUG = DATA / "configs" / "timing_debug.json"
MCMM = DATA / "configs" / "mcmm.json"
MANIFEST = DATA / "fixtures_3corner" / "manifest.tsv"


@contextmanager
def criterion(number: int, label: str):
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {number}: {label}")
        raise
    print(f"[PASS] criterion {number}: {label}")


def bundled_manifest():
    return parse_manifest(MANIFEST.read_text(encoding="utf-8"))


def test_criterion_1_bundled_run_beats_baseline():
    with criterion(1, "bundled timing-debug graph scores 6/7 vs baseline 0/7 in under 10s"):
        started = time.perf_counter()
        config = load_config(TIMING_DEBUG)
        manifest = bundled_manifest()

        graph_trace = run(config, deterministic=True)
        graph_report = render_score_report(score_trace(graph_trace.to_dict(), manifest))
        assert "pass-rate: 6/7 (86%)" in graph_report

        baseline_trace = run_baseline(config, backend_override="baseline_mock", deterministic=True)
        baseline_report = render_score_report(score_trace(baseline_trace.to_dict(), manifest))
        assert "pass-rate: 0/7 (0%)" in baseline_report

        elapsed = time.perf_counter() - started
        assert elapsed < 10.0, f"took {elapsed:.2f}s"


def assert_planted_sets_recovered(seed: int) -> None:
    fixture_set = generate_fixture_set(seed)
    primary = fixture_set.primary()
    recovered = {
        "M1": missing_clock_edges(primary),
        "M2": rc_mismatch_pairs(primary, RC_RATIO_THRESHOLD),
        "M3": aggressor_anomalies(primary, kind="constraint", threshold=XTALK_THRESHOLD),
        "M4": aggressor_anomalies(primary, kind="rc", threshold=AGGRESSOR_RC_THRESHOLD),
        "M5": slowest_stage_constraints(primary, SLOWEST_TOP_K),
        "M6": compare_timing_tables(primary, fixture_set.companion),
        "M7": (
            rc_mismatch_pairs(
                primary, RC_RATIO_THRESHOLD, stage_filter=FOCUS_STAGES, path_filter=FOCUS_PATHS
            )
            + aggressor_anomalies(
                primary,
                kind="constraint",
                threshold=XTALK_THRESHOLD,
                stage_filter=FOCUS_STAGES,
                path_filter=FOCUS_PATHS,
            )
        ),
    }
    for task_id, anomalies in recovered.items():
        got = {anomaly_identity(a) for a in anomalies}
        planted = {e.identity() for e in fixture_set.manifest if e.task_id == task_id}
        assert got == planted, f"seed {seed} task {task_id}"


def test_criterion_2_detectors_match_independent_oracles():
    with criterion(2, "500 random reports match detector oracles exactly in under 60s"):
        started = time.perf_counter()
        previous = None
        for i in range(500):
            rng = random.Random(20_000 + i)
            report = random_report(rng)

            got = {anomaly_key(a) for a in missing_clock_edges(report)}
            assert got == oracle_missing_clock(report), f"seed {i} missing-edge"

            got = {anomaly_key(a) for a in rc_mismatch_pairs(report, RC_RATIO_THRESHOLD)}
            assert got == oracle_rc_pairs(report, RC_RATIO_THRESHOLD), f"seed {i} rc"

            got = {
                anomaly_key(a)
                for a in aggressor_anomalies(report, kind="constraint", threshold=XTALK_THRESHOLD)
            }
            assert got == oracle_xtalk_constraint(report, XTALK_THRESHOLD), f"seed {i} xtalk"

            got = {
                anomaly_key(a)
                for a in aggressor_anomalies(report, kind="rc", threshold=AGGRESSOR_RC_THRESHOLD)
            }
            assert got == oracle_aggressor_rc(report, AGGRESSOR_RC_THRESHOLD), f"seed {i} aggr"

            got_order = [anomaly_key(a) for a in slowest_stage_constraints(report, SLOWEST_TOP_K)]
            assert got_order == oracle_slowest(report, SLOWEST_TOP_K), f"seed {i} slowest"

            if previous is not None:
                got = {anomaly_key(a) for a in compare_timing_tables(previous, report)}
                assert got == oracle_table_mismatch(previous, report), f"seed {i} compare"
            previous = report

        for seed in (0, 7, 2024):
            assert_planted_sets_recovered(seed)

        clean = generate_fixture_set(7)
        for report in clean.reports[1:]:
            assert missing_clock_edges(report) == []
            assert rc_mismatch_pairs(report, RC_RATIO_THRESHOLD) == []
            assert aggressor_anomalies(report, kind="constraint", threshold=XTALK_THRESHOLD) == []
            assert aggressor_anomalies(report, kind="rc", threshold=AGGRESSOR_RC_THRESHOLD) == []

        elapsed = time.perf_counter() - started
        assert elapsed < 60.0, f"took {elapsed:.2f}s"


def planner_base() -> TaskGraph:
    seed_node = TaskNode(
        id="P",
        title="plan",
        goal="plan the work",
        agent_ref="a",
        outputs=("plan",),
        expansion="planner",
    )
    return TaskGraph(nodes=(seed_node,), edges=(), mode="dynamic")


def test_criterion_3_scheduling_and_expansions():
    with criterion(3, "200 random DAG schedules are linear extensions; 200 expansions stay acyclic or fail correctly"):
        for i in range(200):
            rng = random.Random(30_000 + i)
            graph = random_dag(rng, max_nodes=20)
            order: list[str] = []
            done: set[str] = set()
            while True:
                frontier = ready_frontier(graph, done)
                if not frontier:
                    break
                order.append(frontier[0])
                done.add(frontier[0])
            assert len(order) == len(graph.nodes), f"seed {i} scheduled {len(order)} nodes"
            assert is_linear_extension(order, graph), f"seed {i} order {order}"

        grown_count = rejected_count = 0
        for i in range(200):
            rng = random.Random(31_000 + i)
            ids = [f"n{j}" for j in range(rng.randint(1, 8))]
            nodes = tuple(
                TaskNode(id=nid, title=nid, goal=f"do {nid}", agent_ref="a") for nid in ids
            )
            edges = [TaskEdge("P", ids[0])]
            for j, nid in enumerate(ids[1:], start=1):
                edges.append(TaskEdge(ids[rng.randrange(j)], nid))
            if rng.random() < 0.4 and len(ids) >= 2:
                edges.append(TaskEdge(ids[-1], ids[0]))
            request = ExpansionRequest(planner_id="P", new_nodes=nodes, new_edges=tuple(edges))
            try:
                grown = apply_expansion(planner_base(), request)
            except GraphError as exc:
                assert exc.code == "CYCLE_INTRODUCED", f"seed {i} raised {exc.code}"
                candidate = TaskGraph(
                    nodes=planner_base().nodes + nodes,
                    edges=planner_base().edges + tuple(edges),
                    mode="dynamic",
                )
                assert has_execution_cycle(candidate), f"seed {i} false cycle report"
                rejected_count += 1
            else:
                assert validate_graph(grown).ok, f"seed {i} grew an invalid graph"
                assert not has_execution_cycle(grown), f"seed {i} grew a cycle"
                grown_count += 1
        assert grown_count + rejected_count == 200
        assert grown_count > 0 and rejected_count > 0


def test_criterion_4_retrieval_matches_tfidf_oracle():
    with criterion(4, "100 random corpora rank exactly like the naive tf-idf oracle"):
        vocab = [
            "slack", "timing", "clock", "skew", "margin", "net", "cap",
            "delay", "hold", "setup", "corner", "buffer", "latch", "fanout",
        ]
        for i in range(100):
            rng = random.Random(40_000 + i)
            docs = {
                f"d{j:02d}": " ".join(rng.choices(vocab, k=rng.randint(1, 30)))
                for j in range(rng.randint(1, 50))
            }
            query = " ".join(rng.choices(vocab, k=rng.randint(1, 4)))
            k = rng.randint(1, 12)
            kb = KnowledgeBase("rand", [Document(doc_id, text) for doc_id, text in docs.items()])
            got = [(doc.id, score) for doc, score in retrieve(kb, query, k=k)]
            assert got == tfidf_rank(docs, query, k), f"seed {i} query {query!r}"


def replay_payload() -> dict:
    return {
        "graph": {
            "mode": "static",
            "nodes": [
                {"id": "n1", "title": "first", "goal": "finish first", "agent_ref": "solo"},
                {"id": "n2", "title": "second", "goal": "finish second", "agent_ref": "solo"},
            ],
            "edges": [{"src": "n1", "dst": "n2", "kind": "execution"}],
        },
        "agents": {
            "solo": {
                "topology": "single",
                "roles": [{"name": "worker", "model_ref": "rec"}],
                "termination": {"max_turns": 4, "stop_phrase": "TASK COMPLETE"},
            }
        },
        "backends": {
            "mock": {"kind": "mock", "script": "scripts.json"},
            "rec": {"kind": "replay", "cache_dir": "cache", "inner": "mock", "record": True},
        },
        "limits": {"max_node_executions": 4},
    }


def test_criterion_5_replay_determinism(tmp_path):
    with criterion(5, "record-then-replay is byte-identical; canonical hash ignores map order"):
        scripts = tmp_path / "scripts.json"
        scripts.write_text(
            json.dumps([
                {
                    "matcher": {"kind": "always"},
                    "responses": [
                        {"content": "first finished TASK COMPLETE"},
                        {"content": "second finished TASK COMPLETE"},
                    ],
                }
            ]),
            encoding="utf-8",
        )
        config_path = tmp_path / "run.json"
        config_path.write_text(json.dumps(replay_payload()), encoding="utf-8")
        config = load_config(config_path)

        recorded = run(config, deterministic=True).render()
        assert sorted((tmp_path / "cache").glob("*.json"))
        # replay must never consult the inner backend again
        scripts.write_text(
            json.dumps([{"matcher": {"kind": "always"}, "responses": [{"content": "WRONG"}]}]),
            encoding="utf-8",
        )
        replayed = run(config, deterministic=True).render()
        assert replayed == recorded
        assert json.loads(replayed)["timings"] == {"n1": 0.0, "n2": 0.0}

        arguments = {
            "gamma": 1,
            "alpha": [1, 2, 3],
            "nested": {"z": 1, "y": {"b": 2, "a": 3}, "x": 4},
            "beta": "text",
            "delta": None,
            "omega": 2.5,
        }
        digests = set()
        for i in range(100):
            rng = random.Random(50_000 + i)
            outer = list(arguments)
            rng.shuffle(outer)
            shuffled = {}
            for key in outer:
                value = arguments[key]
                if key == "nested":
                    inner = list(value)
                    rng.shuffle(inner)
                    value = {
                        k: (dict(sorted(value[k].items(), key=lambda kv: rng.random()))
                            if isinstance(value[k], dict) else value[k])
                        for k in inner
                    }
                shuffled[key] = value
            request = CompletionRequest(
                model_ref="m",
                messages=(
                    ChatMessage(role="system", content="s"),
                    ChatMessage(
                        role="assistant",
                        content="calling",
                        tool_calls=(
                            ToolCallRequest(id="c1", tool_name="t", arguments=shuffled),
                        ),
                    ),
                ),
            )
            digests.add(canonical_hash(request))
        assert len(digests) == 1


def test_criterion_6_mcmm_expansion_and_takeaway():
    with criterion(6, "MCMM planner expands once into 3 corner nodes plus 1 aggregation node naming the worst corner"):
        config = load_config(MCMM)
        trace = run(config, deterministic=True)

        assert len(trace.expansions) == 1
        new_nodes = trace.expansions[0]["new_nodes"]
        assert len(new_nodes) == 4
        agent_refs = sorted(n["agent_ref"] for n in new_nodes)
        assert agent_refs == ["aggregator", "corner_analyst", "corner_analyst", "corner_analyst"]
        assert len(trace.outcomes) == 5

        expected_wns = {}
        for corner in ("ss_0p72v_125c", "tt_0p80v_25c", "ff_0p88v_m40c"):
            report = parse_timing_report(
                (DATA / "fixtures_3corner" / f"{corner}__func__max.txt").read_text(encoding="utf-8")
            )
            expected_wns[corner] = min(path.slack for path in report.paths)
        expected_corner = min(expected_wns, key=lambda c: (expected_wns[c], c))

        takeaway = trace.blackboard["mcmm_takeaways"]["value"]
        assert takeaway["metric"] == "wns"
        assert takeaway["worst"]["corner"] == expected_corner
        assert takeaway["worst"]["value"] == expected_wns[expected_corner]
        assert sorted(row["corner"] for row in takeaway["rows"]) == sorted(expected_wns)


def test_criterion_7_cli_contract(tmp_path, capsys):
    with criterion(7, "CLI validate/run/graph/fixtures/score honor exit codes 0, 1, 2 with reproducible generation"):
        assert cli_main(["validate", str(TIMING_DEBUG)]) == 0

        trace_path = tmp_path / "trace.json"
        assert cli_main(["run", str(TIMING_DEBUG), "--deterministic", "--trace-out", str(trace_path)]) == 0
        assert trace_path.is_file()

        capsys.readouterr()
        assert cli_main(["score", str(trace_path), str(MANIFEST)]) == 0
        assert "pass-rate: 6/7 (86%)" in capsys.readouterr().out

        assert cli_main(["graph", "export", str(TIMING_DEBUG), "--dot", "-"]) == 0

        out_a = tmp_path / "fx_a"
        out_b = tmp_path / "fx_b"
        assert cli_main(["fixtures", "gen", "--seed", "11", "--out", str(out_a)]) == 0
        assert cli_main(["fixtures", "gen", "--seed", "11", "--out", str(out_b)]) == 0
        names = sorted(p.name for p in out_a.iterdir())
        assert names == sorted(p.name for p in out_b.iterdir())
        for name in names:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

        bad_config = tmp_path / "bad.json"
        bad_config.write_text("{}", encoding="utf-8")
        assert cli_main(["validate", str(bad_config)]) == 1
        assert cli_main(["run", str(TIMING_DEBUG), "--deterministic", "--backend", "ghost"]) == 1

        with pytest.raises(SystemExit) as exc:
            cli_main([])
        assert exc.value.code == 2
        capsys.readouterr()
