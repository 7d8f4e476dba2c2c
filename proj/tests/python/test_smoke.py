# Copyright (c) 2026, The vetgate Authors.
#
# SPDX-License-Identifier: Apache-2.0

import os
import pathlib

import pytest

import vetgate

ROOT = pathlib.Path(os.environ.get("VETGATE_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))
PROTOCOL = ROOT / "protocols" / "ml-training.yaml"


def report(node, status="Pass", agent="Reported"):
    results = [] if agent != "Reported" else [
        {
            "eval_name": "Check GPU",
            "kind": "GPUEval",
            "status": status,
            "measured": {},
            "violations": [],
            "duration_ms": 1.0,
            "detail": "",
            "requirements": [],
        }
    ]
    return {"node": node, "results": results, "started_ms": 0, "finished_ms": 1, "agent_status": agent}


def test_version():
    assert vetgate.__version__


def test_hostlist_round_trip():
    names = vetgate.expand_hostlist("nid[001-003,007],login")
    assert names == ["nid001", "nid002", "nid003", "nid007", "login"]
    assert vetgate.compress_hostlist(names) == "login,nid[001-003,007]"


def test_errors_carry_their_kind():
    with pytest.raises(vetgate.VetgateError) as info:
        vetgate.expand_hostlist("nid[3-1]")
    assert vetgate.error_kind(info.value) == "MalformedHostlist"


def test_protocol():
    p = vetgate.load_protocol(PROTOCOL)
    assert p["name"] == "ML Training Node Vetting"
    assert [e["type"] for e in p["evals"]] == ["GPUEval", "NCCLEval", "CUDAEval"]
    assert p["evals"][0]["params"]["max_temp"] == {"value": 30.0, "unit": "celsius"}
    assert p["evals"][2]["requirements"] == ["cuda-python", "numpy"]
    text = vetgate.canonical_protocol(PROTOCOL.read_text())
    assert vetgate.parse_protocol(text) == p


def test_verdict():
    ctx = {"job_id": "1", "nodes": ["nid001", "nid002", "nid003"], "tasks_per_node": 1, "gpus_per_task": 1, "flexible": True, "min_nodes": 2}
    reports = [report("nid001"), report("nid002", "Fail"), report("nid003")]
    v = vetgate.decide_verdict(reports, ctx, {"max_exclusion_fraction": 0.5, "treat_unknown_as": "fail-if-strict", "strict": False})
    assert v["decision"] == "ContinueExcluding"
    assert v["excluded"] == ["nid002"]
    rigid = dict(ctx, flexible=False, min_nodes=3)
    assert vetgate.decide_verdict(reports, rigid)["decision"] == "Abort"


def test_score_separates_busy_wait():
    s = vetgate.score(ROOT / "fixtures", "busy-wait")
    assert s["overall"] == pytest.approx(0.031, abs=1e-9)
    with pytest.raises(vetgate.VetgateError):
        vetgate.score(ROOT / "fixtures", "busy-wait", weights=(0.0, 0.0, 0.0))


def test_simulation_is_deterministic():
    profile = ROOT / "profiles" / "hot-gpu-64.yaml"
    a = vetgate.simulate(profile, PROTOCOL, repeat=3)
    b = vetgate.simulate(profile, PROTOCOL, repeat=3)
    assert a == b
    assert a["rules"]["drain_list"] == "nid017"


def test_rules_replay():
    hour = 3600 * 1000
    events = [{"kind": "Failure", "node": "nid017", "timestamp_ms": i * hour, "evals": ["Check GPU"]} for i in range(3)]
    out = vetgate.replay_rules(events)
    assert out["drain_list"] == ["nid017"]
    assert out["records"]["nid017"]["state"] == "Drained"


def test_cli_in_process():
    env = {
        "SLURM_JOB_NODELIST": "nid[001-064]",
        "SLURM_JOB_ID": "7",
        "VETGATE_MANIFEST": str(ROOT / "manifests" / "ml-stack.txt"),
    }
    code, out, _ = vetgate.run_cli(
        ["run", "--protocol", str(PROTOCOL), "--sim-profile", str(ROOT / "profiles" / "hot-gpu-64.yaml"), "--flexible", "--min-nodes", "60"], env
    )
    assert code == 3
    assert out.strip() == "nid017"
    code, _, _ = vetgate.run_cli(["validate", "/nonexistent.yaml"], env)
    assert code == 2
