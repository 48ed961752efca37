import json
import os
import subprocess

import pytest

import pdsim


def small_cluster():
    cfg = pdsim.ClusterConfig()
    cfg.prefill_nodes = 1
    cfg.decode_nodes = 1
    cfg.engines_per_node = 2
    cfg.n_layer = 4
    cfg.kv_bytes_per_token_per_layer = 1024
    cfg.block_size_tokens = 64
    return cfg


def test_feasible_pd_range_reference():
    cfg = pdsim.ClusterConfig()
    cfg.engines_per_node = 8
    cfg.storage_multiple = 1.0
    cfg.cnic_bandwidth = 50e9
    cfg.dram_bandwidth = 500e9
    assert pdsim.feasible_pd_range(cfg) == ((1, 7), (7, 2))


def test_link_loads_keys():
    loads = pdsim.link_loads(small_cluster())
    for key in ("t_p", "pe_cnic_read", "de_dram", "feasible", "binding"):
        assert key in loads
    assert loads["pe_dram"] == pytest.approx(2 * 50e9)


def test_synthesize_deterministic():
    a = pdsim.synthesize(max_len=16384, count=8, seed=7)
    b = pdsim.synthesize(max_len=16384, count=8, seed=7)
    assert len(a) == 8
    assert [t.total_tokens() for t in a] == [t.total_tokens() for t in b]
    assert all(t.total_tokens() <= 16384 for t in a)


def test_trace_round_trip(tmp_path):
    trajs = pdsim.synthesize(max_len=8192, count=4, seed=3)
    path = str(tmp_path / "t.tsv")
    pdsim.save_trace(path, trajs)
    back = pdsim.load_trace(path)
    assert [t.id for t in back] == [t.id for t in trajs]
    assert [t.total_tokens() for t in back] == [t.total_tokens() for t in trajs]


def test_simulate_offline():
    trajs = pdsim.synthesize(max_len=4096, count=4, seed=1)
    report = pdsim.simulate(small_cluster(), trajs)
    assert report["completed_requests"] == report["total_requests"] > 0
    assert report["makespan"] > 0
    assert len(report["latencies"]) == report["total_requests"]
    first = report["latencies"][0]
    assert first["ttft"] == pytest.approx(
        first["sched_component"]
        + first["alloc_component"]
        + first["read_component"]
        + first["prefill_component"]
    )


def test_simulate_oracle_not_slower():
    trajs = pdsim.synthesize(max_len=4096, count=4, seed=1)
    dual = pdsim.simulate(small_cluster(), trajs, policy="dual_path")
    oracle = pdsim.simulate(small_cluster(), trajs, policy="oracle")
    assert oracle["makespan"] <= dual["makespan"] + 1e-9


def test_config_error():
    cfg = small_cluster()
    cfg.hbm_capacity_tokens = 1
    trajs = pdsim.synthesize(max_len=4096, count=1, seed=1)
    with pytest.raises(pdsim.ConfigError):
        pdsim.simulate(cfg, trajs)


def test_shipped_trace():
    path = os.path.join(os.environ["PDSIM_DATA"], "trace_64k.tsv")
    trajs = pdsim.load_trace(path)
    assert len(trajs) >= 500
    mean_total = sum(t.total_tokens() for t in trajs) / len(trajs)
    assert abs(mean_total - 55958) / 55958 < 0.10


def cli(*args, **kw):
    return subprocess.run(
        [os.environ["PDSIM_CLI"], *args], capture_output=True, text=True, **kw
    )


def test_cli_analyze_defaults(tmp_path):
    defaults = cli("print-defaults")
    assert defaults.returncode == 0
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(defaults.stdout)
    out = cli("analyze", "-c", str(cfg_path))
    assert out.returncode == 0
    doc = json.loads(out.stdout)
    assert doc["pd_range"]["lo"] == {"num": 1, "den": 7, "value": 1 / 7}


def test_cli_gen_trace(tmp_path):
    path = tmp_path / "gen.tsv"
    out = cli("gen-trace", "-o", str(path), "--count", "5", "--max-len", "4096")
    assert out.returncode == 0
    assert len(pdsim.load_trace(str(path))) == 5
