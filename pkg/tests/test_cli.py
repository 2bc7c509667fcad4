import numpy as np
import pytest

import signalshift as ss
from signalshift.cli import main

from conftest import synthetic_base_list


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def bases_file(tmp_path):
    path = tmp_path / "bases.csv"
    ss.write_bases_csv(synthetic_base_list(), path)
    return path


def volumes_file(tmp_path, name, volumes):
    path = tmp_path / name
    ss.write_bases_csv([ss.BaseDistribution(np.array(volumes), name)], path)
    return path


def small_config(tmp_path, **extra):
    overrides = dict(horizon=300.0, drain=120.0, episodes=2, meta_iterations=2,
                     task_batch=2)
    overrides.update(extra)
    path = tmp_path / "config.txt"
    path.write_text("".join(f"{k}={v}\n" for k, v in overrides.items()))
    return path


def tree_bytes(root):
    return {p.relative_to(root): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------------------
# kl

def test_kl_identity_prints_zero(tmp_path, capsys):
    f = volumes_file(tmp_path, "p.csv", [50, 50])
    code, out, _ = run_cli(capsys, "kl", "--a", str(f), "--b", str(f))
    assert code == 0
    assert out.strip() == "0.000000"


def test_kl_hand_pair(tmp_path, capsys):
    a = volumes_file(tmp_path, "p.csv", [50, 50])
    b = volumes_file(tmp_path, "q.csv", [25, 75])
    code, out, _ = run_cli(capsys, "kl", "--a", str(a), "--b", str(b))
    assert code == 0
    assert out.strip() == "0.143841"


def test_kl_accepts_flow_files(tmp_path, capsys):
    flow = ss.sample_arrivals([10, 20, 5, 5, 10, 20, 5, 5], 300.0, 3)
    path = tmp_path / "flow.csv"
    ss.write_flow_csv(flow, path)
    code, out, _ = run_cli(capsys, "kl", "--a", str(path), "--b", str(path))
    assert code == 0 and out.strip() == "0.000000"


def test_kl_missing_file_exit_2(tmp_path, capsys):
    f = volumes_file(tmp_path, "p.csv", [50, 50])
    code, _, err = run_cli(capsys, "kl", "--a", str(f), "--b", str(tmp_path / "nope.csv"))
    assert code == 2
    assert err.startswith("ERROR[missing-file]:")


def test_kl_multi_row_bases_exit_3(tmp_path, capsys):
    f = bases_file(tmp_path)  # five rows: ambiguous as a distribution
    one = volumes_file(tmp_path, "one.csv", [1, 1])
    code, _, err = run_cli(capsys, "kl", "--a", str(f), "--b", str(one))
    assert code == 3
    assert err.startswith("ERROR[validation]:")


# ---------------------------------------------------------------------------
# gen / ingest

def test_gen_writes_both_sets(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "gen", "--bases", str(bases_file(tmp_path)),
                           "--seed", "3", "--out", str(tmp_path / "out"))
    assert code == 0
    train = sorted((tmp_path / "out" / "train").glob("*.csv"))
    test = sorted((tmp_path / "out" / "test").glob("*.csv"))
    assert len(train) == 25 and len(test) == 5


def test_gen_deterministic_trees(tmp_path, capsys):
    bases = bases_file(tmp_path)
    for name in ("a", "b"):
        code, _, _ = run_cli(capsys, "gen", "--bases", str(bases), "--seed", "42",
                             "--out", str(tmp_path / name))
        assert code == 0
    assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


def test_ingest_prints_volumes(tmp_path, capsys):
    counts = tmp_path / "counts.csv"
    counts.write_text("# schema=1\ntimestamp_iso8601,movement,count\n"
                      "2024-05-07T08:00:00,3,7\n")
    code, out, _ = run_cli(capsys, "ingest", "--counts", str(counts),
                           "--start", "08:00", "--end", "08:05",
                           "--out", str(tmp_path / "out"))
    assert code == 0
    assert out.splitlines()[0] == "0,0,7,0,0,0,0,0"
    assert (tmp_path / "out" / "ingested_bases.csv").exists()


def test_ingest_empty_window_exit_3(tmp_path, capsys):
    counts = tmp_path / "counts.csv"
    counts.write_text("# schema=1\n2024-05-07T08:00:00,3,7\n")
    code, _, err = run_cli(capsys, "ingest", "--counts", str(counts),
                           "--start", "11:00", "--end", "11:05",
                           "--out", str(tmp_path / "out"))
    assert code == 3 and err.startswith("ERROR[validation]:")


# ---------------------------------------------------------------------------
# training / eval / ablate round trip

@pytest.fixture(scope="module")
def cli_workspace(tmp_path_factory):
    tmp_path = tmp_path_factory.mktemp("cli")
    capsys = None
    bases = tmp_path / "bases.csv"
    ss.write_bases_csv(synthetic_base_list()[:2], bases)
    config = small_config(tmp_path)
    assert main(["gen", "--bases", str(bases), "--seed", "1", "--config",
                 str(config), "--out", str(tmp_path / "sets")]) == 0
    return tmp_path, config


def test_train_eval_adapt_ablate_cycle(cli_workspace, capsys):
    tmp_path, config = cli_workspace
    sets = tmp_path / "sets"
    scenario = sorted((sets / "test").glob("*.csv"))[0]

    code, _, _ = run_cli(capsys, "train-dqn", "--scenarios", str(sets / "train"),
                         "--seed", "2", "--config", str(config),
                         "--out", str(tmp_path / "dqn"))
    assert code == 0
    ckpt = tmp_path / "dqn" / "dqn_checkpoint.txt"
    assert ckpt.exists() and (tmp_path / "dqn" / "dqn_training_log.csv").exists()

    code, out, _ = run_cli(capsys, "eval", "--scenario", str(scenario),
                           "--checkpoint", str(ckpt), "--config", str(config),
                           "--out", str(tmp_path / "eval"), "--trace")
    assert code == 0
    assert (tmp_path / "eval" / "eval.csv").exists()
    assert (tmp_path / "eval" / "vehicles.csv").exists()

    code, _, _ = run_cli(capsys, "train-meta", "--scenarios", str(sets / "train"),
                         "--seed", "2", "--config", str(config),
                         "--out", str(tmp_path / "meta"))
    assert code == 0
    meta_ckpt = tmp_path / "meta" / "meta_checkpoint.txt"

    code, _, _ = run_cli(capsys, "adapt", "--checkpoint", str(meta_ckpt),
                         "--scenario", str(scenario), "--config", str(config),
                         "--out", str(tmp_path / "adapted"))
    assert code == 0
    assert (tmp_path / "adapted" / "adapted_checkpoint.txt").exists()

    code, out, _ = run_cli(capsys, "ablate", "--checkpoint", str(meta_ckpt),
                           "--scenarios", str(sets / "test"), "--ks", "1,2",
                           "--config", str(config), "--out", str(tmp_path / "abl"))
    assert code == 0
    lines = (tmp_path / "abl" / "ablation.csv").read_text().splitlines()
    assert len(lines) == 4  # schema, header, two rows


def test_eval_policy_baseline(cli_workspace, capsys):
    tmp_path, config = cli_workspace
    scenario = sorted((tmp_path / "sets" / "test").glob("*.csv"))[0]
    code, out, _ = run_cli(capsys, "eval", "--scenario", str(scenario),
                           "--policy", "max_pressure", "--config", str(config),
                           "--out", str(tmp_path / "evalmp"))
    assert code == 0
    assert float(out.strip()) > 0


def test_report_runs_manifest(cli_workspace, capsys):
    tmp_path, config = cli_workspace
    manifest = tmp_path / "manifest.txt"
    manifest.write_text(
        f"train_dir={tmp_path / 'sets' / 'train'}\n"
        f"test_dir={tmp_path / 'sets' / 'test'}\n"
        f"out={tmp_path / 'report'}\n"
        f"config={config}\n"
        "algorithms=fixed_time,max_pressure,random\n"
        "seeds=0\n")
    code, _, _ = run_cli(capsys, "report", "--manifest", str(manifest))
    assert code == 0
    assert (tmp_path / "report" / "report_pivot.csv").exists()


# ---------------------------------------------------------------------------
# parser behaviour

def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exit_info:
        main(["--help"])
    assert exit_info.value.code == 0
    assert "signalshift" in capsys.readouterr().out


def test_unknown_flag_exits_nonzero_with_usage(capsys):
    with pytest.raises(SystemExit) as exit_info:
        main(["kl", "--bogus", "x"])
    assert exit_info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand(capsys):
    with pytest.raises(SystemExit) as exit_info:
        main(["frobnicate"])
    assert exit_info.value.code == 2


def test_bad_config_key_exit_3(tmp_path, capsys):
    config = tmp_path / "config.txt"
    config.write_text("not_a_key=1\n")
    f = volumes_file(tmp_path, "p.csv", [50, 50])
    code, _, err = run_cli(capsys, "kl", "--a", str(f), "--b", str(f),
                           "--config", str(config))
    assert code == 3 and "unknown config key" in err
