import logging

import numpy as np
import pytest

from meshcva import (
    RunConfig,
    brownian_example,
    builtin_scenario,
    emit_csv,
    estimate_c1,
    format_csv,
    load_paths,
    load_portfolio_config,
    parse_csv,
    replication_seed,
    resolve_scenario,
    run_convergence_study,
    run_replication_study,
)
from meshcva.cli import main
from meshcva.harness import ReplicationReport, ReplicationRow

MODEL_CFG = """\
macro_dim = 1
contract_dims = 1 1
drift = 0.0 0.01 -0.01
cov = 1.0 0.2 0.1  0.2 0.5 0.0  0.1 0.0 0.8
initial_state = 0.0 0.0 0.0
"""

PORT_CFG = """\
maturities = 0.5 1.0
contract = 1 2 linear 0.0 1.0
contract = 2 1 call 1 -0.5
hazard = constant 0.6 0.02
"""


@pytest.fixture()
def config_files(tmp_path):
    model = tmp_path / "model.cfg"
    port = tmp_path / "port.cfg"
    model.write_text(MODEL_CFG)
    port.write_text(PORT_CFG)
    return str(model), str(port)


class TestScenario:
    def test_brownian_example_shape(self):
        sc = brownian_example(100)
        assert sc.partition.n == 100
        assert sc.portfolio.maturities == (1.0,)
        assert len(sc.portfolio.contracts) == 1
        assert sc.partition.eps0 == 1.0
        assert sc.g.evaluate(0.0, np.zeros((3, 1))).tolist() == [1.0, 1.0, 1.0]

    def test_unknown_builtin(self):
        with pytest.raises(ValueError):
            builtin_scenario("nope")

    def test_resolve_builtin(self):
        sc = resolve_scenario(RunConfig(portfolio="brownian-example", n=7))
        assert sc.partition.n == 7

    def test_resolve_builtin_ignores_model_with_warning(self, caplog):
        with caplog.at_level(logging.WARNING, logger="meshcva.harness"):
            resolve_scenario(RunConfig(model="whatever.cfg", n=4))
        assert any("ignores" in r.message for r in caplog.records)

    def test_resolve_files(self, config_files):
        model, port = config_files
        sc = resolve_scenario(RunConfig(model=model, portfolio=port, n=10))
        assert sc.portfolio.maturities == (0.5, 1.0)
        assert len(sc.portfolio.contracts) == 2
        assert 0.5 in sc.partition.times

    def test_portfolio_file_requires_model(self, config_files):
        _, port = config_files
        with pytest.raises(ValueError):
            resolve_scenario(RunConfig(portfolio=port, n=10))


class TestPortfolioConfig:
    def load(self, tmp_path, text):
        from meshcva import load_model_config
        model_p = tmp_path / "m.cfg"
        model_p.write_text(MODEL_CFG)
        port_p = tmp_path / "p.cfg"
        port_p.write_text(text)
        return load_portfolio_config(port_p, load_model_config(model_p))

    def test_valid(self, tmp_path):
        port, g = self.load(tmp_path, PORT_CFG)
        assert [c.m for c in port.contracts] == [1, 2]
        assert [c.k for c in port.contracts] == [2, 1]
        assert g.evaluate(0.0, np.zeros((1, 3)))[0] == pytest.approx(0.012)

    def test_default_hazard_is_unit(self, tmp_path):
        port, g = self.load(tmp_path, "maturities = 1.0\ncontract = 1 1 linear 0.0 1.0\n")
        assert g.evaluate(0.5, np.zeros((1, 3)))[0] == 1.0

    @pytest.mark.parametrize("text", [
        "contract = 1 1 linear 1.0 0.0\n",                      # no maturities
        "maturities = 1.0\ncontract = 1 1 linear 1.0\n",        # weight count
        "maturities = 1.0\ncontract = 9 1 linear 1.0 0.0\n",    # m out of range
        "maturities = 1.0\ncontract = 1 1 call 7 0.0\n",        # coord range
        "maturities = 1.0\ncontract = 1 1 swap 1.0\n",          # unknown kind
        "maturities = 1.0\ncontract = 1 1\n",                   # too short
        "maturities = 1.0\nhazard = unit\nhazard = unit\n",     # double hazard
        "maturities = 1.0\nhazard = constant 0.6\n",            # bad hazard
        "maturities = 1.0\nmaturities = 2.0\n",                 # double maturities
    ])
    def test_rejects(self, tmp_path, text):
        with pytest.raises(ValueError):
            self.load(tmp_path, text)


class TestRunConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            RunConfig(estimator="c9")
        with pytest.raises(ValueError):
            RunConfig(L=())
        with pytest.raises(ValueError):
            RunConfig(L=(100, 50))
        with pytest.raises(ValueError):
            RunConfig(L=(0,))
        with pytest.raises(ValueError):
            RunConfig(reps=0)
        with pytest.raises(ValueError):
            RunConfig(delta=0.0)
        with pytest.raises(ValueError):
            RunConfig(c0=-1.0)

    def test_replication_seed_stable_and_distinct(self):
        seeds = [replication_seed(0, r) for r in range(50)]
        assert seeds == [replication_seed(0, r) for r in range(50)]
        assert len(set(seeds)) == 50
        assert replication_seed(1, 0) != replication_seed(0, 0)


class TestReplicationStudy:
    def small_config(self, **kw):
        base = dict(portfolio="brownian-example", estimator="both", n=8,
                    L=(8, 16), L0=40, reps=3, seed=1)
        base.update(kw)
        return RunConfig(**base)

    def test_both_estimators_fill_all_columns(self):
        report = run_replication_study(self.small_config())
        assert len(report.rows) == 2
        for row in report.rows:
            assert row.mean_c1 is not None
            assert row.mean_c2 is not None
            assert row.sd_c1 is not None
            assert row.sd_c2 is not None
        assert len(report.values[(8, "c1")]) == 3
        assert report.wall_time > 0.0

    def test_single_replication_has_no_sd(self):
        report = run_replication_study(self.small_config(reps=1))
        assert report.rows[0].sd_c1 is None
        assert report.rows[0].sd_c2 is None

    def test_single_estimator_leaves_other_column_empty(self):
        report = run_replication_study(self.small_config(estimator="c2"))
        assert report.rows[0].mean_c1 is None
        assert report.rows[0].mean_c2 is not None

    def test_deterministic(self):
        a = run_replication_study(self.small_config())
        b = run_replication_study(self.small_config())
        assert a.rows == b.rows

    def test_replications_use_common_seeds_across_L(self):
        report = run_replication_study(self.small_config(estimator="c1"))
        sc = brownian_example(8)
        expected = estimate_c1(sc.model, sc.portfolio, sc.g, sc.partition, 8,
                               seed=replication_seed(1, 0)).value
        assert report.values[(8, "c1")][0] == expected

    def test_oracle_estimator_lands_in_first_column(self):
        report = run_replication_study(
            self.small_config(estimator="oracle", L=(30,), L0=30, reps=2))
        assert report.rows[0].mean_c1 is not None
        assert report.rows[0].mean_c2 is None


class TestConvergenceStudy:
    def test_errors_decrease_and_slope_near_first_order(self):
        report = run_convergence_study([10, 100, 1000])
        errs = [row.error for row in report.rows]
        assert errs[0] > errs[1] > errs[2]
        assert 0.5 <= report.slope <= 1.5

    def test_validation(self):
        with pytest.raises(ValueError):
            run_convergence_study([10, 100])
        with pytest.raises(ValueError):
            run_convergence_study([10, 10, 100])


class TestCsv:
    def sample_report(self):
        rows = (ReplicationRow(L=100, mean_c1=0.26546, mean_c2=0.26321,
                               sd_c1=0.03341, sd_c2=0.00667),
                ReplicationRow(L=200, mean_c1=None, mean_c2=0.5, sd_c1=None,
                               sd_c2=None))
        return ReplicationReport(rows=rows, values={}, config={}, wall_time=1.0)

    def test_header_and_digits(self):
        text = format_csv(self.sample_report())
        lines = text.splitlines()
        assert lines[0] == "L,average1,average2,stddev1,stddev2"
        assert lines[1] == "100,0.2654600000,0.2632100000,0.0334100000,0.0066700000"
        assert lines[2] == "200,,0.5000000000,,"
        assert text.endswith("\n")

    def test_empty_report_is_header_only(self):
        text = format_csv(ReplicationReport(rows=(), values={}, config={},
                                            wall_time=0.0))
        assert text == "L,average1,average2,stddev1,stddev2\n"

    def test_table_shape_seven_rows(self):
        rows = tuple(
            ReplicationRow(L=L, mean_c1=0.1, mean_c2=0.2, sd_c1=0.01,
                           sd_c2=0.02)
            for L in (100, 200, 400, 800, 1600, 3200, 6400))
        text = format_csv(ReplicationReport(rows=rows, values={}, config={},
                                            wall_time=0.0))
        assert len(text.splitlines()) == 8

    def test_round_trip_at_ten_digits(self, tmp_path):
        report = self.sample_report()
        out = tmp_path / "t.csv"
        emit_csv(report, out)
        parsed = parse_csv(out.read_text())
        assert parsed[0]["L"] == 100
        for key, orig in (("average1", 0.26546), ("stddev2", 0.00667)):
            assert f"{parsed[0][key]:.10f}" == f"{orig:.10f}"
        assert parsed[1]["average1"] is None
        assert parsed[1]["stddev2"] is None

    def test_parse_rejects_bad_header(self):
        with pytest.raises(ValueError):
            parse_csv("who,what\n1,2\n")


class TestCli:
    def test_estimate_runs(self, capsys):
        code = main(["estimate", "--estimator", "c1", "--n", "6", "--L", "12",
                     "--seed", "3"])
        assert code == 0
        out = capsys.readouterr().out
        assert "estimator=c1 L=12 n=6" in out
        assert "value=" in out

    def test_estimate_rejects_both(self):
        assert main(["estimate", "--estimator", "both", "--n", "4",
                     "--L", "8"]) == 2

    def test_replicate_writes_deterministic_csv(self, tmp_path, capsys):
        args = ["replicate", "--estimator", "c2", "--n", "4", "--L", "8",
                "--L0", "20", "--reps", "2", "--seed", "5"]
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        out = capsys.readouterr().out
        assert out.count("L,average1,average2,stddev1,stddev2") == 2

    def test_converge(self, capsys, tmp_path):
        out_file = tmp_path / "c.csv"
        code = main(["converge", "--n", "10", "--n", "100", "--n", "1000",
                     "--out", str(out_file)])
        assert code == 0
        out = capsys.readouterr().out
        assert "slope=" in out
        assert out_file.read_text().startswith("n,value,error\n")

    def test_converge_needs_three_sizes(self):
        assert main(["converge", "--n", "10", "--n", "100"]) == 2

    def test_oracle(self, capsys):
        code = main(["oracle", "--n", "4", "--L", "50", "--L0", "50",
                     "--seed", "1"])
        assert code == 0
        assert "estimator=oracle L=50 L0=50" in capsys.readouterr().out

    def test_dump_paths_round_trip(self, tmp_path):
        out = tmp_path / "fam.csv"
        code = main(["dump-paths", "--n", "4", "--L", "3", "--seed", "2",
                     "--out", str(out)])
        assert code == 0
        paths, times = load_paths(out)
        assert paths.shape == (3, 5, 1)
        assert len(times) == 5

    def test_dump_paths_requires_out(self):
        assert main(["dump-paths", "--n", "4", "--L", "3"]) == 2

    def test_unknown_builtin_portfolio(self):
        assert main(["estimate", "--portfolio", "missing-scenario",
                     "--L", "8"]) == 2

    def test_bad_flag_exits_via_argparse(self):
        with pytest.raises(SystemExit):
            main(["estimate", "--estimator", "bogus"])

    def test_config_file_merge_flags_win(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("estimator = c1\nn = 6\nL = 12\nseed = 1\n")
        assert main(["estimate", "--config", str(cfg), "--seed", "3"]) == 0
        merged = capsys.readouterr().out
        assert main(["estimate", "--estimator", "c1", "--n", "6", "--L", "12",
                     "--seed", "3"]) == 0
        direct = capsys.readouterr().out
        assert merged == direct

    def test_file_scenario_through_cli(self, config_files, capsys):
        model, port = config_files
        code = main(["estimate", "--model", model, "--portfolio", port,
                     "--estimator", "c2", "--n", "10", "--L", "30",
                     "--L0", "100", "--seed", "4"])
        assert code == 0
        assert "estimator=c2 L=30" in capsys.readouterr().out
