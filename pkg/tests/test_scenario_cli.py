import csv

import numpy as np
import pytest

from airfed import cli, models
from airfed.scenario import ScenarioError, parse_scenario


class TestParseScenario:
    def test_minimal_file_all_defaults(self):
        sc = parse_scenario("seed = 1")
        assert sc.seed == 1
        assert sc.rounds == 10
        assert sc.model_spec.kind == models.LOGISTIC
        assert sc.round_cfg.period == 1
        assert sc.round_cfg.scheme.kind == "ideal-digital"

    def test_comments_and_blank_lines(self):
        sc = parse_scenario("# header\n\nseed = 2  # trailing comment\n")
        assert sc.seed == 2

    def test_negative_mu_names_key(self):
        with pytest.raises(ScenarioError, match="`mu`"):
            parse_scenario("mu = -0.1")

    def test_unknown_key_named(self):
        with pytest.raises(ScenarioError, match="unknown key `unknown_key`"):
            parse_scenario("unknown_key = 3")

    def test_parse_error_has_line_number(self):
        with pytest.raises(ScenarioError, match="line 2"):
            parse_scenario("seed = 1\nnot a key value line")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ScenarioError, match="duplicate"):
            parse_scenario("seed = 1\nseed = 2")

    def test_sizes_must_match_clients(self):
        with pytest.raises(ScenarioError, match="`sizes`"):
            parse_scenario("clients = 3\nsizes = 10,20")

    def test_analog_scheme_requires_gradients(self):
        with pytest.raises(ScenarioError):
            parse_scenario("scheme = over-the-air\npayload = weights")

    def test_cs_measurements_must_compress(self):
        with pytest.raises(ScenarioError, match="`measurements`"):
            parse_scenario(
                "scheme = cs-over-the-air\npayload = gradients\n"
                "features = 10\nmeasurements = 10"
            )

    def test_mlp_dimension_derived(self):
        sc = parse_scenario("model = mlp\nfeatures = 4\nhidden = 3")
        assert sc.model_spec.dim == 3 * 4 + 2 * 3 + 1


def run_cli(args):
    return cli.main(args)


BASE = "seed = 9\nrounds = 6\nclients = 5\nclient_size = 10\nfeatures = 8\nmu = 0.1\n"


class TestRunCommand:
    def test_zero_rounds_header_only(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text("seed = 1\nrounds = 0\n")
        assert run_cli(["run", str(f), "--out", str(tmp_path / "out"), "--quiet"]) == 0
        rounds = (tmp_path / "out" / "rounds.csv").read_text().splitlines()
        assert len(rounds) == 1 and rounds[0].startswith("round,")
        budget = (tmp_path / "out" / "budget.csv").read_text().splitlines()
        assert len(budget) == 1

    def test_byte_identical_reruns(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text(BASE + "participation = 0.6\ndelay_jitter = 0.2\ndeadline = 5\n")
        for out in ("a", "b"):
            assert run_cli(["run", str(f), "--out", str(tmp_path / out), "--quiet"]) == 0
        for name in ("rounds.csv", "budget.csv", "summary.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_over_the_air_gain_is_client_count(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text(
            BASE
            + "scheme = over-the-air\npayload = gradients\nantennas = 8\n"
            + "power_cap = 1000000\n"
        )
        out = tmp_path / "out"
        assert run_cli(["run", str(f), "--out", str(out), "--quiet"]) == 0
        summary = dict(
            line.split(" = ") for line in (out / "summary.txt").read_text().splitlines()
        )
        assert float(summary["communication_gain"]) == 5.0

    def test_seed_override_changes_outputs(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text(BASE)
        run_cli(["run", str(f), "--out", str(tmp_path / "a"), "--quiet"])
        run_cli(["run", str(f), "--out", str(tmp_path / "b"), "--seed", "77", "--quiet"])
        assert (tmp_path / "a" / "rounds.csv").read_bytes() != (
            tmp_path / "b" / "rounds.csv"
        ).read_bytes()

    def test_bad_scenario_exits_one(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text("mu = -5")
        assert run_cli(["run", str(f), "--quiet"]) == 1

    def test_missing_file_exits_two(self, tmp_path):
        assert run_cli(["run", str(tmp_path / "missing.cfg"), "--quiet"]) == 2

    def test_summary_recomputable_from_csvs(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text(BASE)
        out = tmp_path / "out"
        run_cli(["run", str(f), "--out", str(out), "--quiet"])
        with open(out / "rounds.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        with open(out / "budget.csv", newline="") as fh:
            brows = list(csv.DictReader(fh))
        summary = dict(
            line.split(" = ") for line in (out / "summary.txt").read_text().splitlines()
        )
        assert float(summary["final_loss"]) == float(rows[-1]["global_loss"])
        assert int(summary["total_uplink_uses"]) == sum(
            int(r["uplink_uses"]) for r in brows
        )
        assert int(summary["total_uplink_bits"]) == sum(
            int(r["uplink_bits"]) for r in brows
        )


class TestCompareCommand:
    def test_scenario_against_itself(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text(BASE)
        out = tmp_path / "out"
        assert run_cli(["compare", str(f), str(f), "--out", str(out), "--quiet"]) == 0
        with open(out / "compare.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert rows[0]["final_loss"] == rows[1]["final_loss"]
        assert float(rows[0]["gain"]) == 1.0 and float(rows[1]["gain"]) == 1.0

    def test_baseline_vs_over_the_air(self, tmp_path):
        a = tmp_path / "baseline.cfg"
        b = tmp_path / "ota.cfg"
        a.write_text(BASE + "payload = gradients\n")
        b.write_text(
            BASE
            + "payload = gradients\nscheme = over-the-air\nantennas = 8\n"
            + "power_cap = 1000000\n"
        )
        out = tmp_path / "out"
        assert run_cli(["compare", str(a), str(b), "--out", str(out), "--quiet"]) == 0
        with open(out / "compare.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        # noiseless solved beamformer: loss trajectories agree closely
        assert float(rows[0]["final_loss"]) == pytest.approx(
            float(rows[1]["final_loss"]), abs=1e-6
        )
        assert float(rows[1]["gain"]) == 5.0

    def test_mismatched_shared_field_rejected(self, tmp_path):
        a = tmp_path / "a.cfg"
        b = tmp_path / "b.cfg"
        a.write_text(BASE)
        b.write_text(BASE + "clients = 3\n")
        assert run_cli(["compare", str(a), str(b), "--quiet"]) == 1

    def test_gain_sweep_over_client_count(self, tmp_path):
        # paired baseline/over-the-air runs at several client counts
        for K in (5, 10, 20):
            f = tmp_path / f"s{K}.cfg"
            f.write_text(
                f"seed = 9\nrounds = 4\nclients = {K}\nclient_size = 5\nfeatures = 8\n"
                "payload = gradients\nscheme = over-the-air\nantennas = 32\n"
                "power_cap = 1000000\n"
            )
            out = tmp_path / f"out{K}"
            assert run_cli(["run", str(f), "--out", str(out), "--quiet"]) == 0
            summary = dict(
                line.split(" = ")
                for line in (out / "summary.txt").read_text().splitlines()
            )
            assert float(summary["communication_gain"]) == float(K)


class TestValidateCommand:
    def test_valid_file(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text("seed = 3\n")
        assert run_cli(["validate", str(f), "--quiet"]) == 0

    def test_invalid_file(self, tmp_path):
        f = tmp_path / "s.cfg"
        f.write_text("participation = 0\n")
        assert run_cli(["validate", str(f), "--quiet"]) == 1

    def test_usage_error_exits_one(self):
        assert run_cli(["frobnicate"]) == 1
