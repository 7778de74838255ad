import json
import pathlib

import numpy as np
import pytest

from lambdakit import cli, layer
from lambdakit.relpos import grid
from lambdakit.tensor import load_tensor

GOLDEN = pathlib.Path(__file__).parent / "golden"


def run_json(capsys, argv):
    code = cli.main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out)


class TestVerifyCommand:
    def test_green_suites_exit_zero(self, capsys):
        code, report = run_json(capsys, ["verify", "--suite", "tensor,relpos"])
        assert code == 0
        assert report["schema"] == 1
        assert report["failing_properties"] == []
        names = {s["suite"] for s in report["suites"]}
        assert names == {"tensor", "relpos"}

    def test_mutation_is_caught_and_named(self, capsys):
        code, report = run_json(
            capsys, ["verify", "--suite", "oracle", "--mutate", "content_lambda_sign_flip"]
        )
        assert code == 1
        assert "forward_vs_per_query_oracle" in report["failing_properties"]

    def test_unknown_suite_usage_error(self, capsys):
        code = cli.main(["verify", "--suite", "astrology"])
        assert code == 2

    def test_report_reproducible_bit_identical(self, capsys):
        _, a = run_json(capsys, ["verify", "--suite", "oracle", "--seed", "5"])
        _, b = run_json(capsys, ["verify", "--suite", "oracle", "--seed", "5"])
        assert cli.strip_timings(a) == cli.strip_timings(b)
        assert json.dumps(cli.strip_timings(a), sort_keys=True) == json.dumps(
            cli.strip_timings(b), sort_keys=True
        )

    def test_report_embeds_config(self, capsys):
        _, report = run_json(capsys, ["verify", "--suite", "tensor", "--seed", "7"])
        assert report["config"]["seed"] == 7
        assert report["config"]["suite"] == "tensor"


class TestGradcheckCommand:
    @pytest.mark.parametrize("variant", ["global", "masked", "content-only"])
    def test_variants_pass(self, capsys, variant):
        code, report = run_json(capsys, ["gradcheck", "--variant", variant])
        assert code == 0
        assert report["passed"] is True
        assert report["max_rel_err"] < 1e-6
        assert all("worst_index" in entry for entry in report["per_parameter"].values())

    def test_scoped_needs_scope(self, capsys):
        assert cli.main(["gradcheck", "--variant", "conv"]) == 2

    def test_intra_depth_with_u(self, capsys):
        code, report = run_json(capsys, ["gradcheck", "--variant", "intra-depth", "--u", "3"])
        assert code == 0 and report["passed"]


class TestMemmodelCommand:
    def test_default_reproduces_reference_rows(self, capsys):
        code, report = run_json(capsys, ["memmodel"])
        assert code == 0
        rows = report["rows"]
        assert abs(rows["lambda"]["gib"] - 1.9) / 1.9 < 0.02
        assert abs(rows["lambda_shared"]["gib"] - 0.63) / 0.63 < 0.02
        assert abs(rows["axial_attention"]["gib"] - 4.8) / 4.8 < 0.02
        assert abs(rows["attention"]["gib"] - 120.0) / 120.0 < 0.15

    def test_csv_format(self, capsys):
        code = cli.main(["memmodel", "--format", "csv"])
        out = capsys.readouterr().out
        assert code == 0
        assert out.splitlines()[0] == "key,value"
        assert any("rows.lambda.gib" in line for line in out.splitlines())

    def test_out_file(self, tmp_path, capsys):
        dest = tmp_path / "mem.json"
        code = cli.main(["memmodel", "--out", str(dest)])
        assert code == 0
        assert json.loads(dest.read_text())["schema"] == 1


class TestBenchCommand:
    def test_tiny_sweep_rows(self):
        from lambdakit.bench import sweep_conv, sweep_global

        rows_c = sweep_conv(ns=(8, 16), b=1, iterations=2, warmup=1)
        rows_g = sweep_global(ns=(8, 16), b=1, iterations=2, warmup=1)
        assert all(r["median_s"] > 0 for r in rows_c + rows_g)
        assert rows_c[0]["multiplies"] < rows_c[1]["multiplies"]
        assert all(r["p10_s"] <= r["p90_s"] for r in rows_c + rows_g)


class TestTrainToyCommand:
    def test_content_only_short_run(self, capsys):
        code, report = run_json(
            capsys,
            ["train-toy", "--mode", "content-only", "--steps", "40", "--seeds", "1"],
        )
        assert code == 0
        assert report["marker_permutation_logit_gap"] == 0.0
        run = report["runs"][0]
        assert run["mode"] == "content-only"
        assert len(run["accuracy_curve"]) >= 1


class TestGoldenFixtures:
    def test_forward_matches_stored_oracle_output(self):
        X = load_tensor(GOLDEN / "grid3x3_x.ltns")
        params = layer.LambdaParams(
            w_q=load_tensor(GOLDEN / "grid3x3_wq.ltns"),
            w_k=load_tensor(GOLDEN / "grid3x3_wk.ltns"),
            w_v=load_tensor(GOLDEN / "grid3x3_wv.ltns"),
            rel=load_tensor(GOLDEN / "grid3x3_rel.ltns"),
        )
        config = layer.LambdaConfig(d_in=3, d_out=4, k=2, h=2, geometry=grid(3, 3))
        want = load_tensor(GOLDEN / "grid3x3_y.ltns")
        got = layer.lambda_layer_forward(X, None, params, config)
        assert np.abs(got - want).max() < 1e-12
