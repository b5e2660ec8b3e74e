"""End-to-end checks of the command-line surface.

Runs main() in process so exit codes, stdout, and written files are all
observable. The reproducibility tests compare full byte strings: same
argv and seed must give identical output.
"""

import json
import math

import pytest

from dpcomp.calibration import HistogramSpec, solve_sigma_zcdp
from dpcomp.cli import figure_data, load_histogram_counts, main, tokenize
from dpcomp.mechanisms import RngState, histogram_from_text, known_lap_topk
from dpcomp.nonadaptive import CompositionQuery, delta_opt_mixed, eps_inverse
from dpcomp.setwise import Cdp, PureDP, SetwiseAccountant, Zcdp

CORPUS = "the quick brown fox jumps over the lazy dog the fox the dog\n"


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text(CORPUS)
    return str(path)


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestExitCodes:
    def test_success_is_zero(self, capsys):
        code, out, _ = run(capsys, ["compose", "dp", "--k", "3", "--eps", "0.5", "--eps-g", "0.7"])
        assert code == 0
        assert float(out) > 0

    def test_unknown_kind_is_usage_error(self, capsys):
        code, _, _ = run(capsys, ["compose", "wrongkind", "--k", "3", "--eps", "0.5"])
        assert code == 2

    def test_negative_k_is_usage_error(self, capsys):
        code, _, err = run(capsys, ["compose", "dp", "--k", "-3", "--eps", "0.5", "--eps-g", "0.5"])
        assert code == 2
        assert "k" in err

    def test_malformed_grid_is_usage_error(self, capsys):
        code, _, _ = run(capsys, ["compose", "dp", "--k", "3", "--eps", "0.5", "--eps-g-grid", "0:1"])
        assert code == 2

    def test_invert_without_delta_is_usage_error(self, capsys):
        code, _, _ = run(capsys, ["compose", "dp", "--k", "3", "--eps", "0.5", "--invert"])
        assert code == 2

    def test_adaptive_invert_unsupported(self, capsys):
        code, _, _ = run(
            capsys,
            ["compose", "adaptive", "--slots", "dp,br", "--eps", "1.0", "--invert", "--delta", "1e-6"],
        )
        assert code == 2

    def test_exhausted_solver_is_exit_three(self, capsys):
        code, _, err = run(
            capsys,
            ["calibrate", "--route", "analytic", "--eps", "2.08", "--delta", "1e-6",
             "--delta0", "25", "--max-iter", "1"],
        )
        assert code == 3
        assert "converge" in err

    def test_missing_input_is_exit_four(self, capsys):
        code, _, _ = run(capsys, ["compose", "setwise", "--config", "/does/not/exist.json"])
        assert code == 4

    def test_unwritable_output_is_exit_four(self, capsys):
        code, _, _ = run(
            capsys,
            ["compose", "dp", "--k", "3", "--eps", "0.5", "--eps-g-grid", "0:1:0.5",
             "--output", "/does/not/exist/out.csv"],
        )
        assert code == 4


class TestComposeCommand:
    def test_invert_matches_library(self, capsys):
        code, out, _ = run(
            capsys,
            ["compose", "dp", "--k", "25", "--eps", "0.1", "--invert", "--delta", "1e-6"],
        )
        assert code == 0
        want = eps_inverse(1e-6, "dp", 25, 0.1)
        assert float(out) == want
        assert float(out) == pytest.approx(2.08, abs=0.01)

    def test_grid_csv_matches_library(self, capsys):
        code, out, _ = run(
            capsys,
            ["compose", "mixed", "--k", "4", "--m", "2", "--eps", "0.5", "--eps-g-grid", "0:1:0.5"],
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0].startswith("# params: ")
        assert lines[1] == "eps_g,delta"
        assert len(lines) == 5
        for line in lines[2:]:
            eg, delta = (float(x) for x in line.split(","))
            want = delta_opt_mixed(CompositionQuery(k=4, m=2, eps=0.5, eps_g=eg))
            assert delta == want  # 17g survives the round trip exactly

    def test_adaptive_single_point(self, capsys):
        code, out, _ = run(
            capsys,
            ["compose", "adaptive", "--slots", "dp,br,br", "--eps", "1.0", "--eps-g", "0.5"],
        )
        assert code == 0
        assert 0 < float(out) < 1

    def test_setwise_routes(self, capsys, tmp_path):
        acc = SetwiseAccountant()
        acc.register(PureDP(0.5)).register(Cdp(0.1, 0.4))
        cdp_path = tmp_path / "cdp.json"
        cdp_path.write_text(acc.to_json())
        code, out, _ = run(capsys, ["compose", "setwise", "--config", str(cdp_path), "--delta", "1e-6"])
        assert code == 0
        assert float(out) == acc.global_bound_cdp(1e-6)

        acc2 = SetwiseAccountant()
        acc2.register(PureDP(0.5)).register(Zcdp(1e-7, 0.0, 0.05))
        z_path = tmp_path / "z.json"
        z_path.write_text(acc2.to_json())
        code, out, _ = run(capsys, ["compose", "setwise", "--config", str(z_path), "--delta", "1e-6"])
        assert code == 0
        eps_g, total = (float(x) for x in out.split())
        want_eps, want_total = acc2.global_bound_zcdp(1e-6)
        assert (eps_g, total) == (want_eps, want_total)


class TestCsvFormat:
    def test_provenance_line_and_precision(self, capsys):
        code, out, _ = run(
            capsys,
            ["compose", "dp", "--k", "3", "--eps", "0.1", "--eps-g-grid", "0:0.2:0.1"],
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0].startswith("# params: ")
        assert "eps=0.1" in lines[0]
        # every numeric cell must round-trip through float() exactly
        for line in lines[2:]:
            for cell in line.split(","):
                value = float(cell)
                assert f"{value:.17g}" == cell

    def test_json_format_parses(self, capsys):
        code, out, _ = run(
            capsys,
            ["compose", "dp", "--k", "3", "--eps", "0.1", "--eps-g-grid", "0:0.2:0.1",
             "--format", "json"],
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["params"]["k"] == 3
        assert len(payload["rows"]) == 3
        assert set(payload["rows"][0]) == {"eps_g", "delta"}


class TestReproducibility:
    def test_same_seed_same_bytes(self, capsys, corpus_file):
        argv = ["topk", "--mode", "lsnoise", "--input", corpus_file, "--k", "3",
                "--eps", "1.0", "--sigma", "2.0", "--seed", "11"]
        _, first, _ = run(capsys, argv)
        _, second, _ = run(capsys, argv)
        assert first == second
        assert first.strip()

    def test_figure_files_are_byte_identical(self, capsys, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert main(["figures", "6", "--seed", "4", "--output", str(a)]) == 0
        assert main(["figures", "6", "--seed", "4", "--output", str(b)]) == 0
        capsys.readouterr()
        assert a.read_bytes() == b.read_bytes()

    def test_env_seed_matches_explicit_seed(self, capsys, corpus_file, monkeypatch):
        argv = ["topk", "--mode", "known-lap", "--input", corpus_file, "--k", "2", "--eps", "1.0"]
        monkeypatch.setenv("DPCOMP_SEED", "7")
        _, via_env, _ = run(capsys, argv)
        monkeypatch.delenv("DPCOMP_SEED")
        _, via_flag, _ = run(capsys, argv + ["--seed", "7"])
        _, via_default, _ = run(capsys, argv)
        assert via_env == via_flag
        assert via_default != via_env  # default seed is 0

    def test_bad_env_seed_is_usage_error(self, capsys, corpus_file, monkeypatch):
        monkeypatch.setenv("DPCOMP_SEED", "not-a-number")
        code, _, _ = run(
            capsys,
            ["topk", "--mode", "known-lap", "--input", corpus_file, "--k", "2", "--eps", "1.0"],
        )
        assert code == 2


class TestTopkCommand:
    def test_known_lap_matches_library(self, capsys, corpus_file):
        code, out, _ = run(
            capsys,
            ["topk", "--mode", "known-lap", "--input", corpus_file, "--k", "3",
             "--eps", "1.0", "--seed", "7"],
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[1] == "rank,element,noisy_count"
        rows = [line.split(",") for line in lines[2:]]
        assert [r[0] for r in rows] == ["1", "2", "3"]

        tokens = tokenize(CORPUS)
        d = len(set(tokens))
        spec = HistogramSpec(d=d, delta0=3, tau=1.0, d_bar=d)
        hist = histogram_from_text(tokens, spec=spec)
        want = known_lap_topk(hist, 3, 1.0, RngState(7))
        assert [(r[1], float(r[2])) for r in rows] == want

    def test_all_modes_run(self, capsys, corpus_file):
        for extra in (
            ["--mode", "known-lap", "--k", "2", "--eps", "1.0"],
            ["--mode", "known-gauss", "--sigma", "2.0", "--k", "2"],
            ["--mode", "lsnoise", "--k", "2", "--eps", "1.0", "--sigma", "2.0"],
            ["--mode", "trunc-gauss", "--sigma", "1.2", "--delta", "1e-3", "--delta0", "1"],
        ):
            code, out, _ = run(capsys, ["topk", "--input", corpus_file, "--seed", "3"] + extra)
            assert code == 0
            assert out.splitlines()[1] == "rank,element,noisy_count"

    def test_missing_mode_flags_are_usage_errors(self, capsys, corpus_file):
        code, _, _ = run(capsys, ["topk", "--mode", "lsnoise", "--input", corpus_file, "--k", "2"])
        assert code == 2

    def test_json_counts_input(self, capsys, tmp_path):
        path = tmp_path / "counts.json"
        path.write_text(json.dumps({"a": 50, "b": 30, "c": 5}))
        code, out, _ = run(
            capsys,
            ["topk", "--mode", "known-lap", "--input", str(path), "--k", "2",
             "--eps", "2.0", "--seed", "1"],
        )
        assert code == 0
        elements = {line.split(",")[1] for line in out.strip().splitlines()[2:]}
        assert elements <= {"a", "b", "c"}

    def test_csv_counts_input(self, tmp_path):
        path = tmp_path / "counts.csv"
        path.write_text("# a comment\nelement,count\na,50\nb,30\nc,5\n")
        assert load_histogram_counts(str(path)) == {"a": 50.0, "b": 30.0, "c": 5.0}

    def test_text_input_tokenizes_lowercase(self, tmp_path):
        path = tmp_path / "doc.txt"
        path.write_text("Dog, dog; CAT!\ncat cat")
        assert load_histogram_counts(str(path)) == {"dog": 2.0, "cat": 3.0}


class TestAuditCommand:
    def test_report_json_has_verdict(self, capsys):
        code, out, _ = run(
            capsys,
            ["audit", "two-point", "--eps", "1.0", "--t", "0.5", "--eps-g", "1.0",
             "--trials", "100000", "--seed", "3"],
        )
        assert code == 0
        report = json.loads(out)
        assert report["verdict"] in ("consistent", "violation")
        assert report["empirical_delta"] <= report["bound_delta"] + 3 * report["std_error"]

    def test_trunc_gauss_audit_runs(self, capsys):
        code, out, _ = run(
            capsys,
            ["audit", "trunc-gauss", "--sigma", "2.0", "--delta", "1e-4",
             "--trials", "100000", "--seed", "1"],
        )
        assert code == 0
        report = json.loads(out)
        assert report["verdict"] == "consistent"
        assert report["metadata"]["conversion_delta"] == 1e-6


class TestCalibrateCommand:
    def test_zcdp_route_matches_library(self, capsys):
        code, out, _ = run(
            capsys,
            ["calibrate", "--route", "zcdp", "--eps", "2.0790564717026427",
             "--delta", "1e-6", "--delta0", "25"],
        )
        assert code == 0
        assert float(out) == solve_sigma_zcdp(2.0790564717026427, 25, 1e-6)
        assert float(out) == pytest.approx(13.1, abs=0.05)

    def test_analytic_route_scales_by_sqrt_delta0(self, capsys):
        _, unit, _ = run(
            capsys, ["calibrate", "--route", "analytic", "--eps", "1.0", "--delta", "1e-6"]
        )
        _, scaled, _ = run(
            capsys,
            ["calibrate", "--route", "analytic", "--eps", "1.0", "--delta", "1e-6",
             "--delta0", "4"],
        )
        assert float(scaled) == pytest.approx(2.0 * float(unit), rel=1e-12)


class TestFigureData:
    def test_all_figures_have_rows(self):
        for n in range(1, 8):
            params, header, rows = figure_data(n, seed=0)
            assert params["figure"] == n
            assert rows and all(len(row) == len(header) for row in rows)

    def test_unknown_figure_rejected(self):
        with pytest.raises(ValueError):
            figure_data(8)

    def test_figures_command_writes_file(self, capsys, tmp_path):
        code, out, _ = run(capsys, ["figures", "7", "--output-dir", str(tmp_path)])
        assert code == 0
        path = tmp_path / "fig7.csv"
        assert str(path) in out
        lines = path.read_text().splitlines()
        assert lines[1] == "delta0,sigma,t_level"
        assert len(lines) == 52

    def test_figure_three_ratio_at_least_one(self):
        _, header, rows = figure_data(3, seed=0)
        ratio_col = header.index("ratio")
        assert all(row[ratio_col] >= 1.0 for row in rows)
