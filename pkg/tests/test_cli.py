"""End-to-end CLI behavior: commands, exit codes, reproducibility."""

import json

import pytest

from barylp.cli import main


def write_problem(tmp_path, doc, name="problem.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def forced_path(tmp_path):
    return write_problem(
        tmp_path,
        {
            "measures": [
                {"points": [[0.0]], "masses": [1.0]},
                {"points": [[1.0]], "masses": [1.0]},
            ]
        },
    )


@pytest.fixture
def small_path(tmp_path):
    return write_problem(
        tmp_path,
        {
            "measures": [
                {"points": [[0.0], [2.0]], "masses": [0.3, 0.7]},
                {"points": [[0.5], [1.5]], "masses": [0.5, 0.5]},
            ]
        },
        name="small.json",
    )


class TestSolve:
    def test_forced_general(self, forced_path, capsys):
        assert main(["solve", "--formulation", "general", forced_path]) == 0
        out = capsys.readouterr().out
        assert "objective: 0.25" in out
        assert "status: optimal" in out

    def test_all_formulations_agree(self, small_path, capsys):
        assert main(["solve", "--formulation", "all", small_path]) == 0
        out = capsys.readouterr().out
        objectives = [
            float(line.split(":")[1]) for line in out.splitlines() if "objective" in line
        ]
        assert len(objectives) == 4
        assert max(objectives) - min(objectives) <= 1e-8

    def test_blowup_exit_code(self, small_path, capsys):
        assert main(["solve", "--cap", "2", small_path]) == 3
        assert "combination blowup" in capsys.readouterr().err

    def test_parse_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        assert main(["solve", str(bad)]) == 2

    def test_solution_written(self, forced_path, tmp_path, capsys):
        out_path = tmp_path / "solution.json"
        assert main(
            ["solve", "--formulation", "general", "--out", str(out_path), forced_path]
        ) == 0
        doc = json.loads(out_path.read_text())
        assert doc["objective"] == pytest.approx(0.25)
        assert doc["support"] == [{"point": [0.5], "mass": 1.0}]

    def test_all_writes_one_solution_per_formulation(self, small_path, tmp_path, capsys):
        out = tmp_path / "sol.json"
        assert main(["solve", "--formulation", "all", "--out", str(out), small_path]) == 0
        for name in ("original", "reduced", "general", "hybrid"):
            doc = json.loads((tmp_path / f"sol-{name}.json").read_text())
            assert doc["status"] == "optimal"

    def test_reproducible_stdout(self, small_path, capsys):
        main(["solve", "--formulation", "all", small_path])
        first = capsys.readouterr().out
        main(["solve", "--formulation", "all", small_path])
        second = capsys.readouterr().out
        assert first == second

    def test_grid_csv_input(self, tmp_path, capsys):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("2,1,0.0,1.0\n1,0.5\n2,0.5\n")
        b.write_text("2,1,0.0,1.0\n1,0.5\n2,0.5\n")
        assert main(
            ["solve", "--format", "grid-csv", "--formulation", "reduced", str(a), str(b)]
        ) == 0
        out = capsys.readouterr().out
        assert "regime grid" in out
        assert "objective: 0" in out

    def test_auto_regime_skips_uneconomical_lattice(self, tmp_path, capsys):
        # sparse points on a very fine lattice: the refined grid would dwarf
        # the combination stream, so auto falls back to the exact regime
        path = write_problem(
            tmp_path,
            {
                "measures": [
                    {"points": [[0.0], [512.0]], "masses": [0.5, 0.5]},
                    {"points": [[1.0], [256.0]], "masses": [0.5, 0.5]},
                ]
            },
        )
        assert main(["solve", "--formulation", "general", path]) == 0
        captured = capsys.readouterr()
        assert "regime exact" in captured.out
        assert "finer than the combination stream" in captured.err

    def test_sparse_raster_pipeline(self, tmp_path, capsys):
        # digit-style input: two sparse 8x8 rasters through the grid regime
        import numpy as np

        rng = np.random.default_rng(5)
        paths = []
        for i in range(2):
            cells = {
                (int(rng.integers(1, 9)), int(rng.integers(1, 9))) for _ in range(12)
            }
            masses = rng.uniform(0.1, 1.0, len(cells))
            masses /= masses.sum()
            lines = ["8,2,0.0,0.0,1.0"] + [
                f"{a},{b},{m:.17g}" for (a, b), m in zip(sorted(cells), masses)
            ]
            path = tmp_path / f"digit{i}.csv"
            path.write_text("\n".join(lines) + "\n")
            paths.append(str(path))
        assert main(
            ["solve", "--format", "grid-csv", "--regime", "grid",
             "--formulation", "reduced", *paths]
        ) == 0
        out = capsys.readouterr().out
        assert "regime grid" in out
        assert "status: optimal" in out
        assert "non-mass-splitting OK" in out

    def test_transportation_requires_two_measures(self, tmp_path, capsys):
        path = write_problem(
            tmp_path,
            {
                "measures": [
                    {"points": [[0.0]], "masses": [1.0]},
                    {"points": [[1.0]], "masses": [1.0]},
                    {"points": [[2.0]], "masses": [1.0]},
                ]
            },
        )
        assert main(["solve", "--formulation", "transportation", path]) == 2


class TestGen:
    def test_general_then_solve(self, tmp_path, capsys):
        out = tmp_path / "gen.json"
        assert main(
            ["gen", "general", "-n", "2", "-p", "2", "-d", "1", "--seed", "3", "--out", str(out)]
        ) == 0
        capsys.readouterr()
        assert main(["solve", "--formulation", "all", str(out)]) == 0

    def test_grid_detected_as_lattice(self, tmp_path, capsys):
        out = tmp_path / "grid.json"
        assert main(
            ["gen", "grid", "-n", "2", "-K", "3", "-d", "1", "--seed", "1", "--out", str(out)]
        ) == 0
        capsys.readouterr()
        assert main(["solve", "--formulation", "reduced", str(out)]) == 0
        assert "regime grid" in capsys.readouterr().out

    def test_mixed_shape(self, tmp_path, capsys):
        out = tmp_path / "mixed.json"
        assert main(
            ["gen", "mixed", "-n", "3", "-K", "2", "--extra", "1", "--seed", "2", "--out", str(out)]
        ) == 0
        doc = json.loads(out.read_text())
        assert len(doc["measures"]) == 3
        assert all(len(m["points"]) == 5 for m in doc["measures"])

    def test_stdout_output(self, capsys):
        assert main(["gen", "general", "-n", "2", "-p", "2", "-d", "1"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert len(doc["measures"]) == 2


class TestSizes:
    def test_headline_reduction_at_256(self, capsys):
        assert main(["sizes", "--regime", "general", "-n", "4", "-p", "256"]) == 0
        out = capsys.readouterr().out
        assert "large-n limit 99.6094%" in out
        assert "reduction reduced->general: 80.0000%" in out

    def test_compare_pair(self, capsys):
        assert main(
            ["sizes", "--regime", "general", "-n", "4", "-p", "256",
             "--compare", "reduced", "general"]
        ) == 0
        assert "80.0000%" in capsys.readouterr().out

    def test_grid_original_row(self, capsys):
        assert main(
            ["sizes", "--regime", "grid", "-n", "4", "-K", "4", "-d", "2",
             "--formulation", "original"]
        ) == 0
        out = capsys.readouterr().out
        assert "10985" in out and "740" in out

    def test_unsupported_grid_closed_form(self, capsys):
        assert main(
            ["sizes", "--regime", "grid", "-n", "4", "-K", "4", "-d", "2",
             "--formulation", "reduced"]
        ) == 2


class TestCompare:
    def test_general_position_general_equals_hybrid(self, small_path, capsys):
        assert main(["compare", small_path]) == 0
        out = capsys.readouterr().out
        rows = {
            line.split()[0]: line.split()[1:4]
            for line in out.splitlines()
            if line.split() and line.split()[0] in ("original", "reduced", "general", "hybrid")
        }
        assert rows["general"] == rows["hybrid"]
        assert "objective agreement: OK" in out

    def test_grid_reduced_smaller_than_original(self, tmp_path, capsys):
        out = tmp_path / "grid.json"
        main(["gen", "grid", "-n", "3", "-K", "3", "-d", "2", "--seed", "5", "--out", str(out)])
        capsys.readouterr()
        assert main(["compare", str(out)]) == 0
        text = capsys.readouterr().out
        cols = {}
        for line in text.splitlines():
            parts = line.split()
            if parts and parts[0] in ("original", "reduced", "general", "hybrid"):
                cols[parts[0]] = int(parts[2])
        assert cols["reduced"] < cols["original"]

    def test_mixed_hybrid_has_fewest_columns(self, tmp_path, capsys):
        out = tmp_path / "mixed.json"
        main(["gen", "mixed", "-n", "3", "-K", "3", "--extra", "1", "--seed", "7", "--out", str(out)])
        capsys.readouterr()
        assert main(["compare", "--regime", "exact", str(out)]) == 0
        text = capsys.readouterr().out
        cols = {}
        for line in text.splitlines():
            parts = line.split()
            if parts and parts[0] in ("original", "reduced", "general", "hybrid"):
                cols[parts[0]] = int(parts[2])
        assert cols["hybrid"] < min(cols["reduced"], cols["general"], cols["original"])


class TestExport:
    def test_transportation_row_count(self, small_path, tmp_path, capsys):
        prefix = str(tmp_path / "model")
        assert main(
            ["export", "--formulation", "transportation", "--out", prefix, small_path]
        ) == 0
        text = (tmp_path / "model-transportation.mps").read_text()
        rows = [ln for ln in text.splitlines() if ln.startswith(" E")]
        assert len(rows) == 4  # n * p = 2 * 2

    def test_all_formulations_write_four_files(self, small_path, tmp_path, capsys):
        prefix = str(tmp_path / "out")
        assert main(["export", "--formulation", "all", "--out", prefix, small_path]) == 0
        for name in ("original", "reduced", "general", "hybrid"):
            assert (tmp_path / f"out-{name}.mps").exists()

    def test_transportation_needs_two_measures(self, tmp_path, capsys):
        path = write_problem(
            tmp_path,
            {
                "measures": [
                    {"points": [[0.0]], "masses": [1.0]},
                    {"points": [[1.0]], "masses": [1.0]},
                    {"points": [[2.0]], "masses": [1.0]},
                ]
            },
        )
        assert main(["export", "--formulation", "transportation", path]) == 2
        assert "n=2" in capsys.readouterr().err


class TestRender:
    def solve_to_json(self, tmp_path, doc, capsys):
        src = write_problem(tmp_path, doc, name="render-problem.json")
        out = tmp_path / "sol.json"
        code = main(["solve", "--formulation", "general", "--out", str(out), src])
        capsys.readouterr()
        assert code == 0
        return out

    def test_single_point_single_cell(self, tmp_path, capsys):
        sol = self.solve_to_json(
            tmp_path,
            {
                "measures": [
                    {"points": [[0.0, 0.0]], "masses": [1.0]},
                    {"points": [[1.0, 1.0]], "masses": [1.0]},
                ]
            },
            capsys,
        )
        prefix = str(tmp_path / "img")
        assert main(["render", str(sol), "--out", prefix]) == 0
        pgm = (tmp_path / "img.pgm").read_text().splitlines()
        assert pgm[0] == "P2"
        cells = " ".join(pgm[3:]).split()
        assert sum(1 for c in cells if c != "0") == 1

    def test_nonzero_cells_match_support(self, tmp_path, capsys):
        gen_out = tmp_path / "mixed.json"
        main(["gen", "mixed", "-n", "3", "-K", "2", "--extra", "1", "--seed", "9", "--out", str(gen_out)])
        sol_out = tmp_path / "sol.json"
        assert main(
            ["solve", "--formulation", "general", "--regime", "exact",
             "--out", str(sol_out), str(gen_out)]
        ) == 0
        capsys.readouterr()
        prefix = str(tmp_path / "img")
        assert main(["render", str(sol_out), "--out", prefix]) == 0
        support_size = len(json.loads(sol_out.read_text())["support"])
        pgm = (tmp_path / "img.pgm").read_text().splitlines()
        cells = " ".join(pgm[3:]).split()
        assert sum(1 for c in cells if c != "0") == support_size
        csv_rows = (tmp_path / "img.csv").read_text().splitlines()[1:]
        assert len(csv_rows) == support_size

    def test_refuses_non_planar(self, tmp_path, capsys):
        sol = self.solve_to_json(
            tmp_path,
            {
                "measures": [
                    {"points": [[0.0, 0.0, 0.0]], "masses": [1.0]},
                    {"points": [[1.0, 1.0, 1.0]], "masses": [1.0]},
                ]
            },
            capsys,
        )
        assert main(["render", str(sol)]) == 2
        assert "2-dimensional" in capsys.readouterr().err
