import json

import numpy as np
import pytest

from builtin_examples import BUILTIN_NAMES, KNOTS, SURFACE_TABLE, builtin_config
from cli_io import (
    EXIT_INVALID,
    EXIT_IO,
    EXIT_OK,
    EXIT_VERIFY_FAILED,
    build_context,
    load_config,
    main,
    parse_config,
    run,
    write_csv,
    write_pgm,
)
from models import ConfigError, SampledField1D, SampledField2D, TrajectoryCloud


def _write_config(tmp_path, raw, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return path


def _small(name, **solver):
    raw = builtin_config(name)
    raw["chaos"] = {"points": 5000, "burn_in": 100, "seed": 0}
    raw["solver"].update(solver)
    return raw


class TestLoadConfig:
    def test_builtin_config_one(self, tmp_path):
        config = load_config(_write_config(tmp_path, builtin_config("1d-config-1")))
        assert config.dimension == 1
        assert config.dataset.ys == [20.0, 30.0, 10.0, 50.0, 40.0]
        assert config.factors.s == [0.3, 0.85, 0.8, 0.5]

    def test_every_builtin_parses(self):
        for name in BUILTIN_NAMES:
            assert parse_config(builtin_config(name)).dimension in (1, 2)

    def test_short_factor_list(self, tmp_path):
        raw = builtin_config("1d-config-3")
        raw["factors"]["s"] = raw["factors"]["s"][:3]
        with pytest.raises(ConfigError) as exc:
            load_config(_write_config(tmp_path, raw))
        assert exc.value.path == "factors.s"

    def test_domain_of_one_region(self, tmp_path):
        raw = builtin_config("1d-zero")
        raw["partition"]["domains"] = [[0, 1], [1, 4]]
        with pytest.raises(ConfigError, match="at least 2") as exc:
            load_config(_write_config(tmp_path, raw))
        assert exc.value.path == "partition"

    def test_unknown_field(self, tmp_path):
        raw = builtin_config("1d-zero")
        raw["colour"] = "blue"
        with pytest.raises(ConfigError) as exc:
            load_config(_write_config(tmp_path, raw))
        assert exc.value.path == "colour"

    def test_schema_path_is_dotted(self):
        raw = builtin_config("1d-zero")
        raw["chaos"]["points"] = 0
        with pytest.raises(ConfigError) as exc:
            parse_config(raw)
        assert exc.value.path == "chaos.points"

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{\"dimension\": 1,")
        with pytest.raises(ConfigError, match="malformed JSON"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_config(tmp_path / "absent.json")

    def test_surface_table_shape(self):
        raw = builtin_config("2d-zero")
        raw["dataset"]["zss"] = raw["dataset"]["zss"][:4]
        with pytest.raises(ConfigError) as exc:
            build_context(parse_config(raw))
        assert exc.value.path == "dataset.zss"

    def test_generated_hidden_values(self):
        raw = builtin_config("1d-mild")
        raw["dataset"]["zs"] = {"hidden": {"low": -1.0, "high": 1.0, "seed": 5}}
        first = build_context(parse_config(raw))
        second = build_context(parse_config(raw))
        np.testing.assert_array_equal(first.dataset.zs, second.dataset.zs)
        assert np.all(np.abs(first.dataset.zs) <= 1.0)
        assert np.any(first.dataset.zs != 0.0)

    def test_bound_overrides(self):
        raw = builtin_config("1d-zero")
        for name in ("s", "s_prime", "s_tilde", "s_tilde_prime"):
            raw["factors"][name] = [{"expr": "0.1*sin(x)", "sup": 0.1, "lipschitz": 0.1}] * 4
        ctx = build_context(parse_config(raw))
        assert ctx.report.bounds_mode.value == "user-supplied"
        assert ctx.report.S_bar == pytest.approx(0.2)


class TestWriters:
    def test_curve_csv(self, tmp_path):
        field = SampledField1D(grid=np.array(KNOTS), values=np.column_stack([[20, 30, 10, 50, 40], np.zeros(5)]))
        write_csv(field, tmp_path / "field.csv")
        lines = (tmp_path / "field.csv").read_text().split("\n")
        assert lines[0] == "x,f1,f2"
        assert lines[3] == "0.5,10,0"
        assert lines[-1] == ""

    def test_surface_csv_is_y_outer(self, tmp_path):
        values = np.stack([np.array(SURFACE_TABLE), np.zeros((5, 5))], axis=-1)
        write_csv(SampledField2D(gx=np.array(KNOTS), gy=np.array(KNOTS), values=values), tmp_path / "f.csv")
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert lines[0] == "x,y,f1,f2"
        assert lines[1] == "0,0,46,0"
        assert lines[2] == "0.25,0,32,0"
        assert lines[6] == "0,0.25,32,0"
        assert len(lines) == 26

    def test_empty_cloud_writes_header(self, tmp_path):
        cloud = TrajectoryCloud(points=np.empty((0, 3)), regions=np.empty(0, dtype=int), seed=0, burn_in=0)
        write_csv(cloud, tmp_path / "cloud.csv")
        assert (tmp_path / "cloud.csv").read_text().splitlines() == ["x,f1,f2"]

    def test_full_precision(self, tmp_path):
        field = SampledField1D(grid=np.array([0.0, 1.0]), values=np.array([[0.1, 1 / 3], [2.0, 0.0]]))
        write_csv(field, tmp_path / "p.csv")
        row = (tmp_path / "p.csv").read_text().splitlines()[1].split(",")
        assert float(row[1]) == 0.1
        assert float(row[2]) == 1 / 3

    def test_surface_pgm(self, tmp_path):
        values = np.stack([np.array(SURFACE_TABLE), np.zeros((5, 5))], axis=-1)
        path = tmp_path / "field.pgm"
        write_pgm(SampledField2D(gx=np.array(KNOTS), gy=np.array(KNOTS), values=values), path)
        data = path.read_bytes()
        header = b"P5\n5 5\n255\n"
        assert data.startswith(header)
        image = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(5, 5)
        # top row is y = 1; table maximum 88 at (x_2, y_4), minimum 23 at (x_1, y_1)
        assert image[0, 2] == 255
        assert image[3, 1] == 0
        assert (tmp_path / "field.pgm.txt").read_text() == "min 23.0\nmax 88.0\n"

    def test_flat_field_is_mid_grey(self, tmp_path):
        field = SampledField2D(gx=np.array(KNOTS), gy=np.array(KNOTS), values=np.full((5, 5, 2), 7.0))
        write_pgm(field, tmp_path / "flat.pgm")
        data = (tmp_path / "flat.pgm").read_bytes()
        assert set(data[len(b"P5\n5 5\n255\n"):]) == {128}

    def test_curve_pgm_has_one_pixel_per_column(self, tmp_path):
        grid = np.linspace(0, 1, 64)
        field = SampledField1D(grid=grid, values=np.column_stack([np.sin(6 * grid), grid]))
        write_pgm(field, tmp_path / "curve.pgm")
        data = (tmp_path / "curve.pgm").read_bytes()
        header = b"P5\n64 256\n255\n"
        image = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(256, 64)
        assert data.startswith(header)
        np.testing.assert_array_equal((image == 255).sum(axis=0), 1)

    def test_single_pixel_grid_rejected(self, tmp_path):
        field = SampledField2D(gx=np.array([0.0]), gy=np.array([0.0, 1.0]), values=np.zeros((1, 2, 2)))
        with pytest.raises(ValueError, match="cannot render"):
            write_pgm(field, tmp_path / "tiny.pgm")


class TestRun:
    def test_validate_zero_factors(self, tmp_path):
        code = run("validate", parse_config(builtin_config("1d-zero")), out_dir=str(tmp_path))
        assert code == EXIT_OK
        certificate = json.loads((tmp_path / "certificate.json").read_text())
        assert certificate["certified"] is True
        assert certificate["S_bar"] == 0.0

    def test_solve_writes_field(self, tmp_path):
        code = run("solve", parse_config(builtin_config("1d-zero")), out_dir=str(tmp_path))
        assert code == EXIT_OK
        lines = (tmp_path / "field.csv").read_text().splitlines()
        assert lines[0] == "x,f1,f2"
        assert "0.5,10,0" in lines
        summary = json.loads((tmp_path / "solve.json").read_text())
        assert summary["converged"] is True

    def test_uncertified_solve_still_succeeds(self, tmp_path, capsys):
        config = parse_config(_small("1d-config-3", max_iter=200))
        assert run("solve", config, out_dir=str(tmp_path)) == EXIT_OK
        assert json.loads((tmp_path / "solve.json").read_text())["certified"] is False
        assert "not certified" in capsys.readouterr().out

    def test_chaos_and_render(self, tmp_path):
        config = parse_config(_small("1d-mild", grid_points=513))
        assert run("chaos", config, out_dir=str(tmp_path), seed=3) == EXIT_OK
        assert run("render", config, out_dir=str(tmp_path)) == EXIT_OK
        cloud = (tmp_path / "cloud.csv").read_text().splitlines()
        assert len(cloud) == 1 + 4900
        assert (tmp_path / "field.pgm").read_bytes().startswith(b"P5\n")

    def test_chaos_is_reproducible(self, tmp_path):
        config = parse_config(_small("2d-mild", grid=[17, 17]))
        run("chaos", config, out_dir=str(tmp_path / "a"), seed=9)
        run("chaos", config, out_dir=str(tmp_path / "b"), seed=9)
        assert (tmp_path / "a" / "cloud.csv").read_bytes() == (tmp_path / "b" / "cloud.csv").read_bytes()

    def test_verify_mild(self, tmp_path):
        config = parse_config(_small("1d-mild"))
        assert run("verify", config, out_dir=str(tmp_path)) == EXIT_OK
        report = json.loads((tmp_path / "verify.json").read_text())
        assert report["passed"] is True
        assert {r["check"] for r in report["reports"]} >= {"knot_interpolation", "cloud_vs_field"}

    def test_verify_non_converged_fails(self, tmp_path):
        config = parse_config(_small("1d-config-1", grid_points=257, max_iter=3))
        assert run("solve", config, out_dir=str(tmp_path)) == EXIT_OK
        assert run("verify", config, out_dir=str(tmp_path)) == EXIT_VERIFY_FAILED

    def test_invalid_expression_exit_code(self, tmp_path):
        raw = builtin_config("1d-zero")
        raw["factors"]["s"][0] = "2.9x"
        assert run("validate", parse_config(raw), out_dir=str(tmp_path)) == EXIT_INVALID


class TestMain:
    def test_list(self, capsys):
        assert main(["list"]) == EXIT_OK
        out = capsys.readouterr().out.split()
        assert out == BUILTIN_NAMES

    def test_example(self, tmp_path):
        assert main(["example", "1d-zero", "--out", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "field.csv").exists()
        assert (tmp_path / "field.pgm.txt").exists()

    def test_example_with_verify(self, tmp_path):
        assert main(["example", "2d-zero", "--out", str(tmp_path), "--verify"]) == EXIT_OK
        assert json.loads((tmp_path / "verify.json").read_text())["passed"] is True

    def test_missing_config_is_io_error(self, tmp_path):
        assert main(["solve", "--config", str(tmp_path / "absent.json")]) == EXIT_IO

    def test_invalid_config_exit_code(self, tmp_path):
        raw = builtin_config("1d-zero")
        raw["dimension"] = 3
        path = _write_config(tmp_path, raw)
        assert main(["validate", "--config", str(path), "--out", str(tmp_path)]) == EXIT_INVALID

    def test_out_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HVRFIF_OUT_DIR", str(tmp_path / "env-out"))
        path = _write_config(tmp_path, builtin_config("1d-zero"))
        assert main(["validate", "--config", str(path)]) == EXIT_OK
        assert (tmp_path / "env-out" / "certificate.json").exists()

    def test_bad_thread_setting(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HVRFIF_THREADS", "many")
        path = _write_config(tmp_path, builtin_config("1d-zero"))
        assert main(["validate", "--config", str(path), "--out", str(tmp_path)]) == EXIT_INVALID
