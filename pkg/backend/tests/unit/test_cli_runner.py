"""Unit tests for configuration validation and experiment execution."""

import json

import pytest
from wavelab import cli_runner
from wavelab.errors import ConfigInvalid, GapViolation
from wavelab.models import ExperimentConfig

RAYS = 'kind = "rays"\n'


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


class TestValidate:
    def test_defaults_are_filled_in(self):
        config = cli_runner.validate(RAYS)
        assert isinstance(config, ExperimentConfig)
        assert config.params["steps"] == 10_000
        assert config.params["rossby_start"] == [0.0, 0.5, 1.0, 0.0]

    def test_explicit_params_are_kept(self):
        config = cli_runner.validate(RAYS + "[params]\nsteps = 20\n")
        assert config.params["steps"] == 20

    @pytest.mark.parametrize("eps", ["[0.9]", "[]", "[0.1, 0.0]"])
    def test_eps_errors(self, eps):
        errors = cli_runner.validate(f"{RAYS}eps = {eps}\n")
        assert isinstance(errors, list)
        assert any(message.startswith("eps") for message in errors)

    def test_unknown_param(self):
        errors = cli_runner.validate(RAYS + "[params]\nbogus = 1\n")
        assert errors == ["params.bogus: Extra inputs are not permitted"]

    def test_every_violation_is_reported(self):
        errors = cli_runner.validate(RAYS + "eps = [0.9]\n[grid]\nn1 = 20\n[params]\nbogus = 1\n")
        prefixes = {message.split(":")[0] for message in errors}
        assert {"eps", "grid.n1", "params.bogus"} <= prefixes

    def test_missing_kind(self):
        errors = cli_runner.validate("")
        assert any(message.startswith("kind:") for message in errors)

    def test_bad_toml(self):
        errors = cli_runner.validate("kind = ")
        assert len(errors) == 1 and errors[0].startswith("toml:")

    def test_kind_conflict(self):
        errors = cli_runner.validate(RAYS, {"kind": "mourre"})
        assert errors == ["kind: config declares 'rays' but 'mourre' was requested"]

    def test_overrides_merge_into_tables(self):
        config = cli_runner.validate(RAYS + "[grid]\nn1 = 16\n", {"kind": "rays", "grid": {"n2": 64}, "seed": 9})
        assert (config.grid.n1, config.grid.n2, config.seed) == (16, 64, 9)

    def test_kind_from_overrides(self):
        assert cli_runner.validate("", {"kind": "mourre"}).kind == "mourre"


class TestLoadConfig:
    def test_invalid_file_raises(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text(RAYS + "eps = [0.9]\n")
        with pytest.raises(ConfigInvalid) as excinfo:
            cli_runner.load_config(path)
        assert excinfo.value.errors
        assert excinfo.value.detail.startswith("eps")

    def test_valid_file(self, tmp_path):
        path = tmp_path / "rays.toml"
        path.write_text(RAYS + "seed = 3\n")
        assert cli_runner.load_config(path).seed == 3


# ---------------------------------------------------------------------------
# execute
# ---------------------------------------------------------------------------


class TestExecute:
    def _config(self, tmp_path, params: str) -> ExperimentConfig:
        return cli_runner.validate(f"{RAYS}[params]\n{params}", {"kind": "rays", "out_dir": str(tmp_path)})

    def test_errors_carry_the_kind(self, tmp_path):
        config = self._config(tmp_path, "rossby_start = [0.0, 0.0, 1e-4, 0.0]\nsteps = 10\n")
        with pytest.raises(GapViolation) as excinfo:
            cli_runner.execute(config)
        assert excinfo.value.detail.startswith("rays: ")

    def test_summary_is_written(self, tmp_path):
        config = self._config(tmp_path, "steps = 200\nreversal_steps = 20\n")
        summary = cli_runner.execute(config)
        payload = json.loads((tmp_path / "rays" / cli_runner.SUMMARY_FILE).read_text())
        assert payload["kind"] == "rays"
        assert payload["passed"] == summary.passed
        assert "ray_rossby.csv" in payload["artifacts"]
        assert cli_runner.run(config) == (0 if summary.passed else 1)
