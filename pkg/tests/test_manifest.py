"""Run manifests, file digests, and draw CSV round trips."""

import json

import numpy as np
import pytest

from ncbayes.gibbs import PosteriorDraws
from ncbayes.manifest import (
    RunManifest,
    _jsonable,
    file_digest,
    read_draws_csv,
    write_draws_csv,
)


class TestFileDigest:
    def test_known_value(self, tmp_out):
        path = tmp_out / "abc.txt"
        path.write_bytes(b"abc")
        assert file_digest(path) == (
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        )

    def test_changes_with_content(self, tmp_out):
        a, b = tmp_out / "a", tmp_out / "b"
        a.write_bytes(b"one")
        b.write_bytes(b"two")
        assert file_digest(a) != file_digest(b)


class TestJsonable:
    def test_numpy_scalars_and_arrays(self):
        assert _jsonable(np.float64(1.5)) == 1.5
        assert _jsonable(np.int32(3)) == 3
        assert _jsonable(np.bool_(True)) is True
        assert _jsonable(np.array([1.0, 2.0])) == [1.0, 2.0]

    def test_unknown_type_raises(self):
        with pytest.raises(TypeError):
            _jsonable(object())


class TestRunManifest:
    def test_stage_timing_accumulates(self):
        man = RunManifest(command="demo")
        with man.stage("work"):
            pass
        first = man.stages["work"]
        with man.stage("work"):
            sum(range(1000))
        assert man.stages["work"] >= first
        assert set(man.stages) == {"work"}

    def test_inputs_outputs_notes(self, tmp_out):
        src = tmp_out / "in.txt"
        src.write_text("payload")
        man = RunManifest(command="demo", seed=7)
        digest = man.add_input(src)
        assert man.inputs[str(src)] == digest
        man.add_output(tmp_out / "out.csv")
        man.add_output(tmp_out / "out.csv")  # deduplicated
        assert len(man.outputs) == 1
        man.note(alpha=0.2, kept=100)
        assert man.diagnostics["kept"] == 100

    def test_note_draws_accumulates_diagnostics(self):
        man = RunManifest(command="demo")
        draws = PosteriorDraws(
            draws=np.zeros((3, 2)),
            loglik=np.zeros(3),
            ess_events=np.array([[50.0, 900.0]]),
            jitter_retries=2,
            ess_warnings=1,
        )
        man.note_draws(draws)
        man.note_draws(draws)
        assert man.diagnostics["jitter_retries"] == 4
        assert man.diagnostics["ess_warnings"] == 2
        assert len(man.diagnostics["ess_trajectory"]) == 2

    def test_note_draws_handles_missing_events(self):
        man = RunManifest(command="demo")
        man.note_draws(
            PosteriorDraws(draws=np.zeros((2, 2)), loglik=np.zeros(2))
        )
        assert "ess_trajectory" not in man.diagnostics
        assert man.diagnostics["jitter_retries"] == 0

    def test_write_schema(self, tmp_out):
        man = RunManifest(
            command="fit", config={"m": 10, "alpha": np.float64(0.2)}, seed=3
        )
        with man.stage("chain"):
            pass
        path = tmp_out / "manifest.json"
        man.write(path)
        payload = json.loads(path.read_text())
        assert set(payload) == {
            "command", "config", "seed", "stages_seconds",
            "input_digests", "outputs", "diagnostics",
        }
        assert payload["command"] == "fit"
        assert payload["seed"] == 3
        assert payload["config"]["alpha"] == 0.2


class TestDrawsCsv:
    def test_round_trip_with_intercept(self, tmp_out):
        A = np.random.default_rng(0).normal(size=(6, 4))
        draws = PosteriorDraws(draws=A, loglik=np.zeros(6))
        path = tmp_out / "draws.csv"
        write_draws_csv(path, draws)
        back, names = read_draws_csv(path)
        assert names == ["theta_1", "theta_2", "theta_3", "beta"]
        np.testing.assert_allclose(back, A, rtol=1e-12)

    def test_round_trip_without_intercept(self, tmp_out):
        A = np.random.default_rng(1).normal(size=(5, 3))
        draws = PosteriorDraws(draws=A, loglik=np.zeros(5), has_intercept=False)
        path = tmp_out / "draws.csv"
        write_draws_csv(path, draws)
        back, names = read_draws_csv(path)
        assert names == ["theta_1", "theta_2", "theta_3"]
        np.testing.assert_allclose(back, A, rtol=1e-12)
